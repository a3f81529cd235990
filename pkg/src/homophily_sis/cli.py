"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from typing import Dict, List

from .core import ModelParams
from .experiments import (ConfigError, SweepResult, SweepSpec, emit, load_config, locate_extremum,
                          run_sweep)
from .linearized import LinearizedSystem, convergence_rate, cumulative_infection
from .sir import dh_ci_sir, solve_final_size
from .statics import dh_ci_total, dh_steady_state
from .steady_state import classify_stability, solve_steady_state
from .stochastic import stochastic_cross_check
from .vaccination import (VaccinationParams, endogenous_dh, enumerate_mixed_equilibria,
                          enumerate_peer_equilibria, optimal_vaccination, solve_rational_equilibrium,
                          welfare)

PARAM_FLAGS = {"q": "q", "h": "h", "mu": "mu", "x_a": "x-a", "x_v": "x-v", "r": "r"}
VAX_FLAGS = {"k": "k", "d": "d", "b": "b"}


def _overrides(args) -> dict:
    out: Dict[str, dict] = {}
    for key in PARAM_FLAGS:
        val = getattr(args, key, None)
        if val is not None:
            out.setdefault("params", {})[key] = val
    for key in VAX_FLAGS:
        val = getattr(args, key, None)
        if val is not None:
            out.setdefault("vaccination", {})[key] = val
    return out


def _rows_result(cmd: str, rows: List[dict], cfg: dict) -> SweepResult:
    columns: List[str] = []
    for row in rows:
        for c in row:
            if c not in columns:
                columns.append(c)
    import hashlib
    digest = hashlib.sha256(json.dumps({"cmd": cmd, "cfg": cfg}, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return SweepResult(columns, rows, digest)


def _finish(args, cmd: str, rows: List[dict], cfg: dict) -> int:
    result = _rows_result(cmd, rows, cfg)
    if args.out:
        emit(result, args.format, args.out)
    else:
        json.dump(rows, sys.stdout, indent=1, default=float)
        sys.stdout.write("\n")
    return 0


def cmd_steady_state(args, cfg) -> List[dict]:
    p = ModelParams(**cfg["params"])
    ss = solve_steady_state(p)
    st = classify_stability(p, ss)
    row = {"rho_a": ss.rho_a, "rho_v": ss.rho_v, "rho": ss.rho, "S_a": ss.S_a, "S_v": ss.S_v,
           "rho_tilde_a": ss.rho_tilde_a, "rho_tilde_v": ss.rho_tilde_v, "kind": ss.kind.value,
           "mu_hat": ss.mu_hat, "residual": ss.residual, "eig_1": st.eigenvalues[0],
           "eig_2": st.eigenvalues[1], "stable": int(st.stable)}
    if ss.is_interior and p.x_a <= p.x_v:
        sens = dh_steady_state(ss)
        row.update(dh_rho_a=sens.dh_rho_a, dh_rho_v=sens.dh_rho_v, dh_rho=sens.dh_rho)
    return [row]


def cmd_ci(args, cfg) -> List[dict]:
    p = ModelParams(**cfg["params"])
    ss = solve_steady_state(p)
    if not ss.is_interior:
        raise SystemExit("steady state is disease free; CI is undefined")
    sys_ = LinearizedSystem.at(ss)
    dev = cfg["deviation"]
    ci = cumulative_infection(sys_, dev)
    eff = dh_ci_total(sys_, dev)
    return [{"ci_a": ci.ci_a, "ci_v": ci.ci_v, "ci": ci.ci_total, "cr": convergence_rate(sys_),
             "cr_discounted": convergence_rate(sys_, discounted=True),
             "dh_ci_direct": eff.direct, "dh_ci_indirect": eff.indirect, "dh_ci": eff.total}]


def _eq_rows(eqs, params: ModelParams, dev: float) -> List[dict]:
    rows = []
    for e in eqs:
        row = {"x_a_star": e.x_a_star, "x_v_star": e.x_v_star, "classification": e.classification,
               "residual": e.residual}
        if e.derivatives is not None:
            row.update(dh_x_a=e.derivatives[0], dh_x_v=e.derivatives[1])
        ss = e.induced or solve_steady_state(params.replace(x_a=e.x_a_star, x_v=e.x_v_star))
        row.update(rho=ss.rho)
        if ss.is_interior and e.derivatives is not None:
            try:
                eff = endogenous_dh(ss, e.derivatives, dev)
                row.update(dh_rho=eff.dh_rho, dh_ci=eff.dh_ci)
            except ValueError:
                pass
        rows.append(row)
    return rows


def cmd_vax_rational(args, cfg) -> List[dict]:
    p, vp = ModelParams(**cfg["params"]), VaccinationParams(**cfg["vaccination"])
    return _eq_rows([solve_rational_equilibrium(p, vp)], p, cfg["deviation"])


def cmd_vax_peer(args, cfg) -> List[dict]:
    p, vp = ModelParams(**cfg["params"]), VaccinationParams(**cfg["vaccination"])
    return _eq_rows(enumerate_peer_equilibria(p.q, p.h, vp.k, vp.d), p, cfg["deviation"])


def cmd_vax_mixed(args, cfg) -> List[dict]:
    p, vp = ModelParams(**cfg["params"]), VaccinationParams(**cfg["vaccination"])
    return _eq_rows(enumerate_mixed_equilibria(p, vp, cfg["mixed_use_theta"]), p, cfg["deviation"])


def cmd_welfare(args, cfg) -> List[dict]:
    p, vp = ModelParams(**cfg["params"]), VaccinationParams(**cfg["vaccination"])
    eq = solve_rational_equilibrium(p, vp)
    w = welfare(eq.induced, vp, cfg["deviation"])
    return [{"x_a_star": eq.x_a_star, "x_v_star": eq.x_v_star, **asdict(w)}]


def cmd_optimal(args, cfg) -> List[dict]:
    vp = VaccinationParams(**cfg["vaccination"])
    opt = optimal_vaccination(vp.k, cfg["params"]["mu"])
    return [{"k": vp.k, "mu": cfg["params"]["mu"], "x_star": opt.x_star,
             "x_decentralized": opt.x_decentralized, "grid_argmax": float(opt.grid[opt.W.argmax()])}]


def cmd_sir(args, cfg) -> List[dict]:
    p = ModelParams(**cfg["params"])
    fs = solve_final_size(p, seed=cfg["sir_seed"])
    eff = dh_ci_sir(fs)
    return [{"ci_a": fs.CI_a, "ci_v": fs.CI_v, "ci": fs.CI_total, "R_a": fs.R_a_ss, "R_v": fs.R_v_ss,
             "residual": max(map(abs, fs.residuals)), "dh_ci": eff.dh_ci,
             "sign_R_v_minus_R_a": eff.sign_certificate, "condition_met": int(eff.condition_met)}]


def cmd_cross_check(args, cfg) -> List[dict]:
    p = ModelParams(**cfg["params"])
    st = cfg["stochastic"]
    cc = stochastic_cross_check(p, agents=st["agents"], horizon=st["horizon"], seed=cfg["seed"],
                                replicates=st["replicates"])
    return [{"group": g, "mean_field": float(cc.mean_field[i]), "simulated": float(cc.mean[i]),
             "standard_error": float(cc.standard_error[i]), "z": float(cc.z_scores[i]),
             "extinct_fraction": cc.extinct_fraction} for i, g in enumerate(("a", "v"))]


def cmd_sweep(args, cfg) -> int:
    if args.parameter:
        cfg["sweep"] = {"parameter": args.parameter, "count": args.count, "min": args.min, "max": args.max}
    if args.outputs:
        cfg["outputs"] = args.outputs.split(",")
    if args.model:
        cfg["model"] = args.model
    spec = SweepSpec.from_config(cfg)
    result = run_sweep(spec)
    if args.out:
        emit(result, args.format, args.out)
    else:
        from .experiments import to_csv, to_json
        sys.stdout.write(to_csv(result) if args.format == "csv" else to_json(result) + "\n")
    if args.locate:
        column, kind = args.locate.split(":") if ":" in args.locate else (args.locate, "max")
        found = locate_extremum(spec, column, maximize=(kind == "max"))
        msg = "no single interior extremum" if found is None else f"{spec.parameter}={found[0]:.10g} {column}={found[1]:.10g}"
        print(f"{kind} of {column}: {msg}", file=sys.stderr)
    return 0


COMMANDS = {
    "steady-state": cmd_steady_state,
    "ci": cmd_ci,
    "vax-rational": cmd_vax_rational,
    "vax-peer": cmd_vax_peer,
    "vax-mixed": cmd_vax_mixed,
    "welfare": cmd_welfare,
    "optimal": cmd_optimal,
    "sir": cmd_sir,
    "cross-check": cmd_cross_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config (relative names also searched in $HOMOPHILY_SIS_CONFIG_DIR)")
    for key, flag in PARAM_FLAGS.items():
        common.add_argument(f"--{flag}", dest=key, type=float)
    for key, flag in VAX_FLAGS.items():
        common.add_argument(f"--{flag}", dest=key, type=float)
    common.add_argument("--deviation", type=float, help="symmetric outbreak size")
    common.add_argument("--sir-seed", dest="sir_seed", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--theta", action="store_true", help="mixed model: vaxxers respond to rho_v/(1-x_v)")
    common.add_argument("--out", help="output path; stdout when omitted")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="homophily-sis", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    sw = sub.add_parser("sweep", parents=[common])
    sw.add_argument("--parameter")
    sw.add_argument("--count", type=int, default=101)
    sw.add_argument("--min", type=float, default=0.0)
    sw.add_argument("--max", type=float, default=1.0)
    sw.add_argument("--outputs", help="comma separated output groups")
    sw.add_argument("--model", choices=("exogenous", "rational", "peer", "mixed"))
    sw.add_argument("--locate", help="refine the interior extremum of a column, e.g. rho:max or ci:min")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    over = _overrides(args)
    for key in ("deviation", "sir_seed", "seed"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    if args.theta:
        over["mixed_use_theta"] = True
    try:
        cfg = load_config(args.config, over)
        if args.command == "sweep":
            return cmd_sweep(args, cfg)
        rows = COMMANDS[args.command](args, cfg)
        return _finish(args, args.command, rows, cfg)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
