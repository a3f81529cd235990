"""Two-group SIS/SIR epidemics with homophily and endogenous vaccination."""

__version__ = "0.1.0"
