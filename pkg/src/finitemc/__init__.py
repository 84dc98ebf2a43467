"""Exact finite-state Markov chain analysis: metrics, ergodicity, contraction, couplings and MCMC error."""

__version__ = "0.1.0"
