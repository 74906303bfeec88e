"""Spectral-gap decomposition bounds for reversible Markov chains."""
