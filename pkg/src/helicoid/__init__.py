"""Discretized time-frequency toolkit for multilinear rank-k model operators."""
