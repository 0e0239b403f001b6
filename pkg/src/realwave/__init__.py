"""Stochastic simulation of extended-wavepacket particles: evolution, detection,
Stern-Gerlach estimation, EPR correlation laws and balance-relation statistics."""

__version__ = "0.1.0"
