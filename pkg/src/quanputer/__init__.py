"""Reversible dynamics, split-operator quantum simulation and unitary Liouville transport."""
__version__ = "0.1.0"
