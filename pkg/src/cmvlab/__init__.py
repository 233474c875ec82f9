"""Conditional McKean-Vlasov SDEs: stationary solutions, particle simulation and LSV calibration."""

__version__ = "0.1.0"
