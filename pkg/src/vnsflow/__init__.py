"""Fluid-particle coupling lab: Navier-Stokes driven by Stokes drag from an
SDE particle ensemble or a Vlasov-Fokker-Planck density on the 2-D torus."""

__version__ = "0.1.0"
