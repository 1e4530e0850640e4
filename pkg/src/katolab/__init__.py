"""Numerical laboratory for Kato-type fixed-point solutions of the periodic
Navier-Stokes equations and the linear estimates behind them."""

__version__ = "0.1.0"
