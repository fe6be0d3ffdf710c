"""Identification of damage processes in quasi-static damaged elasticity."""
__version__ = "0.1.0"
