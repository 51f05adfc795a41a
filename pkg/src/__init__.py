"""
Harmonic Power-Flow Package
Steady-state harmonic analysis of grids with grid-forming and grid-following resources.
"""

__version__ = "0.1.0"
__author__ = "HPF Team"
