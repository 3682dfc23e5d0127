"""
Classical simulator and subspace solver for diabatic state preparation
followed by measurement-defined subspace diagonalization.
"""

__version__ = "1.0.0"
