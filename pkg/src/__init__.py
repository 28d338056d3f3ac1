"""
push-vhgp - Main Package
Heteroscedastic Gaussian process models of planar pushing.
"""

__version__ = "0.1.0"
__description__ = "Variational heteroscedastic GP models of planar pushing"
