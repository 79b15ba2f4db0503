"""
sbelab - spectral Galerkin simulation and estimation suite for stochastic
Burgers-type equations
"""
__version__ = "0.1.0"
