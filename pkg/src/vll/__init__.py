"""Numerical laboratory for variance-limited learning curves.

Two halves that check each other: analytical learning-curve solvers for the
signal-plus-noise correlated feature model (fixed feature map and quenched
Gaussian feature map), and desk-scale finite-width MLP / kernel-regression
experiments on polynomial-on-sphere tasks.
"""

__version__ = "0.1.0"

from vll import ensemble, kernels, nn, regression, taskgen, theory  # noqa: F401
