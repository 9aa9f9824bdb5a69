"""Kernel ridge regression and ridgeless minimum-norm interpolation."""

from dataclasses import dataclass

import numpy as np

from vll.errors import DegenerateKernelError, NumericalError, ShapeMismatchError
from vll.kernels import GramKernel

RIDGELESS_RANK_TOL = 1e-12
JITTER_REL = 1e-12


@dataclass
class KernelFit:
    dual_coefficients: np.ndarray
    ridge_lambda: float
    train_ids: np.ndarray
    kernel_provenance: str


def _spectral_solve(k: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    """Reference solver: eigendecomposition with pseudo-inverse at ridge 0."""
    lam, v = np.linalg.eigh(k)
    lam_max = max(lam[-1], 0.0)
    if ridge > 0:
        return v @ ((v.T @ y) / (lam + ridge))
    keep = lam > RIDGELESS_RANK_TOL * lam_max
    if not np.any(keep):
        raise DegenerateKernelError("kernel has effective rank 0")
    return v[:, keep] @ ((v[:, keep].T @ y) / lam[keep])


def fit(k_train: GramKernel, y: np.ndarray, ridge_lambda: float = 0.0) -> KernelFit:
    """Dual coefficients (K + lambda I)^{-1} y.

    ridge_lambda = 0 takes the pseudo-inverse path (relative eigenvalue
    threshold), realizing the minimum-norm interpolant.  Positive ridge uses
    a Cholesky factorization with a small relative jitter fallback before
    dropping to the spectral path.
    """
    k = k_train.matrix
    y = np.asarray(y, dtype=float)
    if k.shape[0] != k.shape[1]:
        raise ShapeMismatchError("training Gram must be square")
    if y.shape[0] != k.shape[0]:
        raise ShapeMismatchError("target length must match Gram size")
    if not (np.all(np.isfinite(k)) and np.all(np.isfinite(y))):
        raise NumericalError("non-finite entries in kernel or targets")
    if ridge_lambda < 0:
        raise ValueError("ridge must be non-negative")
    if ridge_lambda > 0:
        a = k + ridge_lambda * np.eye(k.shape[0])
        try:
            c = np.linalg.cholesky(a)
            duals = np.linalg.solve(c.T, np.linalg.solve(c, y))
        except np.linalg.LinAlgError:
            jitter = JITTER_REL * float(np.linalg.eigvalsh(k)[-1])
            try:
                c = np.linalg.cholesky(a + jitter * np.eye(k.shape[0]))
                duals = np.linalg.solve(c.T, np.linalg.solve(c, y))
            except np.linalg.LinAlgError:
                duals = _spectral_solve(k, y, ridge_lambda)
    else:
        duals = _spectral_solve(k, y, 0.0)
    if not np.all(np.isfinite(duals)):
        raise NumericalError("non-finite dual coefficients")
    return KernelFit(duals, ridge_lambda, k_train.point_ids, k_train.provenance)


def predict(fit_result: KernelFit, k_cross: np.ndarray) -> np.ndarray:
    """Predictions k_cross @ duals; columns must index training points."""
    k_cross = np.atleast_2d(np.asarray(k_cross, dtype=float))
    if k_cross.shape[1] != fit_result.dual_coefficients.shape[0]:
        raise ShapeMismatchError("cross-kernel columns must match training size")
    return k_cross @ fit_result.dual_coefficients


def gen_error(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error; the empirical estimate of the population risk."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ShapeMismatchError("length mismatch")
    if predictions.size == 0:
        raise ValueError("empty input")
    return float(np.mean((predictions - targets) ** 2))
