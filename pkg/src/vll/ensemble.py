"""Ensembling strategies, fine-grained bias-variance estimators, and the
variance-onset sample size P_1/2."""

from dataclasses import dataclass, field

import numpy as np

from vll.errors import BasisMismatchError, InsufficientReplicationError, ShapeMismatchError
from vll.kernels import FeatureMap, GramKernel, PROV_AVERAGED

DEFAULT_ENSEMBLE_SIZE = 20


@dataclass
class PredictionGrid:
    """Predictions over (seed, dataset, test-point) cells with shared targets."""

    values: np.ndarray  # (S, Dsets, T)
    targets: np.ndarray  # (T,)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeMismatchError("values must be (seeds, datasets, test points)")
        if self.values.shape[2] != self.targets.shape[0]:
            raise ShapeMismatchError("targets must match test axis")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite predictions")


@dataclass
class VarianceDecomposition:
    """Plug-in bias/variance split; v_cross may be negative at finite replication."""

    bias_sq: float
    v_dataset: float
    v_init: float
    v_cross: float
    total: float

    @property
    def cross_negative(self) -> bool:
        return self.v_cross < 0


def ensemble_predictions(grid: PredictionGrid) -> np.ndarray:
    """Mean over the seed axis: the initialization-ensembled predictor."""
    return grid.values.mean(axis=0)


def ensemble_kernels(kern_list: list[GramKernel]) -> GramKernel:
    """Entrywise mean of Grams on identical point grids."""
    if not kern_list:
        raise ValueError("empty kernel list")
    ids0 = kern_list[0].point_ids
    for k in kern_list[1:]:
        if k.matrix.shape != kern_list[0].matrix.shape or not np.array_equal(k.point_ids, ids0):
            raise ShapeMismatchError("kernels must share the same point grid")
    mean = np.mean([k.matrix for k in kern_list], axis=0)
    return GramKernel(mean, PROV_AVERAGED, ids0.copy())


def ensemble_features(maps: list[FeatureMap]) -> FeatureMap:
    """Entrywise mean of feature maps expressed in one fixed basis."""
    if not maps:
        raise ValueError("empty feature-map list")
    basis_id = maps[0].basis_id
    n = maps[0].features.shape[0]
    for fm in maps[1:]:
        if fm.basis_id != basis_id:
            raise BasisMismatchError("cannot average features in different bases")
        if fm.features.shape[0] != n:
            raise ShapeMismatchError("feature grids differ")
    width = max(fm.features.shape[1] for fm in maps)
    padded = np.zeros((len(maps), n, width))
    for i, fm in enumerate(maps):
        padded[i, :, : fm.features.shape[1]] = fm.features
    mean = padded.mean(axis=0)
    r = max(fm.eigenvalues.shape[0] for fm in maps)
    eig = np.zeros((len(maps), r))
    for i, fm in enumerate(maps):
        eig[i, : fm.eigenvalues.shape[0]] = fm.eigenvalues
    return FeatureMap(mean, basis_id, eig.mean(axis=0))


def decompose(grid: PredictionGrid) -> VarianceDecomposition:
    """Symmetric plug-in decomposition Bias^2 + V_dataset + V_init + V_cross = total.

    bias_sq uses the grand-mean predictor; v_dataset is the variance over
    datasets of the seed-averaged predictor; v_init the variance over seeds
    of the dataset-averaged predictor; v_cross the remainder, reported as-is
    (may be negative) so the identity with the mean generalization error is
    exact.
    """
    v = grid.values
    s, dsets, _ = v.shape
    if s < 2 or dsets < 2:
        raise InsufficientReplicationError("need >= 2 seeds and >= 2 datasets")
    y = grid.targets
    grand = v.mean(axis=(0, 1))
    bias_sq = float(np.mean((grand - y) ** 2))
    f_d = v.mean(axis=0)  # (Dsets, T), seed-averaged
    f_s = v.mean(axis=1)  # (S, T), dataset-averaged
    v_dataset = float(np.mean(f_d.var(axis=0)))
    v_init = float(np.mean(f_s.var(axis=0)))
    total_var = float(np.mean(v.reshape(s * dsets, -1).var(axis=0)))
    v_cross = total_var - v_dataset - v_init
    total = float(np.mean((v - y) ** 2))
    return VarianceDecomposition(bias_sq, v_dataset, v_init, v_cross, total)


def _log_ratio_crossing(p_grid, ratio, level):
    """First bracket where the piecewise-linear-in-log-P ratio crosses level."""
    logs = np.log(p_grid)
    for i in range(len(ratio) - 1):
        r0, r1 = ratio[i] - level, ratio[i + 1] - level
        if r0 == 0.0:
            return float(p_grid[i]), float(p_grid[i]), float(p_grid[i])
        if r0 * r1 < 0:
            lo, hi = logs[i], logs[i + 1]
            f_lo = r0
            for _ in range(200):  # bisection on the linear interpolant
                mid = 0.5 * (lo + hi)
                t = (mid - logs[i]) / (logs[i + 1] - logs[i])
                f_mid = (1 - t) * r0 + t * r1
                if f_mid == 0.0 or hi - lo < 1e-14:
                    break
                if f_lo * f_mid < 0:
                    hi = mid
                else:
                    lo, f_lo = mid, f_mid
            return float(np.exp(0.5 * (lo + hi))), float(p_grid[i]), float(p_grid[i + 1])
    if ratio[-1] == level:
        return float(p_grid[-1]), float(p_grid[-1]), float(p_grid[-1])
    return None


def p_half(p_grid, eg_single, eg_ensembled, level: float = 0.5) -> float | None:
    """Sample size where the ensembled-to-single error ratio first reaches 1/2.

    Interpolates the ratio piecewise-linearly in log P and bisects on the
    first bracketing interval; returns None when no crossing exists.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    eg_single = np.asarray(eg_single, dtype=float)
    eg_ensembled = np.asarray(eg_ensembled, dtype=float)
    if not (len(p_grid) == len(eg_single) == len(eg_ensembled)) or len(p_grid) < 2:
        raise ShapeMismatchError("need matching grids of length >= 2")
    if np.any(np.diff(p_grid) <= 0):
        raise ValueError("p_grid must be strictly increasing")
    if np.any(eg_single <= 0) or np.any(eg_ensembled <= 0):
        raise ValueError("errors must be positive")
    found = _log_ratio_crossing(p_grid, eg_ensembled / eg_single, level)
    return None if found is None else found[0]


def p_half_bracket(p_grid, eg_single, eg_ensembled, level: float = 0.5):
    """Like p_half but returning (value, bracket_lo, bracket_hi) or None."""
    p_grid = np.asarray(p_grid, dtype=float)
    ratio = np.asarray(eg_ensembled, dtype=float) / np.asarray(eg_single, dtype=float)
    return _log_ratio_crossing(p_grid, ratio, level)
