"""Synthetic regression tasks: polynomials on the sphere and Gaussian covariates.

The sphere task draws inputs uniformly on S^{D-1} and sets the target to a
degree-k Gegenbauer polynomial of a one-dimensional projection, rescaled so
the target has unit second moment under the input distribution.
"""

from dataclasses import dataclass

import numpy as np

from vll.errors import DegenerateTaskError, InvalidDimensionError
from vll.seeding import derive_seed, rng_from_seed

DEFAULT_N_MC = 200_000


@dataclass(frozen=True)
class SphereDataset:
    """Inputs on the unit sphere plus normalized polynomial targets.

    inputs: (P, D), each row unit norm.  targets[mu] = Q_k(beta . x_mu) / norm_const.
    """

    inputs: np.ndarray
    targets: np.ndarray
    degree_k: int
    beta: np.ndarray
    norm_const: float

    def __post_init__(self):
        norms = np.linalg.norm(self.inputs, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-12):
            raise ValueError("input rows must have unit Euclidean norm")
        if not self.norm_const > 0:
            raise ValueError("norm_const must be positive")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def sample_sphere(n: int, d: int, seed: int) -> np.ndarray:
    """n i.i.d. points uniform on the unit sphere in R^d (rows unit norm)."""
    if d < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = rng_from_seed(seed)
    x = rng.standard_normal((n, d))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    # a zero row has probability 0; resample defensively
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        x[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / norms


def gegenbauer(k: int, lam: float, t):
    """Gegenbauer polynomial C_k^{(lam)}(t) via the three-term recurrence.

    Total on real t; vectorized over t.  For dimension-D sphere tasks the
    natural parameter is lam = (D - 2) / 2.
    """
    if k < 0:
        raise ValueError("degree must be non-negative")
    t = np.asarray(t, dtype=float)
    c_prev = np.ones_like(t)
    if k == 0:
        return c_prev if c_prev.ndim else float(c_prev)
    c_cur = 2.0 * lam * t
    for n in range(2, k + 1):
        c_next = (2.0 * (n + lam - 1.0) * t * c_cur - (n + 2.0 * lam - 2.0) * c_prev) / n
        c_prev, c_cur = c_cur, c_next
    return c_cur if c_cur.ndim else float(c_cur)


def _sphere_targets(x: np.ndarray, beta: np.ndarray, k: int, lam: float, norm_const: float):
    return gegenbauer(k, lam, x @ beta) / norm_const


def make_task(
    d: int,
    k: int,
    p_train: int,
    p_test: int,
    beta_norm: float = 1.0,
    n_mc: int = DEFAULT_N_MC,
    seed: int = 0,
) -> tuple[SphereDataset, SphereDataset]:
    """Train/test sphere datasets sharing one task vector beta and normalizer.

    beta is uniform on the sphere scaled to beta_norm.  The normalizer is the
    square root of an n_mc-sample Monte Carlo estimate of <Q_k(beta . x)^2>,
    shared by both splits so targets have unit second moment.
    """
    if k < 1:
        raise ValueError("degree k must be >= 1")
    if p_train < 1 or p_test < 1:
        raise ValueError("counts must be >= 1")
    lam = (d - 2) / 2.0
    beta = beta_norm * sample_sphere(1, d, derive_seed(seed, "beta"))[0]
    x_mc = sample_sphere(n_mc, d, derive_seed(seed, "mc_norm"))
    msq = float(np.mean(gegenbauer(k, lam, x_mc @ beta) ** 2))
    if msq < 1e-14:
        raise DegenerateTaskError(
            f"<Q_k^2> Monte Carlo estimate {msq:.3e} too small; task is degenerate"
        )
    norm_const = float(np.sqrt(msq))
    x_train = sample_sphere(p_train, d, derive_seed(seed, "train"))
    x_test = sample_sphere(p_test, d, derive_seed(seed, "test"))
    train = SphereDataset(x_train, _sphere_targets(x_train, beta, k, lam, norm_const), k, beta, norm_const)
    test = SphereDataset(x_test, _sphere_targets(x_test, beta, k, lam, norm_const), k, beta, norm_const)
    return train, test


def fresh_split(task: SphereDataset, p: int, seed: int, d: int | None = None) -> SphereDataset:
    """Another dataset from the same task (same beta, degree, normalizer)."""
    d = task.inputs.shape[1] if d is None else d
    lam = (d - 2) / 2.0
    x = sample_sphere(p, d, seed)
    y = _sphere_targets(x, task.beta, task.degree_k, lam, task.norm_const)
    return SphereDataset(x, y, task.degree_k, task.beta, task.norm_const)


def sample_gaussian_covariates(model, p: int, seed: int, a_matrix: np.ndarray | None = None):
    """Draw p samples of the Gaussian covariate model.

    Per sample: b ~ N(0, I_M), eps ~ N(0, I_{N_H}); teacher features
    psi_M = Sigma_M^{1/2} b; student features psi = A psi_M + Sigma_eps^{1/2} eps;
    target y = psi_M . w* / sqrt(M).

    `model` is a theory.SpectralModel.  `a_matrix` overrides the structured
    feature map with an explicit (N_H, M) matrix (required for gaussian specs,
    use model.materialize_a).
    """
    rng = rng_from_seed(seed)
    m, n_h = model.m, model.n_h
    a = model.a_matrix() if a_matrix is None else a_matrix
    if a.shape != (n_h, m):
        raise ValueError(f"A must have shape ({n_h}, {m}), got {a.shape}")
    b = rng.standard_normal((p, m))
    psi_m = b * np.sqrt(model.sigma_m_eigs)
    eps = rng.standard_normal((p, n_h))
    psi = psi_m @ a.T + eps * np.sqrt(model.noise_eigs)
    y = psi_m @ model.wstar / np.sqrt(m)
    return psi, y
