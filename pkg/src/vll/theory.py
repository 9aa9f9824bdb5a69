"""Analytical learning curves for the signal-plus-noise correlated feature model.

Two solvers: `solve_fixed_a` for a fixed (structured or explicitly drawn)
feature map, and `solve_quenched_gaussian_a` which additionally averages over
an i.i.d. Gaussian feature map, doubling the set of self-consistent order
parameters.  `mc_learning_curve` samples the same model and regresses
directly, serving as the independent oracle.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from vll import regression, taskgen
from vll.errors import InvalidConfigError, SingularSystemError, SolverError
from vll.kernels import GramKernel
from vll.seeding import derive_seed

DAMPING = 0.5
FP_TOL = 1e-12
FP_MAX_ITER = 100_000
RIDGELESS_PROXY_REL = 1e-8


# ---------------------------------------------------------------------------
# feature-map specifications


@dataclass(frozen=True)
class AIdentity:
    kind: str = "identity"


@dataclass(frozen=True)
class ADiagonal:
    scales: np.ndarray
    kind: str = "diagonal"


@dataclass(frozen=True)
class AProjection:
    keep_top: int
    kind: str = "projection"


@dataclass(frozen=True)
class AGaussian:
    sigma_a: float = 1.0
    kind: str = "gaussian"


@dataclass(frozen=True)
class SpectralModel:
    """Eigen-representation of the Gaussian covariate model.

    sigma_m_eigs: teacher covariance spectrum (non-increasing, positive).
    wstar: target coefficients in the teacher eigenbasis.
    noise_eigs: student feature-noise spectrum (length n_h, working basis).
    a_spec: feature map taking teacher features to n_h student features.
    """

    sigma_m_eigs: np.ndarray
    wstar: np.ndarray
    noise_eigs: np.ndarray
    a_spec: object
    amplify: tuple[int, Callable[[float], float]] | None = field(default=None, compare=False)

    def __post_init__(self):
        lam = np.asarray(self.sigma_m_eigs, dtype=float)
        object.__setattr__(self, "sigma_m_eigs", lam)
        object.__setattr__(self, "wstar", np.asarray(self.wstar, dtype=float))
        object.__setattr__(self, "noise_eigs", np.asarray(self.noise_eigs, dtype=float))
        if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
            raise InvalidConfigError("sigma_m_eigs must be positive and non-increasing")
        if self.wstar.shape != lam.shape:
            raise InvalidConfigError("wstar must match sigma_m_eigs")
        if np.any(self.noise_eigs < 0):
            raise InvalidConfigError("noise eigenvalues must be non-negative")
        if self.n_h > self.m and not isinstance(self.a_spec, AGaussian):
            raise InvalidConfigError("n_h <= M required for structured feature maps")
        if isinstance(self.a_spec, AProjection) and self.a_spec.keep_top > self.m:
            raise InvalidConfigError("projection cannot keep more modes than exist")

    @property
    def m(self) -> int:
        return self.sigma_m_eigs.shape[0]

    @property
    def n_h(self) -> int:
        return self.noise_eigs.shape[0]

    @property
    def eta(self) -> float:
        return self.n_h / self.m

    def a_scales(self) -> np.ndarray:
        """Diagonal scales of a structured feature map (length n_h)."""
        spec = self.a_spec
        if isinstance(spec, AIdentity):
            return np.ones(self.n_h)
        if isinstance(spec, AProjection):
            if spec.keep_top != self.n_h:
                raise InvalidConfigError("projection keep_top must equal n_h")
            return np.ones(self.n_h)
        if isinstance(spec, ADiagonal):
            scales = np.asarray(spec.scales, dtype=float)
            if scales.shape[0] != self.n_h:
                raise InvalidConfigError("diagonal scales must have length n_h")
            return scales
        raise InvalidConfigError("gaussian feature maps have no diagonal form; materialize one")

    def a_matrix(self) -> np.ndarray:
        """Dense (n_h, M) matrix for a structured feature map."""
        scales = self.a_scales()
        a = np.zeros((self.n_h, self.m))
        a[np.arange(self.n_h), np.arange(self.n_h)] = scales
        return a

    def materialize_a(self, seed: int) -> np.ndarray:
        """One explicit draw of a Gaussian feature map, entries N(0, sigma_a^2 / M)."""
        if not isinstance(self.a_spec, AGaussian):
            return self.a_matrix()
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        return self.a_spec.sigma_a / math.sqrt(self.m) * rng.standard_normal((self.n_h, self.m))

    def prior_error(self) -> float:
        """Zero-learning error (1/M) sum_k lambda_k w_k^2."""
        return float(self.sigma_m_eigs @ self.wstar**2) / self.m

    def at_sample_size(self, p: float) -> "SpectralModel":
        """Model with the P-dependent eigenvalue amplification applied."""
        if self.amplify is None:
            return self
        idx, delta_fn = self.amplify
        lam = self.sigma_m_eigs.copy()
        lam[idx] = lam[idx] + float(delta_fn(p))
        order = np.argsort(lam)[::-1]
        return SpectralModel(
            lam[order], self.wstar[order], self.noise_eigs, self.a_spec, amplify=None
        )


@dataclass
class SaddleSolution:
    """Converged order parameters and the resulting generalization error."""

    q: float
    q_hat: float
    gamma: float
    eg: float
    iterations: int
    residual: float
    v: float | None = None
    v_hat: float | None = None
    d_q_hat: float | None = None
    d_v_hat: float | None = None
    valid: bool = True


# ---------------------------------------------------------------------------
# fixed-A solver


def _fixed_point_q(beta_eigs: np.ndarray, m: int, alpha_load: float, ridge: float):
    """Damped iteration for q = (1/M) Tr G B with G = (I + q_hat B)^{-1}."""
    q = float(beta_eigs.sum()) / m  # q_hat = 0 start
    residual = np.inf
    for it in range(1, FP_MAX_ITER + 1):
        q_hat = alpha_load / (ridge + q)
        q_new = float(np.sum(beta_eigs / (1.0 + q_hat * beta_eigs))) / m
        residual = abs(q_new - q)
        q = (1.0 - DAMPING) * q + DAMPING * q_new
        if residual <= FP_TOL * (1.0 + abs(q)):
            return q, alpha_load / (ridge + q), it, residual
    raise SolverError(f"fixed point not converged after {FP_MAX_ITER} iterations", residual)


def _fixed_a_scalars(model: SpectralModel, a_explicit: np.ndarray | None):
    """Reduce the fixed-A problem to (student spectrum, target loadings, floor).

    Returns (beta_eigs, u_sq, dropped) where beta_eigs are the eigenvalues of
    A Sigma_M A^T + Sigma_eps, u_sq the squared coordinates of A Sigma_M w*
    in that eigenbasis, and dropped the target weight invisible to the student
    beyond what the u-terms recover.
    """
    lam, w = model.sigma_m_eigs, model.wstar
    if a_explicit is None and not isinstance(model.a_spec, AGaussian):
        scales = model.a_scales()
        n_h = model.n_h
        beta_eigs = scales**2 * lam[:n_h] + model.noise_eigs
        u_sq = (scales * lam[:n_h] * w[:n_h]) ** 2
        return beta_eigs, u_sq, float(lam @ w**2)
    a = a_explicit if a_explicit is not None else model.a_matrix()
    b = (a * lam) @ a.T + np.diag(model.noise_eigs)
    beta_eigs, vecs = np.linalg.eigh(b)
    beta_eigs = np.clip(beta_eigs, 0.0, None)
    u = vecs.T @ (a @ (lam * w))
    return beta_eigs, u**2, float(lam @ w**2)


def solve_fixed_a(
    model: SpectralModel,
    alpha_load: float,
    ridge: float,
    a_explicit: np.ndarray | None = None,
) -> SaddleSolution:
    """Learning curve for a fixed feature map via the scalar saddle point.

    Solves q_hat = alpha / (ridge + q), q = (1/M) Tr G [A Sigma_M A^T + Sigma_eps]
    by damped iteration, then evaluates gamma and E_g.  Structured maps reduce
    to sums over the joint eigenbasis; an explicit matrix (e.g. one Gaussian
    draw) goes through a dense eigendecomposition.
    """
    if alpha_load <= 0:
        raise InvalidConfigError("alpha_load must be positive")
    if ridge < 0:
        raise InvalidConfigError("ridge must be non-negative")
    if ridge == 0.0:
        ridge = RIDGELESS_PROXY_REL * float(np.mean(model.sigma_m_eigs))
    m = model.m
    beta_eigs, u_sq, prior_quad = _fixed_a_scalars(model, a_explicit)
    q, q_hat, iters, residual = _fixed_point_q(beta_eigs, m, alpha_load, ridge)
    g = 1.0 / (1.0 + q_hat * beta_eigs)
    gamma = (q_hat**2 / alpha_load) * float(np.sum(g**2 * beta_eigs**2)) / m
    valid = gamma < 1.0
    if valid:
        explained = q_hat * float(np.sum((g + g**2) * u_sq))
        eg = (prior_quad - explained) / (m * (1.0 - gamma))
    else:
        eg = math.inf
    return SaddleSolution(q, q_hat, gamma, eg, iters, residual, valid=valid)


def irreducible_error(model: SpectralModel, a_explicit: np.ndarray | None = None) -> float:
    """P -> infinity floor: unexplained target variance of the feature map."""
    lam, w = model.sigma_m_eigs, model.wstar
    m = model.m
    if a_explicit is None and not isinstance(model.a_spec, AGaussian):
        scales = model.a_scales()
        n_h = model.n_h
        s = scales**2 * lam[:n_h] + model.noise_eigs
        recovered = np.where(s > 0, (scales * lam[:n_h]) ** 2 / np.where(s > 0, s, 1.0), 0.0)
        per_mode = lam.copy() * w**2
        per_mode[:n_h] -= recovered * w[:n_h] ** 2
        return float(per_mode.sum()) / m
    a = a_explicit if a_explicit is not None else model.a_matrix()
    b = (a * lam) @ a.T + np.diag(model.noise_eigs)
    u = a @ (lam * w)
    return (float(lam @ w**2) - float(u @ np.linalg.pinv(b, hermitian=True) @ u)) / m


# ---------------------------------------------------------------------------
# quenched Gaussian-A solver


def _quenched_rescale(model: SpectralModel):
    """Fold the Gaussian entry scale into the teacher spectrum (sigma^2 = 1 form).

    Feature-map entries are drawn with variance sigma_a^2 / M; in the units of
    the saddle-point equations (entry variance sigma^2 / N_H) this corresponds
    to sigma^2 = eta * sigma_a^2, which rescales the teacher covariance.
    """
    spec = model.a_spec
    if not isinstance(spec, AGaussian):
        raise InvalidConfigError("quenched solver requires a gaussian feature map")
    s2 = model.eta * spec.sigma_a**2
    return s2 * model.sigma_m_eigs, model.wstar / math.sqrt(s2)


def solve_quenched_gaussian_a(
    model: SpectralModel, alpha_load: float, ridge: float
) -> SaddleSolution:
    """Typical-case learning curve averaged over Gaussian feature maps.

    Damped simultaneous fixed point on (q, q_hat, v, v_hat); the dataset-source
    derivatives come from a 4x4 linear system in the general diagonal-noise
    case, or the explicit 2x2 system when the noise spectrum is isotropic.
    """
    if alpha_load <= 0:
        raise InvalidConfigError("alpha_load must be positive")
    if ridge == 0.0:
        ridge = RIDGELESS_PROXY_REL * float(np.mean(model.sigma_m_eigs))
    lam, w = _quenched_rescale(model)
    e = model.noise_eigs
    m, eta = model.m, model.eta

    def maps(q, q_hat, v, v_hat):
        q_hat_n = alpha_load / (ridge + q)
        c = 1.0 / (1.0 + v_hat + q_hat * e)  # student/noise-space resolvent
        b = 1.0 / (1.0 + q_hat * v * lam)  # teacher-space resolvent
        v_n = float(c.sum()) / (eta * m)
        v_hat_n = q_hat * float(np.sum(b * lam)) / (eta * m)
        q_n = v * float(np.sum(b * lam)) / m + float(np.sum(c * e)) / m
        return q_n, q_hat_n, v_n, v_hat_n

    q = float(lam.sum()) / m + float(e.sum()) / m
    q_hat, v, v_hat = 0.0, 1.0, 0.0
    residual = np.inf
    iters = 0
    for it in range(1, FP_MAX_ITER + 1):
        updates = maps(q, q_hat, v, v_hat)
        residual = max(
            abs(n - o) for n, o in zip(updates, (q, q_hat, v, v_hat))
        )
        q = (1 - DAMPING) * q + DAMPING * updates[0]
        q_hat = (1 - DAMPING) * q_hat + DAMPING * updates[1]
        v = (1 - DAMPING) * v + DAMPING * updates[2]
        v_hat = (1 - DAMPING) * v_hat + DAMPING * updates[3]
        iters = it
        if residual <= FP_TOL * (1.0 + max(abs(q), abs(q_hat), abs(v), abs(v_hat))):
            break
    else:
        raise SolverError(f"quenched fixed point not converged; residual {residual:.3e}", residual)

    d_q, d_q_hat, d_v, d_v_hat = _quenched_source_derivatives(
        lam, e, m, eta, alpha_load, ridge, q, q_hat, v, v_hat
    )
    b = 1.0 / (1.0 + q_hat * v * lam)
    per_mode = lam * b * (d_q_hat - q_hat * (v * d_q_hat + q_hat * d_v) * lam * b)
    eg = float(w**2 @ per_mode) / m
    gamma = 1.0 - 1.0 / d_q_hat if d_q_hat != 0 else math.inf
    return SaddleSolution(
        q, q_hat, gamma, eg, iters, residual, v=v, v_hat=v_hat,
        d_q_hat=d_q_hat, d_v_hat=d_v_hat, valid=gamma < 1.0,
    )


def _quenched_source_derivatives(lam, e, m, eta, alpha_load, ridge, q, q_hat, v, v_hat):
    """Solve the linear system for (d_J q, d_J q_hat, d_J v, d_J v_hat)."""
    b = 1.0 / (1.0 + q_hat * v * lam)
    c = 1.0 / (1.0 + v_hat + q_hat * e)
    t1 = float(np.sum(b**2 * lam)) / m
    t2 = float(np.sum(b**2 * lam**2)) / m
    u0 = float(np.sum(c**2)) / m
    u1 = float(np.sum(c**2 * e)) / m
    u2 = float(np.sum(c**2 * e**2)) / m
    kappa = alpha_load / (ridge + q) ** 2
    # unknowns ordered (d q, d q_hat, d v, d v_hat)
    a_mat = np.array(
        [
            [kappa, 1.0, 0.0, 0.0],
            [1.0, v**2 * t2 + u2, -t1, u1],
            [0.0, -t1, q_hat**2 * t2, eta],
            [0.0, u1, eta, u0],
        ]
    )
    rhs = np.array([1.0, 0.0, 0.0, 0.0])
    # entries span many decades at extreme load; the raw condition number is
    # pessimistic for this structured matrix, so solve with one step of
    # iterative refinement and gate on the actual residual instead
    try:
        sol = np.linalg.solve(a_mat, rhs)
        sol = sol + np.linalg.solve(a_mat, rhs - a_mat @ sol)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"source-derivative system singular: {exc}", math.inf)
    resid = float(np.abs(rhs - a_mat @ sol).max())
    if not np.all(np.isfinite(sol)) or resid > 1e-8:
        raise SingularSystemError(
            f"source-derivative system unreliable (residual {resid:.3e})", resid
        )
    d_q, d_q_hat, d_v, d_v_hat = sol
    return float(d_q), float(d_q_hat), float(d_v), float(d_v_hat)


def quenched_isotropic_source_derivatives(
    lam, m, eta, alpha_load, ridge, q, q_hat, v_hat, sigma_eps_sq
):
    """Explicit 2x2 system for isotropic noise Sigma_eps = sigma_eps^2 I.

    Returns (d_J q_hat, d_J v_hat); used as a cross-check of the general path.
    """
    h = 1.0 + v_hat + sigma_eps_sq * q_hat
    g = 1.0 / (h + q_hat * lam)
    t1 = float(np.sum(g**2 * lam)) / m
    t2 = float(np.sum(g**2 * lam**2)) / m
    kappa = alpha_load / (ridge + q) ** 2
    a_mat = np.array(
        [
            [1.0 - kappa * (t2 + sigma_eps_sq * t1 + eta * sigma_eps_sq**2 / h**2),
             -kappa * (t1 + eta * sigma_eps_sq / h**2)],
            [-(h**2 * t1 + sigma_eps_sq * q_hat**2 * t2), eta - q_hat**2 * t2],
        ]
    )
    sol = np.linalg.solve(a_mat, np.array([1.0, 0.0]))
    return float(sol[0]), float(sol[1])


# ---------------------------------------------------------------------------
# builders, learning curves, Monte Carlo oracle


def power_law_model(
    m: int,
    exponent: float,
    target_mode: int | None = None,
    wstar: np.ndarray | None = None,
    noise_scale: float = 0.0,
    a_spec=None,
    n_h: int | None = None,
) -> SpectralModel:
    """Convenience builder: lambda_k = k^{-exponent} with a chosen target.

    With target_mode set, the target is the single eigenfunction normalized to
    unit second moment: w_k = sqrt(M / lambda_k).
    """
    lam = np.arange(1, m + 1, dtype=float) ** (-exponent)
    if wstar is None:
        if target_mode is None:
            raise InvalidConfigError("give target_mode or wstar")
        wstar = np.zeros(m)
        wstar[target_mode] = math.sqrt(m / lam[target_mode])
    a_spec = AIdentity() if a_spec is None else a_spec
    n_h = m if n_h is None else n_h
    noise = noise_scale * lam[:n_h]
    return SpectralModel(lam, wstar, noise, a_spec)


def spectrum_from_kernel(k: GramKernel | np.ndarray) -> np.ndarray:
    """Non-increasing positive spectrum of (1/n) K on a reference grid."""
    mat = k.matrix if isinstance(k, GramKernel) else np.asarray(k)
    eigs = np.linalg.eigvalsh(mat / mat.shape[0])[::-1]
    return eigs[eigs > 0]


def build_toy(
    spectrum_source,
    keep_top: int,
    noise_scale: float,
    amplify: tuple[int, Callable[[float], float]] | None = None,
    target_mode: int = 0,
) -> SpectralModel:
    """Noisy projected-feature toy model.

    The feature map projects onto the top keep_top eigenmodes of the teacher
    covariance; the noise spectrum is noise_scale * Sigma_M on those modes.
    `amplify` = (mode_index, delta_of_p) adds a P-dependent boost to one
    eigenvalue at solve time (alignment-from-feature-learning surrogate).
    """
    lam = (
        spectrum_from_kernel(spectrum_source)
        if isinstance(spectrum_source, (GramKernel, np.ndarray)) and np.ndim(getattr(spectrum_source, "matrix", spectrum_source)) == 2
        else np.sort(np.asarray(spectrum_source, dtype=float))[::-1]
    )
    m = lam.shape[0]
    if keep_top > m:
        raise InvalidConfigError("keep_top exceeds number of modes")
    wstar = np.zeros(m)
    wstar[target_mode] = math.sqrt(m / lam[target_mode])
    noise = noise_scale * lam[:keep_top]
    return SpectralModel(lam, wstar, noise, AProjection(keep_top), amplify=amplify)


def learning_curve(
    model: SpectralModel,
    p_grid,
    ridge: float,
    quenched: bool | None = None,
) -> list[tuple[float, SaddleSolution]]:
    """Theory E_g over a grid of sample sizes (alpha_load = P / M per point)."""
    if quenched is None:
        quenched = isinstance(model.a_spec, AGaussian)
    rows = []
    for p in p_grid:
        mdl = model.at_sample_size(p)
        alpha_load = p / mdl.m
        sol = (
            solve_quenched_gaussian_a(mdl, alpha_load, ridge)
            if quenched
            else solve_fixed_a(mdl, alpha_load, ridge)
        )
        rows.append((float(p), sol))
    return rows


def mc_population_error(model: SpectralModel, w_fit: np.ndarray, a: np.ndarray) -> float:
    """Closed-form population risk of a fitted student weight vector."""
    lam, w_star, m = model.sigma_m_eigs, model.wstar, model.m
    resid = a.T @ w_fit - w_star
    return (float(resid @ (lam * resid)) + float(w_fit @ (model.noise_eigs * w_fit))) / m


def mc_learning_curve(
    model: SpectralModel,
    p_grid,
    ridge: float,
    trials: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo oracle: sample the model and ridge-regress directly.

    Fresh feature-map draw per trial for gaussian specs, fixed map otherwise.
    The population error is evaluated in closed form rather than on a test
    sample.  Returns (means, stds) per grid point.
    """
    means, stds = [], []
    gaussian = isinstance(model.a_spec, AGaussian)
    sqrt_m = math.sqrt(model.m)
    for pi, p in enumerate(p_grid):
        errs = []
        for t in range(trials):
            cell = derive_seed(seed, "mc", pi, t)
            a = model.materialize_a(derive_seed(cell, "A")) if gaussian else model.a_matrix()
            psi, y = taskgen.sample_gaussian_covariates(model, int(p), derive_seed(cell, "data"), a_matrix=a)
            x = psi / sqrt_m
            gram = GramKernel(x @ x.T, "reconstructed", np.arange(int(p)))
            fit = regression.fit(gram, y, ridge_lambda=ridge)
            w_fit = x.T @ fit.dual_coefficients
            errs.append(mc_population_error(model, w_fit, a))
        means.append(float(np.mean(errs)))
        stds.append(float(np.std(errs, ddof=1)) if trials > 1 else 0.0)
    return np.asarray(means), np.asarray(stds)
