"""Analytic infinite-width NTK, empirical NTK extraction, alignment metrics,
and the Mercer-square-root feature machinery."""

from dataclasses import dataclass

import numpy as np

from vll import nn as nnmod
from vll.errors import (
    BasisMismatchError,
    MemoryBudgetError,
    ShapeMismatchError,
    UndefinedAlignmentError,
)

PROV_NTK_INF = "ntk_inf"
PROV_NNGP = "nngp"
PROV_ENTK0 = "entk0"
PROV_ENTKF = "entkf"
PROV_AVERAGED = "averaged"
PROV_RECONSTRUCTED = "reconstructed"

DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes of Jacobian-equivalent workspace
DEFAULT_RANK_TOL = 1e-10


@dataclass
class GramKernel:
    """Symmetric PSD Gram matrix with a provenance tag."""

    matrix: np.ndarray
    provenance: str
    point_ids: np.ndarray

    @classmethod
    def square(cls, matrix: np.ndarray, provenance: str, point_ids=None) -> "GramKernel":
        if point_ids is None:
            point_ids = np.arange(matrix.shape[0])
        k = cls(np.asarray(matrix, dtype=float), provenance, np.asarray(point_ids))
        k.validate()
        return k

    def validate(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ShapeMismatchError("square Gram expected")
        scale = np.abs(m).max() or 1.0
        if np.abs(m - m.T).max() > 1e-10 * scale:
            raise ValueError("Gram matrix not symmetric within tolerance")
        eigs = np.linalg.eigvalsh(m)
        lam_max = max(eigs[-1], 0.0)
        if eigs[0] < -1e-8 * max(lam_max, np.finfo(float).tiny):
            raise ValueError(f"Gram matrix not numerically PSD (min eig {eigs[0]:.3e})")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass
class FeatureMap:
    """Mercer-square-root features on a grid, expressed in a fixed basis.

    Column k corresponds to basis function k of `basis_id`, so feature maps
    from independent initializations can be averaged entrywise.
    """

    features: np.ndarray  # (n_points, n_basis)
    basis_id: str
    eigenvalues: np.ndarray  # retained kernel eigenvalues, non-negative


@dataclass
class FixedBasis:
    """Orthonormal basis on an evaluation grid (columns, w.r.t. counting measure)."""

    vectors: np.ndarray  # (n_points, n_basis), orthonormal columns
    basis_id: str


def _relu_layer(cov, s1, s2, sigma_sq):
    """One step of the arc-cosine recursion for ReLU.

    Given previous-layer covariances (cross block `cov`, self variances s1, s2),
    returns the next covariance block and the derivative kernel block.
    """
    norm = np.sqrt(np.outer(s1, s2))
    c = np.clip(cov / np.where(norm > 0, norm, 1.0), -1.0, 1.0)
    theta = np.arccos(c)
    nngp = sigma_sq * norm * (np.sin(theta) + (np.pi - theta) * np.cos(theta)) / (2 * np.pi)
    dot = sigma_sq * (np.pi - theta) / (2 * np.pi)
    return nngp, dot


def ntk_infinite_relu(x1: np.ndarray, x2: np.ndarray, depth_L: int, sigma: float = 1.0):
    """Infinite-width NTK and NNGP for the bias-free ReLU MLP.

    Layerwise recursion: Sigma^(1) = (sigma^2 / d) x1 x2^T; deeper layers use
    the closed-form Gaussian ReLU expectations; Theta accumulates
    Sigma^(ell) + Theta^(ell-1) Sigma_dot^(ell).  Returns (ntk, nngp).
    """
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x1.shape[1] != x2.shape[1]:
        raise ShapeMismatchError("input dimension mismatch")
    d = x1.shape[1]
    sigma_sq = sigma**2
    cov = sigma_sq * (x1 @ x2.T) / d
    s1 = sigma_sq * np.einsum("ij,ij->i", x1, x1) / d
    s2 = sigma_sq * np.einsum("ij,ij->i", x2, x2) / d
    ntk = cov.copy()
    for _ in range(2, depth_L + 1):
        cov, dot = _relu_layer(cov, s1, s2, sigma_sq)
        ntk = cov + ntk * dot
        s1 = sigma_sq * s1 / 2.0  # E[relu(u)^2] = var(u)/2 for centered u
        s2 = sigma_sq * s2 / 2.0
    return ntk, cov


def entk(
    state: "nnmod.MlpState",
    x1: np.ndarray,
    x2: np.ndarray | None = None,
    point_ids=None,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> GramKernel:
    """Empirical NTK of the centered output at the current parameters.

    Exact Jacobian inner products, assembled layer by layer from the rank-one
    structure of per-sample weight gradients (equal to J J^T without
    materializing J).  With distinct x1, x2 the rectangular cross block is
    returned as a plain array.
    """
    x1 = np.atleast_2d(x1)
    symmetric = x2 is None
    x2m = x1 if symmetric else np.atleast_2d(x2)
    n, m = x1.shape[0], x2m.shape[0]
    workspace = 8 * (n + m) * (state.width_N + state.n_params() // state.depth_L)
    if workspace > memory_budget:
        raise MemoryBudgetError(
            f"eNTK workspace {workspace} bytes exceeds budget {memory_budget}; reduce batch"
        )
    bufs1 = nnmod.ntk_buffers(state, x1)
    bufs2 = bufs1 if symmetric else nnmod.ntk_buffers(state, x2m)
    k = np.zeros((n, m))
    for (pref_sq, d1, a1), (_, d2, a2) in zip(bufs1, bufs2):
        k += pref_sq * (d1 @ d2.T) * (a1 @ a2.T)
    if not symmetric:
        return k
    k = 0.5 * (k + k.T)
    prov = PROV_ENTK0 if state.at_init() else PROV_ENTKF
    if point_ids is None:
        point_ids = np.arange(n)
    return GramKernel(k, prov, np.asarray(point_ids))


def alignment(k: GramKernel, y: np.ndarray) -> float:
    """Kernel-task alignment A(K) = y^T K y / (Tr K |y|^2)."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != k.n:
        raise ShapeMismatchError("target length must match kernel size")
    tr = float(np.trace(k.matrix))
    ysq = float(y @ y)
    if tr <= 0 or ysq == 0:
        raise UndefinedAlignmentError("alignment undefined for zero trace or zero target")
    return float(y @ k.matrix @ y) / (tr * ysq)


def alignment_frobenius(k: GramKernel, y: np.ndarray) -> float:
    """A_F(K) = y^T K y / (|K|_F |y|^2)."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != k.n:
        raise ShapeMismatchError("target length must match kernel size")
    fro = float(np.linalg.norm(k.matrix))
    ysq = float(y @ y)
    if fro == 0 or ysq == 0:
        raise UndefinedAlignmentError("alignment undefined for zero kernel or target")
    return float(y @ k.matrix @ y) / (fro * ysq)


def cka(k1: GramKernel, k2: GramKernel) -> float:
    """Centered kernel alignment with the standard product normalization.

    CKA = Tr[K1c K2c] / (|K1c|_F |K2c|_F), Kc = C K C, C = I - (1/P) 1 1^T.
    This normalization is scale invariant and gives CKA(K, K) = 1.
    """
    if k1.n != k2.n:
        raise ShapeMismatchError("kernel size mismatch")
    p = k1.n
    c = np.eye(p) - np.full((p, p), 1.0 / p)
    k1c = c @ k1.matrix @ c
    k2c = c @ k2.matrix @ c
    n1, n2 = np.linalg.norm(k1c), np.linalg.norm(k2c)
    if n1 == 0 or n2 == 0:
        raise UndefinedAlignmentError("CKA undefined for zero-norm centered kernel")
    return float(np.sum(k1c * k2c)) / (n1 * n2)


def reference_basis(x_grid: np.ndarray, depth_L: int, sigma: float = 1.0) -> FixedBasis:
    """Fixed orthonormal basis: eigenbasis of NTK_inf on a shared grid.

    Deterministic and seed-independent, so features of different
    initializations land in the same coordinate system.
    """
    ntk, _ = ntk_infinite_relu(x_grid, x_grid, depth_L, sigma)
    _, vecs = np.linalg.eigh(ntk)
    vecs = vecs[:, ::-1].copy()
    # fix the sign gauge deterministically
    signs = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    vecs *= np.where(signs == 0, 1.0, signs)
    basis_id = f"ntk_inf_eigh:L={depth_L}:sigma={sigma!r}:n={x_grid.shape[0]}"
    return FixedBasis(vecs, basis_id)


def mercer_features(
    k: GramKernel,
    basis: FixedBasis | None = None,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> FeatureMap:
    """Feature map psi with psi psi^T reconstructing K on its grid.

    Eigendecomposes (1/n) K, keeps modes above rank_tol * lambda_max, and
    rotates sqrt-scaled eigenfunctions onto the fixed basis.  With basis=None
    the kernel's own eigenbasis is used (basis_id "self").
    """
    n = k.n
    lam, v = np.linalg.eigh(k.matrix / n)
    order = np.argsort(lam)[::-1]
    lam, v = lam[order], v[:, order]
    lam_max = max(lam[0], 0.0)
    keep = lam > rank_tol * lam_max
    lam_r, v_r = np.clip(lam[keep], 0.0, None), v[:, keep]
    if basis is None:
        b = np.eye(n)
        basis_id = "self"
    else:
        if basis.vectors.shape[0] != n:
            raise BasisMismatchError("basis grid size does not match kernel grid")
        b, basis_id = basis.vectors, basis.basis_id
    # psi = sqrt(n) Phi diag(sqrt(lambda)) U, U = Phi^T B / n = V^T B
    psi = np.sqrt(n) * (v_r * np.sqrt(lam_r)) @ (v_r.T @ b)
    return FeatureMap(psi, basis_id, lam_r)


def kernel_from_features(fmap: FeatureMap, provenance: str = PROV_RECONSTRUCTED) -> GramKernel:
    k = fmap.features @ fmap.features.T
    return GramKernel(0.5 * (k + k.T), provenance, np.arange(k.shape[0]))
