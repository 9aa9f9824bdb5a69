"""From-scratch ReLU MLP in NTK parameterization with centered outputs.

The network has no biases.  Layer ell computes h = (sigma / sqrt(fan_in)) W h_prev
with standard-normal weights at initialization.  The output scale alpha controls
laziness either through the per-layer sigma (weight_rescale, alpha = sigma^L) or
through a multiplier on the final centered output (output_rescale).
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from vll.errors import DivergenceError, InvalidConfigError, ShapeMismatchError
from vll.seeding import rng_from_seed

WEIGHT_RESCALE = "weight_rescale"
OUTPUT_RESCALE = "output_rescale"

STATUS_CONVERGED = "converged"
STATUS_DISCARD = "discard"
STATUS_MAX_STEPS_OK = "max_steps_ok"


@dataclass
class MlpState:
    """Weights plus architecture and laziness configuration.

    init_weights is a frozen snapshot taken at construction; the centered
    output f(x) = scale * (f_theta(x) - f_theta0(x)) always subtracts the
    initial function, so f is identically zero at initialization.
    """

    weights: list[np.ndarray]
    depth_L: int
    width_N: int
    sigma: float
    alpha_mode: str
    alpha: float
    init_weights: tuple[np.ndarray, ...] = field(repr=False, default=())

    def __post_init__(self):
        if not self.init_weights:
            frozen = tuple(w.copy() for w in self.weights)
            for w in frozen:
                w.setflags(write=False)
            self.init_weights = frozen

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_scale(self) -> float:
        return self.alpha if self.alpha_mode == OUTPUT_RESCALE else 1.0

    def n_params(self) -> int:
        return sum(w.size for w in self.weights)

    def copy(self) -> "MlpState":
        return MlpState(
            [w.copy() for w in self.weights],
            self.depth_L,
            self.width_N,
            self.sigma,
            self.alpha_mode,
            self.alpha,
            self.init_weights,
        )

    def at_init(self) -> bool:
        return all(np.array_equal(w, w0) for w, w0 in zip(self.weights, self.init_weights))


def init_mlp(
    d: int,
    depth_L: int,
    width_N: int,
    alpha: float,
    alpha_mode: str = WEIGHT_RESCALE,
    seed: int = 0,
) -> MlpState:
    """Fresh network with i.i.d. standard-normal weights.

    weight_rescale: sigma = alpha^{1/L} enters every layer prefactor.
    output_rescale: sigma = 1 and alpha multiplies only the centered output.
    """
    if alpha <= 0:
        raise InvalidConfigError(f"alpha must be positive, got {alpha}")
    if depth_L < 2:
        raise InvalidConfigError(f"depth_L must be >= 2, got {depth_L}")
    if width_N < 1 or d < 1:
        raise InvalidConfigError("width and input dimension must be >= 1")
    if alpha_mode not in (WEIGHT_RESCALE, OUTPUT_RESCALE):
        raise InvalidConfigError(f"unknown alpha_mode {alpha_mode!r}")
    rng = rng_from_seed(seed)
    shapes = [(width_N, d)]
    shapes += [(width_N, width_N)] * (depth_L - 2)
    shapes += [(1, width_N)]
    weights = [rng.standard_normal(s) for s in shapes]
    sigma = alpha ** (1.0 / depth_L) if alpha_mode == WEIGHT_RESCALE else 1.0
    return MlpState(weights, depth_L, width_N, sigma, alpha_mode, alpha)


def _layer_prefactors(state: MlpState) -> list[float]:
    d = state.input_dim
    fans = [d] + [state.width_N] * (state.depth_L - 1)
    return [state.sigma / np.sqrt(fan) for fan in fans]


def _forward_full(state: MlpState, x_batch: np.ndarray, weights=None):
    """Preactivations and post-ReLU activations for every layer."""
    weights = state.weights if weights is None else weights
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=float))
    if x_batch.shape[1] != state.input_dim:
        raise ShapeMismatchError(
            f"expected input dim {state.input_dim}, got {x_batch.shape[1]}"
        )
    prefs = _layer_prefactors(state)
    acts = [x_batch]
    preacts = []
    h = x_batch
    for ell, (w, pref) in enumerate(zip(weights, prefs)):
        z = pref * (h @ w.T)
        preacts.append(z)
        if ell < state.depth_L - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
    return preacts, acts


def forward(state: MlpState, x_batch: np.ndarray):
    """Raw (uncentered, unscaled) outputs and per-layer activations."""
    preacts, acts = _forward_full(state, x_batch)
    return preacts[-1][:, 0], acts


def centered_output(state: MlpState, x_batch: np.ndarray) -> np.ndarray:
    """f(x) = scale * (f_theta(x) - f_theta0(x)); exactly zero at init."""
    raw, _ = forward(state, x_batch)
    preacts0, _ = _forward_full(state, x_batch, weights=state.init_weights)
    return state.output_scale * (raw - preacts0[-1][:, 0])


def _backprop(state: MlpState, preacts, acts, upstream: np.ndarray):
    """Per-layer weight gradients for sum_n upstream[n] * f(x_n)."""
    prefs = _layer_prefactors(state)
    grads = [None] * state.depth_L
    delta = upstream[:, None]  # (n, 1) at the output layer
    for ell in range(state.depth_L - 1, -1, -1):
        grads[ell] = prefs[ell] * (delta.T @ acts[ell])
        if ell > 0:
            delta = prefs[ell] * (delta @ state.weights[ell])
            delta = delta * (preacts[ell - 1] > 0)  # ReLU subgradient at 0 is 0
    return grads


def grad_loss(state: MlpState, dataset):
    """Mean-squared loss on the centered output and its exact gradient."""
    x, y = dataset.inputs, dataset.targets
    if len(y) == 0:
        raise ValueError("dataset must be nonempty")
    preacts, acts = _forward_full(state, x)
    preacts0, _ = _forward_full(state, x, weights=state.init_weights)
    f = state.output_scale * (preacts[-1][:, 0] - preacts0[-1][:, 0])
    resid = f - y
    loss = float(np.mean(resid**2))
    upstream = (2.0 / len(y)) * state.output_scale * resid
    return loss, _backprop(state, preacts, acts, upstream)


def ntk_buffers(state: MlpState, x_batch: np.ndarray):
    """Per-layer (prefactor^2, delta, input activations) for eNTK assembly.

    The per-sample gradient of the centered output w.r.t. W^(ell) is the
    rank-one outer product pref * delta_i * a_j, so Gram entries factor as
    pref^2 (delta . delta') (a . a') layer by layer.
    """
    preacts, acts = _forward_full(state, x_batch)
    prefs = _layer_prefactors(state)
    n = acts[0].shape[0]
    out = []
    delta = np.full((n, 1), state.output_scale)
    for ell in range(state.depth_L - 1, -1, -1):
        out.append((prefs[ell] ** 2, delta, acts[ell]))
        if ell > 0:
            delta = prefs[ell] * (delta @ state.weights[ell])
            delta = delta * (preacts[ell - 1] > 0)
    return out[::-1]


def output_jacobian(state: MlpState, x_batch: np.ndarray) -> np.ndarray:
    """Explicit per-sample Jacobian of the centered output, (n, n_params).

    Materializes every per-parameter derivative; intended for small nets and
    as the oracle for the factored eNTK path.
    """
    bufs = ntk_buffers(state, x_batch)
    n = np.atleast_2d(x_batch).shape[0]
    blocks = []
    for pref_sq, delta, a_in in bufs:
        pref = np.sqrt(pref_sq)
        blocks.append((pref * np.einsum("ni,nj->nij", delta, a_in)).reshape(n, -1))
    return np.concatenate(blocks, axis=1)


def default_lr(state: MlpState, base_lr: float = 1.0) -> float:
    """base_lr rescaled by sigma^{-2L} in weight_rescale mode."""
    if state.alpha_mode == WEIGHT_RESCALE:
        return base_lr * state.sigma ** (-2 * state.depth_L)
    return base_lr


def train_full_batch(
    state: MlpState,
    dataset,
    lr: float | None = None,
    threshold: float = 1e-6,
    max_steps: int = 30_000,
    base_lr: float = 1.0,
    test_dataset=None,
    max_halvings: int = 5,
):
    """Full-batch gradient descent to the interpolation threshold.

    Returns (trained_state, status).  If the threshold is not reached within
    max_steps, the run is kept (max_steps_ok) when the train loss is below
    10x the current test error, else discarded.  On a non-finite loss the
    learning rate is halved and training restarted, up to max_halvings times.
    """
    if lr is None:
        lr = default_lr(state, base_lr)
    if lr <= 0:
        raise InvalidConfigError("learning rate must be positive")
    x, y = dataset.inputs, dataset.targets
    last_err: DivergenceError | None = None
    for attempt in range(max_halvings + 1):
        trial = state.copy()
        cur_lr = lr * 0.5**attempt
        preacts0, _ = _forward_full(trial, x, weights=trial.init_weights)
        f0 = preacts0[-1][:, 0]
        diverged = False
        loss = np.inf
        # overflow on a diverging trajectory is expected; the halving retry
        # handles it, so silence the numpy warnings inside the step loop
        with np.errstate(over="ignore", invalid="ignore"):
            for step in range(max_steps + 1):
                preacts, acts = _forward_full(trial, x)
                f = trial.output_scale * (preacts[-1][:, 0] - f0)
                resid = f - y
                loss = float(np.mean(resid**2))
                if not np.isfinite(loss):
                    last_err = DivergenceError(step)
                    diverged = True
                    break
                if loss <= threshold:
                    return trial, STATUS_CONVERGED
                if step == max_steps:
                    break
                upstream = (2.0 / len(y)) * trial.output_scale * resid
                grads = _backprop(trial, preacts, acts, upstream)
                for w, g in zip(trial.weights, grads):
                    w -= cur_lr * g
        if diverged:
            continue
        if test_dataset is not None:
            test_pred = centered_output(trial, test_dataset.inputs)
            test_err = float(np.mean((test_pred - test_dataset.targets) ** 2))
            status = STATUS_MAX_STEPS_OK if loss < 10.0 * test_err else STATUS_DISCARD
        else:
            status = STATUS_MAX_STEPS_OK
        return trial, status
    raise last_err if last_err is not None else DivergenceError(0)
