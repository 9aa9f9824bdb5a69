"""Config-driven experiment runner.

Subcommands share one TOML config schema; each run writes CSV/blob artifacts
plus a manifest (config hash, per-cell seeds, artifact list, discard log)
into the output directory.  Reruns with the same config and seed produce
byte-identical artifacts.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import vll
from vll import blobs, ensemble, kernels, nn, regression, taskgen, theory
from vll.errors import (
    DivergenceError,
    InvalidConfigError,
    NumericalError,
    SingularSystemError,
    SolverError,
    VllError,
)
from vll.seeding import derive_seed

log = logging.getLogger("vll")

MODES = ("theory", "mc", "train", "ensemble", "phalf", "sweep")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TaskConfig:
    d: int = 10
    k: int = 2
    beta_norm: float = 1.0


@dataclass
class GridConfig:
    p_values: list = field(default_factory=list)
    n_values: list = field(default_factory=list)
    alpha_values: list = field(default_factory=list)
    depth: int = 3


@dataclass
class ReplicationConfig:
    n_seeds: int = 1
    n_datasets: int = 1


@dataclass
class SolverConfig:
    ridge: float = 0.0
    tolerance: float = 1e-12
    lr: float = 1.0
    threshold: float = 1e-6
    max_steps: int = 30_000


@dataclass
class ToyConfig:
    """Spectral-model table: teacher spectrum, feature map, noise."""

    m: int = 200
    exponent: float = 1.0
    target_mode: int = 0
    keep_top: int | None = None
    noise_scale: float = 0.0
    eta: float | None = None
    sigma_a: float = 1.0
    quenched: bool = False
    amplify_mode: int | None = None
    amplify_coeff: float = 0.0


@dataclass
class PhalfConfig:
    curves: list = field(default_factory=list)  # entries: {path, n, alpha}
    level: float = 0.5


@dataclass
class ExperimentConfig:
    mode: str
    output_dir: str
    master_seed: int = 0
    n_test: int = 2048
    task: TaskConfig = field(default_factory=TaskConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    replication: ReplicationConfig = field(default_factory=ReplicationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    toy: ToyConfig = field(default_factory=ToyConfig)
    phalf: PhalfConfig = field(default_factory=PhalfConfig)

    def validate(self):
        if self.mode not in MODES:
            raise InvalidConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.replication.n_seeds < 1 or self.replication.n_datasets < 1:
            raise InvalidConfigError("replication counts must be >= 1")
        for name in ("p_values", "n_values", "alpha_values"):
            vals = getattr(self.grid, name)
            if vals and any(b <= a for a, b in zip(vals, vals[1:])):
                raise InvalidConfigError(f"grid.{name} must be strictly increasing")
        if self.mode in ("theory", "mc", "train", "ensemble", "sweep") and not self.grid.p_values:
            raise InvalidConfigError(f"grid.p_values required for mode={self.mode}")
        if self.mode in ("train", "ensemble", "sweep"):
            if not self.grid.n_values:
                raise InvalidConfigError("grid.n_values required for network modes")
            if not self.grid.alpha_values:
                raise InvalidConfigError("grid.alpha_values required for network modes")
        if self.mode == "phalf" and not self.phalf.curves:
            raise InvalidConfigError("phalf.curves required for mode=phalf")


def _build_section(cls, raw: dict, path: str):
    fields = {f: t for f, t in cls.__dataclass_fields__.items()}
    unknown = set(raw) - set(fields)
    if unknown:
        raise InvalidConfigError(f"unknown key(s) {sorted(unknown)} in [{path}]")
    return cls(**raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    sections = {
        "task": TaskConfig,
        "grid": GridConfig,
        "replication": ReplicationConfig,
        "solver": SolverConfig,
        "toy": ToyConfig,
        "phalf": PhalfConfig,
    }
    kwargs = {}
    for name, cls in sections.items():
        if name in raw:
            kwargs[name] = _build_section(cls, raw.pop(name), name)
    top_fields = set(ExperimentConfig.__dataclass_fields__) - set(sections)
    unknown = set(raw) - top_fields
    if unknown:
        raise InvalidConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    missing = {"mode", "output_dir"} - set(raw)
    if missing:
        raise InvalidConfigError(f"missing required key(s) {sorted(missing)}")
    config = ExperimentConfig(**raw, **kwargs)
    config.validate()
    return config


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"malformed config {path}: {exc}")
    return config_from_dict(raw)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    config_hash: str
    mode: str
    master_seed: int
    tool_version: str
    started_at: float
    wall_seconds: float
    cell_seeds: dict
    artifacts: list
    discard_log: list

    def save(self, out_dir: str) -> str:
        path = os.path.join(out_dir, "manifest.json")
        blobs.atomic_write_bytes(
            path, json.dumps(asdict(self), indent=2, sort_keys=True).encode()
        )
        return path


# ---------------------------------------------------------------------------
# model construction from config


def model_from_config(config: ExperimentConfig) -> theory.SpectralModel:
    toy = config.toy
    lam = np.arange(1, toy.m + 1, dtype=float) ** (-toy.exponent)
    wstar = np.zeros(toy.m)
    wstar[toy.target_mode] = math.sqrt(toy.m / lam[toy.target_mode])
    amplify = None
    if toy.amplify_mode is not None:
        idx, coeff = toy.amplify_mode, toy.amplify_coeff
        amplify = (idx, lambda p: coeff * math.sqrt(p))
    if toy.quenched or toy.eta is not None:
        eta = 1.0 if toy.eta is None else toy.eta
        n_h = max(1, round(eta * toy.m))
        noise = toy.noise_scale * np.ones(n_h)
        return theory.SpectralModel(
            lam, wstar, noise, theory.AGaussian(toy.sigma_a), amplify=amplify
        )
    keep = toy.m if toy.keep_top is None else toy.keep_top
    noise = toy.noise_scale * lam[:keep]
    spec = theory.AIdentity() if keep == toy.m else theory.AProjection(keep)
    return theory.SpectralModel(lam, wstar, noise[:keep], spec, amplify=amplify)


# ---------------------------------------------------------------------------
# mode implementations


def _run_theory(config: ExperimentConfig, out_dir: str, manifest: RunManifest):
    model = model_from_config(config)
    quenched = isinstance(model.a_spec, theory.AGaussian)
    rows = []
    for p, sol in theory.learning_curve(model, config.grid.p_values, config.solver.ridge):
        rows.append(
            (p, sol.q, sol.q_hat, sol.gamma, sol.v, sol.v_hat, sol.eg,
             sol.iterations, sol.residual)
        )
        log.info("theory p=%g eg=%.6g (%s)", p, sol.eg, "quenched" if quenched else "fixed-A")
    path = os.path.join(out_dir, "theory.csv")
    blobs.emit_csv(rows, "theory", path)
    manifest.artifacts.append(os.path.basename(path))


def _run_mc(config: ExperimentConfig, out_dir: str, manifest: RunManifest):
    model = model_from_config(config)
    trials = config.replication.n_datasets
    seed = derive_seed(config.master_seed, "mc")
    manifest.cell_seeds["mc"] = seed
    means, stds = theory.mc_learning_curve(
        model, config.grid.p_values, config.solver.ridge, trials, seed=seed
    )
    rows = [
        (p, mu, sd, None, None, None, None, None)
        for p, mu, sd in zip(config.grid.p_values, means, stds)
    ]
    path = os.path.join(out_dir, "mc_curve.csv")
    blobs.emit_csv(rows, "curve", path)
    manifest.artifacts.append(os.path.basename(path))


def _train_cell(config, task, test_set, p, width, alpha, manifest):
    """One (P, N, alpha) cell: seeds x datasets trainings on a shared test set."""
    rep = config.replication
    values = np.empty((rep.n_seeds, rep.n_datasets, len(test_set)))
    for j in range(rep.n_datasets):
        data_seed = derive_seed(config.master_seed, "train", p, width, alpha, "data", j)
        train_set = taskgen.fresh_split(task, p, data_seed)
        for i in range(rep.n_seeds):
            init_seed = derive_seed(config.master_seed, "train", p, width, alpha, "init", i)
            manifest.cell_seeds[f"train/p{p}/n{width}/a{alpha}/d{j}/s{i}"] = init_seed
            state = nn.init_mlp(config.task.d, config.grid.depth, width, alpha, seed=init_seed)
            trained, status = nn.train_full_batch(
                state, train_set,
                threshold=config.solver.threshold,
                max_steps=config.solver.max_steps,
                base_lr=config.solver.lr,
                test_dataset=test_set,
            )
            if status == nn.STATUS_DISCARD:
                manifest.discard_log.append(
                    {"p": p, "n": width, "alpha": alpha, "dataset": j, "seed": i}
                )
            values[i, j] = nn.centered_output(trained, test_set.inputs)
    grid = ensemble.PredictionGrid(values, test_set.targets, {"p": p, "n": width, "alpha": alpha})
    return grid


def _curve_row(p, grid: ensemble.PredictionGrid):
    single = float(np.mean((grid.values - grid.targets) ** 2, axis=-1).mean())
    ens_pred = ensemble.ensemble_predictions(grid)  # (Dsets, T)
    ensembled = float(np.mean((ens_pred - grid.targets) ** 2, axis=-1).mean())
    if grid.values.shape[0] >= 2 and grid.values.shape[1] >= 2:
        dec = ensemble.decompose(grid)
        parts = (dec.bias_sq, dec.v_init, dec.v_dataset, dec.v_cross)
    else:
        parts = (None, None, None, None)
    return (p, single, float(np.std((grid.values - grid.targets) ** 2)), ensembled) + parts


def _run_train(config: ExperimentConfig, out_dir: str, manifest: RunManifest):
    task_seed = derive_seed(config.master_seed, "task")
    task, test_set = taskgen.make_task(
        config.task.d, config.task.k, p_train=2, p_test=config.n_test,
        beta_norm=config.task.beta_norm, seed=task_seed,
    )
    manifest.cell_seeds["task"] = task_seed
    for width in config.grid.n_values:
        for alpha in config.grid.alpha_values:
            rows = []
            for p in config.grid.p_values:
                grid = _train_cell(config, task, test_set, p, width, alpha, manifest)
                rows.append(_curve_row(p, grid))
                log.info("train n=%d alpha=%g p=%d eg=%.5g", width, alpha, p, rows[-1][1])
            path = os.path.join(out_dir, f"curve_n{width}_alpha{alpha:g}.csv")
            blobs.emit_csv(rows, "curve", path)
            manifest.artifacts.append(os.path.basename(path))


def _run_ensemble(config: ExperimentConfig, out_dir: str, manifest: RunManifest):
    """Kernel-regression ensembling routes with initialization eNTKs.

    For each (P, N, alpha) cell, draws n_seeds networks, computes their
    initialization eNTK on the joint train+test grid, and compares three
    ensembling routes: averaging predictions, averaging Gram matrices, and
    averaging induced feature maps.
    """
    task_seed = derive_seed(config.master_seed, "task")
    task, test_set = taskgen.make_task(
        config.task.d, config.task.k, p_train=2, p_test=config.n_test,
        beta_norm=config.task.beta_norm, seed=task_seed,
    )
    manifest.cell_seeds["task"] = task_seed
    ridge = config.solver.ridge
    for width in config.grid.n_values:
        for alpha in config.grid.alpha_values:
            route_rows = {"prediction": [], "kernel": [], "feature": []}
            for p in config.grid.p_values:
                data_seed = derive_seed(config.master_seed, "ens", p, width, alpha, "data")
                train_set = taskgen.fresh_split(task, p, data_seed)
                x = np.vstack([train_set.inputs, test_set.inputs])
                y_train = train_set.targets
                y_test = test_set.targets
                basis = kernels.reference_basis(x, config.grid.depth)
                grams, fmaps, preds = [], [], []
                for i in range(config.replication.n_seeds):
                    seed = derive_seed(config.master_seed, "ens", p, width, alpha, "init", i)
                    manifest.cell_seeds[f"ens/p{p}/n{width}/a{alpha}/s{i}"] = seed
                    state = nn.init_mlp(
                        config.task.d, config.grid.depth, width, alpha, seed=seed
                    )
                    gram = kernels.entk(state, x)
                    grams.append(gram)
                    fmaps.append(kernels.mercer_features(gram, basis=basis))
                    preds.append(_kernel_route_error(gram, p, y_train, y_test, ridge))
                eg_single = float(np.mean([e for _, e in preds]))
                pred_avg = np.mean([pr for pr, _ in preds], axis=0)
                eg_pred = regression.gen_error(pred_avg, y_test)
                k_avg = ensemble.ensemble_kernels(grams)
                _, eg_kavg = _kernel_route_error(k_avg, p, y_train, y_test, ridge)
                f_avg = ensemble.ensemble_features(fmaps)
                k_feat = kernels.kernel_from_features(f_avg)
                _, eg_feat = _kernel_route_error(k_feat, p, y_train, y_test, ridge)
                for name, eg in (
                    ("prediction", eg_pred), ("kernel", eg_kavg), ("feature", eg_feat)
                ):
                    route_rows[name].append(
                        (p, eg_single, None, eg, None, None, None, None)
                    )
                log.info(
                    "ensemble n=%d alpha=%g p=%d single=%.5g pred=%.5g kernel=%.5g feat=%.5g",
                    width, alpha, p, eg_single, eg_pred, eg_kavg, eg_feat,
                )
            for name, rows in route_rows.items():
                path = os.path.join(out_dir, f"ensemble_{name}_n{width}_alpha{alpha:g}.csv")
                blobs.emit_csv(rows, "curve", path)
                manifest.artifacts.append(os.path.basename(path))


def _kernel_route_error(gram, p, y_train, y_test, ridge):
    k = gram.matrix if isinstance(gram, kernels.GramKernel) else gram
    k_train = kernels.GramKernel(k[:p, :p], "entk0", np.arange(p))
    fit_result = regression.fit(k_train, y_train, ridge_lambda=ridge)
    pred = regression.predict(fit_result, k[p:, :p])
    return pred, regression.gen_error(pred, y_test)


def _run_phalf(config: ExperimentConfig, out_dir: str, manifest: RunManifest):
    rows = []
    for entry in config.phalf.curves:
        unknown = set(entry) - {"path", "n", "alpha"}
        if unknown:
            raise InvalidConfigError(f"unknown key(s) {sorted(unknown)} in phalf curve entry")
        if "path" not in entry:
            raise InvalidConfigError("phalf curve entry missing 'path'")
        cols = blobs.read_csv(entry["path"])
        for needed in ("p", "eg_mean", "eg_ensembled"):
            if needed not in cols:
                raise InvalidConfigError(f"{entry['path']} lacks column {needed!r}")
        bracket = ensemble.p_half_bracket(
            cols["p"], cols["eg_mean"], cols["eg_ensembled"], level=config.phalf.level
        )
        if bracket is None:
            p_half = lo = hi = None
        else:
            p_half, lo, hi = bracket
        rows.append((entry.get("n", 0), entry.get("alpha", 0.0), p_half, lo, hi))
    path = os.path.join(out_dir, "phalf.csv")
    blobs.emit_csv(rows, "phalf", path)
    manifest.artifacts.append(os.path.basename(path))


_RUNNERS = {
    "theory": _run_theory,
    "mc": _run_mc,
    "train": _run_train,
    "ensemble": _run_ensemble,
    "phalf": _run_phalf,
    "sweep": _run_train,  # sweep executes the full train grid
}


def run(config: ExperimentConfig, jobs: int | None = None) -> RunManifest:
    config.validate()
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise InvalidConfigError(f"output_dir {out_dir} is not writable")
    started = time.time()
    manifest = RunManifest(
        config_hash=config_hash(config),
        mode=config.mode,
        master_seed=config.master_seed,
        tool_version=vll.__version__,
        started_at=started,
        wall_seconds=0.0,
        cell_seeds={},
        artifacts=[],
        discard_log=[],
    )
    _RUNNERS[config.mode](config, out_dir, manifest)
    manifest.wall_seconds = time.time() - started
    manifest.save(out_dir)
    return manifest


# ---------------------------------------------------------------------------
# entry point


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("VLL_LOG", "error").lower()
    )
    if level is None:
        level = logging.ERROR
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vll", description="variance-limited learning curve experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        cmd = sub.add_parser(mode, help=f"run a {mode} experiment")
        cmd.add_argument("--config", required=True, help="TOML experiment config")
        cmd.add_argument("--out", default=None, help="override output directory")
        cmd.add_argument("--jobs", type=int, default=os.cpu_count(), help="worker count")
        cmd.add_argument("--seed", type=int, default=None, help="override master seed")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if config.mode != args.command:
            # subcommand wins; the config file supplies the rest
            config.mode = args.command
            config.validate()
        if args.out is not None:
            config.output_dir = args.out
        if args.seed is not None:
            config.master_seed = args.seed
        manifest = run(config, jobs=args.jobs)
    except InvalidConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, DivergenceError, NumericalError, SingularSystemError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except VllError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(os.path.join(config.output_dir, "manifest.json"))
    log.info("completed in %.1fs, %d artifacts", manifest.wall_seconds, len(manifest.artifacts))
    return 0


if __name__ == "__main__":
    sys.exit(main())
