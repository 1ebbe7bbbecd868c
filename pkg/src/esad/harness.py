"""Experiment harness: configs, training loops, seeded runs, sweeps, reports.

A run takes a raw dataset through split -> scenario -> standardize -> train
-> score -> AUC for each seed, then aggregates mean and standard deviation.
Everything is reproducible: each seed deterministically derives independent
child streams for splitting, scenario construction, weight initialization,
batch shuffling and the phi transform, so a (config, seed) pair always
produces the same numbers.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .data import (
    BENCHMARK_STATS,
    RawDataset,
    ScenarioConfig,
    SemiDataset,
    load_benchmark,
    load_csv,
    load_manifest,
    make_scenario,
    split_60_40,
    standardize,
    synth_gaussians,
)
from .losses import (
    LossBreakdown,
    PhiConfig,
    PhiKind,
    SemiLabel,
    SvddState,
    grad_sad_rec,
    grad_svdd,
    loss_ass,
    loss_norm_semi,
    loss_rec_semi,
    loss_sad_rec,
    loss_svdd,
    loss_total,
    semi_loss_and_grads,
    svdd_center,
)
from .model import (
    EsadModel,
    backward_pipeline,
    default_hidden_dim,
    default_rep_dim,
    flatten_pipeline_grads,
    forward_pipeline,
    model_param_arrays,
    new_model,
)
from .ndcore import (
    Activation,
    GradCheckReport,
    MlpStack,
    SgdConfig,
    backward,
    check_gradients_arrays,
    clip_global_norm,
    forward,
    lr_at_epoch,
    sgd_step,
)
from .scoring import auc, score_dataset


class ConfigError(ValueError):
    """Raised for unreadable, unknown or ill-typed configuration input."""


class TrainingDiverged(RuntimeError):
    """A loss component went non-finite mid-training."""

    def __init__(self, epoch: int, batch: int, component: str):
        self.epoch = epoch
        self.batch = batch
        self.component = component
        super().__init__(
            f"non-finite {component} loss at epoch {epoch}, batch {batch}"
        )


class Method:
    ESAD = "esad"
    DEEP_SAD = "deep-sad"
    ALL = (ESAD, DEEP_SAD)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs: data source, method, weights, schedule, seeds."""

    dataset: str = "synthetic"
    data_path: str | None = None
    manifest: str | None = None
    method: str = Method.ESAD
    lambda1: float = 1.0
    lambda2: float = 1.0
    gamma_l: float = 0.0
    gamma_p: float = 0.0
    seeds: tuple[int, ...] = (0,)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    hidden_dim: int | None = None
    rep_dim: int | None = None
    phi_kind: PhiKind = PhiKind.PERMUTATION
    phi_sigma: float = 1.0
    epsilon: float = 1e-6
    # Cap on the joint gradient L2 norm per step; 0 disables. Keeps plain
    # SGD stable when a batch's labeled group holds only a sample or two.
    clip_norm: float = 5.0
    # Synthetic-source knobs, used only when dataset == "synthetic".
    synth_normal: int = 800
    synth_anom: int = 80
    synth_dim: int = 8
    synth_separation: float = 6.0
    synth_seed: int = 0

    def __post_init__(self):
        if self.method not in Method.ALL:
            raise ConfigError(f"unknown method {self.method!r}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


_CONFIG_KEYS = {
    "dataset": str,
    "data_path": str,
    "manifest": str,
    "method": str,
    "lambda1": float,
    "lambda2": float,
    "gamma_l": float,
    "gamma_p": float,
    "seeds": str,
    "epochs": int,
    "batch_size": int,
    "initial_lr": float,
    "decay_every": int,
    "decay_factor": float,
    "hidden_dim": int,
    "rep_dim": int,
    "phi": str,
    "phi_sigma": float,
    "epsilon": float,
    "clip_norm": float,
    "synth_normal": int,
    "synth_anom": int,
    "synth_dim": int,
    "synth_separation": float,
    "synth_seed": int,
}


def parse_seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(tok) for tok in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("empty seed list")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in {text!r}")
    return seeds


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse the flat `key = value` config format.

    Blank lines and '#' comments are ignored; an empty value leaves the key
    at its default. Unknown keys and duplicate keys are errors.
    """
    values: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        value = value.split("#", 1)[0].strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if value:
            values[key] = value
    kwargs: dict = {}
    sgd_kwargs: dict = {}
    for key, value in values.items():
        caster = _CONFIG_KEYS[key]
        try:
            typed = caster(value)
        except ValueError:
            raise ConfigError(
                f"{source}: key {key!r} expects {caster.__name__}, got {value!r}"
            ) from None
        if key == "seeds":
            kwargs["seeds"] = parse_seed_list(value)
        elif key in ("epochs", "batch_size", "initial_lr", "decay_every", "decay_factor"):
            sgd_kwargs[key] = typed
        elif key == "phi":
            try:
                kwargs["phi_kind"] = PhiKind(value.lower())
            except ValueError:
                raise ConfigError(f"{source}: unknown phi kind {value!r}") from None
        else:
            kwargs[key] = typed
    try:
        kwargs["sgd"] = SgdConfig(**sgd_kwargs)
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    return parse_config_text(p.read_text(), source=str(p))


def config_echo(config: ExperimentConfig) -> dict:
    """JSON-ready flat snapshot of a config; inverse of config_from_echo."""
    return {
        "dataset": config.dataset,
        "data_path": config.data_path,
        "manifest": config.manifest,
        "method": config.method,
        "lambda1": config.lambda1,
        "lambda2": config.lambda2,
        "gamma_l": config.gamma_l,
        "gamma_p": config.gamma_p,
        "seeds": list(config.seeds),
        "epochs": config.sgd.epochs,
        "batch_size": config.sgd.batch_size,
        "initial_lr": config.sgd.initial_lr,
        "decay_every": config.sgd.decay_every,
        "decay_factor": config.sgd.decay_factor,
        "hidden_dim": config.hidden_dim,
        "rep_dim": config.rep_dim,
        "phi": config.phi_kind.value,
        "phi_sigma": config.phi_sigma,
        "epsilon": config.epsilon,
        "clip_norm": config.clip_norm,
        "synth_normal": config.synth_normal,
        "synth_anom": config.synth_anom,
        "synth_dim": config.synth_dim,
        "synth_separation": config.synth_separation,
        "synth_seed": config.synth_seed,
    }


def config_from_echo(echo: dict) -> ExperimentConfig:
    sgd = SgdConfig(
        initial_lr=echo["initial_lr"],
        decay_every=echo["decay_every"],
        decay_factor=echo["decay_factor"],
        batch_size=echo["batch_size"],
        epochs=echo["epochs"],
    )
    return ExperimentConfig(
        dataset=echo["dataset"],
        data_path=echo["data_path"],
        manifest=echo["manifest"],
        method=echo["method"],
        lambda1=echo["lambda1"],
        lambda2=echo["lambda2"],
        gamma_l=echo["gamma_l"],
        gamma_p=echo["gamma_p"],
        seeds=tuple(echo["seeds"]),
        sgd=sgd,
        hidden_dim=echo["hidden_dim"],
        rep_dim=echo["rep_dim"],
        phi_kind=PhiKind(echo["phi"]),
        phi_sigma=echo["phi_sigma"],
        epsilon=echo["epsilon"],
        clip_norm=echo["clip_norm"],
        synth_normal=echo["synth_normal"],
        synth_anom=echo["synth_anom"],
        synth_dim=echo["synth_dim"],
        synth_separation=echo["synth_separation"],
        synth_seed=echo["synth_seed"],
    )


class ChildSeeds(NamedTuple):
    """Independent 64-bit streams derived from one run seed."""

    split: int
    scenario: int
    init: int
    shuffle: int
    phi: int


def child_seeds(seed: int) -> ChildSeeds:
    state = np.random.SeedSequence(seed).generate_state(5, dtype=np.uint64)
    return ChildSeeds(*(int(v) for v in state))


def load_dataset(config: ExperimentConfig) -> RawDataset:
    """Materialize the configured data source."""
    if config.dataset == "synthetic":
        return synth_gaussians(
            config.synth_normal,
            config.synth_anom,
            config.synth_dim,
            config.synth_separation,
            config.synth_seed,
        )
    path = config.data_path
    if path is None and config.manifest is not None:
        manifest = load_manifest(config.manifest)
        if config.dataset not in manifest:
            raise ConfigError(
                f"dataset {config.dataset!r} not in manifest {config.manifest}"
            )
        path = str(manifest[config.dataset])
    if path is None:
        raise ConfigError(
            f"dataset {config.dataset!r} needs data_path or manifest"
        )
    if config.dataset in BENCHMARK_STATS:
        return load_benchmark(config.dataset, path)
    return load_csv(path, name=config.dataset)


def prepare_scenario(
    raw: RawDataset, config: ExperimentConfig, seed: int
) -> SemiDataset:
    """split -> scenario -> standardize for one run seed."""
    streams = child_seeds(seed)
    train_raw, test_raw = split_60_40(raw, streams.split)
    scenario = ScenarioConfig(config.gamma_l, config.gamma_p, streams.scenario)
    return standardize(make_scenario(train_raw, scenario, test_raw))


def _batches(n_rows: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n_rows)
    for start in range(0, n_rows, batch_size):
        yield perm[start : start + batch_size]


def _build_phi(
    config: ExperimentConfig, dim: int, phi_seed: int, tags: np.ndarray
) -> PhiConfig | None:
    if not np.any(tags == SemiLabel.LABELED_ANOMALOUS):
        return None
    if config.phi_kind is PhiKind.PERMUTATION:
        return PhiConfig.permutation(dim, phi_seed)
    return PhiConfig.gaussian(dim, phi_seed, config.phi_sigma)


def _first_nonfinite(breakdown: LossBreakdown) -> str:
    for name in ("rec", "norm", "ass"):
        if not np.isfinite(getattr(breakdown, name)):
            return name
    return "total"


@dataclass
class EsadTrainResult:
    model: EsadModel
    final_loss: LossBreakdown
    epoch_losses: list[LossBreakdown]


def _model_dims(config: ExperimentConfig, input_dim: int) -> tuple[int, int]:
    r = config.rep_dim if config.rep_dim is not None else default_rep_dim(input_dim)
    h = (
        config.hidden_dim
        if config.hidden_dim is not None
        else default_hidden_dim(input_dim, r)
    )
    return h, r


def _pool_breakdown(
    model: EsadModel, semi: SemiDataset, phi, config: ExperimentConfig
) -> LossBreakdown:
    out = forward_pipeline(model, semi.x_train)
    breakdown, _, _, _ = semi_loss_and_grads(
        semi.x_train,
        out.z,
        out.x_hat,
        out.z_hat,
        semi.tags,
        phi,
        config.lambda1,
        config.lambda2,
        config.epsilon,
    )
    return breakdown


def train_esad(
    config: ExperimentConfig,
    semi: SemiDataset,
    seed: int = 0,
    track_epoch_loss: bool = False,
) -> EsadTrainResult:
    """Train the full pipeline end to end on a standardized scenario.

    All three loss terms are active every step (weights permitting); batches
    reshuffle each epoch; a non-finite loss aborts with the offending epoch,
    batch and component. Identical (config, semi, seed) inputs give
    bit-identical final parameters.
    """
    x, tags = semi.x_train, semi.tags
    dim = x.shape[1]
    h, r = _model_dims(config, dim)
    streams = child_seeds(seed)
    model = new_model(dim, h, r, seed=streams.init)
    phi = _build_phi(config, dim, streams.phi, tags)
    rng = np.random.default_rng(streams.shuffle)
    epoch_losses: list[LossBreakdown] = []
    for epoch in range(config.sgd.epochs):
        lr = lr_at_epoch(config.sgd, epoch)
        for batch_no, idx in enumerate(
            _batches(x.shape[0], config.sgd.batch_size, rng)
        ):
            out = forward_pipeline(model, x[idx])
            breakdown, g_z, g_xhat, g_zhat = semi_loss_and_grads(
                x[idx],
                out.z,
                out.x_hat,
                out.z_hat,
                tags[idx],
                phi,
                config.lambda1,
                config.lambda2,
                config.epsilon,
            )
            if not breakdown.finite():
                raise TrainingDiverged(epoch, batch_no, _first_nonfinite(breakdown))
            grads = backward_pipeline(model, out, g_z, g_xhat, g_zhat)
            g1, gd, g2 = clip_global_norm(
                [grads.enc1, grads.dec, grads.enc2], config.clip_norm
            )
            sgd_step(model.enc1, g1, lr)
            sgd_step(model.dec, gd, lr)
            sgd_step(model.enc2, g2, lr)
        if track_epoch_loss:
            epoch_losses.append(_pool_breakdown(model, semi, phi, config))
    final = _pool_breakdown(model, semi, phi, config)
    if not final.finite():
        raise TrainingDiverged(config.sgd.epochs, -1, _first_nonfinite(final))
    return EsadTrainResult(model, final, epoch_losses)


@dataclass
class SadModel:
    """Two-stage baseline artifacts: encoder, decoder and the fixed center."""

    encoder: MlpStack
    decoder: MlpStack
    center: np.ndarray


@dataclass
class SadTrainResult:
    model: SadModel
    final_loss: dict[str, float]


def sad_scores(model: SadModel, x) -> np.ndarray:
    """Baseline anomaly score: distance of the embedding from the center."""
    z, _ = forward(model.encoder, np.asarray(x, dtype=np.float64))
    return np.sqrt(np.sum((z - model.center) ** 2, axis=1))


def train_sad_baseline(
    config: ExperimentConfig, semi: SemiDataset, seed: int = 0
) -> SadTrainResult:
    """Two-stage baseline sharing the total epoch budget of the main method.

    Stage one trains encoder plus decoder on plain reconstruction for half
    the configured epochs; the center is then frozen at the mean embedding
    of the training pool; stage two fine-tunes the encoder alone on the
    distance-to-center loss for the remaining epochs. The learning-rate
    schedule restarts at each stage.
    """
    x, tags = semi.x_train, semi.tags
    dim = x.shape[1]
    h, r = _model_dims(config, dim)
    streams = child_seeds(seed)
    base = new_model(dim, h, r, seed=streams.init)
    enc, dec = base.enc1, base.dec
    rng = np.random.default_rng(streams.shuffle)
    stage1 = config.sgd.epochs // 2
    stage2 = config.sgd.epochs - stage1
    for epoch in range(stage1):
        lr = lr_at_epoch(config.sgd, epoch)
        for batch_no, idx in enumerate(
            _batches(x.shape[0], config.sgd.batch_size, rng)
        ):
            xb = x[idx]
            z, cache_e = forward(enc, xb)
            x_hat, cache_d = forward(dec, z)
            rec = loss_sad_rec(xb, x_hat)
            if not np.isfinite(rec):
                raise TrainingDiverged(epoch, batch_no, "rec")
            g_dec, g_z = backward(dec, cache_d, grad_sad_rec(xb, x_hat))
            g_enc, _ = backward(enc, cache_e, g_z)
            g_enc, g_dec = clip_global_norm([g_enc, g_dec], config.clip_norm)
            sgd_step(enc, g_enc, lr)
            sgd_step(dec, g_dec, lr)
    z_all, _ = forward(enc, x)
    state = SvddState(center=svdd_center(z_all))
    for epoch in range(stage2):
        lr = lr_at_epoch(config.sgd, epoch)
        for batch_no, idx in enumerate(
            _batches(x.shape[0], config.sgd.batch_size, rng)
        ):
            z, cache_e = forward(enc, x[idx])
            svdd = loss_svdd(z, tags[idx], state, config.epsilon)
            if not np.isfinite(svdd):
                raise TrainingDiverged(stage1 + epoch, batch_no, "svdd")
            g_enc, _ = backward(enc, cache_e, grad_svdd(z, tags[idx], state, config.epsilon))
            (g_enc,) = clip_global_norm([g_enc], config.clip_norm)
            sgd_step(enc, g_enc, lr)
    z_final, _ = forward(enc, x)
    x_hat_final, _ = forward(dec, z_final)
    final = {
        "rec": loss_sad_rec(x, x_hat_final),
        "svdd": loss_svdd(z_final, tags, state, config.epsilon),
    }
    if not all(np.isfinite(v) for v in final.values()):
        raise TrainingDiverged(config.sgd.epochs, -1, "svdd")
    return SadTrainResult(SadModel(enc, dec, state.center), final)


def _min_abs_relu_pre(model: EsadModel, x: np.ndarray) -> float:
    """Smallest |pre-activation| over all ReLU units for the given batch."""
    smallest = np.inf
    out = forward_pipeline(model, x)
    for cache, stack in (
        (out.cache_enc1, model.enc1),
        (out.cache_dec, model.dec),
        (out.cache_enc2, model.enc2),
    ):
        for pre, layer in zip(cache.pres, stack.layers):
            if layer.activation is Activation.RELU:
                smallest = min(smallest, float(np.min(np.abs(pre))))
    return smallest


def full_loss_grad_check(
    seed: int, tolerance: float = 1e-4, step: float = 1e-5
) -> GradCheckReport:
    """Finite-difference check of the complete objective through the pipeline.

    Builds a small random model and mixed batch, takes analytic gradients of
    the total loss with respect to every parameter of all three stacks, and
    probes each entry with central differences. Instances are resampled
    (deterministically) until every ReLU pre-activation and every row norm
    sits clear of a non-differentiable kink, where the comparison is not
    defined.
    """
    rng = np.random.default_rng(seed)
    eps = 1e-6
    for _ in range(200):
        dim = int(rng.integers(3, 7))
        r = int(rng.integers(2, 5))
        h = int(rng.integers(5, 10))
        rows = int(rng.integers(3, 7))
        model = new_model(dim, h, r, seed=int(rng.integers(0, 2**32)))
        x = rng.normal(0.0, 1.0, size=(rows, dim))
        tags = np.array(
            [
                int(SemiLabel.UNLABELED),
                int(SemiLabel.LABELED_NORMAL),
                int(SemiLabel.LABELED_ANOMALOUS),
            ]
            + [int(rng.integers(0, 3)) for _ in range(rows - 3)]
        )
        phi = PhiConfig.permutation(dim, int(rng.integers(0, 2**32)))
        lam1 = float(rng.uniform(0.3, 2.0))
        lam2 = float(rng.uniform(0.3, 2.0))
        out = forward_pipeline(model, x)
        norms_ok = (
            float(np.min(np.linalg.norm(out.z_hat, axis=1))) > 0.05
            and float(np.min(np.linalg.norm(out.z, axis=1))) > 0.05
        )
        # Kink margin: one parameter probe of size `step` moves any
        # pre-activation by far less than this.
        if _min_abs_relu_pre(model, x) > 100 * step and norms_ok:
            break
    else:
        raise RuntimeError(f"no kink-free instance found for seed {seed}")

    def eval_loss() -> float:
        cur = forward_pipeline(model, x)
        return loss_total(
            loss_rec_semi(x, cur.x_hat, tags, phi),
            loss_norm_semi(cur.z_hat, tags, eps),
            loss_ass(cur.z, cur.z_hat),
            lam1,
            lam2,
        )

    _, g_z, g_xhat, g_zhat = semi_loss_and_grads(
        x, out.z, out.x_hat, out.z_hat, tags, phi, lam1, lam2, eps
    )
    grads = backward_pipeline(model, out, g_z, g_xhat, g_zhat)
    params, names = model_param_arrays(model)
    return check_gradients_arrays(
        params,
        flatten_pipeline_grads(grads),
        eval_loss,
        names,
        tolerance,
        step,
    )


@dataclass(frozen=True)
class SeedResult:
    seed: int
    auc: float | None
    loss: dict[str, float]
    wall_time_s: float
    error: str | None = None

    @property
    def completed(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class RunReport:
    """Per-seed outcomes plus aggregate statistics for one configuration."""

    config: dict
    results: tuple[SeedResult, ...]
    wall_time_s: float

    @property
    def completed(self) -> list[SeedResult]:
        return [r for r in self.results if r.completed]

    @property
    def partial(self) -> bool:
        return len(self.completed) < len(self.results)

    @property
    def mean_auc(self) -> float | None:
        done = self.completed
        if not done:
            return None
        return float(np.mean([r.auc for r in done]))

    @property
    def std_auc(self) -> float | None:
        done = self.completed
        if not done:
            return None
        return float(np.std([r.auc for r in done]))  # population std; 0 for one run


def run_prepared(
    config: ExperimentConfig,
    semi: SemiDataset,
    seed: int,
    artifact_hook=None,
) -> SeedResult:
    """Train and evaluate on an already-built scenario (used by sweeps).

    artifact_hook(seed, semi, model, scores) fires after a successful seed,
    letting callers export scores or checkpoints without re-running.
    """
    start = time.perf_counter()
    try:
        model: EsadModel | SadModel
        if config.method == Method.ESAD:
            trained = train_esad(config, semi, seed)
            model = trained.model
            scores = score_dataset(model, semi.x_test, config.lambda1)
            loss = {
                "rec": trained.final_loss.rec,
                "norm": trained.final_loss.norm,
                "ass": trained.final_loss.ass,
                "total": trained.final_loss.total,
            }
        else:
            trained_sad = train_sad_baseline(config, semi, seed)
            model = trained_sad.model
            scores = sad_scores(model, semi.x_test)
            loss = dict(trained_sad.final_loss)
        value = auc(scores, semi.y_test).auc
        if artifact_hook is not None:
            artifact_hook(seed, semi, model, scores)
    except Exception as exc:  # recorded per seed; the run continues
        return SeedResult(
            seed,
            None,
            {},
            time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )
    return SeedResult(seed, value, loss, time.perf_counter() - start)


def run_seed(
    config: ExperimentConfig,
    raw: RawDataset,
    seed: int,
    artifact_hook=None,
) -> SeedResult:
    start = time.perf_counter()
    try:
        semi = prepare_scenario(raw, config, seed)
    except Exception as exc:
        return SeedResult(
            seed,
            None,
            {},
            time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )
    result = run_prepared(config, semi, seed, artifact_hook)
    return replace(result, wall_time_s=time.perf_counter() - start)


def run_experiment(
    config: ExperimentConfig,
    raw: RawDataset | None = None,
    artifact_hook=None,
) -> RunReport:
    """Run every configured seed and aggregate. Failures never abort the
    run; they are recorded per seed and flagged via report.partial."""
    start = time.perf_counter()
    if raw is None:
        raw = load_dataset(config)
    results = tuple(
        run_seed(config, raw, seed, artifact_hook) for seed in config.seeds
    )
    return RunReport(config_echo(config), results, time.perf_counter() - start)


def sweep_lambda1(
    config: ExperimentConfig, values, raw: RawDataset | None = None
) -> list[tuple[float, RunReport]]:
    """Paired sweep over lambda1: each seed's scenario is built once and
    reused for every swept value, so rows differ only in the weight."""
    vals = [float(v) for v in values]
    if not vals:
        raise ConfigError("sweep needs at least one value")
    if len(set(vals)) != len(vals):
        raise ConfigError(f"duplicate sweep values in {vals}")
    if raw is None:
        raw = load_dataset(config)
    prepared: list[tuple[int, SemiDataset | None, str | None]] = []
    for seed in config.seeds:
        try:
            prepared.append((seed, prepare_scenario(raw, config, seed), None))
        except Exception as exc:
            prepared.append((seed, None, f"{type(exc).__name__}: {exc}"))
    rows = []
    for value in vals:
        cfg = replace(config, lambda1=value)
        start = time.perf_counter()
        results = []
        for seed, semi, err in prepared:
            if semi is None:
                results.append(SeedResult(seed, None, {}, 0.0, error=err))
            else:
                results.append(run_prepared(cfg, semi, seed))
        rows.append(
            (value, RunReport(config_echo(cfg), tuple(results), time.perf_counter() - start))
        )
    return rows


def sweep_pollution(
    config: ExperimentConfig, values, raw: RawDataset | None = None
) -> list[tuple[float, RunReport]]:
    """Sweep the pollution ratio. Splits stay paired across values (they
    depend only on the seed); the scenario is rebuilt per value because the
    pollution ratio defines it."""
    vals = [float(v) for v in values]
    if not vals:
        raise ConfigError("sweep needs at least one value")
    if len(set(vals)) != len(vals):
        raise ConfigError(f"duplicate sweep values in {vals}")
    if raw is None:
        raw = load_dataset(config)
    rows = []
    for value in vals:
        cfg = replace(config, gamma_p=value)
        rows.append((value, run_experiment(cfg, raw)))
    return rows


# Report serialization: one JSON record per seed, then a summary record.


def write_report_jsonl(report: RunReport, path) -> None:
    with open(Path(path), "w") as fh:
        for r in report.results:
            fh.write(
                json.dumps(
                    {
                        "record": "seed",
                        "seed": r.seed,
                        "auc": r.auc,
                        "loss": r.loss,
                        "wall_time_s": r.wall_time_s,
                        "error": r.error,
                    },
                    allow_nan=False,
                )
                + "\n"
            )
        fh.write(
            json.dumps(
                {
                    "record": "summary",
                    "config": report.config,
                    "n_seeds": len(report.results),
                    "n_completed": len(report.completed),
                    "partial": report.partial,
                    "mean_auc": report.mean_auc,
                    "std_auc": report.std_auc,
                    "wall_time_s": report.wall_time_s,
                },
                allow_nan=False,
            )
            + "\n"
        )


def read_report_jsonl(path) -> RunReport:
    seed_records = []
    summary = None
    with open(Path(path)) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record["record"] == "seed":
                seed_records.append(record)
            elif record["record"] == "summary":
                summary = record
    if summary is None:
        raise ValueError(f"{path}: no summary record")
    results = tuple(
        SeedResult(
            r["seed"], r["auc"], r["loss"], r["wall_time_s"], error=r["error"]
        )
        for r in seed_records
    )
    return RunReport(summary["config"], results, summary["wall_time_s"])


def format_report_table(report: RunReport) -> str:
    """Aligned human-readable table with one row per seed plus a summary."""
    cfg = report.config
    header = (
        f"dataset={cfg['dataset']} method={cfg['method']} "
        f"gamma_l={cfg['gamma_l']} gamma_p={cfg['gamma_p']} "
        f"lambda1={cfg['lambda1']} lambda2={cfg['lambda2']}"
    )
    loss_keys: list[str] = []
    for r in report.results:
        for key in r.loss:
            if key not in loss_keys:
                loss_keys.append(key)
    columns = ["seed", "auc"] + loss_keys + ["time_s"]
    lines = [header, "  ".join(f"{c:>10}" for c in columns)]
    for r in report.results:
        if r.completed:
            cells = [f"{r.seed:>10}", f"{r.auc:>10.4f}"]
            cells += [f"{r.loss.get(k, float('nan')):>10.4f}" for k in loss_keys]
            cells.append(f"{r.wall_time_s:>10.2f}")
            lines.append("  ".join(cells))
        else:
            lines.append(f"{r.seed:>10}  FAILED: {r.error}")
    done = len(report.completed)
    if done:
        lines.append(
            f"mean auc {report.mean_auc:.4f}  std {report.std_auc:.4f}  "
            f"({done}/{len(report.results)} seeds)  "
            f"total {report.wall_time_s:.1f}s"
        )
    else:
        lines.append(
            f"no completed seeds (0/{len(report.results)})  "
            f"total {report.wall_time_s:.1f}s"
        )
    return "\n".join(lines)


def format_sweep_table(rows: list[tuple[float, RunReport]], name: str) -> str:
    lines = [f"{name:>12}  {'mean_auc':>10}  {'std':>8}  {'seeds':>7}"]
    for value, report in rows:
        done = len(report.completed)
        mean = f"{report.mean_auc:.4f}" if report.mean_auc is not None else "n/a"
        std = f"{report.std_auc:.4f}" if report.std_auc is not None else "n/a"
        lines.append(
            f"{value:>12.4g}  {mean:>10}  {std:>8}  {done:>3}/{len(report.results)}"
        )
    return "\n".join(lines)


def write_sweep_jsonl(rows: list[tuple[float, RunReport]], name: str, path) -> None:
    with open(Path(path), "w") as fh:
        for value, report in rows:
            fh.write(
                json.dumps(
                    {
                        "record": "sweep-row",
                        "param": name,
                        "value": value,
                        "mean_auc": report.mean_auc,
                        "std_auc": report.std_auc,
                        "n_completed": len(report.completed),
                        "n_seeds": len(report.results),
                        "partial": report.partial,
                        "per_seed": [
                            {"seed": r.seed, "auc": r.auc, "error": r.error}
                            for r in report.results
                        ],
                        "config": report.config,
                    },
                    allow_nan=False,
                )
                + "\n"
            )
