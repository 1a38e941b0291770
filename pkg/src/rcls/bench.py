"""Experiment harness: repeated seeded trials, aggregation, diagnostics.

Each trial draws a fresh train/test split (seed = base_seed + t), normalizes
both partitions, fits the configured method on the train columns and
classifies every test sample. Accuracies are aggregated as mean and sample
standard deviation. Comparisons run several methods over identical splits so
rows differ by method only.

Wall-clock stage times are collected for information; they are excluded from
report equality so that repeated runs of the same config compare equal.
"""

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from .classify import (
    RULE_MAX_SCORE,
    ClassDecision,
    build_label_matrix,
    classify_regularized_residual,
    classify_residual,
    fuse_coefficients,
    score,
    split_blocks,
)
from .coders import (
    DEFAULT_RESIDUAL_TOL,
    DEFAULT_SPARSITY,
    fit_crc,
    fit_procrc,
    l1_solve,
    omp,
)
from .data import (
    SynthSpec,
    atomic_write_bytes,
    load_bin,
    load_csv,
    normalize_columns,
    random_project,
    split,
    synth,
    take_columns,
)
from .errors import ConfigError, DatasetError, DegenerateFusionError, RclsError
from .linalg import gram, norm2

log = logging.getLogger(__name__)

METHODS = ("src", "crc", "procrc", "sa_crc", "sa_procrc")

DEFAULT_LAM = 0.001
DEFAULT_GAMMA = 0.5
DEFAULT_EPSILON = 0.05
DEFAULT_TRIALS = 10

def _is_count(value):
    """True for a genuine integer >= 1 (bool is an int subclass but is not a
    count)."""
    return isinstance(value, int) and not isinstance(value, bool) and value >= 1


# Parameters each method actually consumes; the rest are ignored.
_REQUIRED_PARAMS = {
    "src": ("epsilon",),
    "crc": ("lam",),
    "procrc": ("lam", "gamma"),
    "sa_crc": ("lam", "k"),
    "sa_procrc": ("lam", "gamma", "k"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a repeated-trial run depends on.

    ``dataset`` is either a file path (str) or a SynthSpec. Parameters not
    used by ``method`` are carried but ignored.
    """

    dataset: object
    method: str
    per_class_train: int
    trials: int = DEFAULT_TRIALS
    base_seed: int = 0
    lam: float = DEFAULT_LAM
    gamma: float = DEFAULT_GAMMA
    k: int = DEFAULT_SPARSITY
    epsilon: float = DEFAULT_EPSILON
    projection_dim: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(
                f"unknown method {self.method!r}; choose from {', '.join(METHODS)}"
            )
        if not isinstance(self.dataset, (str, os.PathLike, SynthSpec)):
            raise ConfigError("dataset must be a file path or a SynthSpec")
        if not _is_count(self.trials):
            raise ConfigError(f"trials must be an integer >= 1, got {self.trials!r}")
        if not _is_count(self.per_class_train):
            raise ConfigError(
                f"per_class_train must be an integer >= 1, got {self.per_class_train!r}"
            )
        if self.projection_dim is not None and not _is_count(self.projection_dim):
            raise ConfigError(
                f"projection_dim must be an integer >= 1, got {self.projection_dim!r}"
            )
        for p in _REQUIRED_PARAMS[self.method]:
            if getattr(self, p) is None:
                raise ConfigError(f"method {self.method!r} requires parameter {p!r}")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError(f"lam must be > 0, got {self.lam}")
        if self.gamma is not None and self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.k is not None and not _is_count(self.k):
            raise ConfigError(f"k must be an integer >= 1, got {self.k!r}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class ExperimentReport:
    """Per-trial accuracies (percent) plus their mean and sample std.

    ``stage_seconds`` holds wall-clock totals for the fit/code/classify
    stages; it is informational and excluded from equality comparisons.
    """

    accuracies: tuple
    mean: float
    std: float
    trial_seeds: tuple
    config: ExperimentConfig
    stage_seconds: dict = field(compare=False)


@dataclass(frozen=True)
class SaCodes:
    """The three coefficient vectors of a sparsity-augmented classification.

    ``dense_only`` marks the fallback taken when the sparse and dense codes
    cancel exactly.
    """

    sparse: object
    dense: np.ndarray
    fused: np.ndarray
    dense_only: bool = False


def aggregate_accuracy(accuracies):
    """Mean and sample standard deviation (n-1 denominator) of per-trial
    accuracies; a single trial has std 0.0 by convention."""
    arr = np.asarray(accuracies, dtype=np.float64)
    mean = float(arr.mean())
    std = 0.0 if arr.size == 1 else float(arr.std(ddof=1))
    return mean, std


class FittedSrc:
    """l1 coding over the training dictionary, plain residual rule."""

    method = "src"

    def __init__(self, X, blocks, epsilon, lipschitz):
        self.X = X
        self.blocks = blocks
        self.epsilon = epsilon
        self.lipschitz = lipschitz

    def compute_code(self, y):
        return l1_solve(self.X, y, self.epsilon, lipschitz=self.lipschitz)

    def decide(self, code, y):
        return classify_residual(self.blocks, y, code)


class FittedCrc:
    """Precomputed ridge projector, regularized residual rule."""

    method = "crc"

    def __init__(self, projector, blocks):
        self.projector = projector
        self.blocks = blocks

    def compute_code(self, y):
        return self.projector.code(y)

    def decide(self, code, y):
        return classify_regularized_residual(self.blocks, y, code)


class FittedProCrc:
    """Precomputed class-consistent projector, plain residual rule."""

    method = "procrc"

    def __init__(self, projector, blocks):
        self.projector = projector
        self.blocks = blocks

    def decide(self, code, y):
        return classify_residual(self.blocks, y, code)

    def compute_code(self, y):
        return self.projector.code(y)


class FittedSa:
    """Dense code + greedy sparse code, fused and scored per class.

    compute_code/decide compose to the same result as the one-shot
    sparsity-augmented classifier; the split exists so code computation and
    decision can be timed separately.
    """

    def __init__(self, method, projector, X, L, k, residual_tol, blocks):
        self.method = method
        self.projector = projector
        self.X = X
        self.L = L
        self.k = k
        self.residual_tol = residual_tol
        self.blocks = blocks

    def compute_code(self, y):
        dense = self.projector.code(y)
        sp = omp(self.X, y, self.k, self.residual_tol)
        try:
            fused = fuse_coefficients(sp.coeffs, dense)
            dense_only = False
        except DegenerateFusionError:
            log.warning(
                "degenerate fusion: sparse and dense codes cancel; "
                "falling back to dense-only scoring"
            )
            nrm = norm2(dense)
            if nrm == 0.0:
                raise
            fused = dense / nrm
            dense_only = True
        return SaCodes(sparse=sp, dense=dense, fused=fused, dense_only=dense_only)

    def decide(self, code, y):
        q = score(self.L, code.fused)
        best = q.max()
        winners = np.flatnonzero(q == best)
        return ClassDecision(
            predicted_class=int(winners[0]) + 1,
            scores=q,
            rule=RULE_MAX_SCORE,
            tie=winners.size > 1,
        )


def fit_method(
    method,
    train,
    lam=DEFAULT_LAM,
    gamma=DEFAULT_GAMMA,
    k=DEFAULT_SPARSITY,
    epsilon=DEFAULT_EPSILON,
    residual_tol=DEFAULT_RESIDUAL_TOL,
):
    """Fit one of the five methods on a training Dataset.

    The train columns must be unit-normalized and grouped by class (the
    order produced by split + take_columns).
    """
    labels = np.asarray(train.labels)
    if (np.diff(labels) < 0).any():
        raise DatasetError("training columns must be grouped by class")
    sizes = train.class_sizes
    blocks = split_blocks(train.X, sizes)
    if method == "src":
        lipschitz = 2.0 * float(np.linalg.eigvalsh(gram(train.X))[-1])
        return FittedSrc(train.X, blocks, epsilon, lipschitz)
    if method == "crc":
        return FittedCrc(fit_crc(train.X, lam), blocks)
    if method == "procrc":
        return FittedProCrc(fit_procrc(train.X, sizes, lam, gamma), blocks)
    if method in ("sa_crc", "sa_procrc"):
        if method == "sa_crc":
            projector = fit_crc(train.X, lam)
        else:
            projector = fit_procrc(train.X, sizes, lam, gamma)
        L = build_label_matrix(train.labels, train.C)
        return FittedSa(method, projector, train.X, L, k, residual_tol, blocks)
    raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def load_source(source):
    """Materialize a config's dataset: synthesize a SynthSpec, or load a
    file (.csv as text, anything else as the binary container)."""
    if isinstance(source, SynthSpec):
        return synth(source)
    path = os.fspath(source)
    if path.lower().endswith(".csv"):
        return load_csv(path)
    return load_bin(path)


def _annotate(err, t, seed):
    if err.args and isinstance(err.args[0], str):
        err.args = (
            f"{err.args[0]} (while running trial {t}, seed {seed})",
        ) + err.args[1:]
    return err


def run_experiment(cfg):
    """Run the configured repeated-trial evaluation.

    Fully deterministic given the config: trial t uses seed base_seed + t
    for its split, and a dataset-level random projection (when configured)
    uses base_seed. Returns an ExperimentReport.
    """
    ds = load_source(cfg.dataset)
    if cfg.projection_dim is not None:
        ds = random_project(ds, cfg.projection_dim, seed=cfg.base_seed)
    seeds = tuple(cfg.base_seed + t for t in range(cfg.trials))
    stage = {"fit": 0.0, "code": 0.0, "classify": 0.0}
    accuracies = []
    for t, seed in enumerate(seeds):
        try:
            accuracies.append(_run_trial(ds, cfg, seed, stage))
        except RclsError as err:
            raise _annotate(err, t, seed)
    mean, std = aggregate_accuracy(accuracies)
    return ExperimentReport(
        accuracies=tuple(accuracies),
        mean=mean,
        std=std,
        trial_seeds=seeds,
        config=cfg,
        stage_seconds=stage,
    )


def _run_trial(ds, cfg, seed, stage):
    sp = split(ds, cfg.per_class_train, seed)
    train = normalize_columns(take_columns(ds, sp.train_indices))
    test = normalize_columns(take_columns(ds, sp.test_indices))

    t0 = time.perf_counter()
    state = fit_method(
        cfg.method, train,
        lam=cfg.lam, gamma=cfg.gamma, k=cfg.k, epsilon=cfg.epsilon,
    )
    stage["fit"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    codes = [state.compute_code(test.X[:, j]) for j in range(test.n)]
    stage["code"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    correct = 0
    for j, code in enumerate(codes):
        decision = state.decide(code, test.X[:, j])
        correct += int(decision.predicted_class == test.labels[j])
    stage["classify"] += time.perf_counter() - t0

    return 100.0 * correct / test.n


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    mean: float
    std: float
    trials: int
    base_seed: int
    err_reduction_pct: float


@dataclass(frozen=True)
class ComparisonTable:
    """One row per compared method, identical splits throughout.

    ``err_reduction_pct`` is the reduction of the error rate relative to the
    first (baseline) row: 100 * (err_base - err) / err_base; nan when the
    baseline error is zero.
    """

    rows: tuple
    reports: tuple


def compare_methods(cfgs):
    """Run several configs over shared splits and tabulate them.

    All configs must agree on everything except the method (same dataset,
    split sizes, trial count, seeds, projection); the splits are then
    identical across rows and differences are attributable to the method.
    """
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigError("compare_methods needs at least one config")
    first = cfgs[0]
    shared = ("dataset", "per_class_train", "trials", "base_seed", "projection_dim")
    for cfg in cfgs[1:]:
        for name in shared:
            if getattr(cfg, name) != getattr(first, name):
                raise ConfigError(
                    f"configs disagree on {name}: "
                    f"{getattr(first, name)!r} vs {getattr(cfg, name)!r}"
                )
    reports = tuple(run_experiment(cfg) for cfg in cfgs)
    err_base = 100.0 - reports[0].mean
    rows = []
    for rep in reports:
        err = 100.0 - rep.mean
        if err_base > 0.0:
            reduction = 100.0 * (err_base - err) / err_base
        else:
            reduction = float("nan")
        rows.append(
            ComparisonRow(
                method=rep.config.method,
                mean=rep.mean,
                std=rep.std,
                trials=rep.config.trials,
                base_seed=rep.config.base_seed,
                err_reduction_pct=reduction,
            )
        )
    return ComparisonTable(rows=tuple(rows), reports=reports)


def describe_source(source):
    if isinstance(source, SynthSpec):
        return (
            f"synth(C={source.C}, ambient_dim={source.ambient_dim}, "
            f"subspace_dim={source.subspace_dim}, per_class={source.per_class}, "
            f"noise_sigma={source.noise_sigma:g}, seed={source.seed})"
        )
    return os.fspath(source)


def report_csv(report):
    """Single-method report as CSV (full-precision floats)."""
    return (
        "method,mean,std,trials,base_seed\n"
        f"{report.config.method},{report.mean!r},{report.std!r},"
        f"{report.config.trials},{report.config.base_seed}\n"
    )


def report_text(report):
    cfg = report.config
    acc = ", ".join(f"{a:.2f}" for a in report.accuracies)
    return "\n".join([
        f"method: {cfg.method}",
        f"dataset: {describe_source(cfg.dataset)}",
        f"trials: {cfg.trials}  per-class train: {cfg.per_class_train}  "
        f"base seed: {cfg.base_seed}",
        f"per-trial accuracy (%): {acc}",
        f"mean +/- std: {report.mean:.2f} +/- {report.std:.2f}",
    ]) + "\n"


def comparison_csv(table):
    lines = ["method,mean,std,trials,base_seed,err_reduction_pct"]
    for r in table.rows:
        lines.append(
            f"{r.method},{r.mean!r},{r.std!r},{r.trials},{r.base_seed},"
            f"{r.err_reduction_pct!r}"
        )
    return "\n".join(lines) + "\n"


def comparison_text(table):
    lines = [
        f"{'method':<12} {'mean':>8} {'std':>8} {'trials':>6} {'seed':>6} "
        f"{'err.red.%':>10}"
    ]
    for r in table.rows:
        lines.append(
            f"{r.method:<12} {r.mean:>8.2f} {r.std:>8.2f} {r.trials:>6d} "
            f"{r.base_seed:>6d} {r.err_reduction_pct:>10.2f}"
        )
    return "\n".join(lines) + "\n"


def stage_summary(stage_seconds):
    return " ".join(f"{k}={v:.3f}s" for k, v in stage_seconds.items())


def _diag_csv(indices, classes, values):
    lines = ["index,class,value"]
    for i, c, v in zip(indices, classes, values):
        lines.append(f"{i},{c},{float(v)!r}")
    return "\n".join(lines) + "\n"


def dump_diagnostics(state, y, out_dir):
    """Classify one sample and dump per-atom and per-class CSV diagnostics.

    Writes coefficients.csv (index, class, value: the coefficient vector the
    decision uses), residuals.csv (per-class plain residuals of the dense
    code for the augmented methods, of the method's own code otherwise) and
    scores.csv (the decision scores). Augmented methods additionally get
    coefficients_sparse.csv and coefficients_dense.csv.

    Returns the mapping of file name to path.
    """
    os.makedirs(out_dir, exist_ok=True)
    code = state.compute_code(y)
    decision = state.decide(code, y)
    if isinstance(code, SaCodes):
        coeff = code.fused
        resid_code = code.dense
        extra = {
            "coefficients_sparse.csv": code.sparse.coeffs,
            "coefficients_dense.csv": code.dense,
        }
    else:
        coeff = code
        resid_code = code
        extra = {}

    sizes = [b.shape[1] for b in state.blocks]
    C = len(sizes)
    atom_classes = np.repeat(np.arange(1, C + 1), sizes)
    n = int(sum(sizes))

    residuals = np.empty(C)
    start = 0
    for i, block in enumerate(state.blocks):
        width = sizes[i]
        residuals[i] = norm2(y - block @ resid_code[start:start + width])
        start += width

    files = {
        "coefficients.csv": _diag_csv(range(n), atom_classes, coeff),
        "residuals.csv": _diag_csv(range(C), range(1, C + 1), residuals),
        "scores.csv": _diag_csv(range(C), range(1, C + 1), decision.scores),
    }
    for fname, vec in extra.items():
        files[fname] = _diag_csv(range(n), atom_classes, vec)

    written = {}
    for fname, text in files.items():
        path = os.path.join(out_dir, fname)
        atomic_write_bytes(path, text.encode("utf-8"))
        written[fname] = path
    return written


_TOP_KEYS = {
    "dataset", "synth", "method", "methods", "lambda", "gamma", "k",
    "epsilon", "per_class_train", "trials", "base_seed", "projection_dim",
}
_SYNTH_KEYS = {"classes", "ambient_dim", "subspace_dim", "per_class",
               "noise_sigma", "seed"}


def _as_int(value, key):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return int(value)


def _as_float(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _parse_synth(node):
    if not isinstance(node, dict):
        raise ConfigError("synth must be a mapping")
    unknown = set(node) - _SYNTH_KEYS
    if unknown:
        raise ConfigError(f"unknown synth keys: {', '.join(sorted(unknown))}")
    for req in ("classes", "ambient_dim", "subspace_dim", "per_class"):
        if req not in node:
            raise ConfigError(f"synth is missing required key {req!r}")
    return SynthSpec(
        C=_as_int(node["classes"], "synth.classes"),
        ambient_dim=_as_int(node["ambient_dim"], "synth.ambient_dim"),
        subspace_dim=_as_int(node["subspace_dim"], "synth.subspace_dim"),
        per_class=_as_int(node["per_class"], "synth.per_class"),
        noise_sigma=_as_float(node.get("noise_sigma", 0.0), "synth.noise_sigma"),
        seed=_as_int(node.get("seed", 0), "synth.seed"),
    )


def _parse_doc(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid config syntax: {err}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping of keys to values")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    if ("dataset" in doc) == ("synth" in doc):
        raise ConfigError(f"{path}: exactly one of 'dataset' or 'synth' is required")
    if "dataset" in doc:
        if not isinstance(doc["dataset"], str):
            raise ConfigError(f"{path}: dataset must be a file path string")
        source = doc["dataset"]
    else:
        source = _parse_synth(doc["synth"])
    if "per_class_train" not in doc:
        raise ConfigError(f"{path}: per_class_train is required")
    kwargs = {
        "dataset": source,
        "per_class_train": _as_int(doc["per_class_train"], "per_class_train"),
    }
    if "trials" in doc:
        kwargs["trials"] = _as_int(doc["trials"], "trials")
    if "base_seed" in doc:
        kwargs["base_seed"] = _as_int(doc["base_seed"], "base_seed")
    if "lambda" in doc:
        kwargs["lam"] = _as_float(doc["lambda"], "lambda")
    if "gamma" in doc:
        kwargs["gamma"] = _as_float(doc["gamma"], "gamma")
    if "k" in doc:
        kwargs["k"] = _as_int(doc["k"], "k")
    if "epsilon" in doc:
        kwargs["epsilon"] = _as_float(doc["epsilon"], "epsilon")
    if "projection_dim" in doc:
        kwargs["projection_dim"] = _as_int(doc["projection_dim"], "projection_dim")
    return doc, kwargs


def load_experiment_config(path):
    """Parse a single-method experiment config (YAML mapping). Unknown keys
    are rejected."""
    doc, kwargs = _parse_doc(path)
    if "method" not in doc:
        raise ConfigError(f"{path}: method is required")
    if "methods" in doc:
        raise ConfigError(f"{path}: 'methods' is only valid in a comparison config")
    if not isinstance(doc["method"], str):
        raise ConfigError(f"{path}: method must be a string")
    return ExperimentConfig(method=doc["method"], **kwargs)


def load_compare_configs(path):
    """Parse a comparison config: like an experiment config but with a
    'methods' list; one config per method, all other fields shared."""
    doc, kwargs = _parse_doc(path)
    if "method" in doc:
        raise ConfigError(f"{path}: use 'methods' (a list) in a comparison config")
    methods = doc.get("methods")
    if not isinstance(methods, list) or not methods:
        raise ConfigError(f"{path}: methods must be a nonempty list")
    for m in methods:
        if not isinstance(m, str):
            raise ConfigError(f"{path}: methods entries must be strings, got {m!r}")
    return tuple(ExperimentConfig(method=m, **kwargs) for m in methods)
