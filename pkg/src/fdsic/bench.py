"""Experiment protocol: splits, cross-validation, metrics, seed sweeps.

Splits are contiguous and chronological (first part trains, last part
tests) because tap windows straddle sample boundaries: shuffled rows
would leak near-duplicate windows between train and test.  All metrics
exclude the first M-1 samples of whatever sequence they score, so edge
rows with incomplete windows never bias the numbers.
"""

from __future__ import annotations

import csv
import json
import platform
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import _kernels
from .cancelers import (
    CancelerSpec,
    CancelerStack,
    GridLayout,
    TrainHyper,
    _train_on_windows,
    predict_total,
    tap_window_matrix,
    train_stack,
)
from .errors import ConfigError, DivergenceError, UndefinedMetricError
from .txchain import Dataset

__all__ = [
    "SplitSpec",
    "TrialResult",
    "BoxplotStats",
    "RunResult",
    "split_dataset",
    "kfold_cv",
    "mse",
    "cancellation_db",
    "evaluate_stack",
    "boxplot_stats",
    "run_seeds",
    "results_document",
    "write_results_json",
    "write_trials_csv",
]


@dataclass(frozen=True)
class SplitSpec:
    """Train/test split and fold protocol parameters.

    ``seed`` is carried for provenance; the contiguous split itself is
    deterministic and does not consume it.
    """

    train_fraction: float = 0.9
    fold_count: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )
        if self.fold_count < 2:
            raise ConfigError(f"fold_count must be >= 2, got {self.fold_count}")


def split_dataset(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Chronological split: first train_fraction of samples train."""
    if d.n_samples < 10 * d.memory:
        raise ConfigError(
            f"dataset of {d.n_samples} samples too small for memory "
            f"{d.memory} (need at least {10 * d.memory})"
        )
    n_train = int(d.n_samples * spec.train_fraction)
    return d.slice(0, n_train, "train"), d.slice(n_train, d.n_samples, "test")


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared complex error |pred - target|^2."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    e = pred - target
    return float(np.mean(e.real**2 + e.imag**2))


def cancellation_db(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Cancellation ratio 10*log10(sum|y|^2 / sum|y - y_hat|^2) in dB.

    Callers pass edge-trimmed sequences (first M-1 samples already
    dropped).  Zero residual power returns +inf; zero signal power is
    undefined and raises.
    """
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.shape != y_hat.shape or y.size == 0:
        raise ValueError(f"need equal non-empty lengths, got {y.shape} vs {y_hat.shape}")
    signal = float(np.sum(y.real**2 + y.imag**2))
    if signal == 0.0:
        raise UndefinedMetricError("signal power is zero; cancellation undefined")
    r = y - y_hat
    residual = float(np.sum(r.real**2 + r.imag**2))
    if residual == 0.0:
        return float("inf")
    return float(10.0 * np.log10(signal / residual))


def evaluate_stack(stack: CancelerStack, d: Dataset) -> dict:
    """Score a stack on a dataset: total and linear-only cancellation, MSE.

    The first ``stack.M - 1`` samples are excluded from every number.
    """
    cut = stack.M - 1
    y = d.y[cut:]
    y_hat = predict_total(stack, d.x)[cut:]
    out = {
        "cancellation_db": cancellation_db(y, y_hat),
        "mse": mse(y_hat, y),
    }
    if stack.h_lin is not None:
        lin_only = CancelerStack(kind="linear", M=stack.M, h_lin=stack.h_lin)
        out["linear_db"] = cancellation_db(y, predict_total(lin_only, d.x)[cut:])
    else:
        out["linear_db"] = None
    return out


@dataclass
class BoxplotStats:
    """Five-number summary with linear-interpolation (type 7) quartiles."""

    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int


def boxplot_stats(values) -> BoxplotStats:
    """Raw min/max whiskers plus type-7 quartiles over the values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ConfigError("cannot summarize an empty value list")
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    return BoxplotStats(
        min=float(values.min()),
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        max=float(values.max()),
        n=int(values.size),
    )


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

def _fold_bounds(n_rows: int, fold_count: int) -> list[tuple[int, int]]:
    edges = [round(f * n_rows / fold_count) for f in range(fold_count + 1)]
    return [(edges[f], edges[f + 1]) for f in range(fold_count)]


def _rms_or_one(a: np.ndarray) -> float:
    p = float(np.mean(np.abs(a) ** 2)) if a.size else 0.0
    return float(np.sqrt(p)) if p > 0 else 1.0


def kfold_cv(
    train: Dataset,
    layout: GridLayout,
    candidates: list[tuple[float, int]],
    fold_count: int = 5,
    epochs: int = 5,
    seed: int = 0,
) -> tuple[float, int]:
    """Pick (lr, batch) by contiguous k-fold validation MSE.

    Each fold holds out one contiguous block of window rows; the linear
    stage is refit on the remaining rows, the network trains on their
    normalized residuals, and the candidate score is the mean held-out
    residual MSE.  Diverging candidates score +inf.  Ties break toward
    the lowest lr, then the smallest batch.
    """
    if not candidates:
        raise ConfigError("no hyperparameter candidates given")
    x_win = tap_window_matrix(train.x, layout.M)
    targets = train.y[layout.M - 1:]
    n_rows = x_win.shape[0]
    if fold_count < 2 or fold_count > n_rows:
        raise ConfigError(
            f"fold_count {fold_count} invalid for {n_rows} usable rows"
        )
    bounds = _fold_bounds(n_rows, fold_count)

    scores = []
    for lr, batch in candidates:
        fold_mse = []
        for lo, hi in bounds:
            mask = np.ones(n_rows, dtype=bool)
            mask[lo:hi] = False
            x_tr, t_tr = x_win[mask], targets[mask]
            x_va, t_va = x_win[lo:hi], targets[lo:hi]
            h, *_ = np.linalg.lstsq(x_tr, t_tr, rcond=None)
            r_tr = t_tr - x_tr @ h
            r_va = t_va - x_va @ h
            x_scale = _rms_or_one(x_tr)
            r_scale = _rms_or_one(r_tr)
            hyper = TrainHyper(lr=lr, batch=batch, epochs=epochs, seed=seed)
            try:
                _, hist = _train_on_windows(
                    x_tr / x_scale,
                    r_tr / r_scale,
                    layout,
                    hyper,
                    x_va / x_scale,
                    r_va / r_scale,
                )
            except DivergenceError:
                fold_mse.append(float("inf"))
                continue
            fold_mse.append(hist.val_mse[-1] * r_scale**2)
        scores.append(float(np.mean(fold_mse)))

    order = sorted(
        range(len(candidates)),
        key=lambda i: (scores[i], candidates[i][0], candidates[i][1]),
    )
    return candidates[order[0]]


# ---------------------------------------------------------------------------
# seed sweeps
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    """Metrics of one training trial (total prediction, edge-trimmed)."""

    seed: int
    cancellation_db: float
    train_mse: float
    test_mse: float
    epochs: int
    diverged: bool = False


@dataclass
class RunResult:
    """All trials of one configuration plus their summary statistics."""

    trials: list[TrialResult]
    stats: BoxplotStats | None
    n_completed: int
    linear_only_db: float | None


def run_seeds(
    dataset: Dataset,
    spec: CancelerSpec,
    hyper: TrainHyper,
    split: SplitSpec,
    n_seeds: int = 20,
) -> RunResult:
    """Repeat training over seeds hyper.seed .. hyper.seed + n_seeds - 1.

    Deterministic cancelers (linear, poly) are fit once and their
    metrics replicated per seed.  A diverging trial is recorded with its
    flag rather than aborting the run, and summary statistics cover the
    completed trials only.
    """
    if n_seeds < 1:
        raise ConfigError(f"n_seeds must be >= 1, got {n_seeds}")
    train, test = split_dataset(dataset, split)
    seeds = [hyper.seed + i for i in range(n_seeds)]

    def one_trial(seed: int) -> TrialResult:
        stack, history = train_stack(train, spec, replace(hyper, seed=seed))
        scores = evaluate_stack(stack, test)
        train_scores = evaluate_stack(stack, train)
        return TrialResult(
            seed=seed,
            cancellation_db=scores["cancellation_db"],
            train_mse=train_scores["mse"],
            test_mse=scores["mse"],
            epochs=hyper.epochs if spec.kind not in ("linear", "poly") else 0,
        )

    trials: list[TrialResult] = []
    if spec.kind in ("linear", "poly"):
        proto = one_trial(seeds[0])
        trials = [replace(proto, seed=s) for s in seeds]
    else:
        for s in seeds:
            try:
                trials.append(one_trial(s))
            except DivergenceError:
                trials.append(
                    TrialResult(
                        seed=s,
                        cancellation_db=float("nan"),
                        train_mse=float("nan"),
                        test_mse=float("nan"),
                        epochs=hyper.epochs,
                        diverged=True,
                    )
                )

    completed = [t.cancellation_db for t in trials if not t.diverged]
    stats = boxplot_stats(completed) if completed else None

    linear_db = None
    if spec.kind != "linear":
        lin_stack, _ = train_stack(train, CancelerSpec(kind="linear", M=spec.M))
        linear_db = evaluate_stack(lin_stack, test)["cancellation_db"]
    return RunResult(
        trials=trials,
        stats=stats,
        n_completed=len(completed),
        linear_only_db=linear_db,
    )


# ---------------------------------------------------------------------------
# result serialization
# ---------------------------------------------------------------------------

def _json_safe(v):
    if isinstance(v, float) and not np.isfinite(v):
        return {"inf": v > 0} if not np.isnan(v) else None
    return v


def results_document(
    run: RunResult, config_echo: dict, wall_clock_s: float | None = None
) -> dict:
    """Self-contained result record; see README for the field contract.

    Everything except the ``timestamp`` field is a pure function of the
    configuration and seeds, which is what the determinism guarantee
    (and its test) quantify over.
    """
    doc = {
        "config": config_echo,
        "quartile_rule": "type7",
        "linear_only_db": _json_safe(run.linear_only_db),
        "trials": [
            {
                "seed": t.seed,
                "cancellation_db": _json_safe(t.cancellation_db),
                "train_mse": _json_safe(t.train_mse),
                "test_mse": _json_safe(t.test_mse),
                "epochs": t.epochs,
                "diverged": t.diverged,
            }
            for t in run.trials
        ],
        "boxplot": None
        if run.stats is None
        else {
            "min": run.stats.min,
            "q1": run.stats.q1,
            "median": run.stats.median,
            "q3": run.stats.q3,
            "max": run.stats.max,
            "n": run.stats.n,
        },
        "n_completed": run.n_completed,
        "versions": {
            "fdsic": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "kernel_backend": _kernels.BACKEND,
        },
        "timestamp": {
            "started_utc": datetime.now(timezone.utc).isoformat(),
            "wall_clock_s": wall_clock_s,
        },
    }
    return doc


def write_results_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def write_trials_csv(trials: list[TrialResult], path) -> None:
    """Flat per-trial export for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "cancellation_db", "test_mse"])
        for t in trials:
            writer.writerow([t.seed, repr(t.cancellation_db), repr(t.test_mse)])
