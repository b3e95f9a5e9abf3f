"""Batch command-line front door.

Subcommands: synth, import, train, eval, flops, sweep.  Every flag has
a config-file equivalent (TOML; flags override the file; unknown keys
are hard errors), structured logs go to stderr, and data goes to files
or stdout only.  ``FDSIC_OUT`` names the default output root; nothing
else is read from the environment.

Exit codes are stable: 0 success, 2 configuration or I/O problem,
3 training divergence, 4 model/dataset incompatibility, 5 file parse
error, 6 sweep cap exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, bench, flops
from .cancelers import CancelerSpec, TrainHyper, load_stack, save_stack, train_stack
from .errors import (
    ConfigError,
    DatasetFormatError,
    DivergenceError,
    IncompatibleModelError,
    ModelFormatError,
)
from .txchain import (
    TxConfig,
    dataset_to_bytes,
    read_csv_dataset,
    read_dataset,
    synth_dataset,
    write_dataset,
)

log = logging.getLogger("fdsic")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INCOMPATIBLE = 4
EXIT_PARSE = 5
EXIT_CAP = 6


class CapExceededError(RuntimeError):
    """Sweep would exceed its configured combination cap."""


# ---------------------------------------------------------------------------
# config file handling
# ---------------------------------------------------------------------------

_SCHEMA = {
    "dataset": {
        "source", "path", "samples", "seed", "memory", "psi", "theta",
        "pa_order", "pa_memory", "noise_power", "n_subcarriers", "cp_fraction",
    },
    "canceler": {"kind", "n", "w", "p", "m", "ridge"},
    "hyper": {"lr", "batch", "epochs", "seed"},
    "protocol": {"train_fraction", "folds", "n_seeds"},
    "output": {"dir"},
    "sweep": {"kind", "n", "w", "p", "m", "max_combinations", "workers"},
}


def load_config_file(path: str | None) -> dict:
    """Parse and schema-check a TOML config file (unknown keys are fatal)."""
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid config file: {exc}") from exc
    for section, body in cfg.items():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: section [{section}] must be a table")
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
    return cfg


class Conf:
    """Precedence resolver: command-line flag, then file, then default."""

    def __init__(self, file_cfg: dict, args: argparse.Namespace):
        self.file = file_cfg
        self.args = args

    def get(self, section: str, key: str, default=None, flag: str | None = None):
        flag_val = getattr(self.args, flag or key, None)
        if flag_val is not None:
            return flag_val
        return self.file.get(section, {}).get(key, default)


def out_root(conf: Conf) -> Path:
    root = conf.get("output", "dir", flag="out_dir")
    if root is None:
        root = os.environ.get("FDSIC_OUT", ".")
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def config_digest(echo: dict) -> str:
    return hashlib.sha256(
        json.dumps(echo, sort_keys=True, default=str).encode()
    ).hexdigest()


def write_atomic(path: Path, data: bytes) -> None:
    """Write via a sibling temp file so failures leave no partial output."""
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        tmp.replace(path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------

def _tx_config(conf: Conf) -> TxConfig:
    return TxConfig(
        psi=float(conf.get("dataset", "psi", 1.05)),
        theta=float(conf.get("dataset", "theta", 0.05)),
        pa_order=int(conf.get("dataset", "pa_order", 5)),
        pa_memory=int(conf.get("dataset", "pa_memory", 3)),
        noise_power=float(conf.get("dataset", "noise_power", 0.0)),
        seed=int(conf.get("dataset", "seed", 1, flag="seed_dataset")),
        n_subcarriers=int(conf.get("dataset", "n_subcarriers", 1024)),
        cp_fraction=float(conf.get("dataset", "cp_fraction", 0.25)),
    )


def _load_dataset(conf: Conf):
    """Resolve the configured dataset source: a file or inline synthesis."""
    path = conf.get("dataset", "path", flag="dataset")
    source = conf.get("dataset", "source")
    if path is not None and source == "synthetic":
        raise ConfigError(
            "exactly one dataset source: [dataset] path and source=\"synthetic\" "
            "are mutually exclusive"
        )
    if path is not None:
        return read_dataset(path)
    if source == "synthetic":
        return synth_dataset(
            _tx_config(conf),
            int(conf.get("dataset", "samples", 20480, flag="samples")),
            memory=int(conf.get("dataset", "memory", 13, flag="memory")),
        )
    raise ConfigError(
        "no dataset given (flag --dataset, [dataset] path, or source=\"synthetic\")"
    )


def _canceler_spec(conf: Conf, default_m: int) -> CancelerSpec:
    kind = conf.get("canceler", "kind", flag="kind")
    if kind is None:
        raise ConfigError("no canceler kind given (flag --kind or [canceler] kind)")
    n = conf.get("canceler", "n", flag="n")
    w = conf.get("canceler", "w", flag="w")
    p = conf.get("canceler", "p", flag="p")
    ridge = conf.get("canceler", "ridge", flag="ridge")
    return CancelerSpec(
        kind=str(kind),
        M=int(conf.get("canceler", "m", default_m, flag="m")),
        N=None if n is None else int(n),
        W=None if w is None else int(w),
        P=None if p is None else int(p),
        ridge=None if ridge is None else float(ridge),
    )


def _hyper(conf: Conf) -> TrainHyper:
    return TrainHyper(
        lr=float(conf.get("hyper", "lr", 0.0045)),
        batch=int(conf.get("hyper", "batch", 62)),
        epochs=int(conf.get("hyper", "epochs", 50)),
        seed=int(conf.get("hyper", "seed", 1, flag="seed")),
    )


def _split_spec(conf: Conf) -> bench.SplitSpec:
    return bench.SplitSpec(
        train_fraction=float(conf.get("protocol", "train_fraction", 0.9)),
        fold_count=int(conf.get("protocol", "folds", 5)),
    )


def _spec_echo(spec: CancelerSpec) -> dict:
    return {
        "kind": spec.kind, "M": spec.M, "N": spec.N, "W": spec.W,
        "P": spec.P, "ridge": spec.ridge,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    conf = Conf(load_config_file(args.config), args)
    cfg = _tx_config(conf)
    n_samples = int(conf.get("dataset", "samples", 20480, flag="samples"))
    memory = int(conf.get("dataset", "memory", 13, flag="memory"))
    d = synth_dataset(cfg, n_samples, memory=memory)
    out = Path(args.out) if args.out else out_root(conf) / "dataset.sic1"
    write_atomic(out, dataset_to_bytes(d))
    print(f"wrote {out}")
    print(f"n_samples: {d.n_samples}")
    print(f"x power: {float(np.mean(np.abs(d.x) ** 2)):.6f}")
    print(f"y power: {float(np.mean(np.abs(d.y) ** 2)):.6f}")
    return EXIT_OK


def cmd_import(args) -> int:
    d = read_csv_dataset(args.csv, memory=args.memory if args.memory else 13)
    out = Path(args.out) if args.out else Path(args.csv).with_suffix(".sic1")
    write_dataset(d, out)
    print(f"wrote {out}")
    print(f"n_samples: {d.n_samples}")
    return EXIT_OK


def cmd_train(args) -> int:
    conf = Conf(load_config_file(args.config), args)
    dataset = _load_dataset(conf)
    spec = _canceler_spec(conf, default_m=dataset.memory)
    hyper = _hyper(conf)
    split = _split_spec(conf)
    train, test = bench.split_dataset(dataset, split)

    t0 = time.monotonic()
    stack, history = train_stack(train, spec, hyper)
    wall = time.monotonic() - t0
    test_scores = bench.evaluate_stack(stack, test)
    train_scores = bench.evaluate_stack(stack, train)

    root = out_root(conf)
    model_path = Path(args.out_model) if args.out_model else root / "model.json"
    results_path = (
        Path(args.out_results) if args.out_results else root / "train_results.json"
    )
    save_stack(stack, model_path)

    echo = {
        "command": "train",
        "dataset_digest": dataset.digest.hex(),
        "dataset_source": str(conf.get("dataset", "path", flag="dataset") or dataset.source),
        "canceler": _spec_echo(spec),
        "hyper": {"lr": hyper.lr, "batch": hyper.batch,
                  "epochs": hyper.epochs, "seed": hyper.seed},
        "protocol": {"train_fraction": split.train_fraction},
    }
    echo["config_digest"] = config_digest(echo)
    trial = bench.TrialResult(
        seed=hyper.seed,
        cancellation_db=test_scores["cancellation_db"],
        train_mse=train_scores["mse"],
        test_mse=test_scores["mse"],
        epochs=hyper.epochs if history is not None else 0,
    )
    run = bench.RunResult(
        trials=[trial],
        stats=bench.boxplot_stats([trial.cancellation_db]),
        n_completed=1,
        linear_only_db=test_scores["linear_db"],
    )
    doc = bench.results_document(run, echo, wall_clock_s=wall)
    if history is not None:
        doc["history"] = {
            "train_mse": history.train_mse,
            "val_mse": history.val_mse,
        }
    bench.write_results_json(doc, results_path)

    log.info("model -> %s, results -> %s", model_path, results_path)
    print(f"cancellation_db: {test_scores['cancellation_db']:.4f}")
    if test_scores["linear_db"] is not None:
        print(f"linear_only_db: {test_scores['linear_db']:.4f}")
    print(f"test_mse: {test_scores['mse']:.6e}")
    return EXIT_OK


def cmd_eval(args) -> int:
    stack = load_stack(args.model)
    dataset = read_dataset(args.dataset)
    if stack.M != dataset.memory:
        raise IncompatibleModelError(
            f"model memory M={stack.M} does not match dataset memory "
            f"M={dataset.memory}"
        )
    split = bench.SplitSpec(train_fraction=args.train_fraction or 0.9)
    _, test = bench.split_dataset(dataset, split)
    scores = bench.evaluate_stack(stack, test)

    lines = {
        "cancellation_db": scores["cancellation_db"],
        "linear_only_db": scores["linear_db"]
        if scores["linear_db"] is not None
        else scores["cancellation_db"],
        "test_mse": scores["mse"],
    }
    for k, v in lines.items():
        print(f"{k}: {v:.6f}" if "db" in k else f"{k}: {v:.6e}")
    if args.out:
        echo = {
            "command": "eval",
            "model": str(args.model),
            "dataset_digest": dataset.digest.hex(),
            "train_fraction": split.train_fraction,
        }
        echo["config_digest"] = config_digest(echo)
        doc = {"config": echo, **{k: v for k, v in lines.items()}}
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    return EXIT_OK


def _parse_spec_token(token: str, m: int) -> CancelerSpec:
    token = token.strip().lower()
    if token.startswith("poly") and ":" not in token and token[4:].isdigit():
        return CancelerSpec(kind="poly", P=int(token[4:]), M=m)  # "poly5"
    parts = token.split(":")
    kind = parts[0]
    try:
        if kind == "linear":
            return CancelerSpec(kind="linear", M=m)
        if kind == "poly":
            return CancelerSpec(kind="poly", P=int(parts[1]), M=m)
        if kind in ("lwgs", "ffnn"):
            return CancelerSpec(kind=kind, N=int(parts[1]), M=m)
        if kind == "mwgs":
            return CancelerSpec(kind="mwgs", N=int(parts[1]), W=int(parts[2]), M=m)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad canceler spec {token!r}: {exc}") from exc
    raise ConfigError(f"bad canceler spec {token!r}")


def cmd_flops(args) -> int:
    m = args.m or 13
    if args.specs:
        specs = [_parse_spec_token(t, m) for t in args.specs.split(",")]
        baseline = None
    else:
        specs = flops.table1_specs(M=m)
        baseline = specs[0].label()
    if args.baseline:
        baseline = _parse_spec_token(args.baseline, m).label()
        if baseline not in [s.label() for s in specs]:
            raise ConfigError(f"baseline {args.baseline!r} is not among the specs")
    rows = flops.report_table(specs, baseline=baseline)

    widths = (24, 8, 11, 10, 7, 9, 9)
    header = ("name", "params", "real_mults", "real_adds", "flops",
              "d_params%", "d_flops%")
    print("".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        pct_p = "-" if r.pct_param_reduction is None else f"{r.pct_param_reduction:+.2f}"
        pct_f = "-" if r.pct_flop_reduction is None else f"{r.pct_flop_reduction:+.2f}"
        cells = (r.name, str(r.params_real), str(r.real_mults),
                 str(r.real_adds), str(r.flops_total), pct_p, pct_f)
        print("".join(c.ljust(w) for c, w in zip(cells, widths)))
    ref = next((r for r in rows if r.flops_reference is not None), None)
    if ref is not None:
        print(f"# {ref.name}: computed {ref.flops_total} FLOPs vs published "
              f"reference {ref.flops_reference}")
        print(f"# methodology: {flops.METHODOLOGY_NOTE}")
    if args.csv:
        flops.write_report_csv(rows, args.csv)
    if args.json:
        Path(args.json).write_text(
            json.dumps(flops.report_json_doc(rows, baseline), indent=1) + "\n"
        )
    return EXIT_OK


def _sweep_combos(conf: Conf) -> list[CancelerSpec]:
    kind = conf.get("sweep", "kind")
    if kind is None:
        raise ConfigError("sweep config needs [sweep] kind")
    m = int(conf.get("sweep", "m", 13))
    if kind in ("lwgs", "ffnn"):
        ns = conf.get("sweep", "n")
        if not ns:
            raise ConfigError("[sweep] n list is empty")
        return [CancelerSpec(kind=kind, N=int(n), M=m) for n in ns]
    if kind == "mwgs":
        ns = conf.get("sweep", "n")
        ws = conf.get("sweep", "w")
        if not ns:
            raise ConfigError("[sweep] n list is empty")
        if not ws:
            raise ConfigError("[sweep] w list is empty")
        return [
            CancelerSpec(kind="mwgs", N=int(n), W=int(w), M=m)
            for n in ns for w in ws
        ]
    if kind == "poly":
        ps = conf.get("sweep", "p")
        if not ps:
            raise ConfigError("[sweep] p list is empty")
        return [CancelerSpec(kind="poly", P=int(p), M=m) for p in ps]
    raise ConfigError(f"cannot sweep canceler kind {kind!r}")


def _sweep_one(payload):
    """Worker entry: run one combination; returns (index, document)."""
    idx, dataset_path, spec, hyper, split, n_seeds = payload
    dataset = read_dataset(dataset_path)
    t0 = time.monotonic()
    run = bench.run_seeds(dataset, spec, hyper, split, n_seeds=n_seeds)
    echo = {
        "command": "sweep",
        "dataset_digest": dataset.digest.hex(),
        "canceler": _spec_echo(spec),
        "hyper": {"lr": hyper.lr, "batch": hyper.batch,
                  "epochs": hyper.epochs, "seed": hyper.seed},
        "protocol": {"train_fraction": split.train_fraction, "n_seeds": n_seeds},
    }
    echo["config_digest"] = config_digest(echo)
    doc = bench.results_document(run, echo, wall_clock_s=time.monotonic() - t0)
    return idx, spec, doc, run


def cmd_sweep(args) -> int:
    conf = Conf(load_config_file(args.config), args)
    combos = _sweep_combos(conf)
    cap = int(conf.get("sweep", "max_combinations", 64, flag="max_combinations"))
    if len(combos) > cap:  # refuse before touching data or outputs
        raise CapExceededError(
            f"sweep of {len(combos)} combinations exceeds the cap {cap}"
        )
    root = out_root(conf)
    dataset_path = conf.get("dataset", "path", flag="dataset")
    if dataset_path is None:
        if conf.get("dataset", "source") != "synthetic":
            raise ConfigError(
                "sweep needs a dataset ([dataset] path, --dataset, or "
                "source=\"synthetic\")"
            )
        # workers read from a file; materialize the synthetic source once
        dataset_path = root / "sweep_dataset.sic1"
        write_atomic(Path(dataset_path), dataset_to_bytes(_load_dataset(conf)))
    else:
        read_dataset(dataset_path)  # fail fast
    hyper = _hyper(conf)
    split = _split_spec(conf)
    n_seeds = int(conf.get("protocol", "n_seeds", 20, flag="n_seeds"))
    workers = int(conf.get("sweep", "workers", 1, flag="workers"))

    payloads = [
        (i, str(dataset_path), spec, hyper, split, n_seeds)
        for i, spec in enumerate(combos)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, payloads))
    else:
        results = [_sweep_one(p) for p in payloads]
    results.sort(key=lambda r: r[0])

    index = []
    for i, spec, doc, run in results:
        stem = spec.label().lower()
        for ch in " (),=":
            stem = stem.replace(ch, "_")
        stem = "_".join(filter(None, stem.split("_")))
        json_path = root / f"sweep_{i:03d}_{stem}.json"
        bench.write_results_json(doc, json_path)
        bench.write_trials_csv(run.trials, json_path.with_suffix(".csv"))
        index.append(
            {
                "combo": i,
                "canceler": _spec_echo(spec),
                "results": json_path.name,
                "median_cancellation_db": None
                if run.stats is None
                else run.stats.median,
                "n_completed": run.n_completed,
            }
        )
        log.info("combo %d (%s) done", i, spec.label())
    (root / "sweep_index.json").write_text(json.dumps(index, indent=1) + "\n")
    print(f"wrote {len(index)} result files under {root}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fdsic",
        description="full-duplex self-interference cancellation workbench",
    )
    ap.add_argument("--version", action="version", version=f"fdsic {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a dataset file")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", dest="seed_dataset", type=int)
    p.add_argument("--memory", type=int)
    p.add_argument("--psi", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--pa-order", dest="pa_order", type=int)
    p.add_argument("--pa-memory", dest="pa_memory", type=int)
    p.add_argument("--noise-power", dest="noise_power", type=float)
    p.add_argument("--n-subcarriers", dest="n_subcarriers", type=int)
    p.add_argument("--cp-fraction", dest="cp_fraction", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import", help="import a CSV recording")
    p.add_argument("--csv", required=True)
    p.add_argument("--out")
    p.add_argument("--memory", type=int)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("train", help="fit/train a canceler on a dataset")
    p.add_argument("--config")
    p.add_argument("--dataset")
    p.add_argument("--kind")
    p.add_argument("--n", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--out-model", dest="out_model")
    p.add_argument("--out-results", dest="out_results")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flops", help="emit the complexity report")
    p.add_argument("--m", type=int)
    p.add_argument("--specs", help="comma list, e.g. poly:5,lwgs:9,mwgs:12:5")
    p.add_argument("--baseline", help="spec token for the reduction baseline")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("sweep", help="run seed sweeps over a config grid")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--max-combinations", dest="max_combinations", type=int)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetFormatError, ModelFormatError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except IncompatibleModelError as exc:
        log.error("%s", exc)
        return EXIT_INCOMPATIBLE
    except DivergenceError as exc:
        log.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    except CapExceededError as exc:
        log.error("%s", exc)
        return EXIT_CAP
    except (ConfigError, FileNotFoundError, PermissionError, IsADirectoryError,
            NotADirectoryError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
