"""Command-line interface: ``train``, ``evaluate``, and ``encode``.

Run configurations are flat ``key=value`` text files; any CLI flag
overrides the matching key. Unknown keys are rejected. The recognized
keys are the modality paths (``modality0``, ``modality1``, ...),
``split``, ``labels``, ``format``, ``outdir``, ``synth``, ``task``,
``top``, ``ap_denominator``, ``threads``, ``verbose``, and the training
knobs ``bits``, ``anchors``, ``clusters``, ``knn``, ``gamma1``,
``gamma2``, ``gamma3``, ``lambda``, ``iters``, ``ogm_iters``, ``tol``,
``ogm_tol``, ``seed``, ``center``, ``renormalize_fusion``,
``classic_momentum``.

Exit codes: 0 on success, 1 on numeric or convergence failures, 2 on
I/O or configuration failures.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import retrieval
from .dataset import (
    Dataset,
    load_features,
    load_labels,
    load_split,
    synth_multimodal,
)
from .errors import ConfigError, DataFormatError, NumericError
from .retrieval import cross_modal_evaluate
from .training import Hyperparams, load_model, save_model, train

_HYPER_INT = ("bits", "anchors", "clusters", "knn")
_HYPER_FLOAT = ("gamma1", "gamma2", "gamma3")
_TASKS = ("i2t", "t2i", "both")


@dataclass
class RunConfig:
    """Everything a run needs: data locations, output, and hyperparameters."""

    modalities: list[str] = field(default_factory=list)
    split: str | None = None
    labels: str | None = None
    fmt: str = "auto"
    outdir: str = "out"
    synth: str | None = None
    task: str = "both"
    top: int = 50
    ap_denominator: str = "min-relevant"
    threads: int | None = None
    verbose: bool = False
    hyper: Hyperparams = field(default_factory=Hyperparams)


_BOOL_WORDS = {
    "true": True, "1": True, "yes": True,
    "false": False, "0": False, "no": False,
}


def _parse_bool(key: str, value: str) -> bool:
    try:
        return _BOOL_WORDS[value.strip().lower()]
    except KeyError:
        raise ConfigError(f"{key} expects a boolean, got {value!r}") from None


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} expects an integer, got {value!r}") from None


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {value!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key=value`` lines; ``#`` starts a comment line."""
    cfg = RunConfig()
    modality_paths: dict[int, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("modality") and key[len("modality"):].isdigit():
            modality_paths[int(key[len("modality"):])] = value
        elif key in ("split", "labels", "outdir", "synth"):
            setattr(cfg, key, value)
        elif key == "format":
            if value not in ("auto", "csv", "bin"):
                raise ConfigError(f"format must be auto, csv, or bin, got {value!r}")
            cfg.fmt = value
        elif key == "task":
            if value not in _TASKS:
                raise ConfigError(f"task must be one of {_TASKS}, got {value!r}")
            cfg.task = value
        elif key == "top":
            cfg.top = _parse_int(key, value)
        elif key == "ap_denominator":
            if value not in retrieval.AP_DENOMINATORS:
                raise ConfigError(
                    f"ap_denominator must be one of {retrieval.AP_DENOMINATORS}, "
                    f"got {value!r}"
                )
            cfg.ap_denominator = value
        elif key == "threads":
            cfg.threads = _parse_int(key, value)
        elif key == "verbose":
            cfg.verbose = _parse_bool(key, value)
        elif key in _HYPER_INT:
            setattr(cfg.hyper, key, _parse_int(key, value))
        elif key in _HYPER_FLOAT:
            setattr(cfg.hyper, key, _parse_float(key, value))
        elif key == "lambda":
            cfg.hyper.lam = _parse_float(key, value)
        elif key == "iters":
            cfg.hyper.max_iters = _parse_int(key, value)
        elif key == "ogm_iters":
            cfg.hyper.ogm_max_iters = _parse_int(key, value)
        elif key == "tol":
            cfg.hyper.tol = _parse_float(key, value)
        elif key == "ogm_tol":
            cfg.hyper.ogm_tol = _parse_float(key, value)
        elif key == "seed":
            cfg.hyper.seed = _parse_int(key, value)
        elif key in ("center", "renormalize_fusion", "classic_momentum"):
            setattr(cfg.hyper, key, _parse_bool(key, value))
        else:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
    if modality_paths:
        expected = set(range(len(modality_paths)))
        if set(modality_paths) != expected:
            raise ConfigError(
                f"modality keys must be contiguous from modality0, "
                f"got {sorted(modality_paths)}"
            )
        cfg.modalities = [modality_paths[i] for i in range(len(modality_paths))]
    return cfg


def format_config(cfg: RunConfig) -> str:
    """Canonical text form; parsing it reproduces the configuration."""
    h = cfg.hyper
    lines = []
    for i, path in enumerate(cfg.modalities):
        lines.append(f"modality{i}={path}")
    for key in ("split", "labels", "synth"):
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"{key}={value}")
    lines.append(f"format={cfg.fmt}")
    lines.append(f"outdir={cfg.outdir}")
    lines.append(f"task={cfg.task}")
    lines.append(f"top={cfg.top}")
    lines.append(f"ap_denominator={cfg.ap_denominator}")
    if cfg.threads is not None:
        lines.append(f"threads={cfg.threads}")
    lines.append(f"verbose={str(cfg.verbose).lower()}")
    lines.append(f"bits={h.bits}")
    lines.append(f"anchors={h.anchors}")
    lines.append(f"clusters={h.clusters}")
    lines.append(f"knn={h.knn}")
    lines.append(f"gamma1={h.gamma1!r}")
    lines.append(f"gamma2={h.gamma2!r}")
    lines.append(f"gamma3={h.gamma3!r}")
    lines.append(f"lambda={h.lam!r}")
    lines.append(f"iters={h.max_iters}")
    lines.append(f"ogm_iters={h.ogm_max_iters}")
    lines.append(f"tol={h.tol!r}")
    lines.append(f"ogm_tol={h.ogm_tol!r}")
    lines.append(f"seed={h.seed}")
    lines.append(f"center={str(h.center).lower()}")
    lines.append(f"renormalize_fusion={str(h.renormalize_fusion).lower()}")
    lines.append(f"classic_momentum={str(h.classic_momentum).lower()}")
    return "\n".join(lines) + "\n"


def parse_synth_spec(spec: str, seed: int) -> Dataset:
    """Build a synthetic dataset from ``C=4,N=2000,dims=16:24[,noise=..][,query=..]``."""
    values = {"noise": 0.1, "query": 0.2}
    required = {"C", "N", "dims"}
    for item in spec.split(","):
        if "=" not in item:
            raise ConfigError(f"synth spec item {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        if key == "C":
            values["C"] = _parse_int("synth C", value)
        elif key == "N":
            values["N"] = _parse_int("synth N", value)
        elif key == "dims":
            try:
                values["dims"] = [int(v) for v in value.split(":")]
            except ValueError:
                raise ConfigError(
                    f"synth dims expects colon-separated integers, got {value!r}"
                ) from None
        elif key == "noise":
            values["noise"] = _parse_float("synth noise", value)
        elif key == "query":
            values["query"] = _parse_float("synth query", value)
        else:
            raise ConfigError(f"unknown synth key {key!r}")
    missing = required - set(values)
    if missing:
        raise ConfigError(f"synth spec is missing {sorted(missing)}")
    return synth_multimodal(
        clusters=values["C"],
        count=values["N"],
        dims=values["dims"],
        noise=values["noise"],
        seed=seed,
        query_fraction=values["query"],
    )


def _add_data_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument(
        "--modality", action="append", metavar="PATH",
        help="feature file, repeat once per modality in order",
    )
    parser.add_argument("--split", help="two-line train/query index file")
    parser.add_argument("--labels", help="label file (integers or 0/1 rows)")
    parser.add_argument("--format", choices=("auto", "csv", "bin"), dest="fmt")
    parser.add_argument(
        "--synth", metavar="SPEC",
        help="generate data instead of loading: C=4,N=2000,dims=16:24",
    )
    parser.add_argument("--outdir", help="output directory")
    parser.add_argument("--verbose", action="store_true", default=None)
    parser.add_argument("--threads", type=int, help="cap linear-algebra threads")


def _add_hyper_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bits", type=int, help="code length")
    parser.add_argument("--anchors", type=int)
    parser.add_argument("--clusters", type=int)
    parser.add_argument("--knn", type=int)
    parser.add_argument("--gamma1", type=float)
    parser.add_argument("--gamma2", type=float)
    parser.add_argument("--gamma3", type=float)
    parser.add_argument("--lambda", type=float, dest="lam")
    parser.add_argument("--iters", type=int, help="outer iteration cap")
    parser.add_argument("--ogm-iters", type=int, dest="ogm_iters")
    parser.add_argument("--tol", type=float, help="outer relative objective tolerance")
    parser.add_argument("--ogm-tol", type=float, dest="ogm_tol")
    parser.add_argument("--seed", type=int)
    parser.add_argument(
        "--renormalize-fusion", action="store_true", default=None,
        dest="renormalize_fusion",
        help="rescale surviving fused rows to sum to one",
    )
    parser.add_argument(
        "--classic-momentum", action="store_true", default=None,
        dest="classic_momentum",
        help="use the unbounded momentum recurrence",
    )
    parser.add_argument(
        "--no-center", action="store_true", default=None, dest="no_center",
        help="skip per-dimension centering by training means",
    )


def _merge_config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text(encoding="ascii")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = parse_config(text)
    else:
        cfg = RunConfig()
    if getattr(args, "modality", None):
        cfg.modalities = list(args.modality)
    for key in ("split", "labels", "synth", "outdir"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "fmt", None) is not None:
        cfg.fmt = args.fmt
    if getattr(args, "task", None) is not None:
        cfg.task = args.task
    if getattr(args, "top", None) is not None:
        cfg.top = args.top
    if getattr(args, "ap_denominator", None) is not None:
        cfg.ap_denominator = args.ap_denominator
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "verbose", None) is not None:
        cfg.verbose = args.verbose
    h = cfg.hyper
    for key in (_HYPER_INT + _HYPER_FLOAT + ("lam", "tol", "ogm_tol", "seed")):
        value = getattr(args, key, None)
        if value is not None:
            setattr(h, key, value)
    if getattr(args, "iters", None) is not None:
        h.max_iters = args.iters
    if getattr(args, "ogm_iters", None) is not None:
        h.ogm_max_iters = args.ogm_iters
    for key in ("renormalize_fusion", "classic_momentum"):
        if getattr(args, key, None) is not None:
            setattr(h, key, True)
    if getattr(args, "no_center", None):
        h.center = False
    return cfg


def _build_dataset(cfg: RunConfig, need_labels: bool = False) -> Dataset:
    if cfg.synth:
        return parse_synth_spec(cfg.synth, cfg.hyper.seed)
    if len(cfg.modalities) < 2:
        raise ConfigError(
            "need at least two --modality paths (or a synth spec); "
            f"got {len(cfg.modalities)}"
        )
    if not cfg.split:
        raise ConfigError("a split file is required when loading features")
    modalities = [
        load_features(path, fmt=cfg.fmt, modality_id=i)
        for i, path in enumerate(cfg.modalities)
    ]
    split = load_split(cfg.split)
    labels = load_labels(cfg.labels) if cfg.labels else None
    if need_labels and labels is None:
        raise ConfigError("evaluation requires a labels file")
    return Dataset(modalities=modalities, split=split, labels=labels)


def _thread_cap(threads: int | None):
    if threads is None:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        print("threadpoolctl unavailable; --threads ignored", file=sys.stderr)
        return nullcontext()
    return threadpool_limits(limits=threads)


def _tasks(cfg: RunConfig) -> tuple[str, ...]:
    return ("i2t", "t2i") if cfg.task == "both" else (cfg.task,)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    dataset = _build_dataset(cfg)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.verbose:
        print(format_config(cfg), end="")
    with _thread_cap(cfg.threads):
        model, trace = train(dataset, cfg.hyper)
    model_path = outdir / "model.agsf"
    save_model(model, model_path)
    trace.to_csv(outdir / "trace.csv")
    if cfg.verbose and len(trace):
        trace.eigenvalues_to_csv(outdir / "eigenvalues.csv")
    if len(trace):
        print(
            f"trained {cfg.hyper.bits}-bit model in {len(trace)} iterations, "
            f"objective {trace.objective[-1]:.6g}, "
            f"components {trace.components[-1]}, "
            f"{sum(trace.seconds):.2f}s"
        )
    else:
        print(f"trained {cfg.hyper.bits}-bit model (initialization only)")
    print(f"wrote {model_path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    dataset = _build_dataset(cfg, need_labels=cfg.synth is None)
    if dataset.labels is None:
        raise ConfigError("evaluation requires labels")
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tasks = _tasks(cfg)

    if args.sweep_bits:
        try:
            sweep = [int(v) for v in args.sweep_bits.split(",")]
        except ValueError:
            raise ConfigError(
                f"--sweep-bits expects comma-separated integers, "
                f"got {args.sweep_bits!r}"
            ) from None
        grid: dict[str, dict[int, float]] = {task: {} for task in tasks}
        with _thread_cap(cfg.threads):
            for bits in sweep:
                hyper = replace(cfg.hyper, bits=bits)
                model, _ = train(dataset, hyper)
                reports = cross_modal_evaluate(
                    model, dataset, tasks=tasks, cutoff=cfg.top,
                    ap_denominator=cfg.ap_denominator,
                )
                for task, report in reports.items():
                    grid[task][bits] = report.map_score
                    report.save_json(outdir / f"report_{task}_{bits}.json")
        grid_path = outdir / "map_grid.csv"
        with open(grid_path, "w", encoding="ascii") as fh:
            fh.write("task," + ",".join(str(b) for b in sweep) + "\n")
            for task in tasks:
                fh.write(
                    task + "," + ",".join(f"{grid[task][b]:.6f}" for b in sweep) + "\n"
                )
        for task in tasks:
            row = "  ".join(f"{b}:{grid[task][b]:.4f}" for b in sweep)
            print(f"{task}  {row}")
        print(f"wrote {grid_path}")
        return 0

    if not args.model:
        raise ConfigError("evaluate needs --model (or --sweep-bits)")
    model = load_model(args.model)
    with _thread_cap(cfg.threads):
        reports = cross_modal_evaluate(
            model, dataset, tasks=tasks, cutoff=cfg.top,
            ap_denominator=cfg.ap_denominator,
        )
    for task, report in reports.items():
        report.save_json(outdir / f"report_{task}.json")
        report.save_topn_csv(outdir / f"topn_{task}.csv")
        report.save_pr_csv(outdir / f"pr_{task}.csv")
        print(
            f"{task}  map@{report.cutoff}={report.map_score:.4f}  "
            f"evaluated={report.queries_evaluated}  "
            f"skipped={report.queries_skipped}"
        )
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    if args.stored_codes:
        codes = model.codes
        if codes.shape[1] == 0:
            raise DataFormatError("the model carries no stored database codes")
    else:
        if not args.features:
            raise ConfigError("encode needs --features (or --stored-codes)")
        features = load_features(
            args.features, fmt=args.fmt or "auto",
            modality_id=args.modality_index,
        )
        codes = retrieval.encode(features, model)
    retrieval.save_codes(codes, args.out)
    print(f"wrote {codes.shape[1]} codes of {codes.shape[0]} bits to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anchorhash",
        description="Cross-modal hashing over fused anchor graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="learn a hashing model")
    _add_data_arguments(p_train)
    _add_hyper_arguments(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="score retrieval quality")
    _add_data_arguments(p_eval)
    _add_hyper_arguments(p_eval)
    p_eval.add_argument("--model", help="trained model file")
    p_eval.add_argument("--task", choices=_TASKS)
    p_eval.add_argument("--top", type=int, help="ranking cutoff for the mean AP")
    p_eval.add_argument(
        "--ap-denominator", choices=retrieval.AP_DENOMINATORS,
        dest="ap_denominator",
    )
    p_eval.add_argument(
        "--sweep-bits", dest="sweep_bits",
        help="comma-separated code lengths; trains one model per length "
             "and writes a MAP grid",
    )
    p_eval.set_defaults(func=cmd_evaluate)

    p_enc = sub.add_parser("encode", help="hash a feature file with a model")
    p_enc.add_argument("--model", required=True)
    p_enc.add_argument("--features")
    p_enc.add_argument("--modality-index", type=int, default=0, dest="modality_index")
    p_enc.add_argument("--format", choices=("auto", "csv", "bin"), dest="fmt")
    p_enc.add_argument("--out", required=True)
    p_enc.add_argument(
        "--stored-codes", action="store_true", dest="stored_codes",
        help="write the model's stored database codes instead of encoding",
    )
    p_enc.set_defaults(func=cmd_encode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    # LinAlgError derives from ValueError, so numeric failures go first
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, DataFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
