"""Command-line entry point: ``iitnet <command> ...``.

Every command writes into one run directory (``--out``) containing
``manifest.json`` (argv, inputs and their hashes, seed) and ``config.json``
(the fully resolved configuration). ``iitnet rerun RUN_DIR`` replays a run.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import shutil
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import cache, plots, report
from .crossval import FoldFailure, run_cross_validation
from .data import SequenceSet
from .edf import EDFError
from .evaluation import SplitPlanError, build_split_plan, compute_metrics
from .ingest import (
    DatasetConfig,
    DatasetKind,
    EpochArray,
    IngestError,
    MissingAnnotations,
    content_hash,
    extract_epochs,
    find_annotation,
    find_recordings,
    ingest_directory,
    read_recording,
)
from .models import MODEL_KINDS, build_model
from .stages import EPOCH_SECONDS, STAGE_NAMES, ConfusionMatrix
from .synthetic import DEFAULT_KERNEL, SyntheticSpec, generate_arrays, iid_kernel, stationary_distribution
from .training import Checkpoint, TrainConfig, TrainingError, evaluate, predict_proba, resolve_device

log = logging.getLogger("iitnet")
_handlers: list = []

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3
INDEX_FILE = "index.json"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class RateMismatch(DataError):
    pass


# SplitPlanError and UnknownStageToken are ValueErrors; any other ValueError that
# escapes a command also stems from the inputs rather than from training
DATA_ERRORS = (DataError, IngestError, EDFError, cache.CacheFormatError, SplitPlanError,
               FileNotFoundError, NotADirectoryError, ValueError)


@dataclass
class RunManifest:
    command: str
    argv: list
    seed: int | None
    output_dir: str
    config_paths: list = field(default_factory=list)
    dataset_paths: list = field(default_factory=list)
    input_hashes: dict = field(default_factory=dict)
    package_version: str = ""

    def write(self, run_dir: Path) -> Path:
        path = run_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2))
        return path

    @classmethod
    def read(cls, path) -> RunManifest:
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        return cls(**json.loads(path.read_text()))


# --- configuration --------------------------------------------------------


def default_config() -> dict:
    return {
        "data": {"dataset_kind": None, "channel": None, "sample_rate": 100.0,
                 "wake_trim_epochs": 60, "pad": "repeat"},
        "model": {"kind": "iitnet", "encoder": {}, "head": {}},
        "train": {k: v for k, v in TrainConfig().to_dict().items() if k != "batch_size"}
        | {"batch_size": None},
        "experiment": {"protocol": None, "seq_lens": [1], "folds": None, "n_folds": None,
                       "n_val": None, "ratios": None, "device": "cpu"},
    }


def merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(args) -> dict:
    """Defaults, then each ``--config`` file in order, then explicit flags."""
    cfg = default_config()
    for path in getattr(args, "config", None) or []:
        try:
            cfg = merge(cfg, json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    flags = {
        ("data", "dataset_kind"): getattr(args, "dataset", None),
        ("data", "channel"): getattr(args, "channel", None),
        ("data", "sample_rate"): getattr(args, "sample_rate", None),
        ("data", "pad"): getattr(args, "pad", None),
        ("model", "kind"): getattr(args, "model", None),
        ("train", "seed"): getattr(args, "seed", None),
        ("train", "batch_size"): getattr(args, "batch_size", None),
        ("train", "max_passes"): getattr(args, "max_passes", None),
        ("train", "eval_every"): getattr(args, "eval_every", None),
        ("train", "early_stop_patience"): getattr(args, "patience", None),
        ("train", "lr"): getattr(args, "lr", None),
        ("experiment", "protocol"): getattr(args, "protocol", None),
        ("experiment", "seq_lens"): getattr(args, "seq_len", None),
        ("experiment", "folds"): getattr(args, "folds", None),
        ("experiment", "n_folds"): getattr(args, "n_folds", None),
        ("experiment", "n_val"): getattr(args, "n_val", None),
        ("experiment", "device"): getattr(args, "device", None),
    }
    for (section, key), value in flags.items():
        if value is not None:
            cfg[section][key] = value
    return cfg


def train_config(cfg: dict, dataset_kind) -> TrainConfig:
    t = dict(cfg["train"])
    if t.get("batch_size") is None:
        t["batch_size"] = TrainConfig.for_dataset(dataset_kind or "generic").batch_size
    return TrainConfig(**t)


# --- argument types -------------------------------------------------------


def _int_ranges(text: str) -> list:
    """'4', '1,4,10' or '1-3,7' -> sorted unique ints."""
    out = set()
    for part in text.split(","):
        lo, sep, hi = part.strip().partition("-")
        out.update(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    return sorted(out)


def seq_lens(text: str) -> list:
    try:
        values = _int_ranges(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse sequence length {text!r}") from None
    if not values or not all(1 <= v <= 10 for v in values):
        raise argparse.ArgumentTypeError(f"sequence length must be in [1, 10], got {text!r}")
    return values


def id_list(text: str) -> list:
    try:
        return _int_ranges(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse index list {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --- helpers --------------------------------------------------------------


def _run_dir(args, default=None) -> Path:
    out = Path(args.out or default or "runs/" + args.command)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _start_run(args, run_dir: Path, cfg: dict | None, dataset_paths=(), hashed=()) -> RunManifest:
    handler = logging.FileHandler(run_dir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    _handlers.append(handler)
    manifest = RunManifest(
        command=args.command,
        argv=list(args.argv),
        seed=cfg["train"]["seed"] if cfg and "train" in cfg else getattr(args, "seed", None),
        output_dir=str(run_dir),
        config_paths=[str(p) for p in getattr(args, "config", None) or []],
        dataset_paths=[str(p) for p in dataset_paths],
        input_hashes={str(p): _hash_input(p) for p in [*hashed, *(getattr(args, "config", None) or [])]},
        package_version=_version(),
    )
    manifest.write(run_dir)
    if cfg is not None:
        (run_dir / "config.json").write_text(json.dumps(cfg, indent=2, default=str))
    return manifest


def _hash_input(path) -> str:
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == ".iitc")
        return content_hash(files)
    return content_hash([path])


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def load_cache_dir(path) -> tuple[list, dict]:
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"cache directory {path} does not exist")
    arrays = cache.read_cache_dir(path)
    if not arrays:
        raise DataError(f"no cached recordings in {path}; run 'iitnet ingest' or 'iitnet synth' first")
    index_path = path / INDEX_FILE
    index = json.loads(index_path.read_text()) if index_path.exists() else {}
    return arrays, index


def checkpoint_rate(ck: Checkpoint) -> float:
    spec = ck.model_spec
    if "sample_rate" in spec:
        return float(spec["sample_rate"])
    return spec["encoder"]["input_length"] / EPOCH_SECONDS


def _check_rate(ck_rate: float, data_rate: float, what: str):
    if abs(ck_rate - data_rate) > 1e-6:
        raise RateMismatch(
            f"checkpoint was trained on {ck_rate:g} Hz input but {what} is {data_rate:g} Hz; "
            "learned filters do not transfer across sampling rates, so re-ingest the data at "
            f"{ck_rate:g} Hz or pass --resample"
        )


def _counts_table(rows) -> str:
    header = ["Recording", "Epochs"] + list(STAGE_NAMES)
    body = [[name, str(int(sum(c)))] + [str(int(v)) for v in c] for name, c in rows]
    return report._grid(header, body)


# --- commands -------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = resolve_config(args)
    if not cfg["data"]["dataset_kind"]:
        raise UsageError("ingest needs --dataset")
    d = cfg["data"]
    config = DatasetConfig(dataset_kind=d["dataset_kind"], channel=d["channel"],
                           sample_rate=d["sample_rate"], wake_trim_epochs=d["wake_trim_epochs"],
                           pad=d["pad"])
    files = find_recordings(args.dataset_dir, config.dataset_kind)
    if not files:
        raise IngestError(f"no recordings found in {args.dataset_dir}")
    sources = list(files)
    for f in files:
        try:
            sources.append(find_annotation(f, config.dataset_kind))
        except MissingAnnotations:
            pass
    digest = content_hash(sources)
    key = content_hash_of_text(digest + json.dumps(config.to_dict(), sort_keys=True))
    cache_dir = Path(args.cache_dir) if args.cache_dir else (
        cache.default_cache_root() / f"{config.dataset_kind.value}-{key[:12]}")
    run_dir = _run_dir(args, cache_dir)
    _start_run(args, run_dir, cfg, dataset_paths=[args.dataset_dir])
    index_path = cache_dir / INDEX_FILE
    index = json.loads(index_path.read_text()) if index_path.exists() else None
    if index and index.get("key") == key and not args.force:
        log.info("cache hit: %s", cache_dir)
        skipped = index.get("skipped", [])
        arrays = cache.read_cache_dir(cache_dir)
    else:
        arrays, skipped = ingest_directory(args.dataset_dir, config, skip_bad=args.skip_bad)
        cache_dir.mkdir(parents=True, exist_ok=True)
        for old in cache_dir.glob("*.iitc"):
            old.unlink()
        for arr in arrays:
            cache.write_cache(cache_dir / cache.cache_name(arr, digest), arr, digest)
        index = {"dataset_kind": config.dataset_kind.value, "config": config.to_dict(),
                 "source_hash": digest, "key": key, "skipped": skipped,
                 "recordings": [a.recording_id for a in arrays]}
        index_path.write_text(json.dumps(index, indent=2))
    rows = [(a.recording_id, a.class_counts()) for a in arrays]
    totals = sum((c for _, c in rows), np.zeros(5, dtype=np.int64))
    ingest_report = {
        "dataset_kind": config.dataset_kind.value,
        "cache_dir": str(cache_dir),
        "n_recordings": len(arrays),
        "n_subjects": len({a.subject_id for a in arrays}),
        "total_epochs": int(totals.sum()),
        "class_counts": dict(zip(STAGE_NAMES, map(int, totals))),
        "recordings": {name: list(map(int, c)) for name, c in rows},
        "skipped": [{"path": p, "error": e} for p, e in skipped],
    }
    (run_dir / "ingestion_report.json").write_text(json.dumps(ingest_report, indent=2))
    table = _counts_table(rows + [("TOTAL", totals)])
    (run_dir / "ingestion_report.txt").write_text(table + "\n")
    print(table)
    print(f"cache: {cache_dir}")
    if skipped:
        print(f"skipped {len(skipped)} file(s):")
        for p, e in skipped:
            print(f"  {p}: {e}")
    return EXIT_OK


def content_hash_of_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def cmd_synth(args) -> int:
    if args.labels == "iid":
        prior = stationary_distribution(DEFAULT_KERNEL)
        kernel = iid_kernel(prior)
    else:
        kernel = DEFAULT_KERNEL
    spec = SyntheticSpec(n_subjects=args.subjects, epochs_per_subject=args.epochs,
                         sample_rate=args.sample_rate, noise_level=args.noise,
                         transition_kernel=kernel)
    out = _run_dir(args)
    _start_run(args, out, {"synthetic": asdict(spec), "seed": args.seed})
    arrays = generate_arrays(spec, seed=args.seed)
    tag = f"synth-seed{args.seed}"
    for old in out.glob("*.iitc"):
        old.unlink()
    for arr in arrays:
        cache.write_cache(out / cache.cache_name(arr, content_hash_of_text(tag)), arr, tag)
    (out / INDEX_FILE).write_text(json.dumps({
        "dataset_kind": "generic", "synthetic": asdict(spec), "seed": args.seed,
        "recordings": [a.recording_id for a in arrays]}, indent=2, default=list))
    print(f"wrote {len(arrays)} synthetic recordings to {out}")
    return EXIT_OK


def _experiment(args, cfg, seq_len_list, fold_ids, run_dir) -> list:
    arrays, index = load_cache_dir(args.data)
    kind = cfg["experiment"]["protocol"] or cfg["data"]["dataset_kind"] or index.get("dataset_kind")
    if kind is None:
        raise UsageError("cannot tell the dataset kind; pass --protocol")
    kind = DatasetKind(kind)
    exp = cfg["experiment"]
    subjects = sorted({a.subject_id for a in arrays})
    n_folds = exp["n_folds"]
    if kind is DatasetKind.Generic and n_folds is None and exp["ratios"] is None:
        n_folds = min(5, len(subjects))
    plan = build_split_plan(kind, subjects, seed=cfg["train"]["seed"], ratios=exp["ratios"],
                            n_folds=n_folds, n_val=exp["n_val"])
    (run_dir / "split_plan.json").write_text(json.dumps(plan.to_dict(), indent=2))
    if fold_ids is not None:
        bad = [k for k in fold_ids if k >= len(plan.folds)]
        if bad:
            raise UsageError(f"fold ids {bad} out of range for a {len(plan.folds)}-fold plan")
    tcfg = train_config(cfg, kind)
    rate = arrays[0].sample_rate
    model_cfg = cfg["model"]
    if model_cfg["kind"] not in MODEL_KINDS:
        raise UsageError(f"unknown model {model_cfg['kind']!r}; choose from {', '.join(MODEL_KINDS)}")
    device = resolve_device(cfg["experiment"].get("device"))
    results = []
    for L in seq_len_list:
        def factory(_fold, L=L):
            return build_model(model_cfg["kind"], L, sample_rate=rate, encoder=model_cfg.get("encoder"),
                               head=model_cfg.get("head")).to(device)
        out_L = run_dir / f"L{L:02d}"
        result = run_cross_validation(plan, arrays, factory, tcfg, L, out_L, kind.value,
                                      cfg["data"]["pad"], fold_ids)
        for f in result.folds:
            history = [json.loads(x) for x in (out_L / f"fold{f.fold_id:02d}_train.jsonl").read_text().splitlines()]
            if history:
                plots.plot_training_log(out_L / f"fold{f.fold_id:02d}_train.png", history)
        (out_L / "report.txt").write_text(report.render(result.aggregate))
        results.append((L, result))
    return results


def cmd_experiment(args) -> int:
    cfg = resolve_config(args)
    run_dir = _run_dir(args)
    _start_run(args, run_dir, cfg, dataset_paths=[args.data], hashed=[args.data])
    results = _experiment(args, cfg, cfg["experiment"]["seq_lens"], cfg["experiment"]["folds"], run_dir)
    rows = []
    for L, res in results:
        fm = res.fold_mean()
        rows.append({"L": L, "accuracy": res.aggregate.accuracy, "mf1": res.aggregate.mf1,
                     "kappa": res.aggregate.kappa, "n_epochs": res.aggregate.n_epochs,
                     "fold_mean_accuracy": fm["accuracy"], "fold_mean_mf1": fm["mf1"],
                     "fold_mean_kappa": fm["kappa"]})
    with open(run_dir / "curve.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    if len(rows) > 1:
        plots.plot_sequence_curve(run_dir / "curve.png", rows, title=cfg["model"]["kind"])
    text = report.overall_table([res.aggregate for _, res in results])
    (run_dir / "report.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    lens = cfg["experiment"]["seq_lens"]
    if len(lens) != 1:
        raise UsageError("train takes a single sequence length")
    run_dir = _run_dir(args)
    _start_run(args, run_dir, cfg, dataset_paths=[args.data], hashed=[args.data])
    [(L, res)] = _experiment(args, cfg, lens, [args.fold], run_dir)
    fold = res.folds[0]
    target = run_dir / "model.ckpt"
    shutil.copyfile(fold.checkpoint_path, target)
    print(report.render(fold.report))
    print(f"checkpoint: {target} (best validation accuracy {fold.best_validation_accuracy:.4f} at step {fold.step})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run_dir = _run_dir(args)
    _start_run(args, run_dir, None, dataset_paths=[args.data], hashed=[args.data, args.checkpoint])
    ck = Checkpoint.load(args.checkpoint)
    model = ck.build_model()
    arrays, index = load_cache_dir(args.data)
    _check_rate(checkpoint_rate(ck), arrays[0].sample_rate, f"the cached data in {args.data}")
    if args.subjects:
        wanted = set(args.subjects.split(","))
    else:
        wanted = set(ck.extra.get("plan", {}).get("test", [])) or {a.subject_id for a in arrays}
    chosen = [a for a in arrays if a.subject_id in wanted]
    if not chosen:
        raise DataError(f"none of the subjects {sorted(wanted)} are in {args.data}")
    L = ck.model_spec["seq_len"]
    data = SequenceSet(chosen, L, args.pad)
    ev = evaluate(model, data)
    cm = ConfusionMatrix.from_labels(ev["predictions"], data.labels)
    rep = compute_metrics(cm, L=L, dataset_kind=index.get("dataset_kind"), model=ck.model_spec["kind"])
    (run_dir / "report.json").write_text(rep.to_json())
    (run_dir / "report.txt").write_text(report.render(rep))
    np.savetxt(run_dir / "predictions.txt", np.stack([ev["predictions"], data.labels], axis=1),
               fmt="%d", header="predicted true")
    print(report.render(rep))
    return EXIT_OK


def _night(args, ck: Checkpoint, labeled: bool):
    """Read one recording for inference; returns (EpochArray, labeled?)."""
    rate = checkpoint_rate(ck)
    kind = DatasetKind(args.dataset or "generic")
    config = DatasetConfig(dataset_kind=kind, channel=args.channel, sample_rate=rate)
    path = Path(args.recording)
    if labeled:
        try:
            rec = read_recording(path, config, args.annotations)
        except MissingAnnotations:
            if args.annotations:
                raise
            labeled = False
    if not labeled:
        rec = read_recording(path, config, labeled=False)
    if not args.resample:
        _check_rate(rate, rec.native_rate, f"recording {path.name}")
    if labeled:
        epochs = extract_epochs(rec, config)
        if not epochs:
            raise DataError(f"{path}: no scored epochs")
        return EpochArray.from_epochs(epochs, rec.recording_id, rate), True
    n = config.epoch_samples
    count = len(rec.signal) // n
    if count == 0:
        raise DataError(f"{path}: shorter than one epoch")
    samples = rec.signal[: count * n].reshape(count, n)
    arr = EpochArray(samples, np.zeros(count, dtype=np.uint8), np.arange(count),
                     rec.subject_id, rec.recording_id, rate)
    return arr, False


def _predict(ck: Checkpoint, arr: EpochArray, pad: str):
    model = ck.build_model()
    data = SequenceSet([arr], ck.model_spec["seq_len"], pad)
    prob = predict_proba(model, data)
    positions = arr.positions[data.index[:, -1]]
    return data, prob, prob.argmax(axis=1), positions


def _write_series(path, positions, predicted, prob, expert=None):
    with open(path, "w") as f:
        cols = ["epoch", "predicted"] + (["expert"] if expert is not None else []) + [f"p_{n}" for n in STAGE_NAMES]
        f.write("\t".join(cols) + "\n")
        for i, (pos, p) in enumerate(zip(positions, predicted)):
            cells = [str(int(pos)), STAGE_NAMES[p]]
            if expert is not None:
                cells.append(STAGE_NAMES[int(expert[i])])
            cells += [f"{v:.4f}" for v in prob[i]]
            f.write("\t".join(cells) + "\n")


def cmd_predict(args) -> int:
    run_dir = _run_dir(args)
    _start_run(args, run_dir, None, dataset_paths=[args.recording], hashed=[args.recording, args.checkpoint])
    ck = Checkpoint.load(args.checkpoint)
    arr, _ = _night(args, ck, labeled=False)
    _, prob, pred, positions = _predict(ck, arr, args.pad)
    _write_series(run_dir / "stages.tsv", positions, pred, prob)
    print(f"{len(pred)} epochs scored -> {run_dir / 'stages.tsv'}")
    return EXIT_OK


def cmd_hypnogram(args) -> int:
    run_dir = _run_dir(args)
    _start_run(args, run_dir, None, dataset_paths=[args.recording], hashed=[args.recording, args.checkpoint])
    ck = Checkpoint.load(args.checkpoint)
    if args.seq_len and args.seq_len != [ck.model_spec["seq_len"]]:
        raise UsageError(
            f"checkpoint was trained with L={ck.model_spec['seq_len']}, requested L={args.seq_len[0]}")
    arr, labeled = _night(args, ck, labeled=not args.no_labels)
    data, prob, pred, positions = _predict(ck, arr, args.pad)
    expert = data.labels if labeled else None
    _write_series(run_dir / "stages.tsv", positions, pred, prob, expert)
    figure = run_dir / f"hypnogram.{args.format}"
    plots.plot_hypnogram(figure, pred, expert, title=arr.recording_id)
    print(f"hypnogram: {figure}")
    if labeled:
        rep = compute_metrics(ConfusionMatrix.from_labels(pred, expert), warn=False)
        print(f"agreement: {rep.accuracy:.4f} over {len(pred)} epochs (kappa {rep.kappa:.3f})")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [report.load_report(p if not Path(p).is_dir() else _find_report(Path(p)))
               for p in args.reports]
    if len(reports) == 1 and not args.summary:
        print(report.render(reports[0]), end="")
    else:
        print(report.overall_table(reports))
    return EXIT_OK


def _find_report(run_dir: Path) -> Path:
    for name in ("cv_report.json", "report.json"):
        if (run_dir / name).exists():
            return run_dir / name
    raise DataError(f"no report in {run_dir}")


def cmd_rerun(args) -> int:
    manifest = RunManifest.read(args.run)
    changed = [p for p, h in manifest.input_hashes.items() if not Path(p).exists() or _hash_input(p) != h]
    if changed:
        raise DataError(f"inputs changed since the original run: {', '.join(changed)}")
    argv = list(manifest.argv)
    new_out = args.out or manifest.output_dir.rstrip("/") + "-rerun"
    if "--out" in argv:
        argv[argv.index("--out") + 1] = new_out
    else:
        argv += ["--out", new_out]
    return main(argv)


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iitnet", description="Single-channel EEG sleep staging with sub-epoch context.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", help="run directory")
        sp.add_argument("--config", action="append", help="JSON config file (repeatable, later wins)")
        if seed:
            sp.add_argument("--seed", type=int)

    kinds = [k.value for k in DatasetKind]

    sp = sub.add_parser("ingest", help="parse a dataset directory into the epoch cache")
    sp.add_argument("dataset_dir")
    sp.add_argument("--dataset", choices=kinds)
    sp.add_argument("--channel")
    sp.add_argument("--sample-rate", type=float)
    sp.add_argument("--cache-dir", help=f"cache location (default: ${cache.CACHE_ENV}/<dataset>-<hash>)")
    sp.add_argument("--skip-bad", action="store_true", help="skip unreadable recordings instead of aborting")
    sp.add_argument("--force", action="store_true", help="re-parse even when the cache is current")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synth", help="write a synthetic dataset in cache format")
    sp.add_argument("--subjects", type=int, default=8)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--sample-rate", type=float, default=100.0)
    sp.add_argument("--noise", type=float, default=0.3)
    sp.add_argument("--labels", choices=["markov", "iid"], default="markov")
    sp.add_argument("--out", required=True, help="output cache directory")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth, config=None)

    for name, helptext in (("experiment", "subject-wise cross-validation, optionally sweeping L"),
                           ("train", "train one fold and keep its checkpoint")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--data", required=True, help="cache directory from ingest/synth")
        sp.add_argument("--dataset", choices=kinds)
        sp.add_argument("--protocol", choices=kinds, help="split protocol (default: the data's kind)")
        sp.add_argument("-L", "--seq-len", type=seq_lens, help="e.g. 4, 1,4,10 or 1-10")
        sp.add_argument("--model", choices=MODEL_KINDS)
        sp.add_argument("--pad", choices=["repeat", "skip"])
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--max-passes", type=int)
        sp.add_argument("--eval-every", type=int)
        sp.add_argument("--patience", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--n-folds", type=int, help="generic protocol fold count")
        sp.add_argument("--n-val", type=int, help="generic protocol validation subjects per fold")
        sp.add_argument("--device", help="torch device for training, e.g. cpu, cuda or auto")
        if name == "experiment":
            sp.add_argument("--folds", type=id_list, help="subset of fold ids, e.g. 0,1 or 0-4")
            sp.set_defaults(func=cmd_experiment)
        else:
            sp.add_argument("--fold", type=int, default=0)
            sp.set_defaults(func=cmd_train)
        common(sp)

    sp = sub.add_parser("evaluate", help="score a checkpoint on cached data")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--subjects", help="comma-separated subject ids (default: the fold's test subjects)")
    sp.add_argument("--pad", choices=["repeat", "skip"], default="repeat")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_evaluate)

    for name, helptext in (("predict", "write a stage-per-epoch series for one recording"),
                           ("hypnogram", "plot predicted (and expert) hypnograms for one recording")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("recording")
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--dataset", choices=kinds)
        sp.add_argument("--channel")
        sp.add_argument("--pad", choices=["repeat", "skip"], default="repeat")
        sp.add_argument("--resample", action="store_true",
                        help="resample a recording whose rate differs from the checkpoint's")
        if name == "hypnogram":
            sp.add_argument("--annotations", help="annotation sidecar (default: found next to the recording)")
            sp.add_argument("--no-labels", action="store_true", help="ignore expert annotations")
            sp.add_argument("-L", "--seq-len", type=seq_lens, help="must match the checkpoint")
            sp.add_argument("--format", choices=["png", "svg", "pdf"], default="png")
            sp.set_defaults(func=cmd_hypnogram)
        else:
            sp.set_defaults(func=cmd_predict, annotations=None)
        common(sp, seed=False)

    sp = sub.add_parser("report", help="render report JSON files as tables")
    sp.add_argument("reports", nargs="+", help="report JSON files or run directories")
    sp.add_argument("--summary", action="store_true", help="one overall row per report")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("rerun", help="replay a run from its manifest")
    sp.add_argument("run", help="run directory or manifest.json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args.argv = argv
        if args.verbose:
            stream = logging.StreamHandler()
            stream.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
            log.addHandler(stream)
            _handlers.append(stream)
        return args.func(args)
    except UsageError as exc:
        print(f"iitnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, FoldFailure) as exc:
        print(f"iitnet: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except DATA_ERRORS as exc:
        print(f"iitnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        while _handlers:
            handler = _handlers.pop()
            log.removeHandler(handler)
            handler.close()


if __name__ == "__main__":
    sys.exit(main())
