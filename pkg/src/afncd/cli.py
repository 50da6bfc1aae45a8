"""Command-line entry point for reproducible classification runs.

Four subcommands: ``ingest`` parses and windows a dataset directory and
writes the windows manifest, ``crossval`` and ``fewshot`` run the
experiments, ``matrix`` computes a small labeled per-class distance
matrix for heatmap inspection.

Every run writes a JSON manifest into the output directory capturing
the effective configuration, the seed, fitted scheme parameters, the
compressor fingerprint and any clamp warnings, which together pin the
outputs bit-for-bit. All randomness flows from ``--seed``.

Exit codes: 0 success, 2 bad configuration, 3 ingestion failure,
4 computation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import (
    AnnotationError,
    BeatSeries,
    discover_records,
    load_source,
)
from .dataset import (
    DEFAULT_RR_GATE,
    DatasetError,
    MEASURES,
    extract_rr,
    segment_episodes,
    window_episodes,
    window_id,
    write_windows_manifest,
)
from .encoders import SCHEME_NAMES, EncodingError, encode, fit_scheme_params
from .evaluate import (
    DEFAULT_SHOTS,
    EvalError,
    class_block_means,
    run_crossval,
    run_fewshot,
    write_crossval_csv,
    write_fewshot_csv,
    write_predictions_csv,
)
from .ncd import (
    DistanceMatrix,
    NCDError,
    compressor_fingerprint,
    distance_matrix,
    matrix_to_csv,
    save_matrix,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_COMPUTE = 4

DATASET_DIR_ENV = "AFNCD_DATASET_DIR"


class ConfigError(Exception):
    """Invalid flag, config-file entry or flag combination."""


class IngestError(Exception):
    """Dataset directory could not be turned into beat series."""


@dataclass
class RunConfig:
    """Effective settings of one run after merging flags and config."""

    command: str
    dataset_dir: Path
    output_dir: Path
    records: tuple[str, ...] | None
    measure: str
    m_seq: int
    scheme: str
    ks: tuple[int, ...]
    dense_scan: bool
    seed: int
    threads: int
    gate: tuple[int, int]
    fit_globally: bool
    keep_predictions: bool
    shots: tuple[int, ...]
    fold_index: int
    per_class: int
    train_record: str | None
    test_record: str | None
    checksums: Path | None

    def summary(self) -> dict:
        out = {
            "command": self.command,
            "dataset_dir": str(self.dataset_dir),
            "output_dir": str(self.output_dir),
            "records": list(self.records) if self.records else None,
            "measure": self.measure,
            "m_seq": self.m_seq,
            "scheme": self.scheme,
            "ks": list(self.ks),
            "dense_scan": self.dense_scan,
            "seed": self.seed,
            "threads": self.threads,
            "gate": list(self.gate),
            "fit_globally": self.fit_globally,
        }
        if self.command == "fewshot":
            out["shots"] = list(self.shots)
            out["fold_index"] = self.fold_index
        if self.command == "matrix":
            out["per_class"] = self.per_class
            out["train_record"] = self.train_record
            out["test_record"] = self.test_record
        return out


def parse_k_spec(text: str) -> tuple[tuple[int, ...], bool]:
    """Parse the ``--k`` argument.

    Accepts a comma-separated integer list (``"51,101,501"``), the word
    ``"scan"`` for a dense odd-k search up to the training size, or
    ``"scan:lo:hi:step"`` for an explicit grid.
    """
    text = text.strip()
    if text == "scan":
        return (1,), True
    if text.startswith("scan:"):
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"k: expected scan:lo:hi:step, got {text!r}")
        try:
            lo, hi, step = (int(p) for p in parts[1:])
        except ValueError:
            raise ConfigError(f"k: non-integer scan bound in {text!r}") from None
        if lo < 1 or hi < lo or step < 1:
            raise ConfigError(f"k: bad scan range {text!r}")
        return tuple(range(lo, hi + 1, step)), False
    try:
        ks = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"k: expected integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise ConfigError(f"k: values must be positive, got {text!r}")
    return ks, False


def _parse_int_list(text: str, field: str) -> tuple[int, ...]:
    try:
        values = tuple(int(p) for p in str(text).split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{field}: expected integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise ConfigError(f"{field}: values must be positive, got {text!r}")
    return values


def _parse_gate(text: str) -> tuple[int, int]:
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ConfigError(f"gate: expected lo:hi, got {text!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"gate: non-integer bound in {text!r}") from None
    if lo < 0 or hi <= lo:
        raise ConfigError(f"gate: bad bounds {text!r}")
    return lo, hi


_DEFAULTS = {
    "dataset_dir": None,  # env var, then required
    "output_dir": "afncd-out",
    "records": None,
    "measure": "drr",
    "m_seq": 64,
    "scheme": "i16_raw",
    "k": "501",
    "seed": 0,
    "threads": "1",
    "gate": f"{DEFAULT_RR_GATE[0]}:{DEFAULT_RR_GATE[1]}",
    "fit_globally": False,
    "keep_predictions": False,
    "shots": ",".join(str(n) for n in DEFAULT_SHOTS),
    "fold_index": 0,
    "per_class": 5,
    "train_record": None,
    "test_record": None,
    "checksums": None,
}


def _merge_config(args: argparse.Namespace) -> dict:
    """Layer precedence: built-in defaults < config file < CLI flags."""
    merged = dict(_DEFAULTS)
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {args.config} is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config: top level must be a JSON object")
        unknown = set(loaded) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        merged.update(loaded)
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def build_config(args: argparse.Namespace) -> RunConfig:
    merged = _merge_config(args)
    dataset_dir = merged["dataset_dir"] or os.environ.get(DATASET_DIR_ENV)
    if not dataset_dir:
        raise ConfigError(
            f"dataset_dir: pass --dataset-dir or set {DATASET_DIR_ENV}"
        )
    measure = str(merged["measure"]).lower()
    if measure not in MEASURES:
        raise ConfigError(
            f"measure: {merged['measure']!r} is not one of {list(MEASURES)}"
        )
    scheme = str(merged["scheme"])
    if scheme not in SCHEME_NAMES:
        raise ConfigError(
            f"scheme: {scheme!r} is not one of {list(SCHEME_NAMES)}"
        )
    try:
        m_seq = int(merged["m_seq"])
        seed = int(merged["seed"])
        fold_index = int(merged["fold_index"])
        per_class = int(merged["per_class"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integer field: {exc}")
    if m_seq < 1:
        raise ConfigError(f"m_seq: must be positive, got {m_seq}")
    if per_class < 1:
        raise ConfigError(f"per_class: must be positive, got {per_class}")
    threads_text = str(merged["threads"])
    if threads_text == "auto":
        threads = os.cpu_count() or 1
    else:
        try:
            threads = int(threads_text)
        except ValueError:
            raise ConfigError(
                f"threads: expected an integer or 'auto', got {threads_text!r}"
            ) from None
        if threads < 1:
            raise ConfigError(f"threads: must be positive, got {threads}")
    ks, dense_scan = parse_k_spec(str(merged["k"]))
    records = merged["records"]
    if isinstance(records, str):
        records = tuple(r.strip() for r in records.split(",") if r.strip())
    elif records is not None:
        records = tuple(str(r) for r in records)
    return RunConfig(
        command=args.command,
        dataset_dir=Path(dataset_dir),
        output_dir=Path(merged["output_dir"]),
        records=records,
        measure=measure,
        m_seq=m_seq,
        scheme=scheme,
        ks=ks,
        dense_scan=dense_scan,
        seed=seed,
        threads=threads,
        gate=_parse_gate(merged["gate"]),
        fit_globally=bool(merged["fit_globally"]),
        keep_predictions=bool(merged["keep_predictions"]),
        shots=_parse_int_list(merged["shots"], "shots"),
        fold_index=fold_index,
        per_class=per_class,
        train_record=merged["train_record"],
        test_record=merged["test_record"],
        checksums=Path(merged["checksums"]) if merged["checksums"] else None,
    )


def verify_checksums(dataset_dir: Path, checksum_file: Path) -> int:
    """Check ``sha256  filename`` lines against the dataset directory."""
    try:
        lines = checksum_file.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read checksum list: {exc}")
    checked = 0
    bad: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise IngestError(
                f"{checksum_file}:{lineno}: expected '<sha256> <file>'"
            )
        digest, name = parts
        target = dataset_dir / name
        if not target.exists():
            bad.append(f"{name}: missing")
            continue
        actual = hashlib.sha256(target.read_bytes()).hexdigest()
        if actual != digest.lower():
            bad.append(f"{name}: checksum mismatch")
        checked += 1
    if bad:
        raise IngestError(
            "checksum verification failed: " + "; ".join(bad)
        )
    return checked


def _load_series(config: RunConfig) -> list[BeatSeries]:
    if config.checksums is not None:
        n = verify_checksums(config.dataset_dir, config.checksums)
        print(f"verified {n} file checksums")
    if not config.dataset_dir.is_dir():
        raise IngestError(f"dataset directory not found: {config.dataset_dir}")
    sources = discover_records(config.dataset_dir)
    if config.records is not None:
        found = {s.record_id for s in sources}
        missing = set(config.records) - found
        if missing:
            raise IngestError(f"records not in dataset: {sorted(missing)}")
        sources = [s for s in sources if s.record_id in set(config.records)]
    series: list[BeatSeries] = []
    errors: list[str] = []
    for source in sources:
        try:
            series.append(load_source(source))
        except (AnnotationError, OSError) as exc:
            errors.append(f"{source.record_id}: {exc}")
    for line in errors:
        print(f"record failed: {line}", file=sys.stderr)
    if not series:
        raise IngestError(
            f"no loadable records in {config.dataset_dir}"
            + (f" ({len(errors)} failed)" if errors else "")
        )
    return series


def _window_series(config: RunConfig, series: list[BeatSeries]):
    windows = []
    for s in series:
        intervals = extract_rr(s, gate=config.gate)
        episodes = segment_episodes(intervals, s.record_id)
        windows.extend(window_episodes(episodes, config.m_seq, config.measure))
    if not windows:
        raise IngestError(
            f"no windows of length {config.m_seq} could be cut; "
            f"records may be too short"
        )
    return windows


def _write_manifest(config: RunConfig, name: str, payload: dict) -> Path:
    path = config.output_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {
        "version": __version__,
        "fingerprint": compressor_fingerprint(),
        "config": config.summary(),
    }
    body.update(payload)
    path.write_text(
        json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def cmd_ingest(config: RunConfig) -> int:
    series = _load_series(config)
    total_beats = 0
    rhythm_counts: dict[str, int] = {}
    episode_count = 0
    windows = []
    for s in series:
        total_beats += len(s.beat_times)
        intervals = extract_rr(s, gate=config.gate)
        episodes = segment_episodes(intervals, s.record_id)
        episode_count += len(episodes)
        for ep in episodes:
            rhythm_counts[ep.rhythm_label] = rhythm_counts.get(
                ep.rhythm_label, 0
            ) + len(ep.intervals)
        windows.extend(window_episodes(episodes, config.m_seq, config.measure))
    config.output_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = (
        config.output_dir / f"windows-{config.measure}-m{config.m_seq}.csv"
    )
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        write_windows_manifest(windows, fh)
    af = sum(1 for w in windows if w.is_af)
    print(f"records: {len(series)}")
    print(f"beats: {total_beats}")
    print(f"episodes: {episode_count}")
    for rhythm in sorted(rhythm_counts):
        print(f"intervals {rhythm}: {rhythm_counts[rhythm]}")
    print(
        f"windows ({config.measure}, m_seq={config.m_seq}): {len(windows)} "
        f"({af} AF, {len(windows) - af} non-AF)"
    )
    print(f"windows manifest: {manifest_path}")
    _write_manifest(
        config,
        "ingest-manifest.json",
        {
            "records": [s.record_id for s in series],
            "beats": total_beats,
            "episodes": episode_count,
            "interval_counts": rhythm_counts,
            "windows": len(windows),
            "windows_manifest": str(manifest_path),
        },
    )
    return EXIT_OK


def cmd_crossval(config: RunConfig) -> int:
    series = _load_series(config)
    windows = _window_series(config, series)
    cache_dir = config.output_dir / "cache"
    report = run_crossval(
        windows,
        config.scheme,
        ks=config.ks,
        seed=config.seed,
        scan=config.dense_scan,
        fit_globally=config.fit_globally,
        workers=config.threads,
        cache_dir=cache_dir,
        sampling_rate=series[0].sampling_rate,
        keep_predictions=config.keep_predictions,
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = config.output_dir / "crossval.csv"
    write_crossval_csv(csv_path, report)
    if config.keep_predictions:
        write_predictions_csv(config.output_dir / "predictions.csv", report)
    _write_manifest(
        config,
        "crossval-manifest.json",
        {
            "records": sorted({w.record_id for w in windows}),
            "folds": [
                {
                    "fold_index": o.fold.fold_index,
                    "train_records": list(o.fold.train_records),
                    "test_records": list(o.fold.test_records),
                    "scheme_params": o.scheme.params(),
                    "n_train": o.n_train,
                    "n_test": o.n_test,
                    "warnings": list(o.notes),
                }
                for o in report.folds
            ],
            "failures": [list(f) for f in report.failures],
            "complete": report.complete,
            "best_k": report.best_k,
            "best_avg_macro_f1": report.best_avg_macro_f1,
            "avg_by_k": {
                str(k): {
                    "accuracy": a.accuracy,
                    "macro_f1": a.macro_f1,
                    "sensitivity": a.sensitivity,
                    "specificity": a.specificity,
                }
                for k, a in report.avg_by_k.items()
            },
        },
    )
    best = report.avg_by_k[report.best_k]
    print(f"windows: {len(windows)}   folds: {len(report.folds)}")
    print(
        f"best k={report.best_k}: macro_f1={best.macro_f1:.4f} "
        f"sens={best.sensitivity:.4f} spec={best.specificity:.4f}"
    )
    print(f"report: {csv_path}")
    if not report.complete:
        print(f"incomplete: {len(report.failures)} fold(s) failed", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


def cmd_fewshot(config: RunConfig) -> int:
    series = _load_series(config)
    windows = _window_series(config, series)
    cache_dir = config.output_dir / "cache"
    report = run_fewshot(
        windows,
        config.scheme,
        shots=config.shots,
        seed=config.seed,
        fold_index=config.fold_index,
        fit_globally=config.fit_globally,
        workers=config.threads,
        cache_dir=cache_dir,
        sampling_rate=series[0].sampling_rate,
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = config.output_dir / "fewshot.csv"
    write_fewshot_csv(csv_path, report)
    _write_manifest(
        config,
        "fewshot-manifest.json",
        {
            "fold_index": report.fold.fold_index,
            "train_records": list(report.fold.train_records),
            "test_records": list(report.fold.test_records),
            "n_test": report.n_test,
            "subfold_counts": {str(n): c for n, c in report.subfold_counts.items()},
            "avg_accuracy": {str(n): v for n, v in report.avg_accuracy.items()},
            "avg_macro_f1": {str(n): v for n, v in report.avg_macro_f1.items()},
            "faulty_counts": {str(n): c for n, c in report.faulty_counts.items()},
        },
    )
    for n in report.shots:
        print(
            f"n={n}: subfolds={report.subfold_counts[n]} "
            f"k={next(r.k for r in report.rows if r.n == n)} "
            f"avg_macro_f1={report.avg_macro_f1[n]:.4f} "
            f"faulty={report.faulty_counts[n]}"
        )
    print(f"report: {csv_path}")
    return EXIT_OK


def cmd_matrix(config: RunConfig) -> int:
    if not config.train_record or not config.test_record:
        raise ConfigError("matrix: --train-record and --test-record are required")
    config = RunConfig(
        **{
            **config.__dict__,
            "records": (config.train_record, config.test_record),
        }
    )
    series = {s.record_id: s for s in _load_series(config)}
    rng = np.random.default_rng(config.seed)

    def sample(record_id: str):
        s = series[record_id]
        intervals = extract_rr(s, gate=config.gate)
        episodes = segment_episodes(intervals, record_id)
        windows = window_episodes(episodes, config.m_seq, config.measure)
        af = [w for w in windows if w.is_af]
        rest = [w for w in windows if not w.is_af]
        if len(af) < config.per_class or len(rest) < config.per_class:
            raise IngestError(
                f"{record_id}: needs {config.per_class} windows per class, "
                f"has {len(af)} AF and {len(rest)} non-AF"
            )
        picked_af = [af[i] for i in rng.choice(len(af), config.per_class, replace=False)]
        picked_rest = [
            rest[i] for i in rng.choice(len(rest), config.per_class, replace=False)
        ]
        return picked_af + picked_rest

    train_w = sample(config.train_record)
    test_w = sample(config.test_record)
    scheme = fit_scheme_params(
        np.concatenate([np.asarray(w.values) for w in train_w]),
        config.scheme,
        series[config.train_record].sampling_rate,
    )
    test_blobs = [encode(w.values, scheme) for w in test_w]
    train_blobs = [encode(w.values, scheme) for w in train_w]
    values = distance_matrix(test_blobs, train_blobs, workers=config.threads)
    matrix = DistanceMatrix(
        values,
        tuple(window_id(w) for w in test_w),
        tuple(window_id(w) for w in train_w),
        scheme.name,
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    bin_path = config.output_dir / "matrix.ncdm"
    csv_path = config.output_dir / "matrix.csv"
    save_matrix(bin_path, matrix)
    matrix_to_csv(csv_path, matrix)
    means = class_block_means(
        values,
        [w.class_label for w in test_w],
        [w.class_label for w in train_w],
    )
    for (r, c), v in sorted(means.items()):
        print(f"mean NCD {r} x {c}: {v:.4f}")
    _write_manifest(
        config,
        "matrix-manifest.json",
        {
            "scheme_params": scheme.params(),
            "row_ids": list(matrix.row_ids),
            "col_ids": list(matrix.col_ids),
            "block_means": {f"{r}|{c}": v for (r, c), v in means.items()},
            "matrix_file": str(bin_path),
            "matrix_csv": str(csv_path),
        },
    )
    print(f"matrix: {bin_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afncd",
        description=(
            "Atrial fibrillation detection from beat intervals with gzip "
            "compression distances"
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--dataset-dir",
        dest="dataset_dir",
        help=f"record directory (default: ${DATASET_DIR_ENV})",
    )
    common.add_argument("--output-dir", dest="output_dir", help="where reports go")
    common.add_argument(
        "--records", help="comma-separated record ids (default: all found)"
    )
    common.add_argument("--measure", choices=MEASURES, help="rr or drr")
    common.add_argument("--mseq", dest="m_seq", type=int, help="window length")
    common.add_argument("--scheme", choices=SCHEME_NAMES, help="byte encoding")
    common.add_argument("--seed", type=int, help="root of all randomness")
    common.add_argument(
        "--threads", help="worker processes for distance matrices, or 'auto'"
    )
    common.add_argument("--gate", help="valid RR range in samples, lo:hi")
    common.add_argument(
        "--fit-globally",
        dest="fit_globally",
        action="store_const",
        const=True,
        help="fit scheme params on all windows instead of the training side",
    )
    common.add_argument("--config", help="JSON file with the same keys as the flags")
    common.add_argument(
        "--checksums",
        help="sha256 list to verify dataset files against before loading",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(
        "ingest",
        parents=[common],
        help="parse records, cut windows, write the windows manifest",
    )
    p_cv = sub.add_parser(
        "crossval", parents=[common], help="per-patient fivefold cross-validation"
    )
    p_cv.add_argument(
        "--k", help="k values: '51,101,501', 'scan' or 'scan:lo:hi:step'"
    )
    p_cv.add_argument(
        "--keep-predictions",
        dest="keep_predictions",
        action="store_const",
        const=True,
        help="also write per-window predictions.csv",
    )
    p_fs = sub.add_parser(
        "fewshot", parents=[common], help="n-per-class subfold experiment"
    )
    p_fs.add_argument("--shots", help="comma-separated n ladder")
    p_fs.add_argument(
        "--fold", dest="fold_index", type=int, help="which fold to use (0-based)"
    )
    p_m = sub.add_parser(
        "matrix", parents=[common], help="per-class subset distance matrix"
    )
    p_m.add_argument("--per-class", dest="per_class", type=int)
    p_m.add_argument(
        "--train-record", dest="train_record", help="record sampled for columns"
    )
    p_m.add_argument(
        "--test-record", dest="test_record", help="record sampled for rows"
    )
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "crossval": cmd_crossval,
    "fewshot": cmd_fewshot,
    "matrix": cmd_matrix,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = build_config(args)
        return _COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, AnnotationError, DatasetError) as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except (EncodingError, NCDError, EvalError) as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
