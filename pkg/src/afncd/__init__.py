"""Atrial fibrillation detection from beat intervals, the compression way.

The pipeline: parse beat/rhythm annotations into per-record series, cut
rhythm-pure RR or differenced-RR windows, serialize each window under a
pinned byte encoding, measure pairwise gzip compression distances and
classify by k-nearest-neighbour vote under per-patient cross-validation.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .annotations import (
    Annotation,
    AnnotationError,
    AnnotationParseError,
    BeatSeries,
    discover_records,
    encode_annotation_stream,
    load_csv_record,
    load_dataset,
    load_record,
    parse_annotation_stream,
    write_csv_record,
)
from .dataset import (
    DatasetError,
    IntervalWindow,
    LABEL_AF,
    LABEL_NON_AF,
    LabeledInterval,
    RhythmEpisode,
    extract_rr,
    read_windows_manifest,
    segment_episodes,
    window_episodes,
    window_id,
    windows_from_series,
    write_windows_manifest,
)
from .encoders import (
    DegenerateRangeError,
    EncodingError,
    EncodingScheme,
    OverflowEncodingError,
    SCHEME_NAMES,
    decode,
    encode,
    fit_scheme_params,
)
from .evaluate import (
    CrossvalReport,
    EvalError,
    FewshotReport,
    FoldSpec,
    Metrics,
    class_block_means,
    compute_metrics,
    fewshot_k,
    make_fivefold,
    run_crossval,
    run_fewshot,
    write_crossval_csv,
    write_fewshot_csv,
    write_predictions_csv,
)
from .knn import SweepResult, classify, classify_row, sweep_k
from .ncd import (
    DistanceMatrix,
    LengthCache,
    NCDError,
    compressed_length,
    compressor_fingerprint,
    distance_matrix,
    gzip_bytes,
    load_matrix,
    matrix_to_csv,
    ncd,
    save_matrix,
)
from .simulate import (
    EpisodeSpec,
    default_schedule,
    simulate_dataset,
    simulate_series,
)

__all__ = [
    "__version__",
    "Annotation",
    "AnnotationError",
    "AnnotationParseError",
    "BeatSeries",
    "CrossvalReport",
    "DatasetError",
    "DegenerateRangeError",
    "DistanceMatrix",
    "EncodingError",
    "EncodingScheme",
    "EpisodeSpec",
    "EvalError",
    "FewshotReport",
    "FoldSpec",
    "IntervalWindow",
    "LABEL_AF",
    "LABEL_NON_AF",
    "LabeledInterval",
    "LengthCache",
    "Metrics",
    "NCDError",
    "OverflowEncodingError",
    "RhythmEpisode",
    "SCHEME_NAMES",
    "SweepResult",
    "class_block_means",
    "classify",
    "classify_row",
    "compressed_length",
    "compressor_fingerprint",
    "compute_metrics",
    "decode",
    "default_schedule",
    "discover_records",
    "distance_matrix",
    "encode",
    "encode_annotation_stream",
    "extract_rr",
    "fewshot_k",
    "fit_scheme_params",
    "gzip_bytes",
    "load_csv_record",
    "load_dataset",
    "load_matrix",
    "load_record",
    "make_fivefold",
    "matrix_to_csv",
    "ncd",
    "parse_annotation_stream",
    "read_windows_manifest",
    "run_crossval",
    "run_fewshot",
    "save_matrix",
    "segment_episodes",
    "simulate_dataset",
    "simulate_series",
    "sweep_k",
    "window_episodes",
    "window_id",
    "windows_from_series",
    "write_crossval_csv",
    "write_csv_record",
    "write_fewshot_csv",
    "write_predictions_csv",
    "write_windows_manifest",
]
