"""File formats and the synthetic dataset generator.

Feature files: ASCII CSV, LF endings, header ``frame,valid,f0,...,f{d-1}``,
one row per frame with a 0/1 validity flag. Annotation files: header
``frame,value`` with values in [-1, 1]. Floats are written with Python's
shortest round-trip repr, so write-then-load is bit-exact. A JSON manifest
ties subject ids to files and splits.

The generator stands in for the access-restricted corpus: per subject and
dimension it draws a band-limited random signal (a seeded sum of
sinusoids squashed by tanh), delays the gold copy by the annotation lag,
and emits per-modality features as a fixed linear projection of the
latent signals plus noise. The PRNG is numpy's default_rng (PCG64), so a
seed pins every byte of the output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ValidationError
from .timeseries import (
    DEFAULT_FRAME_PERIOD_S,
    AffectDimension,
    AffectTrace,
    DatasetSplit,
    FeatureStream,
    FrameMask,
    SubjectRecord,
)

MANIFEST_FORMAT = "affectreg-manifest"
MANIFEST_VERSION = 1

SPLITS = ("train", "dev")

# sinusoid count behind each latent signal
_N_COMPONENTS = 8


def _fmt(value: float) -> str:
    return repr(float(value))


def _parse_float(cell: str, path, line_no: int, what: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataFormatError(
            f"{path}:{line_no}: non-numeric {what} {cell!r}"
        ) from None


def _read_lines(path) -> list[str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not ASCII: {exc}") from exc
    return text.splitlines()


def write_features(stream: FeatureStream, path) -> None:
    path = Path(path)
    header = "frame,valid," + ",".join(f"f{i}" for i in range(stream.dim))
    lines = [header]
    valid = stream.mask.valid
    for i, row in enumerate(stream.frames):
        cells = ",".join(_fmt(v) for v in row)
        lines.append(f"{i},{int(valid[i])},{cells}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def load_features(
    path, modality: str | None = None, frame_period_s: float = DEFAULT_FRAME_PERIOD_S
) -> FeatureStream:
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        raise DataFormatError(f"{path}:1: missing header")
    header = lines[0].split(",")
    if len(header) < 3 or header[0] != "frame" or header[1] != "valid":
        raise DataFormatError(
            f"{path}:1: bad header {lines[0]!r}; expected frame,valid,f0,..."
        )
    dim = len(header) - 2
    expected = ["frame", "valid"] + [f"f{i}" for i in range(dim)]
    if header != expected:
        raise DataFormatError(
            f"{path}:1: bad header {lines[0]!r}; expected {','.join(expected)}"
        )
    rows = []
    valid = []
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != dim + 2:
            raise DataFormatError(
                f"{path}:{line_no}: expected {dim + 2} cells, got {len(cells)}"
            )
        idx = line_no - 2
        if cells[0] != str(idx):
            raise DataFormatError(
                f"{path}:{line_no}: frame index {cells[0]!r}, expected {idx}"
            )
        if cells[1] not in ("0", "1"):
            raise DataFormatError(
                f"{path}:{line_no}: valid flag must be 0 or 1, got {cells[1]!r}"
            )
        is_valid = cells[1] == "1"
        row = [_parse_float(c, path, line_no, "feature") for c in cells[2:]]
        if is_valid and not all(math.isfinite(v) for v in row):
            raise DataFormatError(
                f"{path}:{line_no}: non-finite feature on a valid frame"
            )
        rows.append(row)
        valid.append(is_valid)
    if not rows:
        raise DataFormatError(f"{path}:1: no data rows")
    return FeatureStream(
        modality=modality if modality is not None else path.stem,
        frames=np.asarray(rows, dtype=np.float64),
        mask=FrameMask(np.asarray(valid, dtype=bool)),
        frame_period_s=frame_period_s,
    )


def write_value_series(values, path) -> None:
    """frame,value CSV without a range constraint (predictions)."""
    path = Path(path)
    lines = ["frame,value"]
    lines.extend(f"{i},{_fmt(v)}" for i, v in enumerate(values))
    path.write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def load_value_series(path) -> np.ndarray:
    """Parse a frame,value CSV; values may lie outside [-1, 1]."""
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        raise DataFormatError(f"{path}:1: missing header")
    if lines[0] != "frame,value":
        raise DataFormatError(
            f"{path}:1: bad header {lines[0]!r}; expected frame,value"
        )
    values = []
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 2:
            raise DataFormatError(
                f"{path}:{line_no}: expected 2 cells, got {len(cells)}"
            )
        idx = line_no - 2
        if cells[0] != str(idx):
            raise DataFormatError(
                f"{path}:{line_no}: frame index {cells[0]!r}, expected {idx}"
            )
        values.append(_parse_float(cells[1], path, line_no, "value"))
    if not values:
        raise DataFormatError(f"{path}:1: no data rows")
    return np.asarray(values, dtype=np.float64)


def write_annotations(trace: AffectTrace, path) -> None:
    write_value_series(trace.values, path)


def load_annotations(
    path,
    dimension: AffectDimension,
    frame_period_s: float = DEFAULT_FRAME_PERIOD_S,
    subject_id: str = "",
) -> AffectTrace:
    path = Path(path)
    values = load_value_series(path)
    bad = np.nonzero(~((values >= -1.0) & (values <= 1.0)))[0]
    if bad.size:
        idx = int(bad[0])
        raise DataFormatError(
            f"{path}:{idx + 2}: frame {idx} value {values[idx]} outside [-1, 1]"
        )
    return AffectTrace(
        dimension=dimension,
        values=values,
        frame_period_s=frame_period_s,
        subject_id=subject_id,
    )


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    split: str
    features: dict[str, str]
    annotations: dict[str, str]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(
                f"subject {self.subject_id!r}: split must be one of {SPLITS}, "
                f"got {self.split!r}"
            )
        if not self.features:
            raise ValidationError(f"subject {self.subject_id!r} lists no features")
        if not self.annotations:
            raise ValidationError(f"subject {self.subject_id!r} lists no annotations")


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    frame_period_s: float
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "entries", tuple(self.entries))
        by_split = {s: [e for e in self.entries if e.split == s] for s in SPLITS}
        for split, members in by_split.items():
            if not members:
                raise ValidationError(f"manifest has an empty {split} split")
        ids = [e.subject_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("manifest has duplicate subject ids")

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(self.entries[0].features)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "frame_period_s": manifest.frame_period_s,
        "subjects": [
            {
                "subject_id": e.subject_id,
                "split": e.split,
                "features": dict(e.features),
                "annotations": dict(e.annotations),
            }
            for e in manifest.entries
        ],
    }


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(
        json.dumps(manifest_to_dict(manifest), indent=1, sort_keys=True) + "\n",
        encoding="ascii",
        newline="\n",
    )


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="ascii"))
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: unreadable manifest: {exc}") from exc
    if not isinstance(record, dict) or record.get("format") != MANIFEST_FORMAT:
        raise DataFormatError(f"{path}: not a manifest (format field missing or wrong)")
    if record.get("version") != MANIFEST_VERSION:
        raise DataFormatError(
            f"{path}: unsupported manifest version {record.get('version')!r}"
        )
    root = path.parent
    try:
        entries = tuple(
            ManifestEntry(
                subject_id=s["subject_id"],
                split=s["split"],
                features=dict(s["features"]),
                annotations=dict(s["annotations"]),
            )
            for s in record["subjects"]
        )
        manifest = DatasetManifest(
            root=root,
            frame_period_s=float(record["frame_period_s"]),
            entries=entries,
        )
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: malformed manifest: {exc}") from exc
    except ValidationError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    for entry in manifest.entries:
        for rel in list(entry.features.values()) + list(entry.annotations.values()):
            if not (root / rel).is_file():
                raise DataFormatError(
                    f"{path}: subject {entry.subject_id!r} references missing file {rel}"
                )
    return manifest


def load_dataset(manifest: DatasetManifest) -> DatasetSplit:
    """Load every file the manifest references into one split pair."""
    records = {"train": [], "dev": []}
    for entry in manifest.entries:
        features = {
            name: load_features(
                manifest.root / rel, modality=name, frame_period_s=manifest.frame_period_s
            )
            for name, rel in entry.features.items()
        }
        gold = {}
        for dim_name, rel in entry.annotations.items():
            dim = AffectDimension.parse(dim_name)
            gold[dim] = load_annotations(
                manifest.root / rel,
                dim,
                frame_period_s=manifest.frame_period_s,
                subject_id=entry.subject_id,
            )
        records[entry.split].append(
            SubjectRecord(subject_id=entry.subject_id, features=features, gold=gold)
        )
    return DatasetSplit(train=tuple(records["train"]), dev=tuple(records["dev"]))


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    dim: int
    noise_sigma: float = 0.0
    invalid_fraction: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError(f"modality {self.name!r}: dim must be >= 1")
        if not (self.noise_sigma >= 0 and np.isfinite(self.noise_sigma)):
            raise ValidationError(f"modality {self.name!r}: noise_sigma must be >= 0")
        if not (0.0 <= self.invalid_fraction < 1.0):
            raise ValidationError(
                f"modality {self.name!r}: invalid_fraction must be in [0, 1)"
            )


@dataclass(frozen=True)
class SynthSpec:
    n_subjects_train: int = 3
    n_subjects_dev: int = 2
    frames_per_subject: int = 500
    latent_bandwidth_hz: float = 0.5
    modalities: tuple[ModalitySpec, ...] = (ModalitySpec("audio", 4),)
    annotation_lag_frames: int = 0
    frame_period_s: float = DEFAULT_FRAME_PERIOD_S
    dimensions: tuple[AffectDimension, ...] = (
        AffectDimension.AROUSAL,
        AffectDimension.VALENCE,
    )
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        if self.n_subjects_train < 1 or self.n_subjects_dev < 1:
            raise ValidationError("subject counts must be positive")
        if self.frames_per_subject < 2:
            raise ValidationError("frames_per_subject must be >= 2")
        if not (self.latent_bandwidth_hz > 0 and np.isfinite(self.latent_bandwidth_hz)):
            raise ValidationError("latent_bandwidth_hz must be > 0")
        if not self.modalities:
            raise ValidationError("at least one modality required")
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate modality names: {names}")
        if not (0 <= self.annotation_lag_frames < self.frames_per_subject):
            raise ValidationError(
                "annotation_lag_frames must be in [0, frames_per_subject)"
            )
        if not (self.frame_period_s > 0 and np.isfinite(self.frame_period_s)):
            raise ValidationError("frame_period_s must be > 0")
        if not self.dimensions or len(set(self.dimensions)) != len(self.dimensions):
            raise ValidationError("dimensions must be non-empty and unique")


def synth_spec_to_dict(spec: SynthSpec) -> dict:
    return {
        "n_subjects_train": spec.n_subjects_train,
        "n_subjects_dev": spec.n_subjects_dev,
        "frames_per_subject": spec.frames_per_subject,
        "latent_bandwidth_hz": spec.latent_bandwidth_hz,
        "modalities": [
            {
                "name": m.name,
                "dim": m.dim,
                "noise_sigma": m.noise_sigma,
                "invalid_fraction": m.invalid_fraction,
            }
            for m in spec.modalities
        ],
        "annotation_lag_frames": spec.annotation_lag_frames,
        "frame_period_s": spec.frame_period_s,
        "dimensions": [d.value for d in spec.dimensions],
        "seed": spec.seed,
    }


def synth_spec_from_dict(record: dict, default_seed: int = 0) -> SynthSpec:
    try:
        return SynthSpec(
            n_subjects_train=int(record["n_subjects_train"]),
            n_subjects_dev=int(record["n_subjects_dev"]),
            frames_per_subject=int(record["frames_per_subject"]),
            latent_bandwidth_hz=float(record["latent_bandwidth_hz"]),
            modalities=tuple(
                ModalitySpec(
                    name=m["name"],
                    dim=int(m["dim"]),
                    noise_sigma=float(m.get("noise_sigma", 0.0)),
                    invalid_fraction=float(m.get("invalid_fraction", 0.0)),
                )
                for m in record["modalities"]
            ),
            annotation_lag_frames=int(record.get("annotation_lag_frames", 0)),
            frame_period_s=float(record.get("frame_period_s", DEFAULT_FRAME_PERIOD_S)),
            dimensions=tuple(
                AffectDimension.parse(d)
                for d in record.get("dimensions", ["arousal", "valence"])
            ),
            seed=int(record.get("seed", default_seed)),
        )
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"malformed synth spec: {exc}") from exc


def generate_synthetic(spec: SynthSpec, return_latents: bool = False):
    """Build an in-memory dataset from the spec's seed.

    Draw order is fixed (projections, then per subject: latents per
    dimension, then per modality noise, mask, and garbage rows), so a
    seed pins the entire dataset. With return_latents=True, a second
    value maps (subject_id, dimension) to the un-delayed latent signal
    sampled on the feature timeline.
    """
    rng = np.random.default_rng(spec.seed)
    n_dims = len(spec.dimensions)
    projections = [
        (rng.normal(size=(m.dim, n_dims)), rng.normal(scale=0.5, size=m.dim))
        for m in spec.modalities
    ]
    n = spec.frames_per_subject
    t_feat = np.arange(n) * spec.frame_period_s
    t_gold = (np.arange(n) - spec.annotation_lag_frames) * spec.frame_period_s

    latents_out: dict[tuple[str, AffectDimension], np.ndarray] = {}
    split_records: dict[str, list[SubjectRecord]] = {"train": [], "dev": []}
    counts = {"train": spec.n_subjects_train, "dev": spec.n_subjects_dev}
    for split in SPLITS:
        for k in range(counts[split]):
            subject_id = f"{split}{k + 1:02d}"
            latent_cols = []
            gold = {}
            for dim in spec.dimensions:
                amps = rng.uniform(0.3, 1.0, _N_COMPONENTS)
                freqs = rng.uniform(0.02, spec.latent_bandwidth_hz, _N_COMPONENTS)
                phases = rng.uniform(0.0, 2.0 * np.pi, _N_COMPONENTS)

                def signal(ts):
                    phase = 2.0 * np.pi * freqs[:, None] * ts[None, :] + phases[:, None]
                    return np.tanh(0.5 * np.sum(amps[:, None] * np.sin(phase), axis=0))

                latent = signal(t_feat)
                latent_cols.append(latent)
                latents_out[(subject_id, dim)] = latent
                gold[dim] = AffectTrace(
                    dimension=dim,
                    values=signal(t_gold),
                    frame_period_s=spec.frame_period_s,
                    subject_id=subject_id,
                ).check_gold_range()
            L = np.column_stack(latent_cols)
            features = {}
            for m, (W, offset) in zip(spec.modalities, projections):
                X = L @ W.T + offset
                X = X + m.noise_sigma * rng.standard_normal(X.shape)
                valid = rng.random(n) >= m.invalid_fraction
                garbage = rng.normal(0.0, 3.0, size=X.shape)
                X[~valid] = garbage[~valid]
                features[m.name] = FeatureStream(
                    modality=m.name,
                    frames=X,
                    mask=FrameMask(valid),
                    frame_period_s=spec.frame_period_s,
                )
            split_records[split].append(
                SubjectRecord(subject_id=subject_id, features=features, gold=gold)
            )
    split = DatasetSplit(
        train=tuple(split_records["train"]), dev=tuple(split_records["dev"])
    )
    if return_latents:
        return split, latents_out
    return split


def write_dataset(split: DatasetSplit, out_dir, frame_period_s: float) -> Path:
    """Write one directory per subject plus a manifest; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, records in (("train", split.train), ("dev", split.dev)):
        for record in records:
            subject_dir = out_dir / record.subject_id
            subject_dir.mkdir(exist_ok=True)
            feature_paths = {}
            for modality, stream in record.features.items():
                rel = f"{record.subject_id}/{modality}.csv"
                write_features(stream, out_dir / rel)
                feature_paths[modality] = rel
            annotation_paths = {}
            for dim, trace in record.gold.items():
                rel = f"{record.subject_id}/{dim.value}.csv"
                write_annotations(trace, out_dir / rel)
                annotation_paths[dim.value] = rel
            entries.append(
                ManifestEntry(
                    subject_id=record.subject_id,
                    split=name,
                    features=feature_paths,
                    annotations=annotation_paths,
                )
            )
    manifest = DatasetManifest(
        root=out_dir, frame_period_s=frame_period_s, entries=tuple(entries)
    )
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
