"""Config-driven experiment runs: unimodal, early fusion, late fusion.

A run loads data (from a manifest or the synthetic generator), shifts
gold for annotator delay, grid-searches SVR hyperparameters, predicts
the dev split, tunes the enhancement chain on dev, and reports CCC at
every stage. Artifacts land in the output directory with a content hash
of the config in every filename, so results from different configs can
never be confused.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .errors import DataFormatError, ValidationError
from .fusion import FUSION_SCHEMES, early_fuse, late_fuse
from .ingest import (
    DatasetManifest,
    SynthSpec,
    generate_synthetic,
    load_dataset,
    load_manifest,
    synth_spec_from_dict,
    synth_spec_to_dict,
)
from .metrics import EvaluationReport
from .postprocess import (
    ChainCell,
    ChainSearchSpace,
    PostProcessParams,
    apply_centering,
    apply_scaling,
    median_filter,
    tune_chain,
)
from .svr import (
    DEFAULT_MAX_PASSES,
    DEFAULT_TOL,
    GridCell,
    GridSpec,
    KernelConfig,
    SvrHyperParams,
    SvrModel,
    grid_search,
    predict,
    save_model,
    train_svr,
)
from .timeseries import (
    AffectDimension,
    DatasetSplit,
    SubjectRecord,
    apply_mask_for_training,
    impute_predictions,
    shift_gold,
)

RUN_FORMAT = "affectreg-run"
RUN_VERSION = 1

# annotator reaction lag to cancel, in 40 ms frames
DEFAULT_DELAY_FRAMES = {
    AffectDimension.AROUSAL: 70,
    AffectDimension.VALENCE: 50,
}

STAGE_NAMES = ("raw", "median", "scaled", "centered", "final")


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: AffectDimension
    modalities: tuple[str, ...]
    manifest_path: Path | None = None
    synth: SynthSpec | None = None
    fusion: str | None = None
    late_weights: tuple[float, ...] | None = None
    delay_frames: int | None = None
    grid: GridSpec = GridSpec()
    chain_space: ChainSearchSpace = ChainSearchSpace()
    tol: float = DEFAULT_TOL
    max_passes: int = DEFAULT_MAX_PASSES
    subsample: int | None = None
    output_dir: Path = Path("runs")
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.manifest_path is not None:
            object.__setattr__(self, "manifest_path", Path(self.manifest_path))
        if (self.manifest_path is None) == (self.synth is None):
            raise ValidationError(
                "config needs exactly one data source: manifest_path or synth"
            )
        if not self.modalities:
            raise ValidationError("config lists no modalities")
        if len(set(self.modalities)) != len(self.modalities):
            raise ValidationError(f"duplicate modalities: {self.modalities}")
        if self.fusion is None:
            if len(self.modalities) != 1:
                raise ValidationError(
                    "unimodal run takes exactly one modality; set fusion for more"
                )
        else:
            if self.fusion not in FUSION_SCHEMES:
                raise ValidationError(f"unknown fusion scheme {self.fusion!r}")
            if len(self.modalities) < 2:
                raise ValidationError("fusion needs at least 2 modalities")
        if self.delay_frames is not None and self.delay_frames < 0:
            raise ValidationError("delay_frames must be non-negative")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")

    @property
    def effective_delay(self) -> int:
        if self.delay_frames is not None:
            return int(self.delay_frames)
        return DEFAULT_DELAY_FRAMES[self.dimension]

    @property
    def scheme(self) -> str:
        return self.fusion if self.fusion is not None else "unimodal"


def config_to_dict(config: ExperimentConfig, include_environment: bool = True) -> dict:
    """Plain-dict form of a config.

    The environment fields (output_dir, jobs) do not change results, so
    the content hash is taken over the dict without them.
    """
    record = {
        "dimension": config.dimension.value,
        "modalities": list(config.modalities),
        "data": (
            {"manifest": str(config.manifest_path)}
            if config.manifest_path is not None
            else {"synth": synth_spec_to_dict(config.synth)}
        ),
        "fusion": config.fusion,
        "late_weights": list(config.late_weights) if config.late_weights else None,
        "delay_frames": config.delay_frames,
        "grid": {
            "c_values": list(config.grid.c_values),
            "epsilon_values": list(config.grid.epsilon_values),
            "kernels": [
                {"name": k.name, "gamma": k.gamma} for k in config.grid.kernels
            ],
        },
        "chain": {
            "windows_s": list(config.chain_space.windows_s),
            "scale_modes": list(config.chain_space.scale_modes),
            "center_mode": config.chain_space.center_mode,
        },
        "solver": {
            "tol": config.tol,
            "max_passes": config.max_passes,
            "subsample": config.subsample,
        },
        "seed": config.seed,
    }
    if include_environment:
        record["output_dir"] = str(config.output_dir)
        record["jobs"] = config.jobs
    return record


def config_from_dict(record: dict) -> ExperimentConfig:
    data = record.get("data", {})
    synth = None
    manifest_path = None
    seed = int(record.get("seed", 0))
    if "synth" in data:
        synth = synth_spec_from_dict(data["synth"], default_seed=seed)
    if "manifest" in data:
        manifest_path = Path(data["manifest"])
    grid_rec = record.get("grid", {})
    kernels = tuple(
        KernelConfig(k["name"], k.get("gamma"))
        for k in grid_rec.get("kernels", [{"name": "linear", "gamma": None}])
    )
    grid_kwargs = {"kernels": kernels}
    if "c_values" in grid_rec:
        grid_kwargs["c_values"] = tuple(grid_rec["c_values"])
    if "epsilon_values" in grid_rec:
        grid_kwargs["epsilon_values"] = tuple(grid_rec["epsilon_values"])
    chain_rec = record.get("chain", {})
    chain_kwargs = {}
    if "windows_s" in chain_rec:
        chain_kwargs["windows_s"] = tuple(chain_rec["windows_s"])
    if "scale_modes" in chain_rec:
        chain_kwargs["scale_modes"] = tuple(chain_rec["scale_modes"])
    if "center_mode" in chain_rec:
        chain_kwargs["center_mode"] = chain_rec["center_mode"]
    solver = record.get("solver", {})
    late_weights = record.get("late_weights")
    return ExperimentConfig(
        dimension=AffectDimension.parse(record["dimension"]),
        modalities=tuple(record["modalities"]),
        manifest_path=manifest_path,
        synth=synth,
        fusion=record.get("fusion"),
        late_weights=tuple(late_weights) if late_weights else None,
        delay_frames=record.get("delay_frames"),
        grid=GridSpec(**grid_kwargs),
        chain_space=ChainSearchSpace(**chain_kwargs),
        tol=float(solver.get("tol", DEFAULT_TOL)),
        max_passes=int(solver.get("max_passes", DEFAULT_MAX_PASSES)),
        subsample=solver.get("subsample"),
        output_dir=Path(record.get("output_dir", "runs")),
        seed=seed,
        jobs=int(record.get("jobs", 1)),
    )


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(
        config_to_dict(config, include_environment=False),
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("ascii")).hexdigest()[:12]


@dataclass(frozen=True)
class RunReport:
    config_hash: str
    scheme: str
    dimension: AffectDimension
    modalities: tuple[str, ...]
    delay_frames: int
    models: tuple[tuple[str, SvrHyperParams], ...]
    chain: PostProcessParams
    stages: tuple[tuple[str, EvaluationReport], ...]
    unimodal_ccc: tuple[tuple[str, float], ...] | None
    n_dev_frames: int
    timings_s: dict[str, float] = field(default_factory=dict)

    @property
    def final_ccc(self) -> float:
        return dict(self.stages)["final"].ccc


@dataclass(frozen=True)
class RunResult:
    """A finished run plus everything needed to audit or re-emit it."""

    config: ExperimentConfig
    report: RunReport
    gold_dev: np.ndarray
    stage_predictions: dict[str, np.ndarray]
    grid_tables: dict[str, list[GridCell]]
    chain_table: list[ChainCell]
    trained_models: dict[str, SvrModel]


def _load_split(config: ExperimentConfig) -> tuple[DatasetSplit, float]:
    if config.synth is not None:
        return generate_synthetic(config.synth), config.synth.frame_period_s
    manifest: DatasetManifest = load_manifest(config.manifest_path)
    return load_dataset(manifest), manifest.frame_period_s


def _prepare_subject(
    record: SubjectRecord, modality: str, dimension: AffectDimension, delay: int
):
    if modality not in record.features:
        raise ValidationError(
            f"subject {record.subject_id!r} has no modality {modality!r}"
        )
    if dimension not in record.gold:
        raise ValidationError(
            f"subject {record.subject_id!r} has no {dimension.value} annotations"
        )
    gold = shift_gold(record.gold[dimension], delay)
    stream = record.features[modality].truncated(len(gold))
    return stream, gold


def _stack_training(pairs) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for stream, gold in pairs:
        X, y = apply_mask_for_training(stream, gold)
        xs.append(X)
        ys.append(y)
    return np.vstack(xs), np.concatenate(ys)


def _predict_imputed(model: SvrModel, pairs) -> np.ndarray:
    """Predict valid frames per subject, impute the gaps, concatenate."""
    out = []
    for stream, _gold in pairs:
        valid = stream.mask.valid
        pred = predict(model, stream.frames[valid])
        out.append(impute_predictions(pred, stream.mask))
    return np.concatenate(out)


def _concat_gold(pairs) -> np.ndarray:
    return np.concatenate([gold.values for _stream, gold in pairs])


def _fit_modality(config: ExperimentConfig, train_pairs, dev_pairs):
    """Grid-search then retrain on the winning cell; returns model, raw
    dev/train predictions (imputed, concatenated), and the grid table."""
    X_tr, y_tr = _stack_training(train_pairs)
    X_dev, y_dev = _stack_training(dev_pairs)
    best, table = grid_search(
        config.grid,
        (X_tr, y_tr),
        (X_dev, y_dev),
        objective="ccc",
        tol=config.tol,
        max_passes=config.max_passes,
        n_jobs=config.jobs,
    )
    model = train_svr(
        X_tr,
        y_tr,
        best,
        tol=config.tol,
        max_passes=config.max_passes,
        subsample=config.subsample,
        subsample_seed=config.seed,
    )
    raw_dev = _predict_imputed(model, dev_pairs)
    raw_train = _predict_imputed(model, train_pairs)
    return model, raw_dev, raw_train, table


def _stage_outputs(
    raw_dev: np.ndarray, chain: PostProcessParams, frame_period_s: float
) -> dict[str, np.ndarray]:
    stages = {"raw": raw_dev}
    out = raw_dev
    if "median" in chain.step_order:
        out = median_filter(out, chain.median_window_s, frame_period_s)
    stages["median"] = out
    if "scale" in chain.step_order:
        out = apply_scaling(out, chain.scale_factor)
    stages["scaled"] = out
    if "center" in chain.step_order:
        out = apply_centering(out, chain.gold_mean_train, chain.center_mode)
    stages["centered"] = out
    stages["final"] = out
    return stages


def _finish_run(
    config: ExperimentConfig,
    scheme: str,
    frame_period_s: float,
    gold_dev: np.ndarray,
    gold_train: np.ndarray,
    raw_dev: np.ndarray,
    raw_train: np.ndarray,
    models: dict[str, SvrModel],
    grid_tables: dict[str, list[GridCell]],
    unimodal_ccc: dict[str, float] | None,
    timings: dict[str, float],
) -> RunResult:
    t0 = time.perf_counter()
    chain, chain_table = tune_chain(
        raw_dev,
        gold_dev,
        raw_train,
        gold_train,
        space=config.chain_space,
        frame_period_s=frame_period_s,
    )
    timings["tune_chain"] = time.perf_counter() - t0
    stage_preds = _stage_outputs(raw_dev, chain, frame_period_s)
    stages = tuple(
        (name, metrics.evaluate(stage_preds[name], gold_dev)) for name in STAGE_NAMES
    )
    report = RunReport(
        config_hash=config_hash(config),
        scheme=scheme,
        dimension=config.dimension,
        modalities=config.modalities,
        delay_frames=config.effective_delay,
        models=tuple((name, m.hyper) for name, m in models.items()),
        chain=chain,
        stages=stages,
        unimodal_ccc=tuple(unimodal_ccc.items()) if unimodal_ccc is not None else None,
        n_dev_frames=int(gold_dev.size),
        timings_s=timings,
    )
    return RunResult(
        config=config,
        report=report,
        gold_dev=gold_dev,
        stage_predictions=stage_preds,
        grid_tables=grid_tables,
        chain_table=chain_table,
        trained_models=models,
    )


def run_unimodal(config: ExperimentConfig) -> RunResult:
    if config.fusion is not None:
        raise ValidationError("run_unimodal takes a config without fusion")
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    split, frame_period_s = _load_split(config)
    timings["load"] = time.perf_counter() - t0
    modality = config.modalities[0]
    delay = config.effective_delay
    train_pairs = [
        _prepare_subject(r, modality, config.dimension, delay) for r in split.train
    ]
    dev_pairs = [
        _prepare_subject(r, modality, config.dimension, delay) for r in split.dev
    ]
    t0 = time.perf_counter()
    model, raw_dev, raw_train, table = _fit_modality(config, train_pairs, dev_pairs)
    timings["fit"] = time.perf_counter() - t0
    return _finish_run(
        config,
        "unimodal",
        frame_period_s,
        _concat_gold(dev_pairs),
        _concat_gold(train_pairs),
        raw_dev,
        raw_train,
        {modality: model},
        {modality: table},
        None,
        timings,
    )


def run_fusion(config: ExperimentConfig) -> RunResult:
    if config.fusion is None:
        raise ValidationError("run_fusion needs a fusion scheme in the config")
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    split, frame_period_s = _load_split(config)
    timings["load"] = time.perf_counter() - t0
    delay = config.effective_delay
    per_mod_train = {}
    per_mod_dev = {}
    for m in config.modalities:
        per_mod_train[m] = [
            _prepare_subject(r, m, config.dimension, delay) for r in split.train
        ]
        per_mod_dev[m] = [
            _prepare_subject(r, m, config.dimension, delay) for r in split.dev
        ]
    gold_dev = _concat_gold(per_mod_dev[config.modalities[0]])
    gold_train = _concat_gold(per_mod_train[config.modalities[0]])

    models: dict[str, SvrModel] = {}
    grid_tables: dict[str, list[GridCell]] = {}
    mod_dev_preds: dict[str, np.ndarray] = {}
    mod_train_preds: dict[str, np.ndarray] = {}
    t0 = time.perf_counter()
    for m in config.modalities:
        model, raw_dev_m, raw_train_m, table = _fit_modality(config, per_mod_train[m], per_mod_dev[m])
        models[m] = model
        grid_tables[m] = table
        mod_dev_preds[m] = raw_dev_m
        mod_train_preds[m] = raw_train_m
    timings["fit_unimodal"] = time.perf_counter() - t0
    unimodal_ccc = {
        m: metrics.ccc(mod_dev_preds[m], gold_dev) for m in config.modalities
    }

    t0 = time.perf_counter()
    if config.fusion == "late":
        weights = config.late_weights
        raw_dev = late_fuse(
            [mod_dev_preds[m] for m in config.modalities], weights
        )
        raw_train = late_fuse(
            [mod_train_preds[m] for m in config.modalities], weights
        )
    else:
        fused_train = [
            (
                early_fuse([r.features[m].truncated(len(g)) for m in config.modalities]),
                g,
            )
            for r, (_s, g) in zip(split.train, per_mod_train[config.modalities[0]])
        ]
        fused_dev = [
            (
                early_fuse([r.features[m].truncated(len(g)) for m in config.modalities]),
                g,
            )
            for r, (_s, g) in zip(split.dev, per_mod_dev[config.modalities[0]])
        ]
        model, raw_dev, raw_train, table = _fit_modality(config, fused_train, fused_dev)
        models["fused"] = model
        grid_tables["fused"] = table
    timings["fuse"] = time.perf_counter() - t0
    return _finish_run(
        config,
        config.fusion,
        frame_period_s,
        gold_dev,
        gold_train,
        raw_dev,
        raw_train,
        models,
        grid_tables,
        unimodal_ccc,
        timings,
    )


def run_experiment(config: ExperimentConfig, emit: bool = True):
    """Dispatch to the right run shape; optionally write artifacts.

    Returns (result, artifact paths); paths is empty when emit is off.
    """
    result = run_unimodal(config) if config.fusion is None else run_fusion(config)
    paths = emit_report(result, config.output_dir) if emit else {}
    return result, paths


def _grid_table_records(table: list[GridCell]) -> list[dict]:
    return [
        {
            "c": cell.hyper.c,
            "epsilon": cell.hyper.epsilon,
            "kernel": {"name": cell.hyper.kernel.name, "gamma": cell.hyper.kernel.gamma},
            "score": cell.score,
            "error": cell.error,
        }
        for cell in table
    ]


def _chain_table_records(table: list[ChainCell]) -> list[dict]:
    return [
        {
            "params": cell.params.to_dict() if cell.params is not None else None,
            "ccc": cell.ccc,
            "error": cell.error,
        }
        for cell in table
    ]


def run_to_dict(result: RunResult) -> dict:
    """Machine-readable report; wall-clock lives only under "timings"."""
    report = result.report
    return {
        "format": RUN_FORMAT,
        "version": RUN_VERSION,
        "config": config_to_dict(result.config, include_environment=False),
        "config_hash": report.config_hash,
        "scheme": report.scheme,
        "dimension": report.dimension.value,
        "modalities": list(report.modalities),
        "delay_frames": report.delay_frames,
        "models": {
            name: {
                "c": hyper.c,
                "epsilon": hyper.epsilon,
                "kernel": {"name": hyper.kernel.name, "gamma": hyper.kernel.gamma},
            }
            for name, hyper in report.models
        },
        "chain": report.chain.to_dict(),
        "stages": {name: rep.to_record() for name, rep in report.stages},
        "unimodal_ccc": (
            dict(report.unimodal_ccc) if report.unimodal_ccc is not None else None
        ),
        "feature_dims": {
            name: int(model.mean.size)
            for name, model in result.trained_models.items()
        },
        "n_dev_frames": report.n_dev_frames,
        "grid_tables": {
            name: _grid_table_records(table)
            for name, table in result.grid_tables.items()
        },
        "chain_table": _chain_table_records(result.chain_table),
        "timings": report.timings_s,
    }


def render_table(record: dict) -> str:
    """Human-readable summary built from a machine report dict."""
    feature_dims = record.get("feature_dims", {})

    def feat(name: str) -> str:
        return f"dim {feature_dims[name]}" if name in feature_dims else "-"

    header = f"{'Modality':<16} {'Feature':<10} {'Fusion':<8} {'CCC':>9}"
    rows = [header, "-" * len(header)]
    unimodal = record.get("unimodal_ccc")
    if unimodal:
        for name in sorted(unimodal):
            rows.append(f"{name:<16} {feat(name):<10} {'-':<8} {unimodal[name]:>9.6f}")
    fused_name = "+".join(record["modalities"])
    scheme = record["scheme"] if record["scheme"] != "unimodal" else "-"
    final_ccc = record["stages"]["final"]["ccc"]
    row_feat = feat("fused") if scheme == "early" else feat(record["modalities"][0]) if scheme == "-" else "-"
    rows.append(f"{fused_name:<16} {row_feat:<10} {scheme:<8} {final_ccc:>9.6f}")
    rows.append("")
    rows.append(f"{'Stage':<10} {'CCC':>9} {'MAE':>9} {'Pearson':>9}")
    rows.append("-" * 40)
    for name in STAGE_NAMES:
        rep = record["stages"][name]
        rows.append(
            f"{name:<10} {rep['ccc']:>9.6f} {rep['mae']:>9.6f} {rep['pearson']:>9.6f}"
        )
    rows.append("")
    rows.append(
        f"dimension={record['dimension']} delay_frames={record['delay_frames']} "
        f"chain={record['chain']['step_order']} hash={record['config_hash']}"
    )
    return "\n".join(rows) + "\n"


def _write_stage_csv(path: Path, gold: np.ndarray, pred: np.ndarray) -> None:
    lines = ["frame,gold,pred"]
    lines.extend(
        f"{i},{repr(float(g))},{repr(float(p))}" for i, (g, p) in enumerate(zip(gold, pred))
    )
    path.write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def emit_report(result: RunResult, output_dir) -> dict[str, Path]:
    """Write config echo, machine report, human table, per-stage
    prediction CSVs, and the trained models."""
    output_dir = Path(output_dir)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        probe = output_dir / ".write-probe"
        probe.write_text("", encoding="ascii")
        probe.unlink()
    except OSError as exc:
        raise ValidationError(
            f"output directory {output_dir} not writable: {exc}"
        ) from exc
    h = result.report.config_hash
    paths: dict[str, Path] = {}

    config_path = output_dir / f"config-{h}.json"
    config_path.write_text(
        json.dumps(config_to_dict(result.config), indent=1, sort_keys=True) + "\n",
        encoding="ascii",
        newline="\n",
    )
    paths["config"] = config_path

    record = run_to_dict(result)
    run_path = output_dir / f"run-{h}.json"
    run_path.write_text(
        json.dumps(record, indent=1, sort_keys=True) + "\n",
        encoding="ascii",
        newline="\n",
    )
    paths["run"] = run_path

    table_path = output_dir / f"table-{h}.txt"
    table_path.write_text(render_table(record), encoding="ascii", newline="\n")
    paths["table"] = table_path

    for stage, pred in result.stage_predictions.items():
        p = output_dir / f"predictions-{stage}-{h}.csv"
        _write_stage_csv(p, result.gold_dev, pred)
        paths[f"predictions-{stage}"] = p

    for name, model in result.trained_models.items():
        p = output_dir / f"model-{name}-{h}.json"
        save_model(model, p)
        paths[f"model-{name}"] = p
    return paths


def load_run(path) -> dict:
    """Read back a machine report emitted by emit_report."""
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="ascii"))
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: unreadable run record: {exc}") from exc
    if not isinstance(record, dict) or record.get("format") != RUN_FORMAT:
        raise DataFormatError(f"{path}: not a run record")
    if record.get("version") != RUN_VERSION:
        raise DataFormatError(
            f"{path}: unsupported run version {record.get('version')!r}"
        )
    return record
