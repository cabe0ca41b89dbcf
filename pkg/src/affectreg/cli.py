"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numerical
failure (non-convergence under --strict). Summaries go to stdout, errors
to stderr. When an output flag is omitted, AFFECTREG_OUTPUT_ROOT names
the fallback directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import metrics
from .errors import AffectRegError, ConvergenceError, DataFormatError, ValidationError
from .experiment import (
    DEFAULT_DELAY_FRAMES,
    config_from_dict,
    load_run,
    render_table,
    run_experiment,
)
from .ingest import (
    ModalitySpec,
    SynthSpec,
    generate_synthetic,
    load_annotations,
    load_dataset,
    load_features,
    load_manifest,
    load_value_series,
    write_dataset,
    write_value_series,
)
from .postprocess import ChainSearchSpace, apply_chain, tune_chain
from .svr import (
    DEFAULT_MAX_PASSES,
    DEFAULT_TOL,
    GridSpec,
    KernelConfig,
    SvrHyperParams,
    grid_search,
    load_model,
    predict,
    save_model,
    train_svr,
)
from .timeseries import (
    AffectDimension,
    apply_mask_for_training,
    impute_predictions,
    shift_gold,
)

OUTPUT_ROOT_ENV = "AFFECTREG_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(AffectRegError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the contract here reserves
    # 2 for data errors, so route usage problems through an exception
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _out_path(flag_value, default_name: str | None = None) -> Path:
    if flag_value is not None:
        return Path(flag_value)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root is None:
        raise UsageError(
            f"no output path given and {OUTPUT_ROOT_ENV} is not set"
        )
    if default_name is None:
        return Path(root)
    return Path(root) / default_name


def _parse_modality(text: str) -> ModalitySpec:
    parts = text.split(":")
    if len(parts) < 2 or len(parts) > 4:
        raise UsageError(
            f"bad --modality {text!r}; expected name:dim[:noise_sigma[:invalid_fraction]]"
        )
    try:
        return ModalitySpec(
            name=parts[0],
            dim=int(parts[1]),
            noise_sigma=float(parts[2]) if len(parts) > 2 else 0.0,
            invalid_fraction=float(parts[3]) if len(parts) > 3 else 0.0,
        )
    except (ValueError, ValidationError) as exc:
        raise UsageError(f"bad --modality {text!r}: {exc}") from exc


def _parse_floats(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise UsageError(f"bad {flag} {text!r}: {exc}") from exc


def _kernel(args) -> KernelConfig:
    return KernelConfig(args.kernel, args.gamma)


def _check_converged(models, strict: bool) -> None:
    for name, model in models.items():
        if not model.converged:
            message = (
                f"model {name!r} did not converge within its update budget"
            )
            if strict:
                raise ConvergenceError(message)
            print(f"warning: {message}", file=sys.stderr)


def _prepare_split(manifest_path, dimension, modality, delay):
    manifest = load_manifest(manifest_path)
    split = load_dataset(manifest)
    pairs = {"train": [], "dev": []}
    for name, records in (("train", split.train), ("dev", split.dev)):
        for record in records:
            if modality not in record.features:
                raise DataFormatError(
                    f"subject {record.subject_id!r} has no modality {modality!r}"
                )
            gold = shift_gold(record.gold[dimension], delay)
            stream = record.features[modality].truncated(len(gold))
            pairs[name].append((stream, gold))
    return manifest, pairs


def _stack(pairs):
    xs, ys = [], []
    for stream, gold in pairs:
        X, y = apply_mask_for_training(stream, gold)
        xs.append(X)
        ys.append(y)
    return np.vstack(xs), np.concatenate(ys)


def _cmd_synth(args) -> int:
    modalities = tuple(_parse_modality(m) for m in args.modality) or (
        ModalitySpec("audio", 4, 0.05, 0.02),
        ModalitySpec("video", 3, 0.05, 0.02),
    )
    dimensions = tuple(AffectDimension.parse(d) for d in args.dimensions.split(","))
    spec = SynthSpec(
        n_subjects_train=args.subjects_train,
        n_subjects_dev=args.subjects_dev,
        frames_per_subject=args.frames,
        latent_bandwidth_hz=args.bandwidth,
        modalities=modalities,
        annotation_lag_frames=args.lag,
        frame_period_s=args.frame_period,
        dimensions=dimensions,
        seed=args.seed,
    )
    out_dir = _out_path(args.out)
    split = generate_synthetic(spec)
    manifest_path = write_dataset(split, out_dir, spec.frame_period_s)
    n_subjects = len(split.train) + len(split.dev)
    print(
        f"wrote {manifest_path} subjects={n_subjects} "
        f"frames={spec.frames_per_subject} seed={spec.seed}"
    )
    return EXIT_OK


def _cmd_train(args) -> int:
    dimension = AffectDimension.parse(args.dimension)
    delay = args.delay if args.delay is not None else DEFAULT_DELAY_FRAMES[dimension]
    _manifest, pairs = _prepare_split(args.manifest, dimension, args.modality, delay)
    X, y = _stack(pairs["train"])
    hyper = SvrHyperParams(args.c, args.epsilon, _kernel(args))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = train_svr(X, y, hyper, tol=args.tol, max_passes=args.max_passes)
    _check_converged({args.modality: model}, args.strict)
    out = _out_path(args.out, "model.json")
    save_model(model, out)
    print(
        f"trained {args.modality}/{dimension.value} on {X.shape[0]} frames "
        f"support_vectors={model.n_support} converged={model.converged} -> {out}"
    )
    return EXIT_OK


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    stream = load_features(args.features)
    valid = stream.mask.valid
    pred = predict(model, stream.frames[valid])
    full = impute_predictions(pred, stream.mask)
    out = _out_path(args.out, "predictions.csv")
    write_value_series(full, out)
    print(f"wrote predictions -> {out} n={full.size}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    pred = load_value_series(args.pred)
    gold = load_annotations(args.gold, AffectDimension.AROUSAL)
    if args.delay:
        gold = shift_gold(gold, args.delay)
        pred = pred[: len(gold)]
    if pred.size != len(gold):
        raise DataFormatError(
            f"prediction length {pred.size} != gold length {len(gold)}"
        )
    report = metrics.evaluate(pred, gold.values)
    print(
        f"ccc={report.ccc:.6f} mae={report.mae:.6f} "
        f"pearson={report.pearson_rho:.6f} n={report.n}"
    )
    return EXIT_OK


def _cmd_grid(args) -> int:
    dimension = AffectDimension.parse(args.dimension)
    delay = args.delay if args.delay is not None else DEFAULT_DELAY_FRAMES[dimension]
    _manifest, pairs = _prepare_split(args.manifest, dimension, args.modality, delay)
    grid = GridSpec(
        c_values=_parse_floats(args.c_values, "--c-values"),
        epsilon_values=_parse_floats(args.epsilon_values, "--epsilon-values"),
        kernels=(_kernel(args),),
    )
    best, table = grid_search(
        grid,
        _stack(pairs["train"]),
        _stack(pairs["dev"]),
        objective=args.objective,
        tol=args.tol,
        max_passes=args.max_passes,
        n_jobs=args.jobs,
    )
    if args.out is not None:
        records = [
            {
                "c": cell.hyper.c,
                "epsilon": cell.hyper.epsilon,
                "kernel": {
                    "name": cell.hyper.kernel.name,
                    "gamma": cell.hyper.kernel.gamma,
                },
                "score": cell.score,
                "error": cell.error,
            }
            for cell in table
        ]
        Path(args.out).write_text(
            json.dumps(records, indent=1, sort_keys=True) + "\n", encoding="ascii"
        )
    best_score = max(c.score for c in table if c.error is None)
    print(
        f"best c={best.c} epsilon={best.epsilon} kernel={best.kernel.name} "
        f"{args.objective}={best_score:.6f} cells={len(table)}"
    )
    return EXIT_OK


def _cmd_postprocess(args) -> int:
    pred_dev = load_value_series(args.pred_dev)
    gold_dev = load_value_series(args.gold_dev)
    pred_train = load_value_series(args.pred_train)
    gold_train = load_value_series(args.gold_train)
    space_kwargs = {}
    if args.windows is not None:
        space_kwargs["windows_s"] = _parse_floats(args.windows, "--windows")
    if args.center_mode is not None:
        space_kwargs["center_mode"] = args.center_mode
    space = ChainSearchSpace(**space_kwargs)
    params, table = tune_chain(
        pred_dev,
        gold_dev,
        pred_train,
        gold_train,
        space=space,
        frame_period_s=args.frame_period,
    )
    enhanced = apply_chain(pred_dev, params, args.frame_period)
    final = metrics.ccc(enhanced, gold_dev)
    if args.out is not None:
        Path(args.out).write_text(
            json.dumps(params.to_dict(), indent=1, sort_keys=True) + "\n",
            encoding="ascii",
        )
    if args.pred_out is not None:
        write_value_series(enhanced, args.pred_out)
    raw = metrics.ccc(pred_dev, gold_dev)
    steps = ",".join(params.step_order) or "none"
    print(f"chain={steps} raw_ccc={raw:.6f} ccc={final:.6f} cells={len(table)}")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    config_path = Path(args.config)
    try:
        record = json.loads(config_path.read_text(encoding="ascii"))
    except OSError as exc:
        raise DataFormatError(f"{config_path}: cannot read config: {exc}") from exc
    except ValueError as exc:
        raise DataFormatError(f"{config_path}: bad JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise DataFormatError(f"{config_path}: config must be a JSON object")
    if args.dimension is not None:
        record["dimension"] = args.dimension
    if args.fusion is not None:
        record["fusion"] = None if args.fusion == "none" else args.fusion
    if args.modalities is not None:
        record["modalities"] = [m for m in args.modalities.split(",") if m]
    if args.delay_frames is not None:
        record["delay_frames"] = args.delay_frames
    if args.seed is not None:
        record["seed"] = args.seed
        data = record.get("data", {})
        if isinstance(data, dict) and isinstance(data.get("synth"), dict):
            data["synth"]["seed"] = args.seed
    if args.jobs is not None:
        record["jobs"] = args.jobs
    if args.out is not None:
        record["output_dir"] = args.out
    elif os.environ.get(OUTPUT_ROOT_ENV) and "output_dir" not in record:
        record["output_dir"] = os.environ[OUTPUT_ROOT_ENV]
    try:
        config = config_from_dict(record)
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{config_path}: malformed config: {exc}") from exc
    result, paths = run_experiment(config)
    _check_converged(result.trained_models, args.strict)
    if args.verbose:
        for stage, seconds in result.report.timings_s.items():
            print(f"timing {stage}: {seconds:.3f}s", file=sys.stderr)
    print(
        f"final ccc={result.report.final_ccc:.6f} scheme={result.report.scheme} "
        f"dimension={result.report.dimension.value} hash={result.report.config_hash} "
        f"-> {paths['run']}"
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    record = load_run(args.run)
    sys.stdout.write(render_table(record))
    return EXIT_OK


def _add_solver_flags(p) -> None:
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="SMO violation tolerance")
    p.add_argument(
        "--max-passes",
        type=int,
        default=DEFAULT_MAX_PASSES,
        help="SMO budget in sweeps (n pair updates each)",
    )
    p.add_argument("--kernel", choices=("linear", "rbf"), default="linear", help="kernel type")
    p.add_argument("--gamma", type=float, default=None, help="rbf kernel width")
    p.add_argument(
        "--strict",
        action="store_true",
        help="treat solver non-convergence as a fatal numerical error (exit 3)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="affectreg", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--verbose", "-v", action="store_true", help="timing chatter on stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset", parents=[common])
    p.add_argument("--seed", type=int, default=0, help="PRNG seed; fixes every byte")
    p.add_argument("--out", help="output directory (default: env root)")
    p.add_argument("--subjects-train", type=int, default=3, help="train split size")
    p.add_argument("--subjects-dev", type=int, default=2, help="dev split size")
    p.add_argument("--frames", type=int, default=500, help="frames per subject")
    p.add_argument("--bandwidth", type=float, default=0.5, help="latent bandwidth in Hz")
    p.add_argument("--lag", type=int, default=0, help="annotation lag in frames")
    p.add_argument("--frame-period", type=float, default=0.04, help="seconds per frame")
    p.add_argument(
        "--modality",
        action="append",
        default=[],
        help="name:dim[:noise_sigma[:invalid_fraction]]; repeatable "
        "(default: audio:4:0.05:0.02 and video:3:0.05:0.02)",
    )
    p.add_argument("--dimensions", default="arousal,valence", help="comma list of dimensions")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train one SVR from a manifest", parents=[common])
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--dimension", required=True, help="arousal or valence")
    p.add_argument("--modality", required=True, help="feature stream to train on")
    p.add_argument("--delay", type=int, default=None, help="delay frames (default per dimension)")
    p.add_argument("--c", type=float, default=1.0, help="regularization weight")
    p.add_argument("--epsilon", type=float, default=0.1, help="tube half-width")
    p.add_argument("--out", help="model output path")
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="predict a feature file with a saved model", parents=[common])
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--features", required=True, help="feature CSV path")
    p.add_argument("--out", help="prediction CSV path")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="score a prediction file against gold", parents=[common])
    p.add_argument("--pred", required=True, help="prediction CSV (frame,value)")
    p.add_argument("--gold", required=True, help="gold CSV (frame,value)")
    p.add_argument("--delay", type=int, default=0, help="shift gold this many frames first")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("grid", help="hyperparameter grid search", parents=[common])
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--dimension", required=True, help="arousal or valence")
    p.add_argument("--modality", required=True, help="feature stream to search on")
    p.add_argument("--delay", type=int, default=None, help="delay frames (default per dimension)")
    p.add_argument("--c-values", default="0.001,0.01,0.1,1,10,100", help="comma list")
    p.add_argument("--epsilon-values", default="0.0001,0.001,0.01,0.1", help="comma list")
    p.add_argument("--objective", choices=("ccc", "mae", "pearson"), default="ccc")
    p.add_argument("--jobs", type=int, default=1, help="parallel grid cells")
    p.add_argument("--out", help="write the score table as JSON here")
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("postprocess", help="tune the enhancement chain on dev data", parents=[common])
    p.add_argument("--pred-dev", required=True, help="raw dev predictions CSV")
    p.add_argument("--gold-dev", required=True, help="dev gold CSV")
    p.add_argument("--pred-train", required=True, help="raw train predictions CSV")
    p.add_argument("--gold-train", required=True, help="train gold CSV")
    p.add_argument("--frame-period", type=float, default=0.04, help="seconds per frame")
    p.add_argument("--windows", default=None, help="comma list of median windows in seconds")
    p.add_argument(
        "--center-mode",
        choices=("align_means", "subtract_gold_mean"),
        default=None,
        help="centering variant for the search",
    )
    p.add_argument("--out", help="write chosen chain parameters as JSON here")
    p.add_argument("--pred-out", help="write enhanced dev predictions here")
    p.set_defaults(func=_cmd_postprocess)

    p = sub.add_parser("experiment", help="run a full configured experiment", parents=[common])
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--dimension", default=None, help="override: arousal or valence")
    p.add_argument(
        "--fusion",
        choices=("early", "late", "none"),
        default=None,
        help="override fusion scheme",
    )
    p.add_argument("--modalities", default=None, help="override: comma list")
    p.add_argument("--delay-frames", type=int, default=None, help="override delay")
    p.add_argument("--seed", type=int, default=None, help="override seed (also synth seed)")
    p.add_argument("--jobs", type=int, default=None, help="override parallelism")
    p.add_argument("--out", default=None, help="override output directory")
    p.add_argument(
        "--strict",
        action="store_true",
        help="treat solver non-convergence as a fatal numerical error (exit 3)",
    )
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="re-render the table for an emitted run", parents=[common])
    p.add_argument("--run", required=True, help="run-<hash>.json path")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
