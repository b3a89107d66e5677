"""Command-line surface: synth, train, eval, ablate, analyze, inspect.

Exit codes: 0 success, 1 runtime failure (I/O, decode, corrupt checkpoint),
2 usage error (bad flags or argument values, including unknown folds and
malformed config files). Progress lines go to stderr; machine-readable CSV
goes to stdout or to files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from . import analysis, evaluation
from .checkpoint import load_checkpoint
from .datasets import (SYNTH_MAX_CLASSES, DatasetManifest, ManifestEntry,
                       load_manifest, write_synth_dataset)
from .audio import load_clip_file
from .errors import CheckpointError, ConfigError, DecodeError, ManifestError
from .model import ModelConfig, param_count
from .training import TrainConfig, train


class UsageError(Exception):
    """Bad argument or config values; maps to exit code 2."""


_MODEL_KEYS = {f.name for f in dc_fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in dc_fields(TrainConfig)}
_DATA_KEYS = {"peak_normalize", "resample"}
_EVAL_KEYS = {"repeats", "hop"}
_ANALYSIS_KEYS = {"nfft"}
_SECTIONS = {"model": _MODEL_KEYS, "train": _TRAIN_KEYS, "data": _DATA_KEYS,
             "eval": _EVAL_KEYS, "analysis": _ANALYSIS_KEYS}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: dict = field(default_factory=lambda: {"peak_normalize": True, "resample": True})
    eval: dict = field(default_factory=lambda: {"repeats": 1, "hop": None})
    analysis: dict = field(default_factory=lambda: {"nfft": 2048})


def parse_run_config(text: str) -> RunConfig:
    """Parse the JSON run config; unknown keys are rejected with their path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config root must be a JSON object")
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise UsageError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise UsageError(f"config section {section!r} must be an object")
        for key in body:
            if key not in _SECTIONS[section]:
                raise UsageError(f"unknown config key {section}.{key}")

    cfg = RunConfig()
    try:
        if "model" in doc:
            cfg.model = ModelConfig.from_dict(doc["model"])
        if "train" in doc:
            base = TrainConfig().to_dict()
            base.update(doc["train"])
            cfg.train = TrainConfig.from_dict(base)
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    cfg.data.update(doc.get("data", {}))
    cfg.eval.update(doc.get("eval", {}))
    cfg.analysis.update(doc.get("analysis", {}))
    return cfg


def _load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return parse_run_config(text)


def _load_manifest_file(path: str) -> DatasetManifest:
    manifest = load_manifest(Path(path).read_bytes())
    base = Path(path).parent
    entries = [ManifestEntry(str(base / e.path) if not Path(e.path).is_absolute() else e.path,
                             e.label, e.fold)
               for e in manifest.entries]
    return DatasetManifest(entries, manifest.num_classes, manifest.num_folds)


def _check_fold(manifest: DatasetManifest, fold: int) -> None:
    folds = sorted({e.fold for e in manifest.entries})
    if fold not in folds:
        raise UsageError(f"fold {fold} not in manifest (folds: {folds})")


def _preload_clips(manifest: DatasetManifest, cfg: RunConfig) -> dict:
    """Decode every manifest clip once, honoring the data-section toggles."""
    rate = cfg.model.sample_rate if cfg.data["resample"] else None
    return {e.path: load_clip_file(e.path, target_rate=rate,
                                   normalize=cfg.data["peak_normalize"])
            for e in manifest.entries}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# --- commands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    if not 1 <= args.classes <= SYNTH_MAX_CLASSES:
        raise UsageError(f"--classes must be in 1..{SYNTH_MAX_CLASSES}, got {args.classes}")
    if args.clips_per_class < 1:
        raise UsageError("--clips-per-class must be positive")
    if args.seconds <= 0:
        raise UsageError("--seconds must be positive")
    try:
        manifest_path = write_synth_dataset(
            args.out, args.classes, args.clips_per_class, args.seconds,
            args.rate, args.seed, num_folds=args.folds)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    n = args.classes * args.clips_per_class
    print(f"wrote {n} clips + {manifest_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config)
    if args.deterministic:
        cfg.train.deterministic = True
    manifest = _load_manifest_file(args.manifest)
    _check_fold(manifest, args.fold)
    if manifest.num_classes != cfg.model.num_classes:
        cfg.model.num_classes = manifest.num_classes
        cfg.model.validate()

    print("epoch,lr,loss,train_acc")

    def stream(metrics: dict) -> None:
        print(f"{metrics['epoch']},{metrics['lr']:g},{metrics['loss']:.6f},"
              f"{metrics['train_acc']:.6f}", flush=True)

    ckpt = train(cfg.model, cfg.train, manifest, args.fold,
                 clips=_preload_clips(manifest, cfg),
                 out_path=args.out, checkpoint_every=args.checkpoint_every,
                 on_epoch=stream)
    _log(f"trained {ckpt.epoch} epochs; checkpoint written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    manifest = _load_manifest_file(args.manifest)
    _check_fold(manifest, args.fold)
    model = ckpt.restore_model()
    cfg = _load_run_config(args.config)
    # clips must arrive at the rate the model was trained on
    rate = ckpt.model_config.sample_rate if cfg.data["resample"] else None

    def loader(path: str):
        return load_clip_file(path, target_rate=rate,
                              normalize=cfg.data["peak_normalize"])

    report = evaluation.evaluate(model, manifest, args.fold,
                                 clip_loader=loader, hop=cfg.eval["hop"])

    out = Path(args.report)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.csv").write_text(evaluation.eval_report_csv(report))
    (out / "confusion.csv").write_text(evaluation.confusion_csv(report))
    (out / "eval_report.txt").write_text(evaluation.eval_report_text(report))
    print(f"accuracy,{report.accuracy:.6f}")
    _log(f"report written under {out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_run_config(args.config)
    manifest = _load_manifest_file(args.manifest)
    if manifest.num_classes != cfg.model.num_classes:
        cfg.model.num_classes = manifest.num_classes
        cfg.model.validate()
    repeats = args.repeats if args.repeats is not None else cfg.eval["repeats"]
    if repeats < 1:
        raise UsageError(f"--repeats must be >= 1, got {repeats}")

    # decode once; every variant x fold training run shares the same clips
    clips = _preload_clips(manifest, cfg)
    if args.mode == "temporal":
        result = evaluation.ablate_temporal(manifest, cfg.model, cfg.train,
                                            repeats, clips=clips)
        stem = "ablation_temporal"
    else:
        result = evaluation.ablate_levels(manifest, cfg.model, cfg.train,
                                          repeats, clips=clips)
        stem = "ablation_levels"

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_text = evaluation.ablation_csv(result)
    (out / f"{stem}.csv").write_text(csv_text)
    (out / f"{stem}.txt").write_text(evaluation.ablation_table_text(result))
    print(csv_text, end="")
    _log(f"ablation results written under {out}")
    return 0


def cmd_analyze(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.restore_model()
    paths = analysis.export_all_branches(model, args.out, nfft=args.nfft)
    for p in paths:
        _log(f"wrote {p}")
    return 0


def cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    cfg = ckpt.model_config
    print(f"epoch           : {ckpt.epoch}")
    print(f"parameters      : {param_count(cfg)}")
    print(f"window_length   : {cfg.window_length} samples @ {cfg.sample_rate} Hz")
    print(f"branches        : " + "; ".join(
        f"len {b.filter_len} stride {b.stride} x{b.num_filters}" for b in cfg.branches))
    print(f"frontend        : {cfg.frontend_shape()}")
    for i, shape in enumerate(cfg.level_map_shapes(), start=1):
        print(f"level {i} map     : {shape}")
    print(f"last_n_levels   : {cfg.last_n_levels}")
    print(f"fc input dim    : {cfg.fc_input_dim()}")
    print(f"fc hidden       : {cfg.fc_hidden}")
    print(f"classes         : {cfg.num_classes}")
    print("layers:")
    for name, shape in cfg.parameter_shapes():
        print(f"  {name:<24} {shape}")
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavems",
        description="Raw-waveform sound classifier: data synthesis, training, "
                    "evaluation, ablations, filter analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic WAV corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--clips-per-class", type=int, required=True)
    p.add_argument("--seconds", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=int, default=44100, help="sample rate in Hz")
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on one fold split")
    p.add_argument("--config", help="JSON run config (defaults reproduce the full protocol)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--threads", type=int, default=1,
                   help="upper bound on worker threads (execution is serial)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="probability-voting evaluation of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--report", required=True, help="report output directory")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--threads", type=int, default=1,
                   help="upper bound on worker threads (execution is serial)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the temporal or level ablation")
    p.add_argument("--mode", choices=("temporal", "levels"), required=True)
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--threads", type=int, default=1,
                   help="upper bound on worker threads (execution is serial)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("analyze", help="export learned-filter frequency responses")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--nfft", type=int, default=2048)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("inspect", help="print checkpoint config and layer shapes")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DecodeError, ManifestError, CheckpointError, ConfigError,
            OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
