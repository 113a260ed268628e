"""Command-line harness: train | predict | eval | ablate | plot | synth.

Every command takes ``--config PATH`` (flat key=value text), repeatable
``--set key=value`` overrides, ``--seed`` and ``--out DIR``, and writes its
fully resolved configuration next to its outputs.  Outputs are bit-stable
for a fixed config and seed; wall-clock timestamps only ever go to the
``run.log`` sidecar.

Exit codes: 0 success, 2 configuration error, 3 runtime failure or
divergence, 4 strict-evaluation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from .data import Window, load_table, downsample, make_windows, split_windows
from .metrics import EvaluationError, evaluate
from .model import (
    MapCache,
    ModelConfig,
    VARIANT_FLAGS,
    load_model,
    make_variant,
    sample_predictions,
    save_model,
)
from .predfile import read_predictions, write_predictions
from .ranking import rank
from .synth import parse_synth_spec, synth_scene
from .train import TrainingDiverged, train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_STRICT = 0, 2, 3, 4

SUPPORTED_HORIZONS = (12, 16, 20, 24, 28, 32)


class ConfigError(Exception):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (converter, default)
SCHEMA = {
    "dataset": (str, ""),
    "frame_rate_hz": (float, 2.5),
    "downsample": (int, 1),
    "stride": (int, 1),
    "variant": (str, "AMENet"),
    "z_dim": (int, 2),
    "hidden": (int, 32),
    "fusion_dim": (int, 64),
    "t_obs": (int, 8),
    "t_pred": (int, 12),
    "beta": (float, 0.75),
    "lr": (float, 0.001),
    "batch_size": (int, 64),
    "conv1d_filters": (int, 16),
    "conv1d_kernel": (int, 3),
    "conv2d_filters": (int, 16),
    "conv2d_kernel": (int, 3),
    "pool": (int, 2),
    "attn_d_q": (int, 4),
    "attn_d_v": (int, 4),
    "attn_heads": (int, 2),
    "map_extent_m": (float, 32.0),
    "map_cell_m": (float, 1.0),
    "map_position_layer": (str, "binary"),
    "loss_on": (str, "offsets"),
    "epochs": (int, 0),
    "max_steps": (int, 0),
    "test_fraction": (float, 0.25),
    "split_seed": (int, 0),
    "split_by_scene": (_bool, False),
    "n_samples": (int, 10),
    "checkpoint": (str, ""),
    "predictions": (str, ""),
    "strict": (_bool, False),
    "collision_threshold": (float, 0.1),
    "substeps": (int, 1),
    "collision_on": (str, "most_likely"),
    "collision_against": (str, "predicted"),
    "log_scores": (_bool, False),
    "linearity_threshold": (float, 0.1),
    "plot_limit": (int, 0),
    "synth_spec": (str, ""),
    "seed": (int, 0),
}

_MODEL_FIELDS = [
    f.name
    for f in dataclasses.fields(ModelConfig)
    if f.name not in ("variant", "interaction", "attention_on", "y_maps")
]


def load_run_config(path: str | None, sets: list[str], seed: int | None) -> dict:
    cfg = {key: default for key, (_, default) in SCHEMA.items()}
    pairs: list[tuple[str, str, str]] = []
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                if "=" not in body:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {body!r}")
                key, _, value = body.partition("=")
                pairs.append((key.strip(), value.strip(), f"{path}:{lineno}"))
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, _, value = item.partition("=")
        pairs.append((key.strip(), value.strip(), "--set"))
    for key, value, where in pairs:
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown config key {key!r}")
        conv, _ = SCHEMA[key]
        try:
            cfg[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def resolved_config_text(cfg: dict) -> str:
    return "".join(f"{key} = {cfg[key]}\n" for key in sorted(cfg))


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _log(out_dir: str, message: str) -> None:
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    with open(os.path.join(out_dir, "run.log"), "a", encoding="utf-8") as fh:
        fh.write(f"[{stamp}] {message}\n")


def _model_config(cfg: dict) -> ModelConfig:
    if cfg["variant"] not in VARIANT_FLAGS:
        raise ConfigError(f"unknown variant {cfg['variant']!r}")
    if cfg["t_pred"] not in SUPPORTED_HORIZONS:
        raise ConfigError(
            f"t_pred must be one of {SUPPORTED_HORIZONS}, got {cfg['t_pred']}"
        )
    kwargs = {key: cfg[key] for key in _MODEL_FIELDS}
    try:
        return make_variant(cfg["variant"], **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load_windows(cfg: dict) -> list[Window]:
    if not cfg["dataset"]:
        raise ConfigError("no dataset configured (key 'dataset')")
    windows: list[Window] = []
    for path in cfg["dataset"].split(","):
        path = path.strip()
        if not os.path.exists(path):
            raise ConfigError(f"dataset path does not exist: {path}")
        scene = load_table(path, frame_rate_hz=cfg["frame_rate_hz"])
        if cfg["downsample"] > 1:
            scene = downsample(scene, cfg["downsample"])
        windows.extend(make_windows(scene, cfg["t_obs"], cfg["t_pred"], cfg["stride"]))
    return windows


def _split(cfg: dict, windows: list[Window]) -> tuple[list[Window], list[Window]]:
    return split_windows(
        windows, cfg["test_fraction"], cfg["split_seed"], by_scene=cfg["split_by_scene"]
    )


def cmd_train(cfg: dict, out_dir: str) -> int:
    mcfg = _model_config(cfg)
    if cfg["epochs"] <= 0 and cfg["max_steps"] <= 0:
        raise ConfigError("set epochs and/or max_steps")
    windows = _load_windows(cfg)
    train_windows, _ = _split(cfg, windows)
    if not train_windows:
        raise ConfigError("the training split is empty")
    result = train(
        train_windows,
        mcfg,
        seed=cfg["seed"],
        epochs=cfg["epochs"] or None,
        max_steps=cfg["max_steps"] or None,
    )
    save_model(os.path.join(out_dir, "checkpoint.bin"), result.model, {"seed": cfg["seed"]})
    _write_text(os.path.join(out_dir, "loss_history.txt"), result.history_lines())
    _write_text(os.path.join(out_dir, "train.config.txt"), resolved_config_text(cfg))
    _log(out_dir, f"train: {result.steps} steps on {len(train_windows)} windows")
    print(f"trained {mcfg.variant}: {result.steps} steps, final loss {result.history[-1]['loss']:.6f}")
    return EXIT_OK


def _predict_sets(cfg: dict, model, windows: list[Window]):
    cache = MapCache(model.cfg.map_config())
    out = []
    for window in sorted(windows, key=lambda w: w.window_id):
        pred = sample_predictions(
            model, window.observation(), cfg["n_samples"], seed=cfg["seed"], cache=cache
        )
        ranking = rank(pred, log_scores=cfg["log_scores"])
        out.append(dataclasses.replace(pred, scores=ranking.scores))
    return out


def cmd_predict(cfg: dict, out_dir: str) -> int:
    if not cfg["checkpoint"]:
        raise ConfigError("predict needs a checkpoint path (key 'checkpoint')")
    if not os.path.exists(cfg["checkpoint"]):
        raise ConfigError(f"checkpoint does not exist: {cfg['checkpoint']}")
    model, _ = load_model(cfg["checkpoint"])
    cfg["t_obs"], cfg["t_pred"] = model.cfg.t_obs, model.cfg.t_pred
    windows = _load_windows(cfg)
    _, test_windows = _split(cfg, windows)
    targets = test_windows if test_windows else windows
    preds = _predict_sets(cfg, model, targets)
    if not preds:
        raise ConfigError("no windows to predict")
    write_predictions(os.path.join(out_dir, "predictions.txt"), preds)
    _write_text(os.path.join(out_dir, "predict.config.txt"), resolved_config_text(cfg))
    _log(out_dir, f"predict: {len(preds)} windows x {cfg['n_samples']} samples")
    print(f"wrote {len(preds)} prediction sets ({cfg['n_samples']} samples each)")
    return EXIT_OK


def cmd_eval(cfg: dict, out_dir: str) -> int:
    if cfg["predictions"]:
        if not os.path.exists(cfg["predictions"]):
            raise ConfigError(f"prediction file does not exist: {cfg['predictions']}")
        predictor = read_predictions(cfg["predictions"])
    elif cfg["checkpoint"]:
        if not os.path.exists(cfg["checkpoint"]):
            raise ConfigError(f"checkpoint does not exist: {cfg['checkpoint']}")
        model, _ = load_model(cfg["checkpoint"])
        cfg["t_obs"], cfg["t_pred"] = model.cfg.t_obs, model.cfg.t_pred
        predictor = model
    else:
        raise ConfigError("eval needs 'predictions' or 'checkpoint'")
    windows = _load_windows(cfg)
    _, test_windows = _split(cfg, windows)
    targets = test_windows if test_windows else windows
    report = evaluate(
        predictor,
        targets,
        n_samples=cfg["n_samples"],
        seed=cfg["seed"],
        collision_threshold=cfg["collision_threshold"],
        substeps=cfg["substeps"],
        strict=cfg["strict"],
        collision_on=cfg["collision_on"],
        collision_against=cfg["collision_against"],
        log_scores=cfg["log_scores"],
        linearity_threshold=cfg["linearity_threshold"],
    )
    _write_text(os.path.join(out_dir, "metrics.txt"), report.to_text())
    _write_text(os.path.join(out_dir, "eval.config.txt"), resolved_config_text(cfg))
    _log(out_dir, f"eval: {report.overall['window_count']} windows")
    print(report.to_text(), end="")
    if report.skipped:
        print(f"warning: skipped {len(report.skipped)} windows without predictions", file=sys.stderr)
    return EXIT_OK


def cmd_ablate(cfg: dict, out_dir: str) -> int:
    if cfg["epochs"] <= 0 and cfg["max_steps"] <= 0:
        raise ConfigError("set epochs and/or max_steps")
    base = _model_config(cfg)  # validates shared fields
    windows = _load_windows(cfg)
    train_windows, test_windows = _split(cfg, windows)
    if not train_windows or not test_windows:
        raise ConfigError("ablation needs non-empty train and test splits")
    cache = MapCache(base.map_config())
    kwargs = {key: cfg[key] for key in _MODEL_FIELDS}
    rows = []
    failed = []
    for variant in VARIANT_FLAGS:
        mcfg = make_variant(variant, **kwargs)
        try:
            result = train(
                train_windows,
                mcfg,
                seed=cfg["seed"],
                epochs=cfg["epochs"] or None,
                max_steps=cfg["max_steps"] or None,
                cache=cache,
            )
            report = evaluate(
                result.model,
                test_windows,
                n_samples=cfg["n_samples"],
                seed=cfg["seed"],
                collision_threshold=cfg["collision_threshold"],
                substeps=cfg["substeps"],
                cache=cache,
            )
        except Exception as exc:  # keep sweeping; report at the end
            failed.append(variant)
            rows.append((variant, None))
            _log(out_dir, f"ablate: {variant} failed: {exc}")
            continue
        _write_text(os.path.join(out_dir, f"{variant}.metrics.txt"), report.to_text())
        rows.append((variant, report.overall))
    lines = ["variant ade_most_likely fde_most_likely ade_top fde_top collisions"]
    for variant, overall in rows:
        if overall is None:
            lines.append(f"{variant} FAILED FAILED FAILED FAILED FAILED")
        else:
            lines.append(
                f"{variant} {overall['ade_most_likely']:.6f} {overall['fde_most_likely']:.6f} "
                f"{overall['ade_top']:.6f} {overall['fde_top']:.6f} {overall['collision_count']}"
            )
    table = "\n".join(lines) + "\n"
    _write_text(os.path.join(out_dir, "ablation.txt"), table)
    _write_text(os.path.join(out_dir, "ablate.config.txt"), resolved_config_text(cfg))
    print(table, end="")
    if failed:
        print(f"variants failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_plot(cfg: dict, out_dir: str) -> int:
    from .plotting import plot_windows

    if not cfg["predictions"]:
        raise ConfigError("plot needs a prediction file (key 'predictions')")
    if not os.path.exists(cfg["predictions"]):
        raise ConfigError(f"prediction file does not exist: {cfg['predictions']}")
    predictions = read_predictions(cfg["predictions"])
    windows = [w for w in _load_windows(cfg) if w.window_id in predictions]
    if not windows:
        print("warning: no windows matching the prediction file; nothing to plot", file=sys.stderr)
        return EXIT_OK
    limit = cfg["plot_limit"] or None
    paths = plot_windows(windows, predictions, out_dir, limit=limit)
    _write_text(os.path.join(out_dir, "plot.config.txt"), resolved_config_text(cfg))
    _log(out_dir, f"plot: {len(paths)} images")
    print(f"wrote {len(paths)} images under {out_dir}")
    return EXIT_OK


def cmd_synth(cfg: dict, out_dir: str) -> int:
    from .data import save_table

    if not cfg["synth_spec"]:
        raise ConfigError("synth needs a spec file (key 'synth_spec')")
    if not os.path.exists(cfg["synth_spec"]):
        raise ConfigError(f"synth spec does not exist: {cfg['synth_spec']}")
    try:
        spec = parse_synth_spec(cfg["synth_spec"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scene, info = synth_scene(spec, frame_rate_hz=cfg["frame_rate_hz"])
    save_table(os.path.join(out_dir, "dataset.txt"), scene)
    if "branches" in info:
        lines = [f"{agent} {branch}" for agent, branch in sorted(info["branches"].items())]
        _write_text(os.path.join(out_dir, "branches.txt"), "\n".join(lines) + "\n")
    _write_text(os.path.join(out_dir, "synth.config.txt"), resolved_config_text(cfg))
    _log(out_dir, f"synth: {spec.kind} with {spec.agent_count} agents")
    n_rows = sum(len(t) for t in scene.trajectories)
    print(f"wrote {n_rows} rows for {len(scene.trajectories)} trajectories")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "plot": cmd_plot,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amenet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument(
            "--set",
            dest="sets",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.sets, args.seed)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_STRICT
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything else is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
