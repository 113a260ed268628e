"""Displacement errors, collision counting, and the evaluation report.

ADE is the per-step Euclidean distance between a predicted and a true
track averaged over all prediction steps; FDE is the distance at the last
step only.  top@N picks, per window, the sample with the smallest ADE
(ties: smaller FDE, then lower index) - an oracle choice requiring ground
truth - while the most-likely sample comes from the likelihood ranking.

Collisions are counted between the predictions of co-present target
agents: for every step interval the pair distance is checked at both
endpoints and at `substeps` interpolated instants; a pair that ever gets
closer than the threshold counts once, and both trajectories are marked
invalid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import Window, window_linearity
from .model import AMENet, MapCache, PredictionSet, sample_predictions
from .ranking import rank

COLLISION_THRESHOLD_M = 0.1


class EvaluationError(RuntimeError):
    """Strict-mode failure: some windows had no predictions."""

    def __init__(self, missing: list[str]):
        super().__init__(f"missing predictions for {len(missing)} windows: {missing[:5]}")
        self.missing = missing


def ade(pred, gt) -> float:
    """Mean over steps of the Euclidean distance between the tracks."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 2 or p.shape[0] < 1:
        raise ValueError(f"tracks must share an (L, 2) shape, got {p.shape} vs {g.shape}")
    return float(np.linalg.norm(p - g, axis=1).mean())


def fde(pred, gt) -> float:
    """Euclidean distance at the last step only."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 2 or p.shape[0] < 1:
        raise ValueError(f"tracks must share an (L, 2) shape, got {p.shape} vs {g.shape}")
    return float(np.linalg.norm(p[-1] - g[-1]))


def best_of(samples, gt) -> tuple[int, float, float]:
    """(index, ade, fde) of the sample closest to the ground truth;
    minimizes ADE, breaking ties by FDE and then by the lower index."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape[0] < 1:
        raise ValueError("need at least one sample")
    ades = [ade(s, gt) for s in arr]
    fdes = [fde(s, gt) for s in arr]
    best = min(range(arr.shape[0]), key=lambda i: (ades[i], fdes[i], i))
    return best, ades[best], fdes[best]


@dataclass(frozen=True)
class CollisionResult:
    pairs: int
    invalid: frozenset

    def __int__(self) -> int:
        return self.pairs


def count_collisions(
    tracks: Sequence[tuple[str, np.ndarray, np.ndarray]],
    threshold_m: float = COLLISION_THRESHOLD_M,
    substeps: int = 1,
    same_agent: Callable[[str, str], bool] | None = None,
) -> CollisionResult:
    """Count colliding pairs among (key, frames, positions) tracks.

    Tracks share the frame clock; only instants both tracks cover are
    checked.  `same_agent` may mark track pairs that belong to one agent
    (those are never compared).
    """
    if threshold_m <= 0:
        raise ValueError("threshold must be positive")
    if substeps < 0:
        raise ValueError("substeps must be >= 0")
    ts = np.linspace(0.0, 1.0, substeps + 2)
    indexed = []
    for key, frames, pos in tracks:
        frames = np.asarray(frames, dtype=np.int64)
        pos = np.asarray(pos, dtype=np.float64)
        indexed.append((key, {int(f): k for k, f in enumerate(frames)}, pos))
    pairs = 0
    invalid: set[str] = set()
    for i in range(len(indexed)):
        key_a, map_a, pos_a = indexed[i]
        for j in range(i + 1, len(indexed)):
            key_b, map_b, pos_b = indexed[j]
            if same_agent is not None and same_agent(key_a, key_b):
                continue
            shared = sorted(set(map_a) & set(map_b))
            hit = False
            for f in shared:
                a0 = pos_a[map_a[f]]
                b0 = pos_b[map_b[f]]
                if float(np.hypot(*(a0 - b0))) < threshold_m:
                    hit = True
                    break
                if f + 1 in map_a and f + 1 in map_b:
                    a1 = pos_a[map_a[f + 1]]
                    b1 = pos_b[map_b[f + 1]]
                    rel0 = a0 - b0
                    drel = (a1 - b1) - rel0
                    for t in ts[1:-1]:
                        d = rel0 + t * drel
                        if float(np.hypot(d[0], d[1])) < threshold_m:
                            hit = True
                            break
                    if hit:
                        break
            if hit:
                pairs += 1
                invalid.add(key_a)
                invalid.add(key_b)
    return CollisionResult(pairs=pairs, invalid=frozenset(invalid))


@dataclass
class MetricsReport:
    overall: dict
    per_scene: dict[str, dict]
    linearity: dict[str, dict]
    config: dict
    skipped: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["# metrics-report v1"]
        for key in sorted(self.config):
            lines.append(f"config.{key} = {self.config[key]!r}")
        for key in sorted(self.overall):
            lines.append(f"overall.{key} = {self.overall[key]!r}")
        for scene in sorted(self.per_scene):
            for key in sorted(self.per_scene[scene]):
                lines.append(f"scene.{scene}.{key} = {self.per_scene[scene][key]!r}")
        for cls in ("linear", "nonlinear"):
            for key in sorted(self.linearity[cls]):
                lines.append(f"linearity.{cls}.{key} = {self.linearity[cls][key]!r}")
        for wid in self.skipped:
            lines.append(f"skipped = {wid}")
        return "\n".join(lines) + "\n"


def _aggregate(rows: list[dict]) -> dict:
    out = {"window_count": len(rows)}
    for key in ("ade_most_likely", "fde_most_likely", "ade_top", "fde_top"):
        out[key] = float(np.mean([r[key] for r in rows])) if rows else float("nan")
    return out


def _as_predictor(model_or_file, cache: MapCache | None):
    if isinstance(model_or_file, AMENet):
        model = model_or_file

        def predict(view, n, seed):
            return sample_predictions(model, view, n, seed=seed, cache=cache)

        return predict
    if isinstance(model_or_file, Mapping):
        table = model_or_file
        return lambda view, n, seed: table.get(view.window_id)
    if callable(model_or_file):
        return model_or_file
    raise TypeError(f"cannot predict with {type(model_or_file).__name__}")


def evaluate(
    model_or_file,
    windows: Sequence[Window],
    n_samples: int = 10,
    seed: int = 0,
    collision_threshold: float = COLLISION_THRESHOLD_M,
    substeps: int = 1,
    strict: bool = False,
    collision_on: str = "most_likely",
    collision_against: str = "predicted",
    log_scores: bool = False,
    linearity_threshold: float = 0.1,
    cache: MapCache | None = None,
) -> MetricsReport:
    """Run sampling (or read stored predictions), rank, and score.

    `model_or_file` is a trained model, a mapping window_id ->
    PredictionSet, or a callable (view, n, seed) -> PredictionSet.
    Collisions are checked between most-likely predictions of co-present
    targets by default; `collision_on='all_samples'` checks every sample
    index, and `collision_against='gt_neighbors'` compares predictions
    with the true neighbor tracks instead.
    """
    if collision_on not in ("most_likely", "all_samples"):
        raise ValueError("collision_on must be 'most_likely' or 'all_samples'")
    if collision_against not in ("predicted", "gt_neighbors"):
        raise ValueError("collision_against must be 'predicted' or 'gt_neighbors'")
    predictor = _as_predictor(model_or_file, cache)

    rows: list[dict] = []
    missing: list[str] = []
    by_scene_tracks: dict[str, list] = {}
    by_scene_sample_tracks: dict[str, dict[int, list]] = {}
    collision_count = 0
    invalid: set[str] = set()

    ordered = sorted(windows, key=lambda w: w.window_id)
    for window in ordered:
        view = window.observation()
        pred = predictor(view, n_samples, seed)
        if pred is None:
            missing.append(window.window_id)
            continue
        ranking = rank(pred, log_scores=log_scores)
        ml = pred.samples[ranking.most_likely]
        _, top_ade, top_fde = best_of(pred.samples, window.fut)
        rows.append(
            {
                "window": window,
                "scene": window.scene,
                "linearity": window_linearity(window, linearity_threshold),
                "ade_most_likely": ade(ml, window.fut),
                "fde_most_likely": fde(ml, window.fut),
                "ade_top": top_ade,
                "fde_top": top_fde,
            }
        )
        frames = window.fut_frames
        if collision_against == "predicted":
            if collision_on == "most_likely":
                by_scene_tracks.setdefault(window.scene, []).append(
                    (window.window_id, frames, ml)
                )
            else:
                per = by_scene_sample_tracks.setdefault(window.scene, {})
                for s in range(pred.n_samples):
                    per.setdefault(s, []).append(
                        (window.window_id, frames, pred.samples[s])
                    )
        else:
            # prediction vs the true tracks of this window's future neighbors
            tracks = [(window.window_id, frames, ml)]
            seen: dict[str, list] = {}
            for k, nbrs in enumerate(window.neighbors[window.t_obs :]):
                for nb in nbrs:
                    seen.setdefault(nb.agent, []).append((int(frames[k]), nb.pos))
            for agent, steps in sorted(seen.items()):
                fr = np.array([f for f, _ in steps])
                ps = np.stack([p for _, p in steps])
                tracks.append((f"gt:{agent}", fr, ps))
            res = count_collisions(tracks, collision_threshold, substeps)
            if window.window_id in res.invalid:
                collision_count += 1
                invalid.add(window.window_id)

    if missing and strict:
        raise EvaluationError(missing)

    def _target_of(window_id: str) -> str:
        return window_id.rsplit(":", 2)[-2]

    same_target = lambda a, b: _target_of(a) == _target_of(b)
    if collision_against == "predicted":
        if collision_on == "most_likely":
            for scene, tracks in sorted(by_scene_tracks.items()):
                res = count_collisions(
                    tracks, collision_threshold, substeps, same_agent=same_target
                )
                collision_count += res.pairs
                invalid |= set(res.invalid)
        else:
            for scene, per_sample in sorted(by_scene_sample_tracks.items()):
                for s, tracks in sorted(per_sample.items()):
                    res = count_collisions(
                        tracks, collision_threshold, substeps, same_agent=same_target
                    )
                    collision_count += res.pairs
                    invalid |= set(res.invalid)

    overall = _aggregate(rows)
    overall["collision_count"] = collision_count
    overall["invalid_count"] = len(invalid)
    per_scene = {
        scene: _aggregate([r for r in rows if r["scene"] == scene])
        for scene in sorted({r["scene"] for r in rows})
    }
    linearity = {
        cls: _aggregate([r for r in rows if r["linearity"] == cls])
        for cls in ("linear", "nonlinear")
    }
    config = {
        "n_samples": n_samples,
        "seed": seed,
        "collision_threshold": collision_threshold,
        "substeps": substeps,
        "collision_on": collision_on,
        "collision_against": collision_against,
        "log_scores": log_scores,
        "linearity_threshold": linearity_threshold,
    }
    return MetricsReport(
        overall=overall,
        per_scene=per_scene,
        linearity=linearity,
        config=config,
        skipped=missing,
    )
