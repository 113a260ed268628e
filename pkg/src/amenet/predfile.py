"""Line-delimited prediction records.

One record per (window, sample):

    window_id sample_index score z_0 .. z_{zdim-1} x_1 y_1 .. x_T' y_T'

Scores come from the likelihood ranking ('-' when not ranked).  The header
pins the latent and horizon dimensions so records parse unambiguously.
"""

from __future__ import annotations

import numpy as np

from .model import PredictionSet

_HEADER = "# amenet-predictions v1"


def write_predictions(path, predictions: list[PredictionSet]) -> None:
    if not predictions:
        raise ValueError("nothing to write")
    z_dim = predictions[0].z.shape[1]
    t_pred = predictions[0].samples.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_HEADER}\n")
        fh.write(f"# z_dim={z_dim} t_pred={t_pred}\n")
        fh.write("# window sample score z... xy...\n")
        for pred in predictions:
            if pred.z.shape[1] != z_dim or pred.samples.shape[1] != t_pred:
                raise ValueError(f"inconsistent dimensions in {pred.window_id}")
            for s in range(pred.n_samples):
                score = "-" if pred.scores is None else repr(float(pred.scores[s]))
                z = " ".join(repr(float(v)) for v in pred.z[s])
                xy = " ".join(repr(float(v)) for v in pred.samples[s].reshape(-1))
                fh.write(f"{pred.window_id} {s} {score} {z} {xy}\n")


def read_predictions(path) -> dict[str, PredictionSet]:
    """Load records back into PredictionSets keyed by window id."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != _HEADER:
            raise ValueError(f"{path}: not a prediction file (header {header!r})")
        dims = dict(kv.split("=") for kv in fh.readline().strip("#\n ").split())
        z_dim, t_pred = int(dims["z_dim"]), int(dims["t_pred"])
        rows: dict[str, list] = {}
        for lineno, line in enumerate(fh, start=4):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            fields = body.split()
            if len(fields) != 3 + z_dim + 2 * t_pred:
                raise ValueError(f"{path}:{lineno}: expected {3 + z_dim + 2 * t_pred} fields")
            wid, sample = fields[0], int(fields[1])
            score = float("nan") if fields[2] == "-" else float(fields[2])
            z = np.array([float(v) for v in fields[3 : 3 + z_dim]])
            xy = np.array([float(v) for v in fields[3 + z_dim :]]).reshape(t_pred, 2)
            rows.setdefault(wid, []).append((sample, score, z, xy))
    out: dict[str, PredictionSet] = {}
    for wid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        if [e[0] for e in entries] != list(range(len(entries))):
            raise ValueError(f"{path}: non-contiguous sample indices for {wid}")
        scores = np.array([e[1] for e in entries])
        out[wid] = PredictionSet(
            window_id=wid,
            target=wid.rsplit(":", 2)[-2],
            samples=np.stack([e[3] for e in entries]),
            z=np.stack([e[2] for e in entries]),
            scores=None if np.isnan(scores).all() else scores,
        )
    return out
