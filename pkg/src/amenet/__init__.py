"""Multi-path trajectory prediction with attentive dynamic-map encoders.

A CVAE over future motion, conditioned on the observed track and on
per-step interaction grids summarizing neighboring agents (orientation,
speed, position), with likelihood-based ranking of the sampled futures
and an ADE/FDE/collision evaluation harness.
"""

from .geometry import (
    OffsetSeq,
    Scene,
    TrackPoint,
    Trajectory,
    from_offsets,
    heading_deg,
    rotate_scene,
    to_offsets,
)
from .data import (
    ObservationView,
    ParseError,
    Window,
    classify_linearity,
    downsample,
    load_table,
    make_windows,
    save_table,
    split_windows,
)
from .maps import MapConfig, DynamicMap, OccupancyGrid, active_backend
from .model import (
    AMENet,
    LatentDist,
    MapCache,
    ModelConfig,
    PredictionSet,
    cvae_loss,
    load_model,
    make_variant,
    reparameterize,
    sample_predictions,
    save_model,
)
from .ranking import BiGauss, bigauss_density, fit_bigauss, rank
from .metrics import ade, best_of, count_collisions, evaluate, fde
from .synth import SynthSpec, synth_scene
from .train import TrainingDiverged, TrainResult, train

__version__ = "0.1.0"
