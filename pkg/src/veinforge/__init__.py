"""Dorsal hand vein recognition with coordinate-grid eigenveins.

Skeletons are extracted from infrared captures, their pixel coordinates are
arranged into fixed-size grids, and a quadratic form built from the grid
mean and covariance yields a small set of eigenveins. Each hand becomes a
short weight vector in the space they span.
"""

from .errors import VeinForgeError
from .raster import BinaryImage, GrayImage, load_pgm, rasterize, save_pgm
from .preprocess import PipelineConfig, preprocess_pipeline
from .veinspace import VeinSpaceModel, train
from .matching import MatchDecision, Outcome, identify, verify
from .evaluation import bench_timing, run_experiment
from .synthgen import SynthSpec, gen_dataset
from .modelstore import load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "BinaryImage",
    "GrayImage",
    "MatchDecision",
    "Outcome",
    "PipelineConfig",
    "SynthSpec",
    "VeinForgeError",
    "VeinSpaceModel",
    "bench_timing",
    "gen_dataset",
    "identify",
    "load_model",
    "load_pgm",
    "preprocess_pipeline",
    "rasterize",
    "run_experiment",
    "save_model",
    "save_pgm",
    "train",
    "verify",
]
