"""Storm-trajectory prediction with MC-dropout credible intervals.

A small numpy package: best-track CSV ingestion and feature derivation, a
from-scratch stacked LSTM (32 -> 16) with per-sequence variational dropout,
BPTT training under Adam, Monte Carlo dropout uncertainty with z-score
credible bands, and a coverage evaluation harness, wired together by a CLI.
"""

from .errors import (ModelFormatError, NumericsError, ParseError,
                     StormPredError, ValidationError)
from .kernels import USING_NUMBA
from .lstm import (CellState, DropoutMasks, GradCheckReport, Gradients,
                   LayerMasks, LayerParams, ModelParams, backward, forward,
                   forward_instrumented, grad_check, init_params,
                   lstm_cell_forward, ones_masks, param_blocks, sample_masks)
from .storm_data import (FEATURES, Fix, Sample, SampleDataset, Scaler,
                         SplitDataset, StormTrack, apply_minmax,
                         build_dataset, build_samples, derive_features,
                         fit_minmax, haversine_km, initial_bearing_deg,
                         load_dataset, parse_track_csv, save_dataset,
                         shuffle_split, tracks_to_csv_text)
from .synthetic import make_tracks
from .training import (AdamState, TrainConfig, TrainHistory, adam_step,
                       evaluate_mse, load_model, mse, save_model, train)
from .uncertainty import (CoverageReport, CredibleBand, PredictionEnsemble,
                          band_to_degrees, coverage, credible_band,
                          dagostino_k2, mc_predict, z_for_level)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CellState", "CoverageReport", "CredibleBand",
    "DropoutMasks", "FEATURES", "Fix", "GradCheckReport", "Gradients",
    "LayerMasks", "LayerParams", "ModelFormatError", "ModelParams",
    "NumericsError", "ParseError", "PredictionEnsemble", "Sample",
    "SampleDataset", "Scaler", "SplitDataset", "StormPredError",
    "StormTrack", "TrainConfig", "TrainHistory", "USING_NUMBA",
    "ValidationError", "adam_step", "apply_minmax", "backward",
    "band_to_degrees", "build_dataset", "build_samples", "coverage",
    "credible_band", "dagostino_k2", "derive_features", "evaluate_mse",
    "fit_minmax", "forward", "forward_instrumented", "grad_check",
    "haversine_km", "init_params", "initial_bearing_deg", "load_dataset",
    "load_model", "lstm_cell_forward", "make_tracks", "mc_predict", "mse",
    "ones_masks", "param_blocks", "parse_track_csv", "sample_masks",
    "save_dataset", "save_model", "shuffle_split", "tracks_to_csv_text",
    "train", "z_for_level",
]
