"""Semantic-aware synthetic fog, fog density ranking and curriculum manifests."""
from .cmada import (
    CurriculumPlan,
    DatasetManifest,
    ManifestEntry,
    build_curriculum,
    build_mixed_manifest,
    generate_sweep,
    ingest_noisy_labels,
    select_light_subset,
)
from .config import ToolConfig, load_config
from .depth_completion import CompletionParams, complete_depth, complete_transmittance, fit_plane_ransac
from .dual_bilateral import FilterParams, filter_exact, filter_grid
from .evaluation import ConfusionMatrix, accumulate, mean_iou
from .fog_density import DensityModel, extract_features, fit_density_regressor, rank_dataset
from .fog_synthesis import FogConfig, beta_from_mor, mor_from_beta, simulate_scene, synthesize_fog
from .imaging import CITYSCAPES_CAMERA, MISSING, CameraModel

__version__ = "0.1.0"

__all__ = [
    "CITYSCAPES_CAMERA",
    "CameraModel",
    "CompletionParams",
    "ConfusionMatrix",
    "CurriculumPlan",
    "DatasetManifest",
    "DensityModel",
    "FilterParams",
    "FogConfig",
    "MISSING",
    "ManifestEntry",
    "ToolConfig",
    "accumulate",
    "beta_from_mor",
    "build_curriculum",
    "build_mixed_manifest",
    "complete_depth",
    "complete_transmittance",
    "extract_features",
    "filter_exact",
    "filter_grid",
    "fit_density_regressor",
    "fit_plane_ransac",
    "generate_sweep",
    "ingest_noisy_labels",
    "load_config",
    "mean_iou",
    "mor_from_beta",
    "rank_dataset",
    "select_light_subset",
    "simulate_scene",
    "synthesize_fog",
]
