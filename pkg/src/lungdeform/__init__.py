"""Landmark-based estimation of the deflated (pneumothorax-state) lung
surface with per-vertex Gaussian kernel ridge regression, plus affine and
thin-plate-spline baselines, evaluation metrics, measurement-error
sensitivity analysis, and a synthetic cohort generator."""

from ._kernels import BACKEND
from .baselines import AffineTransform, TpsWarp, apply_affine, apply_tps, fit_affine, fit_tps
from .dataset import (
    CaseRecord,
    FeatureSample,
    augment_midpoint,
    build_dataset,
    build_features,
    load_manifest,
    reconstruct_positions,
    save_manifest,
    split_leave_one_out,
)
from .krr import (
    KernelHyperparams,
    KernelModel,
    build_kernel_matrix,
    fit,
    gaussian_kernel,
    grid_search,
    load_model,
    predict,
    predict_batch,
    save_model,
)
from .landmarks import LandmarkConfig, place_contour_landmarks, select_landmarks
from .mesh import Mesh, VoxelGrid, centroid, load_ply, mesh_volume, save_ply, voxelize
from .metrics import EvaluationReport, dsc, hausdorff, rmse
from .sensitivity import SensitivityReport, lambda_statistics, prediction_jacobian
from .synthgen import GeneratorParams, generate_case, generate_cohort

__version__ = "0.1.0"
