"""Zero-inflated Poisson tensor toolkit with smoothed low-rank structure."""

__version__ = "0.1.0"

from .basis import BasisMatrix, build_basis
from .detect_impute import DetectionResult, detect, expected_tensor, impute
from .fitting import (ClusterSolution, FitConfig, FitReport, extract_clusters,
                      fit, fit_pipeline)
from .init_schemes import (MomentInit, diag_weight_regression, init_scheme,
                           moments_init, multi_cluster_init)
from .model_core import LinkTensors, ModelParams, build_links, lambda_p_of, nll
from .sim_eval import (SimConfig, SimTruth, ari, detection_metrics, kmeans,
                       pca_project, rel_error, simulate)
from .tensor_ops import CountTensor
from .zip_dist import HurdleParams, ZipParams
