"""Mixtures of Bernoulli/categorical distributions fitted through
finite-state ergodic mean field games.

The package provides the single-subsystem solver (`kernel`), the outer
fitting loop with its classical EM baseline (`mixture`), IDX ingestion and
synthetic sampling (`ingest`), clusterization scoring and exports (`report`),
and a command-line surface (`cli`).
"""

__version__ = "0.1.0"

from .core import (
    Dataset,
    MfgSolution,
    MixtureModel,
    load_model,
    save_model,
    validate_simplex,
    validate_stochastic,
)
from .ingest import (
    RawImageSet,
    filter_by_labels,
    load_idx_images,
    load_idx_labels,
    quantize,
    synth_generate,
    write_idx_images,
    write_idx_labels,
)
from .kernel import (
    CostSpec,
    SolverConfig,
    average_cost,
    average_cost_gradient,
    coupling_values,
    hjb_policy_step,
    row_nash_minimize,
    solve_hjb,
    solve_subsystem,
    stationary_distribution,
)
from .mixture import (
    FitConfig,
    FitResult,
    Responsibilities,
    em_baseline_fit,
    fit,
    log_likelihood,
    mfg_m_step,
    modified_log_likelihood,
    responsibilities,
    update_theta,
    update_weights,
)
from .report import (
    ClusterReport,
    align_clusters,
    aligned_confusion,
    cluster_report,
    confusion_matrix,
    export_histogram_csv,
    export_parameter_images,
)

__all__ = [
    "CostSpec",
    "ClusterReport",
    "Dataset",
    "FitConfig",
    "FitResult",
    "MfgSolution",
    "MixtureModel",
    "RawImageSet",
    "Responsibilities",
    "SolverConfig",
    "align_clusters",
    "aligned_confusion",
    "average_cost",
    "average_cost_gradient",
    "cluster_report",
    "confusion_matrix",
    "coupling_values",
    "em_baseline_fit",
    "export_histogram_csv",
    "export_parameter_images",
    "filter_by_labels",
    "fit",
    "hjb_policy_step",
    "load_idx_images",
    "load_idx_labels",
    "load_model",
    "log_likelihood",
    "mfg_m_step",
    "modified_log_likelihood",
    "quantize",
    "responsibilities",
    "row_nash_minimize",
    "save_model",
    "solve_hjb",
    "solve_subsystem",
    "stationary_distribution",
    "synth_generate",
    "update_theta",
    "update_weights",
    "validate_simplex",
    "validate_stochastic",
    "write_idx_images",
    "write_idx_labels",
]
