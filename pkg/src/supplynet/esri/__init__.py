"""Economic systemic risk index (ESRI) engine."""
from .engine import (
    BACKEND,
    DEFAULT_EPS,
    DEFAULT_MAX_ITER,
    CascadeResult,
    EnsembleStats,
    EsriProfile,
    NonConvergenceError,
    ensemble_esri,
    esri_all,
    esri_for,
    get_kernel,
    prepare,
    run_cascade,
)
from .production import (
    ImpactMatrices,
    KernelArrays,
    ProductionSpec,
    build_impact_matrices,
    derive_production_spec,
)
