"""Classical and robust archetype/archetypoid analysis.

Multivariate and functional (basis-expanded) data, squared and bisquare
losses, seeded simulation benchmarks, residual-based outlier detection
and a financial time-series pipeline, all behind one batch CLI.
"""

from .archetypes import (
    ArchetypalModel,
    FitOptions,
    compute_rss,
    elbow_scan,
    fit_aa,
    model_distance,
    model_from_json,
    model_to_json,
    suggest_elbow,
    write_model_json,
)
from .archetypoids import CandidateSets, candidate_sets, fit_ada
from .data import DataMatrix
from .detect import (
    DetectionMetrics,
    OutlierReport,
    inclusion_experiment,
    radab,
    radab_metrics_experiment,
    score,
)
from .errors import InputError, NumericError
from .fdbasis import (
    BasisSystem,
    FunctionalDataset,
    combine_variables,
    functional_fit,
    functional_residual_norms,
    functional_rss,
    gram_matrix,
    select_basis_count,
    smooth,
    standardize,
    unstandardize,
)
from .finance import (
    FeaturePanel,
    OhlcvPanel,
    aggregate_returns,
    build_features,
    build_functional_panel,
    filter_missing,
    load_panel,
    rolling_beta,
)
from .losses import (
    LossSpec,
    TuningPolicy,
    bisquare_loss,
    bisquare_weight,
    resolve_tuning,
)
from .nnls import SimplexLsProblem, batch_simplex_lstsq, solve_simplex_ls
from .robust import fit_robust_aa, fit_robust_ada
from .simgen import (
    ContaminatedSample,
    ContaminationSpec,
    WaveformSample,
    WaveformSpec,
    gen_contaminated,
    gen_waveform,
    waveform_components,
)
from .taxonomy import (
    ClusterAssignment,
    TaxonomyConfig,
    assign_clusters,
    export_network,
    sector_weights,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
