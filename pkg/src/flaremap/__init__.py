"""Shape-graph analysis of entity count panels.

Transforms sparse entity x period x category count panels into point clouds,
builds Mapper-style shape graphs under configurable metrics, covers, and
clustering, measures per-entity flares (signature, length, Type 0-3), and
provides global-clustering baselines plus outcome regressions.
"""

from .baselines import ClusteringResult, ClusterTable, cluster_table, kmeans, kmedoids
from .errors import (
    CacheError,
    FlaremapError,
    InternalInvariantError,
    MetricDomainError,
    ParseError,
    PipelineStageError,
    RankDeficiencyError,
    UnknownEntityError,
    ValidationError,
    ZeroVarianceError,
)
from .flares import (
    INFINITE,
    EntitySubgraph,
    FlareCensus,
    FlareReport,
    FlareSignature,
    FlareType,
    MemberGraph,
    entity_subgraph,
    exit_distances,
    flare_census,
    flare_report,
    flare_signature,
)
from .geometry import (
    DissimilarityMatrix,
    FilterImage,
    Metric,
    MetricKind,
    dissimilarity_matrix,
    distance,
    mahalanobis_whitener,
    pca_filter,
    read_matrix_cache,
    write_matrix_cache,
)
from .mapper import (
    CoverElement,
    CoverSpec,
    MapperGraph,
    MapperNode,
    assemble_graph,
    build_cover,
    local_cluster,
    run_mapper,
)
from .panel import (
    ColumnSchema,
    DropRecord,
    PanelDataset,
    PointCloud,
    Rescale,
    TransformSpec,
    ingest_csv,
    moving_window,
    rescale,
    transform,
    write_panel_csv,
)
from .pipeline import RunConfig, compare_runs, run_pipeline
from .regression import (
    FirmOutcome,
    FTestResult,
    RegressionResult,
    f_statistic_from_r2,
    f_test_restriction,
    firm_outcomes,
    flare_regression,
    load_outcomes_csv,
    ols,
)

__version__ = "0.1.0"
