"""tailprune: weighted subset selection for long-tailed embedding datasets.

The pipeline: generate or load an embedding dataset, score samples,
allocate per-class budgets, select a weighted coreset (optionally seeded
per class), reweigh to a target prior, and train or distill on the
result, with diagnostics at every stage.
"""

from .seeding import derive_seed
from .exceptions import (
    BadMagicError,
    DatasetFormatError,
    DivergenceError,
    InfeasibleError,
    LabelRangeError,
    NonFiniteValueError,
    StudentSaturationError,
    TruncatedPayloadError,
)
from .dataset import (
    EmbeddingDataset,
    LongTailSpec,
    PriorVector,
    empirical_prior,
    generate_long_tail,
    load_dataset,
    save_dataset,
)
from .signals import KernelMatrix, ScoreKind, median_bandwidth, rbf_kernel, score_scalar
from .selectors import (
    Method,
    Selection,
    SelectorSpec,
    facility_location_value,
    load_selection,
    save_selection,
    select,
    stratified_select,
)
from .allocation import (
    AllocationPlan,
    RateModel,
    allocation_objective,
    allocation_oracle,
    apply_floor,
    continuous_allocation,
    estimate_complexities,
    floor_gain,
    optimal_allocation,
)
from .sgs import SgsConfig, SweepRow, sgs_select, sweep_k
from .distill import (
    HeadFit,
    KDLossValue,
    KdRobustnessReport,
    LinearHead,
    RebalanceKind,
    RebalancePolicy,
    RKDGradients,
    RKDLoss,
    SoftTargets,
    calibrate_head,
    combined_distill_loss,
    kd_loss,
    kd_robustness_check,
    load_head,
    rebalance_weights,
    rkd_grad,
    rkd_loss,
    save_head,
    weighted_label_mix,
)
from .diagnostics import (
    AuditReport,
    QuadLabReport,
    QuadLabSpec,
    eval_oa_macc,
    induced_prior,
    make_threshold_lab,
    prediction_counts,
    probe_eval,
    quad_lab,
    reweigh_to_prior,
    signal_audit,
    term_b_bound,
    tv_distance,
)

__version__ = "0.1.0"
