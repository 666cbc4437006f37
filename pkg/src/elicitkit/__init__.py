"""elicitkit: nondistortionary belief elicitation for decision problems.

Build a decision problem, attach the question you want answered, and the
package tells you whether that question can be paid for without bending
the agent's choice of action; when it can, it constructs the payment
scheme and verifies it behaviorally over the belief simplex.
"""

from __future__ import annotations

from .alignment import (
    ALIGN_RTOL,
    AlignmentCertificate,
    PairwiseAlignment,
    PiecewiseCertificate,
    Verdict,
    Violation,
    WeightedAlignmentCertificate,
    alignment_on_set,
    decide_incentivizable,
    pairwise_alignment,
    payoff_delta,
    piecewise_alignment,
    project_zero_sum,
    questions_equivalent,
    reconstruct_question,
    trivial_dependence,
    weighted_alignment,
)
from .cli import main
from .geometry import (
    AdjacencyEdge,
    AdjacencyGraph,
    AdjacencyResult,
    Belief,
    CycleRichResult,
    CycleSet,
    GraphClass,
    SplittingCollection,
    adjacency_graph,
    adjacency_test,
    classify_graph,
    cycle_rich,
    enumerate_cycles,
    internal_independence,
    optimal_actions,
    splitting_collection,
)
from .model import (
    BUNDLE_SCHEMA,
    GENERATORS,
    BundleFormatError,
    DecisionProblem,
    ElicitkitError,
    ProblemBundle,
    ProductStructure,
    QuestionProfile,
    TooLargeError,
    ValidationReport,
    build_question,
    bundle_from_dict,
    bundle_to_dict,
    canonical_dumps,
    dumps_bundle,
    expand_product,
    load_bundle,
    loads_bundle,
    make_close_guess,
    make_cycle_rich_safe,
    make_mc_test,
    make_quadratic_loss,
    make_star,
    make_state_matching,
    save_bundle,
    validate_problem,
)
from .synth import (
    MECHANISM_SCHEMA,
    ElicitationMethod,
    EvalResult,
    LotteryForm,
    MechanismFormatError,
    SynthesisError,
    UnsupportedProvenanceError,
    dumps_method,
    eval_method,
    load_method,
    loads_method,
    lottery_form,
    method_from_dict,
    method_to_dict,
    save_method,
    synth_aligned,
    synth_piecewise,
    synth_product,
    synthesize,
)
from .verify import (
    CrossCheckRecord,
    GridSpec,
    VerificationReport,
    Witness,
    belief_grid,
    boundary_beliefs,
    dirichlet_sample,
    expected_payoff,
    find_distortion_witness,
    make_naive_bdm,
    make_quadratic_control,
    oracle_cross_check,
    value_of_information,
    verify_incentivizability,
)

__version__ = "0.1.0"

__all__ = [
    "ALIGN_RTOL",
    "BUNDLE_SCHEMA",
    "GENERATORS",
    "MECHANISM_SCHEMA",
    "AdjacencyEdge",
    "AdjacencyGraph",
    "AdjacencyResult",
    "AlignmentCertificate",
    "Belief",
    "BundleFormatError",
    "CrossCheckRecord",
    "CycleRichResult",
    "CycleSet",
    "DecisionProblem",
    "ElicitationMethod",
    "ElicitkitError",
    "EvalResult",
    "GraphClass",
    "GridSpec",
    "LotteryForm",
    "MechanismFormatError",
    "PairwiseAlignment",
    "PiecewiseCertificate",
    "ProblemBundle",
    "ProductStructure",
    "QuestionProfile",
    "SplittingCollection",
    "SynthesisError",
    "TooLargeError",
    "UnsupportedProvenanceError",
    "ValidationReport",
    "Verdict",
    "VerificationReport",
    "Violation",
    "WeightedAlignmentCertificate",
    "Witness",
    "adjacency_graph",
    "adjacency_test",
    "alignment_on_set",
    "belief_grid",
    "boundary_beliefs",
    "build_question",
    "bundle_from_dict",
    "bundle_to_dict",
    "canonical_dumps",
    "classify_graph",
    "cycle_rich",
    "decide_incentivizable",
    "dirichlet_sample",
    "dumps_bundle",
    "dumps_method",
    "enumerate_cycles",
    "eval_method",
    "expand_product",
    "expected_payoff",
    "find_distortion_witness",
    "internal_independence",
    "load_bundle",
    "load_method",
    "loads_bundle",
    "loads_method",
    "lottery_form",
    "main",
    "make_close_guess",
    "make_cycle_rich_safe",
    "make_mc_test",
    "make_naive_bdm",
    "make_quadratic_control",
    "make_quadratic_loss",
    "make_star",
    "make_state_matching",
    "method_from_dict",
    "method_to_dict",
    "optimal_actions",
    "oracle_cross_check",
    "pairwise_alignment",
    "payoff_delta",
    "piecewise_alignment",
    "project_zero_sum",
    "questions_equivalent",
    "reconstruct_question",
    "save_bundle",
    "save_method",
    "splitting_collection",
    "synth_aligned",
    "synth_piecewise",
    "synth_product",
    "synthesize",
    "trivial_dependence",
    "validate_problem",
    "value_of_information",
    "verify_incentivizability",
    "weighted_alignment",
]
