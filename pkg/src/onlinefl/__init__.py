"""Online facility location: randomized and potential-based algorithms, arrival
models, hard instance families, an exact offline solver and a Monte Carlo harness."""

from .algorithms import OpeningRule, RunRecord, run_fotakis, run_rofl, subset_potential_argmax
from .arrival import (
    IID,
    Adversarial,
    PartialRandom,
    PartialRandomRandomAdv,
    UniformRandom,
    builtin_interleavers,
    make_order,
    register_interleaver,
)
from .harness import (
    ExperimentSpec,
    EstimateReport,
    bound_check,
    closed_form,
    estimate,
    instrument_analysis,
)
from .instances import (
    Instance,
    gen_clique,
    gen_fotakis,
    gen_star,
    gen_subset_iid,
    load_instance,
    save_instance,
)
from .kernels import BACKEND_NAME
from .metric import (
    EuclideanMetric,
    ExplicitMetric,
    HubMetric,
    SubsetPointsMetric,
    distance,
    nearest,
    validate,
)
from .offline import OfflineSolution, clusters_of, greedy_heuristic, solve_exact

__version__ = "0.1.0"
