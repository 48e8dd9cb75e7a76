"""Resource-constrained project scheduling with discounted cash flows.

The package solves the max-NPV variant of RCPSP: every task carries a cash
flow (positive or negative) that is discounted by its completion time, and
the goal is to place all tasks inside a deadline window without exceeding
renewable resource capacities.

Solvers, from cheapest to most thorough:

* ``acs``       - a single ant colony building precedence-feasible
                  permutations that a forward/backward list scheduler decodes.
* ``paco``      - several colonies with pre-split RNG streams, run pooled or
                  with periodic best-solution exchange.
* ``merge``     - the outer loop: pool colony solutions, merge agreeing cells
                  of their binary encodings into groups, and re-optimize the
                  aggregated model exactly with the embedded branch-and-bound.
"""

from npvmerge.model import (
    Instance,
    InstanceError,
    PsplibParseError,
    Task,
    compute_deadline_and_discount,
    generate_cashflows,
    load_instance,
    parse_psplib,
    save_instance,
    topological_order,
    validate_instance,
)
from npvmerge.schedule import (
    DecodeError,
    FeasibilityReport,
    Schedule,
    check_feasible,
    decode,
    encode_binary,
    npv,
    permutation_from_schedule,
    resource_profile,
)
from npvmerge.acs import AcsParams, ColonyResult, run_colony
from npvmerge.paco import ColonyPool, run_paco, thread_cap
from npvmerge.merge import (
    MsParams,
    MsResult,
    Partition,
    RestrictedModel,
    SolutionPool,
    build_restricted,
    export_lp,
    full_split,
    ms_pacs,
    partition,
    random_split,
)
from npvmerge.bnb import SolveResult, solve_restricted

__version__ = "0.1.0"

__all__ = [
    "AcsParams",
    "ColonyPool",
    "ColonyResult",
    "DecodeError",
    "FeasibilityReport",
    "Instance",
    "InstanceError",
    "MsParams",
    "MsResult",
    "Partition",
    "PsplibParseError",
    "RestrictedModel",
    "Schedule",
    "SolutionPool",
    "SolveResult",
    "Task",
    "build_restricted",
    "check_feasible",
    "compute_deadline_and_discount",
    "decode",
    "encode_binary",
    "export_lp",
    "full_split",
    "generate_cashflows",
    "load_instance",
    "ms_pacs",
    "npv",
    "parse_psplib",
    "partition",
    "permutation_from_schedule",
    "random_split",
    "resource_profile",
    "run_colony",
    "run_paco",
    "save_instance",
    "solve_restricted",
    "thread_cap",
    "topological_order",
    "validate_instance",
]
