"""Solvers for multiple-environment Markov decision processes.

Almost-sure and limit-sure parity regions with witness strategies, the
purge reduction and a capped-memory gap solver, plus exact evaluation and
seeded simulation of finite-memory strategies.
"""

from .almost_sure import (
    AlmostSureSolver,
    KnowledgeTransition,
    RevealedModel,
    as_parity,
    as_safety,
    revealing_transitions,
    synthesize_as_strategy,
    to_revealed_form,
)
from .bounds import ln_upper, sample_count
from .errors import (
    BudgetError,
    MemoryBudgetExceeded,
    ModelError,
    NoDistinguishingTransition,
    NotAlmostSureWinning,
    NotLimitSureWinning,
    SingularSystem,
)
from .evaluate import EvalResult, evaluate_exact, simulate
from .gap import (
    ConstraintSystem,
    NoWithinBudget,
    Yes,
    build_gap_constraints,
    evaluate_constraints_for_fixed_p,
    p_strategy_automaton,
    solve_gap,
)
from .graph import EndComponent, MemorylessStrategy, almost_sure_mdp, ec_is_winning, mec_decomposition
from .limit_sure import (
    DistinguishingPartition,
    LimitSureSolver,
    SamplingPlan,
    common_ecs_revealed,
    distinguishing_partition,
    ls_parity,
    synthesize_ls_strategy,
)
from .model import (
    MEMDP,
    EnvSet,
    Parity,
    Reach,
    Region,
    Safe,
    dedup_environments,
    encode_objective,
    restrict,
    union_mdp,
    validate,
)
from .quantitative import PurgeResult, SynthesisConstants, classify_mcec, mcecs_general, memory_bound, purge
from .strategy import FactoredStrategy, StrategyAutomaton, expand

__version__ = "0.1.0"
