"""dynrat: exact rationalizability tests for dynamic Bayesian choice.

Given a finite dynamic decision problem and observed behavior (one action
sequence, a joint action-state law, or an action-sequence law), decide whether
some prior and sequential information flow make the behavior optimal.  Every
answer ships with an independently checkable certificate: a dominating
deviation rule when the answer is no, an obedient triple when it is yes.
All arithmetic is exact.
"""

from .analysis import (
    IdentifiedSet,
    PiecewiseLinearFunction,
    identified_set,
    lambda_D_set,
    max_rationalizable_probability,
    risk_transform,
)
from .deviation import (
    DEFAULT_MAX_RULES,
    DeviationRule,
    PureDeviationRule,
    SizeGuardError,
    compose,
    dominates_joint,
    dominates_marginal,
    dominates_sequence,
    enumerate_pure_rules,
    identity_rule,
    improvement,
    is_adapted,
)
from .lp import (
    Constraint,
    DeviationPolytope,
    LinearProgram,
    LpSolution,
    check_solution,
    deviation_polytope_constraints,
    solve,
)
from .model import (
    PAD,
    ActionSequence,
    AffineExpr,
    DecisionProblem,
    JointDistribution,
    MarginalDistribution,
    ParseError,
    Rational,
    ValidationError,
    format_rational,
    instantiate,
    load_problem,
    lottery_utility,
    parse_rational,
    problem_from_dict,
    problem_to_dict,
    utility,
)
from .oracle import (
    InformationStructure,
    Strategy,
    brute_force_rationalizable_joint,
    optimal_value_dp,
    simulate,
    strategy_value,
    verify_obedient_optimality,
)
from .rationalize import (
    ApparentDominanceWitness,
    InternalInconsistencyError,
    ObedientTriple,
    Verdict,
    apparently_dominated,
    dominated_on_average,
    intermediately_dominated,
    max_positive_marginal,
    obedient_triple_from_joint,
    rationalize_sequence,
    rationalizing_joint,
    truly_dominated,
)

__version__ = "0.1.0"

__all__ = [
    "PAD",
    "ActionSequence",
    "AffineExpr",
    "ApparentDominanceWitness",
    "Constraint",
    "DEFAULT_MAX_RULES",
    "DecisionProblem",
    "DeviationPolytope",
    "DeviationRule",
    "IdentifiedSet",
    "InformationStructure",
    "InternalInconsistencyError",
    "JointDistribution",
    "LinearProgram",
    "LpSolution",
    "MarginalDistribution",
    "ObedientTriple",
    "ParseError",
    "PiecewiseLinearFunction",
    "PureDeviationRule",
    "Rational",
    "SizeGuardError",
    "Strategy",
    "ValidationError",
    "Verdict",
    "apparently_dominated",
    "brute_force_rationalizable_joint",
    "check_solution",
    "compose",
    "deviation_polytope_constraints",
    "dominated_on_average",
    "dominates_joint",
    "dominates_marginal",
    "dominates_sequence",
    "enumerate_pure_rules",
    "format_rational",
    "identified_set",
    "identity_rule",
    "improvement",
    "instantiate",
    "intermediately_dominated",
    "is_adapted",
    "lambda_D_set",
    "load_problem",
    "lottery_utility",
    "max_positive_marginal",
    "max_rationalizable_probability",
    "obedient_triple_from_joint",
    "optimal_value_dp",
    "parse_rational",
    "problem_from_dict",
    "problem_to_dict",
    "rationalize_sequence",
    "rationalizing_joint",
    "risk_transform",
    "simulate",
    "solve",
    "strategy_value",
    "truly_dominated",
    "utility",
    "verify_obedient_optimality",
]
