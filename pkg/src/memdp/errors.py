"""Exception types shared across the package.

Model problems derive from ``ModelError`` (CLI exit code 2); resource limits
derive from ``BudgetError`` (CLI exit code 3).
"""


class ModelError(Exception):
    """Invalid model description or an operation applied to an unsuitable model."""

    code = "model_error"


class InvalidModel(ModelError):
    code = "invalid_model"


class DistributionNotNormalized(ModelError):
    code = "distribution_not_normalized"

    def __init__(self, env, state, action, total):
        super().__init__(f"distribution of ({state}, {action}) in environment {env} sums to {total}, not 1")
        self.env, self.state, self.action, self.total = env, state, action, total


class EmptyActionSet(ModelError):
    code = "empty_action_set"

    def __init__(self, state):
        super().__init__(f"state {state} has no enabled action")
        self.state = state


class UnknownState(ModelError):
    code = "unknown_state"

    def __init__(self, name, where=""):
        super().__init__(f"unknown state {name!r}" + (f" in {where}" if where else ""))
        self.name = name


class UnknownAction(ModelError):
    code = "unknown_action"

    def __init__(self, name, where=""):
        super().__init__(f"unknown action {name!r}" + (f" in {where}" if where else ""))
        self.name = name


class MissingTransition(ModelError):
    code = "missing_transition"

    def __init__(self, env, state, action):
        super().__init__(f"environment {env} has no distribution for enabled pair ({state}, {action})")
        self.env, self.state, self.action = env, state, action


class NegativeProbability(ModelError):
    code = "negative_probability"

    def __init__(self, env, state, action, target, value):
        super().__init__(f"negative probability {value} on ({state}, {action}, {target}) in environment {env}")
        self.env, self.state, self.action, self.target, self.value = env, state, action, target, value


class NotClosed(ModelError):
    code = "not_closed"

    def __init__(self, state):
        super().__init__(f"state {state} has no action staying inside the requested set")
        self.state = state


class RevealedFormRequired(ModelError):
    code = "revealed_form_required"


class NoDistinguishingTransition(ModelError):
    code = "no_distinguishing_transition"


class NotLimitSureWinning(ModelError):
    code = "not_limit_sure_winning"

    def __init__(self, state):
        super().__init__(f"state {state} is not limit-sure winning")
        self.state = state


class SingularSystem(ArithmeticError):
    """The linear system has no unique solution (usually a wrong zero-set)."""

    code = "singular_system"


class BudgetError(Exception):
    code = "budget_error"


class MemoryBudgetExceeded(BudgetError):
    code = "memory_budget_exceeded"

    def __init__(self, limit):
        super().__init__(f"strategy needs more than {limit} memory states")
        self.limit = limit


class NotAlmostSureWinning(ModelError):
    code = "not_almost_sure_winning"

    def __init__(self, state):
        super().__init__(f"state {state} is not almost-sure winning")
        self.state = state
