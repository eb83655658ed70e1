"""Exception and warning types shared across the toolkit."""


class GemKitError(Exception):
    """Base class for all gemkit errors."""


# --- gradient rules ---

class ZeroGradient(GemKitError):
    """A gradient's norm is at or below the degeneracy floor.

    Callers should skip the projection branch and take a plain step
    (or no step): a vanishing reference gradient carries no constraint
    information.
    """


class InvalidEpsilon(GemKitError, ValueError):
    """Soft-constraint margin outside [0, 1]."""


class SolverNotConverged(GemKitError):
    """The dual QP solver hit its iteration cap.

    Carries the final KKT residual so callers can decide whether the
    approximate solution is usable.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class ZeroUpdateWarning(UserWarning):
    """Exactly opposed unit gradients averaged to the zero vector.

    Non-fatal: the zero vector is the formula's true output, the caller
    just skips the optimizer step.
    """


# --- episodic memory ---

class BudgetZero(GemKitError, ValueError):
    """Per-class memory budget below 1."""


class EmptyMemory(GemKitError):
    """No previous task has stored samples; take an unconstrained step."""


# --- model ---

class UnknownTask(GemKitError, ValueError):
    """Task id outside the model's head range."""


class EmptyBatch(GemKitError, ValueError):
    """Loss/gradient requested over an empty batch."""


class EmptyDataset(GemKitError, ValueError):
    """Evaluation requested over an empty dataset."""


class ShapeMismatch(GemKitError, ValueError):
    """Flat vector length does not match the parameter count."""


# --- task streams ---

class InsufficientClasses(GemKitError, ValueError):
    """Disjoint split needs tasks * classes_per_task <= total classes."""


class BadMagic(GemKitError, ValueError):
    """IDX file magic number not recognized."""


class TruncatedFile(GemKitError):
    """IDX or snapshot payload shorter than its header promises."""


# --- metrics ---

class RowUnpopulated(GemKitError):
    """Accuracy-matrix row requested before its task was evaluated."""


class TooFewTasks(GemKitError, ValueError):
    """Metric needs at least two tasks."""


class CurveTooShort(GemKitError, ValueError):
    """Learning curve has fewer entries than the requested horizon."""


class MissingBaseline(GemKitError, ValueError):
    """Forward transfer needs the pre-training accuracy baseline."""


# --- epsilon search ---

class GridTooSmall(GemKitError, ValueError):
    """Search grid needs at least 3 points."""


class MissingResults(GemKitError):
    """Refinement requested before every grid point has a score."""


# --- config / harness ---

class ConfigError(GemKitError, ValueError):
    """Experiment config failed validation."""
