"""Exception hierarchy shared across the package.

Three broad families matter for the CLI exit-code mapping: input errors
(bad files, bad arguments), infeasibility errors (valid input, impossible
request), and internal invariant violations.
"""


class GeoclrError(Exception):
    """Base class for all package errors."""


class InputError(GeoclrError):
    """Invalid input data or arguments (CLI exit code 1)."""


class InfeasibleError(GeoclrError):
    """Valid input for which the requested output cannot exist (exit code 2)."""


class InternalError(GeoclrError):
    """An internal invariant was violated (exit code 3)."""


# --- ingest ---------------------------------------------------------------

class MalformedRecord(InputError):
    def __init__(self, line_no: int, detail: str):
        self.line_no = line_no
        self.detail = detail
        super().__init__(f"line {line_no}: {detail}")


class DuplicateFrame(InputError):
    def __init__(self, log_id: str, frame_id: int):
        self.log_id = log_id
        self.frame_id = frame_id
        super().__init__(f"duplicate pose key ({log_id}, {frame_id})")


class NonFiniteValue(InputError):
    def __init__(self, line_no: int, field: str):
        self.line_no = line_no
        self.field = field
        super().__init__(f"line {line_no}: non-finite value in field {field!r}")


class EmptyFile(InputError):
    pass


# --- geometry -------------------------------------------------------------

class DegenerateInput(InputError):
    """Polygon with fewer than 3 vertices or near-zero area."""


# --- pose graph -----------------------------------------------------------

class InvalidRange(InputError):
    """IoU bounds with min > max."""


class UnknownPose(InputError):
    """Pose key not present in the graph."""


class VersionMismatch(InputError):
    """Graph or manifest file with an unsupported format version."""


class CorruptFile(InputError):
    """Truncated or structurally invalid artifact file."""


# --- splits ---------------------------------------------------------------

class InsufficientData(InfeasibleError):
    """The single-traversal pool cannot satisfy the requested fractions."""


# --- correspondence -------------------------------------------------------

class IndexOutOfRange(InputError):
    """Grid cell index outside the configured grid."""


class NoOverlap(InfeasibleError):
    """The two footprints do not intersect."""


class Exhausted(InfeasibleError):
    """Not enough candidate cells to satisfy the requested sample counts."""


# --- contrastive ----------------------------------------------------------

class ShapeMismatch(InputError):
    """Embedding matrices with inconsistent shapes."""


class NonPositiveTau(InputError):
    """Temperature must be strictly positive."""


class Divergence(InternalError):
    """Training loss became non-finite."""


# --- synth ----------------------------------------------------------------

class InfeasiblePlan(InfeasibleError):
    """Overlap plan that the scene generator cannot realize."""
