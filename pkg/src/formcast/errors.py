"""Exception types shared across the package."""


class FormcastError(Exception):
    """Base class for all package-specific errors."""


# --- STL / geometry ---------------------------------------------------------

class TruncatedFile(FormcastError):
    """Binary STL byte length is inconsistent with the declared triangle count."""


class MalformedAscii(FormcastError):
    """ASCII STL token stream violates the facet grammar."""


class EmptyModel(FormcastError):
    """STL document contains zero triangles."""


class InvalidDimensions(FormcastError):
    """Sheet grid or footprint parameters are out of range."""


# --- simulation -------------------------------------------------------------

class ZeroRestLength(FormcastError):
    """A spring edge was given a non-positive rest length."""


class MoldTallerThanClampTravel(FormcastError):
    """The mold top sits above the clamp start height; the press cannot clear it."""


# --- circuit ----------------------------------------------------------------

class DisconnectedPick(FormcastError):
    """No grid path exists between two picked vertices."""


class WidthTooSmall(FormcastError):
    """Trace width below the minimum printable width."""


class NotConnected(FormcastError):
    """Pad faces do not form a 4-connected region."""


class BuriedExposure(FormcastError):
    """Pad marked exposed on a layer that reaches neither outer surface."""


# --- flatten / export -------------------------------------------------------

class DesignRuleViolationsPresent(FormcastError):
    """Flattening refused because the design is not rule-clean."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"{len(self.violations)} design rule violation(s) present")


class NonManifoldOutput(FormcastError):
    """Solid generation produced an internally inconsistent mesh."""


# --- analysis ---------------------------------------------------------------

class MissingStretch(FormcastError):
    """A trace edge has no stretch value in the supplied field."""


class SimulationFailure(FormcastError):
    """A simulation run inside calibration raised an error."""
