"""Exception hierarchy shared by all meshforge modules."""


class MeshforgeError(Exception):
    """Base class for domain errors (mapped to exit code 2 by the CLI)."""


class NetlistError(MeshforgeError, ValueError):
    """Structurally invalid netlist."""


class DanglingLinkError(NetlistError):
    """A link lacks exactly one producer and exactly one consumer."""

    def __init__(self, message, links=()):
        super().__init__(message)
        self.links = list(links)


class CycleError(NetlistError):
    """The netlist is not feedforward: some node feeds back into itself."""

    def __init__(self, nodes):
        self.nodes = sorted(nodes, key=str)
        super().__init__(f"netlist contains a cycle through nodes {self.nodes}")


class NonUnitaryError(MeshforgeError, ValueError):
    def __init__(self, deviation):
        self.deviation = float(deviation)
        super().__init__(f"matrix is not unitary: ||U^H U - I||_F = {self.deviation:.3e}")


class DegenerateInputError(MeshforgeError, ValueError):
    """Both node inputs are zero, so no setting is singled out."""


class NonNullifiableError(MeshforgeError):
    """Bottom-port power could not be driven below tolerance.

    ``report`` holds the (possibly partial) :class:`ProgramReport`.
    """

    def __init__(self, message, report=None, column=None, nodes=(), residuals=()):
        super().__init__(message)
        self.report = report
        self.column = column
        self.nodes = list(nodes)
        self.residuals = list(residuals)


class OrderError(MeshforgeError):
    """A column was programmed before all of its predecessors."""


class NonLinearizableError(MeshforgeError):
    """An interstitial element cannot be placed in its linear regime."""


class FitError(MeshforgeError):
    """Calibration curve is non-monotone or fits poorly."""


class RangeError(MeshforgeError):
    """The drive range does not cover the required phase span."""
