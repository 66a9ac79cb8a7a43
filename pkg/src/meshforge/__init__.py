"""Simulation and programming toolkit for feedforward photonic meshes.

Typical use::

    from meshforge import rectangular, decompose_rectangular, haar_unitary
    from meshforge import PhysicalMesh, nullification_set, parallel_nullify

    topo = rectangular(8)
    params = decompose_rectangular(haar_unitary(8, rng), topo)
    chip = PhysicalMesh.randomized(topo, seed=1)
    report = parallel_nullify(chip, nullification_set(topo, params))
"""

__version__ = "0.1.0"

from .calibration import CalibrationModel, flash, parallel_calibrate
from .decompose import decompose_rectangular, haar_unitary
from .errors import (
    CycleError,
    DanglingLinkError,
    DegenerateInputError,
    FitError,
    MeshforgeError,
    NetlistError,
    NonLinearizableError,
    NonNullifiableError,
    NonUnitaryError,
    OrderError,
    RangeError,
)
from .hardware import DetectorReading, ErrorModel, PhysicalMesh
from .mesh import (
    DIFFERENTIAL,
    STANDARD,
    TDC,
    MeshParams,
    NodePhases,
    NodeVariant,
    column_matrix,
    embed_node,
    mesh_matrix,
    node_matrix,
    power,
    propagate,
)
from .metrics import aligned_fidelity, fidelity, phase_aligned_distance
from .nullification import (
    NullificationSet,
    nullification_set,
    nullification_vector,
    nullify_node_closed_form,
    sweep_nullify,
    target_vector,
)
from .program import (
    ColumnProgrammer,
    Interstitial,
    ProgramReport,
    align_output_phases,
    parallel_nullify,
    program_cascade,
)
from .topology import (
    ColumnedTopology,
    Coupling,
    Netlist,
    butterfly,
    compactify,
    node_count,
    optical_depth,
    rectangular,
    triangular,
)
