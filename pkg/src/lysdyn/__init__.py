"""Finite-precision topological dynamics for Li-Yorke pair experiments."""
from .cells import ArcCell, CylinderCell
from .core import (
    CircleAngle,
    DepthExhausted,
    DynamicsError,
    FiberedPoint,
    KindMismatch,
    OdometerDigits,
    PoisonedPoint,
    ProductPoint,
    SymbolicWord,
    System,
    UndecidableCell,
    distance,
    first_disagreement,
    pair_orbit_distances,
    step,
)
from .skew import (
    CocycleElement,
    FiniteCocycle,
    OdometerFiberSelector,
    OdometerSkew,
    ProductSystem,
    SkewProduct,
    cocycle_compose,
    minimal_fiber_orbits,
    odometer_fiber_step,
    skew_step,
)
from .systems import (
    ChaconSubshift,
    FullShift,
    IrrationalRotation,
    Lemma7Extension,
    Odometer,
    make_system,
)

__version__ = "0.1.0"
