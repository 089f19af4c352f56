"""Limited-view thermoacoustic tomography toolkit.

Variable-speed geodesic geometry, detector-coverage decisions, acoustic
FDTD simulation, domain-of-dependence and unique-continuation set
construction with numerical verification, and Landweber reconstruction
from partial boundary traces.
"""

from .field import (
    BoundaryPatch,
    Bump,
    Disk,
    Ellipse,
    GridSpec,
    Phantom,
    Region,
    RoundedPolygon,
    SpeedField,
    constant_speed,
    layered_speed,
    make_patch,
    make_phantom,
    make_region,
    radial_speed,
    speed_from_values,
)
from .geodesic import (
    DistanceField,
    Polyline,
    curve_length,
    dijkstra_oracle,
    lipschitz_check,
    solve_eikonal,
)
from .coverage import CoverageReport, check_property_p, exterior_clearance, min_time
from .wave import (
    SimOptions,
    Trace,
    WaveRun,
    energy,
    even_extension,
    simulate,
    simulate_exterior,
    simulate_initial_state,
)
from .continuation import (
    CovectorSample,
    SpaceTimeSet,
    classify_surface_normal,
    domain_of_dependence,
    symbol,
    uc_cylinder_expand,
    uc_iterate,
    verify_dod,
)
from .inversion import (
    InversionRun,
    adjoint_operator,
    estimate_operator_norm,
    forward_operator,
    landweber,
)

__version__ = "0.1.0"
