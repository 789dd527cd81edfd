"""Classical trajectory Monte Carlo of atom transfer between crossed dipole-trap beams."""

__version__ = "0.1.0"

from .potential import (  # noqa: E402
    Axis,
    BeamGeometry,
    PotentialTopology,
    TopologyKind,
    TrapConfiguration,
    analyze_topology,
    beam_gradient,
    beam_potential,
    radial_trap_frequency,
    total_gradient,
    total_potential,
    vertical_profile,
)
from .dynamics import (  # noqa: E402
    IntegratorParams,
    ParticleState,
    Termination,
    TrajectoryReport,
    propagate,
    step,
    total_energy,
)
from .events import (  # noqa: E402
    Region,
    TransitRecord,
    TransitTracker,
    classify_region,
    transfer_probability,
)
from .ensemble import (  # noqa: E402
    EfficiencyCurve,
    SamplerParams,
    ThermalParams,
    TransferHistogram,
    run_sweep,
    run_transits,
    sample_initial_state,
    thermal_efficiency,
    thermal_weight,
)
