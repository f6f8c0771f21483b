"""Modeling toolkit for nanowire-superinductance fluxonium circuits."""

__version__ = "0.1.0"

from .circuit import (  # noqa: E402
    HamiltonianMatrix,
    ResonatorParams,
    SingleModeParams,
    TwoModeParams,
    build_single_mode_hamiltonian,
    build_two_mode_hamiltonian,
    couple_resonator,
)
from .errors import AssignmentError, ConvergenceError, FluxoniumError, ParameterError  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .spectra import (  # noqa: E402
    LabeledSpectrum,
    StateLabel,
    TransitionRecord,
    flux_sweep,
    label_states,
    sideband_lines,
    solve,
    transition_catalog,
)
from .nanowire import (  # noqa: E402
    CircuitTopology,
    NanowireGeometry,
    build_ladder,
    kinetic_inductance,
    normal_modes,
    reduce_to_modes,
    reduce_topology,
)
from .loss import LossModel, fit_quality_factors, t1_curve  # noqa: E402
from .dynamics import (  # noqa: E402
    CollapseOp,
    DensityState,
    DrivePlan,
    DriveTone,
    LevelSystem,
    PopulationMap,
    PulseSpec,
    collapse_from_loss,
    drive_map,
    effective_hamiltonian,
    evolve,
    pulse_sequence_t1,
    steady_state,
)
from .fitting import (  # noqa: E402
    FitReport,
    SpectroscopyDataset,
    SpectroscopyPoint,
    fit_single_mode,
    fit_two_mode,
    synthesize_spectroscopy,
)

__all__ = [name for name in dir() if not name.startswith("_")]
