"""radpair: spin-selective radical-pair reaction dynamics.

Builds two-electron (plus nuclei) spin Hilbert spaces, integrates the
interpolated nonlinear master equation alongside the traditional
anticommutator kinetics, quantifies singlet-triplet coherence, and provides
a single-molecule quantum-trajectory Monte Carlo as an independent oracle.
"""

from .coherence import (
    CoherenceConfig,
    RhoBlocks,
    decompose,
    default_tau_window,
    p_coh,
    p_coh_averaged,
)
from .ensembles import MixtureRecord, ProperMixture, evolve_improper, evolve_proper
from .errors import ConfigError, InvariantViolation
from .evolve import (
    IntegratorConfig,
    OneStepReport,
    ReactionParams,
    SimulationRecord,
    integrate,
    one_step_comparison,
    rhs_kominis,
    rhs_nonreacting,
    rhs_traditional,
)
from .hamiltonian import (
    HamiltonianBlocks,
    HamiltonianSpec,
    HyperfineCoupling,
    block_decompose,
    build_hamiltonian,
)
from .spins import (
    DensityState,
    NuclearSpec,
    SpinSystem,
    electron_spin_ops,
    electron_state_vector,
    embed,
    named_state,
    nuclear_spin_ops,
    singlet_projector,
    spin_operators,
    triplet_projector,
)
from .trajectories import (
    EnsembleReport,
    MeanStateComparison,
    TrajectoryConfig,
    TrajectoryState,
    TrajectoryStatus,
    mean_state_vs_master,
    run_ensemble,
    trajectory_step,
)

__version__ = "0.1.0"

__all__ = [
    "CoherenceConfig",
    "ConfigError",
    "DensityState",
    "EnsembleReport",
    "HamiltonianBlocks",
    "HamiltonianSpec",
    "HyperfineCoupling",
    "IntegratorConfig",
    "InvariantViolation",
    "MeanStateComparison",
    "MixtureRecord",
    "NuclearSpec",
    "OneStepReport",
    "ProperMixture",
    "ReactionParams",
    "RhoBlocks",
    "SimulationRecord",
    "SpinSystem",
    "TrajectoryConfig",
    "TrajectoryState",
    "TrajectoryStatus",
    "block_decompose",
    "build_hamiltonian",
    "decompose",
    "default_tau_window",
    "electron_spin_ops",
    "electron_state_vector",
    "embed",
    "evolve_improper",
    "evolve_proper",
    "integrate",
    "mean_state_vs_master",
    "named_state",
    "nuclear_spin_ops",
    "one_step_comparison",
    "p_coh",
    "p_coh_averaged",
    "rhs_kominis",
    "rhs_nonreacting",
    "rhs_traditional",
    "run_ensemble",
    "singlet_projector",
    "spin_operators",
    "trajectory_step",
    "triplet_projector",
]
