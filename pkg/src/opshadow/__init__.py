"""Simulation and estimation toolkit for operator-space entanglement of
small quantum channels, probed through randomized preparation and
measurement."""

__version__ = "0.1.0"

from .circuits import (
    CircuitSpec,
    CompiledChannel,
    NoiseParams,
    build_brickwork,
    build_ladder7,
    compile_channel,
    identity_channel,
    w_gate,
)
from .estimators import (
    DerivedEstimate,
    MomentEstimate,
    Region,
    RegionSpec,
    dk_weights,
    estimate_dk,
    estimate_moment,
    negativity_ratio,
    renyi_mi,
)
from .oracle import (
    OperatorStateBlock,
    SpreadingTable,
    dk_direct,
    exact_quantities,
    exact_reduced_operator_state,
    haar_baselines,
    recovery_fidelity,
    spreading_coefficients,
    variance_bounds,
)
from .paulis import PauliString
from .qsim import (
    DensityOperator,
    GateMatrix,
    KrausChannel,
    StateVector,
    apply_gate,
    evolve_density,
    partial_trace,
    partial_transpose,
    spectral_functionals,
)
from .runtime import (
    ShadowDataset,
    SnapshotRecord,
    calibrate_readout,
    mitigate_counts,
    run_protocol,
    sample_settings,
)
