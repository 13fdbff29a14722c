"""Butterfly velocity of the anisotropic XY chain, analytically and via a teleportation OTOC protocol."""

from xy_butterfly.analytic import butterfly_velocity, dispersion, group_velocity, vb_sweep
from xy_butterfly.butterfly import fit_velocity, run_pipeline, spreading_time
from xy_butterfly.model import ModelParams, build_xy_hamiltonian, exact_evolution, pauli_at
from xy_butterfly.rtr import (
    GateSequence,
    RtrTimeCompiler,
    TrustRegionConfig,
    brickwall_expand,
    normalized_error,
    rtr_compile,
    trotter_compile,
)
from xy_butterfly.sim import NoiseSpec, StateVector, prepare_yky_input
from xy_butterfly.yky import ProtocolSpec, averaged_otoc_oracle, otoc_surface, yky_run

__version__ = "0.1.0"

__all__ = [
    "GateSequence",
    "ModelParams",
    "NoiseSpec",
    "ProtocolSpec",
    "RtrTimeCompiler",
    "StateVector",
    "TrustRegionConfig",
    "averaged_otoc_oracle",
    "brickwall_expand",
    "build_xy_hamiltonian",
    "butterfly_velocity",
    "dispersion",
    "exact_evolution",
    "fit_velocity",
    "group_velocity",
    "normalized_error",
    "otoc_surface",
    "pauli_at",
    "prepare_yky_input",
    "rtr_compile",
    "run_pipeline",
    "spreading_time",
    "trotter_compile",
    "vb_sweep",
    "yky_run",
]
