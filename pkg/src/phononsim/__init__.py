"""Time-bin simulator for itinerant phonons in a two-node surface-acoustic-wave network."""
from .envelope import Envelope, SpectralAmplitude, TimeGrid, delay, make_sech, overlap, to_envelope, to_spectrum
from .lattice import FewExcState, NodeParams, Topology, TraceRecord, build, evolve, lattice_scatter
from .pulse import (CouplerSchedule, ModulationDrive, bessel_balance_ratio, catch_schedule,
                    emission_schedule, ladder_coefficients, modulation_for)
from .readout import ConfusionMatrix, Metrics
from .scatter import ScatterParams, detuning_sweep, reflection_coefficient, scattering_overlap
from .scenarios import SCENARIOS, ScenarioConfig, ScenarioResult, run

__version__ = "0.1.0"
__all__ = [
    "Envelope", "SpectralAmplitude", "TimeGrid", "delay", "make_sech", "overlap", "to_envelope", "to_spectrum",
    "FewExcState", "NodeParams", "Topology", "TraceRecord", "build", "evolve", "lattice_scatter",
    "CouplerSchedule", "ModulationDrive", "bessel_balance_ratio", "catch_schedule", "emission_schedule",
    "ladder_coefficients", "modulation_for", "ConfusionMatrix", "Metrics",
    "ScatterParams", "detuning_sweep", "reflection_coefficient", "scattering_overlap",
    "SCENARIOS", "ScenarioConfig", "ScenarioResult", "run",
]
