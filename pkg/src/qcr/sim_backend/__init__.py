from .rng import RngStream, mix64, rng_next_unit, shot_seed
from .shots import MeasurementEvent, ShotContext, execute, new_context, run_shot
from .statevector import (
    MAX_QUBITS,
    StateVector,
    apply_gate,
    expectation,
    force_measure,
    init_state,
    measure,
    reset,
)

__all__ = [
    "MAX_QUBITS", "MeasurementEvent", "RngStream", "ShotContext", "StateVector",
    "apply_gate", "execute", "expectation", "force_measure", "init_state", "measure",
    "mix64", "new_context", "reset", "rng_next_unit", "run_shot", "shot_seed",
]
