"""Simulate and predict how long quantum states survive in qubit and qudit memories."""

from qmemsim.analytic import moments, ratio_first_order, ratio_second_order
from qmemsim.integrator import IntegratorConfig
from qmemsim.noise import Lindbladian, NoiseModel
from qmemsim.propagate import evolve, evolve_nh, time_to_fidelity
from qmemsim.states import EncodingMap, StateVector

__version__ = "0.1.0"

__all__ = [
    "EncodingMap",
    "IntegratorConfig",
    "Lindbladian",
    "NoiseModel",
    "StateVector",
    "evolve",
    "evolve_nh",
    "moments",
    "ratio_first_order",
    "ratio_second_order",
    "time_to_fidelity",
]
