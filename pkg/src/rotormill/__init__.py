"""Two-qubit / quantum-rotor thermal machine: master equations, steady states
and thermodynamic bookkeeping."""

from .collision import CollisionConfig, bath_oscillator_state, collision_step, run_collisions
from .dynamics import evolve, steady_state, trace_distance
from .gme import assemble_global_liouvillian
from .liouvillian import assemble_local_liouvillian
from .model import Params, ParamsError, build_hamiltonians, gibbs_state, product_gibbs
from .operators import QOperator, SpaceSpec, make_space, partial_trace
from .rectify import angular_rect_point, gamma_alpha, heat_rect_point, swap_temperatures, sweep_chi
from .thermo import rotor_powers, subsystem_ergotropies, thermo_report

__all__ = [
    "CollisionConfig", "bath_oscillator_state", "collision_step", "run_collisions",
    "evolve", "steady_state", "trace_distance", "assemble_global_liouvillian",
    "assemble_local_liouvillian", "Params", "ParamsError", "build_hamiltonians",
    "gibbs_state", "product_gibbs", "QOperator", "SpaceSpec", "make_space",
    "partial_trace", "angular_rect_point", "gamma_alpha", "heat_rect_point",
    "swap_temperatures", "sweep_chi", "rotor_powers", "subsystem_ergotropies",
    "thermo_report",
]
