"""Periodic motions of an inverted pendulum with a vibrating pivot and a horizontal force.

Submodules
----------
model      parameters, force models, vector fields, hypothesis checks
integrate  adaptive Runge-Kutta integration with dense output and events
orbits     periodic orbits by shooting, Floquet multipliers, basin probes
sections   stroboscopic sections and map fixed points
design     forces that realise a prescribed motion
cli        the ``kwlab`` command
"""

from .design import (DesignedForce, PreconditionError, PrescribedMotion, required_force,
                     verify_design)
from .integrate import (BlowUpError, DivergenceError, EventSpec, IntegrationError,
                        IntegratorConfig, Trajectory, fall_events, flow_map, integrate)
from .model import (CriticalPoints, ForceModel, GeneralState, Harmonic, Params, State,
                    Tabulated, Zero, apriori_bound, averaged_rhs, check_theorem1,
                    check_theorem2, constant_force, critical_points, effective_force,
                    full_rhs, inverse_state_transform, phi_mean_square, rhs_jacobian,
                    state_transform)
from .orbits import (DegenerateJacobianError, NewtonConvergenceError, OrbitResult,
                     StabilityThresholds, averaging_sweep, basin_probe, find_periodic,
                     monodromy, no_fall_certificate, seeded_full_orbit)
from .sections import SectionCloud, SectionJob, find_map_fixed_points, generate_section

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
