"""Leader-following consensus over jointly connected switching networks.

Graph bookkeeping (:mod:`.netgraph`), leader-follower spectra and the
instability budget (:mod:`.spectral`), dense numerics (:mod:`.numkit`), gain
synthesis and convergence certificates (:mod:`.synthesis`), simulation
(:mod:`.switchsim`), and reporting (:mod:`.report`).
"""

from .errors import ScenarioError, SwitchconsError, SynthesisError, ValidationError
from .netgraph import (
    FollowerTopology,
    SwitchingSchedule,
    laplacian,
    leader_follower_matrix,
    leader_reachable,
    union_topology,
    validate_schedule,
)
from .numkit import finite_gramian, matrix_exp
from .spectral import delta, jacobi_eigh, lambda_H, sym_eig, verify_lambda_H_floor
from .switchsim import Scenario, Trajectory, integrate_rk4, propagate_exact, simulate_observer
from .synthesis import (
    Certificate,
    GainDesign,
    PlantModel,
    check_solvable,
    decay_certificate,
    design_gains,
    feedback_gain,
    instability_margin,
    observer_gain,
)

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "FollowerTopology",
    "GainDesign",
    "PlantModel",
    "Scenario",
    "ScenarioError",
    "SwitchconsError",
    "SwitchingSchedule",
    "SynthesisError",
    "Trajectory",
    "ValidationError",
    "check_solvable",
    "decay_certificate",
    "delta",
    "design_gains",
    "feedback_gain",
    "finite_gramian",
    "instability_margin",
    "integrate_rk4",
    "jacobi_eigh",
    "lambda_H",
    "laplacian",
    "leader_follower_matrix",
    "leader_reachable",
    "matrix_exp",
    "observer_gain",
    "propagate_exact",
    "simulate_observer",
    "sym_eig",
    "union_topology",
    "validate_schedule",
    "verify_lambda_H_floor",
]
