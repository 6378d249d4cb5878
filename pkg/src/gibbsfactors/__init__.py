"""Gibbs measures on shifts of finite type and their images under 1-block factor maps."""

__version__ = "0.1.0"

from .errors import CapacityError, DomainError, InputError, NumericError, PreconditionError
from .sft import FactorMap, Sft, fiber_mixing_exponent, is_topologically_mixing, load_system
from .potentials import Potential, classify, load_potential
from .transfer import eigendata, gibbs_cylinder, normalize, ruelle_matrix
from .factor_ops import FactorSystem, estimate_psi, pushforward_cylinder
from .schedule import ConeSchedule, build_schedule, holder_schedule, schedule_for_potential

__all__ = [
    "CapacityError", "DomainError", "InputError", "NumericError", "PreconditionError",
    "FactorMap", "Sft", "fiber_mixing_exponent", "is_topologically_mixing", "load_system",
    "Potential", "classify", "load_potential",
    "eigendata", "gibbs_cylinder", "normalize", "ruelle_matrix",
    "FactorSystem", "estimate_psi", "pushforward_cylinder",
    "ConeSchedule", "build_schedule", "holder_schedule", "schedule_for_potential",
]
