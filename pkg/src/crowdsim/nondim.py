"""Reference scales and the dimensionless groups behind the drive rate.

Scaling space by a reference length and time by a reference duration
collapses the model coefficients into four dimensionless groups, one per
mechanism: crowd-limited walking, locally-throttled walking, pair
coupling, and noise gating.  The single rate multiplying every term of
the scaled dynamics is the largest of the four.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ValidationError
from .geometry import Domain


@dataclass(frozen=True)
class ReferenceScales:
    x_ref: float  # length
    t_ref: float  # time
    s_ref: float = 1.0  # smoke density
    p_ref: float = 1.0  # discomfort
    upsilon_ref: float = 1.0  # walking speed term
    omega_ref: float = 1.0  # pair coupling term
    beta_ref: float = 1.0  # noise gate term
    phi_ref: float = 1.0  # navigation potential
    mu_ref: float = 1.0  # per-head crowding weight
    p_max: float = 1.0  # crowding saturation

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not val > 0.0:
                raise ValidationError(f"scales.{f.name} must be positive, got {val!r}")

    @classmethod
    def for_domain(cls, domain: Domain, **overrides) -> "ReferenceScales":
        """Scales with the customary default length: the domain diameter."""
        overrides.setdefault("x_ref", domain.diameter)
        overrides.setdefault("t_ref", 1.0)
        return cls(**overrides)


def dimensionless_groups(r: ReferenceScales) -> tuple[float, float, float, float]:
    """Rate ratios of the four mechanisms against the reference crossing
    time x_ref: crowd-saturation walking, local-discomfort walking, pair
    coupling, and noise gating."""
    crowd = r.upsilon_ref * r.t_ref * r.s_ref * r.p_max / r.x_ref
    local = r.upsilon_ref * r.t_ref * r.s_ref * r.p_ref / r.x_ref
    pair = r.omega_ref * r.t_ref / r.x_ref
    gate = r.beta_ref * r.t_ref / r.x_ref
    return crowd, local, pair, gate


def compute_kappa(r: ReferenceScales) -> float:
    """Single drive rate: the largest of the four dimensionless groups."""
    return max(dimensionless_groups(r))
