"""Model terms for the coupled evacuation dynamics.

Two populations move in the same room: informed walkers descend the
navigation potential at a speed throttled by smoke and local crowding,
uninformed walkers follow short-range attraction/repulsion to everyone
else and carry isotropic noise that a smoke gate switches off.  This
module evaluates those terms pointwise and assembles the per-pedestrian
drift vector and diffusion matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .geometry import Domain
from .navfield import NavigationField, grad_at


@dataclass(frozen=True)
class ModelParams:
    zeta: float  # speed loss per unit smoke
    eta: float  # clear-air walking speed factor
    c_attract: float
    c_repulse: float
    ell_attract: float
    ell_repulse: float
    eps: float  # distance regularizer in the pair direction
    discomfort_radius: float
    smoke_critical: float
    gate_width: float
    kappa: float
    clip_bound: float
    discomfort_weight: float | None = None  # per-head weight, default area(D)
    p_max: float | None = None  # crowding saturation, default N * area(D)
    smooth_discomfort: bool = False

    def __post_init__(self):
        positive = {
            "zeta": self.zeta,
            "eta": self.eta,
            "c_attract": self.c_attract,
            "c_repulse": self.c_repulse,
            "ell_attract": self.ell_attract,
            "ell_repulse": self.ell_repulse,
            "eps": self.eps,
            "discomfort_radius": self.discomfort_radius,
            "gate_width": self.gate_width,
            "kappa": self.kappa,
            "clip_bound": self.clip_bound,
        }
        for name, val in positive.items():
            if not val > 0.0:
                raise ValidationError(f"model.{name} must be positive, got {val!r}")
        for name, val in (("discomfort_weight", self.discomfort_weight), ("p_max", self.p_max)):
            if val is not None and not val > 0.0:
                raise ValidationError(f"model.{name} must be positive, got {val!r}")

    def resolved(self, domain: Domain, n_pedestrians: int) -> "ModelParams":
        """Fill area-based defaults: per-head weight = area, saturation =
        head count times area, so a fully packed ball saturates exactly."""
        area = domain.area
        weight = area if self.discomfort_weight is None else self.discomfort_weight
        pmax = n_pedestrians * area if self.p_max is None else self.p_max
        return replace(self, discomfort_weight=weight, p_max=pmax)


@dataclass
class CrowdState:
    """Positions of both populations plus evacuation flags.

    Pedestrian index runs over actives first, then passives, so flag
    arrays and trajectory records share one indexing convention.
    """

    active: np.ndarray  # (n_active, 2)
    passive: np.ndarray  # (n_passive, 2)
    evacuated: np.ndarray  # (n_active + n_passive,) bool
    time: float = 0.0

    def __post_init__(self):
        self.active = np.atleast_2d(np.asarray(self.active, dtype=float))
        self.passive = np.atleast_2d(np.asarray(self.passive, dtype=float))
        if self.active.size == 0:
            self.active = self.active.reshape(0, 2)
        if self.passive.size == 0:
            self.passive = self.passive.reshape(0, 2)
        n = self.active.shape[0] + self.passive.shape[0]
        if self.evacuated is None:
            self.evacuated = np.zeros(n, dtype=bool)
        else:
            self.evacuated = np.asarray(self.evacuated, dtype=bool)
        if self.evacuated.shape != (n,):
            raise ValidationError(
                f"evacuated flags: expected {n} entries, got {self.evacuated.shape}"
            )

    @property
    def n_active(self) -> int:
        return self.active.shape[0]

    @property
    def n_passive(self) -> int:
        return self.passive.shape[0]

    @property
    def n_total(self) -> int:
        return self.n_active + self.n_passive

    def positions(self) -> np.ndarray:
        return np.vstack([self.active, self.passive])


@dataclass(frozen=True)
class SmokeField:
    """Stationary smoke density; evaluates to a nonnegative scalar."""

    kind: str = "none"
    center: tuple[float, float] = (0.0, 0.0)
    amplitude: float = 0.0
    width: float = 1.0
    grid_origin: tuple[float, float] = (0.0, 0.0)
    grid_spacing: float = 1.0
    grid_values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "gaussian_plume", "user_grid"):
            raise ValidationError(f"smoke.kind: unknown kind {self.kind!r}")
        if self.kind == "gaussian_plume":
            if self.amplitude < 0.0:
                raise ValidationError("smoke.amplitude must be nonnegative")
            if not self.width > 0.0:
                raise ValidationError("smoke.width must be positive")
        if self.kind == "user_grid":
            if self.grid_values is None or np.asarray(self.grid_values).ndim != 2:
                raise ValidationError("smoke.grid_values must be a 2-d array")
            if not self.grid_spacing > 0.0:
                raise ValidationError("smoke.grid_spacing must be positive")

    @classmethod
    def none(cls) -> "SmokeField":
        return cls(kind="none")

    @classmethod
    def plume(cls, center: tuple[float, float], amplitude: float, width: float) -> "SmokeField":
        return cls(kind="gaussian_plume", center=center, amplitude=amplitude, width=width)

    @classmethod
    def from_grid(
        cls, origin: tuple[float, float], spacing: float, values: np.ndarray
    ) -> "SmokeField":
        return cls(
            kind="user_grid",
            grid_origin=origin,
            grid_spacing=spacing,
            grid_values=np.asarray(values, dtype=float),
        )

    def value(self, x: float, y: float) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "gaussian_plume":
            dx = x - self.center[0]
            dy = y - self.center[1]
            return self.amplitude * math.exp(-(dx * dx + dy * dy) / (2.0 * self.width**2))
        vals = self.grid_values
        ny, nx = vals.shape
        fx = (x - self.grid_origin[0]) / self.grid_spacing
        fy = (y - self.grid_origin[1]) / self.grid_spacing
        i0 = int(min(max(math.floor(fx), 0), nx - 2))
        j0 = int(min(max(math.floor(fy), 0), ny - 2))
        tx = min(max(fx - i0, 0.0), 1.0)
        ty = min(max(fy - j0, 0.0), 1.0)
        v = (
            (1 - tx) * (1 - ty) * vals[j0, i0]
            + tx * (1 - ty) * vals[j0, i0 + 1]
            + (1 - tx) * ty * vals[j0 + 1, i0]
            + tx * ty * vals[j0 + 1, i0 + 1]
        )
        return max(0.0, float(v))


def upsilon(s_val: float, p: ModelParams) -> float:
    """Walking speed factor, affine in smoke and clamped at zero so dense
    smoke stalls rather than reverses motion."""
    return max(-p.zeta * s_val + p.eta, 0.0)


def beta_gate(s_val: float, p: ModelParams) -> float:
    """Logistic switch in [0, 1]: near 1 in clear air, 0.5 at the critical
    density, near 0 beyond it."""
    z = (s_val - p.smoke_critical) / p.gate_width
    if z >= 0.0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


def morse_omega(r: float, s_val: float, p: ModelParams) -> float:
    """Signed pair coupling at distance r: positive = attraction toward
    the neighbor, turning repulsive at short range, gated by smoke."""
    return -beta_gate(s_val, p) * (
        -p.c_attract * math.exp(-r / p.ell_attract)
        + p.c_repulse * math.exp(-r / p.ell_repulse)
    )


def _discomfort_lists(px, py, points, evac, p: ModelParams) -> float:
    radius = p.discomfort_radius
    ramp = 0.1 * radius
    total = 0.0
    for j in range(len(points)):
        if evac[j]:
            continue
        xj, yj = points[j]
        d = math.hypot(xj - px, yj - py)
        if p.smooth_discomfort:
            total += min(max((radius - d) / ramp, 0.0), 1.0)
        elif d < radius:
            total += 1.0
    return p.discomfort_weight * total


def discomfort(x: tuple[float, float], state: CrowdState, p: ModelParams) -> float:
    """Crowding pressure at x: per-head weight times the number of
    non-evacuated pedestrians strictly inside the discomfort ball.  The
    smooth variant replaces the indicator with a linear ramp of width
    one tenth of the radius at the ball edge."""
    if p.discomfort_weight is None:
        raise ValidationError("discomfort_weight unresolved: call params.resolved()")
    return _discomfort_lists(
        float(x[0]), float(x[1]),
        state.positions().tolist(), state.evacuated.tolist(), p,
    )


class DriftDiffusion(NamedTuple):
    b: np.ndarray  # (n, 2) drift
    sigma: np.ndarray  # (n, 2, 2) diffusion
    clip_events: int


def _coefficient_lists(pos, n_active, evacuated, nav, smoke, p):
    """Drift components and isotropic noise amplitude per pedestrian, as
    plain float lists.  Shared core of drift_and_diffusion and the time
    stepper; evacuated rows stay zero."""
    n = pos.shape[0]
    na = n_active
    points = pos.tolist()
    evac = evacuated.tolist()
    bx_out = [0.0] * n
    by_out = [0.0] * n
    amp_out = [0.0] * n
    clips = 0
    bound = p.clip_bound
    kappa = p.kappa

    for i in range(na):
        if evac[i]:
            continue
        x, y = points[i]
        s_val = smoke.value(x, y)
        speed = upsilon(s_val, p)
        gx, gy = grad_at(nav, (x, y))
        room = p.p_max - _discomfort_lists(x, y, points, evac, p)
        factor = -kappa * speed * room
        bx, by = factor * gx, factor * gy
        nrm = math.hypot(bx, by)
        if nrm > bound:
            scale = bound / nrm
            bx *= scale
            by *= scale
            clips += 1
        bx_out[i] = bx
        by_out[i] = by

    eps = p.eps
    for k in range(na, n):
        if evac[k]:
            continue
        x, y = points[k]
        s_val = smoke.value(x, y)
        bx = by = 0.0
        for j in range(n):
            if j == k or evac[j]:
                continue
            xj, yj = points[j]
            dx = xj - x
            dy = yj - y
            dist = math.hypot(dx, dy)
            w = morse_omega(dist, s_val, p) / (eps + dist)
            bx += dx * w
            by += dy * w
        bx *= kappa
        by *= kappa
        nrm = math.hypot(bx, by)
        if nrm > bound:
            scale = bound / nrm
            bx *= scale
            by *= scale
            clips += 1
        bx_out[k] = bx
        by_out[k] = by
        amp = kappa * beta_gate(s_val, p)
        if amp > bound:
            amp = bound
            clips += 1
        amp_out[k] = amp

    return bx_out, by_out, amp_out, clips


def drift_and_diffusion(
    state: CrowdState,
    nav: NavigationField,
    smoke: SmokeField,
    p: ModelParams,
) -> DriftDiffusion:
    """Assemble per-pedestrian drift and diffusion.

    Actives descend the navigation field at speed kappa * upsilon *
    (saturation - crowding) and carry no noise.  Passives feel the sum of
    regularized pair pulls from every other non-evacuated pedestrian and
    isotropic noise kappa * gate.  Both norms are clipped at the global
    bound; clips are counted, not raised.  Evacuated rows are zero.
    """
    if p.p_max is None or p.discomfort_weight is None:
        raise ValidationError("params unresolved: call params.resolved() first")
    pos = state.positions()
    bx, by, amp, clips = _coefficient_lists(
        pos, state.n_active, state.evacuated, nav, smoke, p
    )
    n = pos.shape[0]
    b = np.zeros((n, 2))
    sigma = np.zeros((n, 2, 2))
    b[:, 0] = bx
    b[:, 1] = by
    sigma[:, 0, 0] = amp
    sigma[:, 1, 1] = amp
    return DriftDiffusion(b=b, sigma=sigma, clip_events=clips)
