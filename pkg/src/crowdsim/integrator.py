"""Dyadic Euler scheme with per-interval boundary reflection.

Trajectories advance on a dyadic grid: drift and diffusion are frozen at
the left endpoint of each interval, the driving increment b*dt + sigma*dB
is formed per pedestrian, and the reflection engine folds it back into
the closed domain while accumulating the regulator.  Brownian increments
come from a counter-keyed generator at one fixed fine dyadic level and
are pairwise-summed down to the requested level, so streams at different
levels of the same member are exactly coupled for refinement studies.
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError, ValidationError
from .geometry import Domain, _point_segment_dist
from .model import CrowdState, ModelParams, SmokeField, _coefficient_lists
from .navfield import NavigationField
from .skorohod import reflect_increment

BASE_LEVEL = 14  # resolution of the generated streams; levels fold down from here
_AUX_STREAM = 0xFFFFFFFF  # pedestrian slot reserved for non-Brownian draws


@dataclass(frozen=True)
class SchemeConfig:
    n: int  # dyadic level: 2^n steps of length T * 2^-n
    T: float  # horizon in reference-time units
    seed: int
    ensemble_size: int = 1
    absorb_at_exit: bool = False
    record_stride: int = 1

    def __post_init__(self):
        if not 1 <= self.n <= BASE_LEVEL:
            raise ValidationError(f"scheme.n must be in [1, {BASE_LEVEL}], got {self.n}")
        if not self.T > 0.0:
            raise ValidationError(f"scheme.T must be positive, got {self.T!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("scheme.seed must fit in 64 bits")
        if self.ensemble_size < 1:
            raise ValidationError("scheme.ensemble_size must be at least 1")
        if self.record_stride < 1:
            raise ValidationError("scheme.record_stride must be at least 1")

    @property
    def steps(self) -> int:
        return 1 << self.n

    @property
    def dt(self) -> float:
        return self.T / (1 << self.n)


@dataclass
class SimulationProblem:
    """Everything a trajectory needs: geometry, resolved model parameters,
    the starting crowd, the smoke field, and (when anyone navigates) the
    solved navigation field."""

    domain: Domain
    params: ModelParams
    initial: CrowdState
    smoke: SmokeField = field(default_factory=SmokeField.none)
    nav: NavigationField | None = None

    def __post_init__(self):
        if self.params.p_max is None or self.params.discomfort_weight is None:
            raise ValidationError("problem.params unresolved: call params.resolved()")
        if self.initial.n_active > 0 and self.nav is None:
            raise ValidationError("problem.nav is required when active pedestrians exist")
        pos = self.initial.positions()
        for k in range(self.initial.n_total):
            if not self.domain.contains((pos[k, 0], pos[k, 1])):
                raise ValidationError(
                    f"initial position {k} at ({pos[k, 0]:.6g}, {pos[k, 1]:.6g}) "
                    "lies outside the walkable closure"
                )


@dataclass
class TrajectoryRecord:
    member: int
    n_active: int
    times: np.ndarray  # (n_rec,)
    positions: np.ndarray  # (n_rec, n, 2)
    regulator: np.ndarray  # (n_rec, n, 2) cumulative boundary pushes
    tv: np.ndarray  # (n_rec, n) cumulative push magnitude, nondecreasing
    evac_flags: np.ndarray  # (n_rec, n) bool
    evac_times: np.ndarray  # (n,) time of absorption, nan if never
    clip_events: int
    substeps: int  # recorded boundary pushes over the whole trajectory
    failed: bool = False
    fail_step: int = -1
    fail_reason: str = ""

    @property
    def n_total(self) -> int:
        return self.positions.shape[1]

    @property
    def evacuated(self) -> np.ndarray:
        return self.evac_flags[-1]

    def kind(self, k: int) -> str:
        return "active" if k < self.n_active else "passive"

    def driven_path(self) -> np.ndarray:
        """Recorded positions minus the accumulated regulator: the path the
        noise and drift alone would have produced."""
        return self.positions - self.regulator


# ---------------------------------------------------------------------------
# Brownian streams


def _stream(seed: int, member: int, pedestrian: int) -> np.random.Generator:
    # one counter-based stream per (seed, member, pedestrian)
    if not 0 <= member < 2**32:
        raise ValidationError("member index must fit in 32 bits")
    if not 0 <= pedestrian <= _AUX_STREAM:
        raise ValidationError("pedestrian index must fit in 32 bits")
    key = np.array([seed, (member << 32) | pedestrian], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _base_increments(seed: int, T: float, count: int, member: int) -> np.ndarray:
    steps = 1 << BASE_LEVEL
    scale = math.sqrt(T / steps)
    out = np.empty((count, steps, 2))
    for k in range(count):
        out[k] = _stream(seed, member, k).standard_normal((steps, 2))
    out *= scale
    return out


def fold_increments(increments: np.ndarray, n: int) -> np.ndarray:
    """Pairwise-sum (count, 2^m, 2) increments down to level n.  Summation
    is a fixed binary tree, so folding to n and folding to n+1 then
    summing adjacent pairs give bitwise-identical results."""
    arr = increments
    target = 1 << n
    ratio, rem = divmod(arr.shape[1], target)
    if rem != 0 or ratio & (ratio - 1) or ratio == 0:
        raise ValidationError(f"cannot fold {arr.shape[1]} steps to level {n}")
    while arr.shape[1] > target:
        arr = arr[:, 0::2, :] + arr[:, 1::2, :]
    return arr


def brownian_increments(
    seed: int, n: int, T: float, count: int, member: int = 0
) -> np.ndarray:
    """Increments of `count` independent planar Brownian motions on the
    level-n dyadic grid over [0, T]: shape (count, 2^n, 2), i.i.d. normal
    with variance T * 2^-n per component.  The stream behind (member, k)
    depends only on (seed, member, k), and levels are coupled: the two
    level-(n+1) increments inside a level-n interval sum to the level-n
    increment exactly."""
    if not 1 <= n <= BASE_LEVEL:
        raise ValidationError(f"level n must be in [1, {BASE_LEVEL}], got {n}")
    if not T > 0.0:
        raise ValidationError("T must be positive")
    if count < 0:
        raise ValidationError("count must be nonnegative")
    return fold_increments(_base_increments(seed, T, count, member), n)


# ---------------------------------------------------------------------------
# stepping


# wall-clearance budgets are shaved by this factor when refreshed, so the
# lower-bound invariant survives any accumulation of subtraction rounding
_MARGIN_SHAVE = 1.0 - 1e-9


def _advance(pos, n_active, evacuated, dt, dB, nav, smoke, params, domain, dphi, tv,
             margin=None):
    """One interval, in place: coefficients frozen at the current positions,
    then each non-evacuated pedestrian is driven and reflected.  pos is
    mutated; dphi and tv are overwritten with this interval's regulator
    increment and push magnitude.  Returns (pushes, clip_events).

    margin, if given, carries per-pedestrian lower bounds on the distance
    to the boundary across calls.  An increment strictly shorter than the
    budget cannot touch a wall, so it is applied directly; this path is
    bit-identical to the reflection engine's no-contact result.
    """
    bxs, bys, amps, clips = _coefficient_lists(
        pos, n_active, evacuated, nav, smoke, params
    )
    dphi[:] = 0.0
    tv[:] = 0.0
    pushes = 0
    for k in range(pos.shape[0]):
        if evacuated[k]:
            continue
        amp = amps[k]
        ex = bxs[k] * dt + amp * float(dB[k, 0])
        ey = bys[k] * dt + amp * float(dB[k, 1])
        if margin is not None:
            step_len = math.hypot(ex, ey)
            if step_len < margin[k]:
                pos[k, 0] = pos[k, 0] + ex
                pos[k, 1] = pos[k, 1] + ey
                margin[k] -= step_len
                continue
        (qx, qy), push, hits = reflect_increment(domain, (pos[k, 0], pos[k, 1]), (ex, ey))
        pos[k, 0] = qx
        pos[k, 1] = qy
        if margin is not None:
            margin[k] = _MARGIN_SHAVE * domain.distance_to_boundary((qx, qy))
        dphi[k, 0] = push[0]
        dphi[k, 1] = push[1]
        tv[k] = sum(h[2] for h in hits)
        pushes += len(hits)
    return pushes, clips


def step(
    state: CrowdState,
    dt: float,
    dB: np.ndarray,
    nav: NavigationField | None,
    smoke: SmokeField,
    params: ModelParams,
    domain: Domain,
) -> tuple[CrowdState, np.ndarray]:
    """One dyadic interval: freeze (b, sigma) at the left endpoint, drive
    each pedestrian by b*dt + sigma*dB, reflect into the domain.  Returns
    the advanced state and the per-pedestrian regulator increment."""
    if params.p_max is None or params.discomfort_weight is None:
        raise ValidationError("params unresolved: call params.resolved() first")
    pos = state.positions()
    n = state.n_total
    na = state.n_active
    dphi = np.zeros((n, 2))
    tv = np.zeros(n)
    _advance(pos, na, state.evacuated, dt, dB, nav, smoke, params, domain, dphi, tv)
    new_state = CrowdState(
        active=pos[:na],
        passive=pos[na:],
        evacuated=state.evacuated.copy(),
        time=state.time + dt,
    )
    return new_state, dphi


def _absorb_arrays(domain, pos, evacuated, evac_times, time) -> None:
    if not domain.exits:
        return
    for k in range(pos.shape[0]):
        if evacuated[k]:
            continue
        x, y = pos[k, 0], pos[k, 1]
        for seg in domain.exits:
            d = _point_segment_dist(x, y, seg.a[0], seg.a[1], seg.b[0], seg.b[1])
            if d <= seg.absorb_radius:
                evacuated[k] = True
                evac_times[k] = time
                break


def run_trajectory(
    problem: SimulationProblem,
    cfg: SchemeConfig,
    member: int = 0,
    increments: np.ndarray | None = None,
) -> TrajectoryRecord:
    """One trajectory of the full crowd.  A numerical failure mid-run is
    recorded on the result, not raised; records keep everything up to the
    failing step."""
    init = problem.initial
    n = init.n_total
    if increments is None:
        increments = brownian_increments(cfg.seed, cfg.n, cfg.T, n, member=member)
    if increments.shape != (n, cfg.steps, 2):
        raise ValidationError(
            f"increments shape {increments.shape} does not match "
            f"({n}, {cfg.steps}, 2)"
        )
    na = init.n_active
    pos = init.positions()
    evac = init.evacuated.copy()
    t = 0.0
    reg = np.zeros((n, 2))
    tv = np.zeros(n)
    dphi = np.zeros((n, 2))
    dtv = np.zeros(n)
    margin = np.zeros(n)
    evac_times = np.full(n, np.nan)
    if cfg.absorb_at_exit:
        _absorb_arrays(problem.domain, pos, evac, evac_times, t)
    rec_t = [0.0]
    rec_x = [pos.copy()]
    rec_reg = [reg.copy()]
    rec_tv = [tv.copy()]
    rec_ev = [evac.copy()]
    clips = 0
    pushes = 0
    failed = False
    fail_step = -1
    fail_reason = ""
    dt = cfg.dt
    steps = cfg.steps
    stride = cfg.record_stride
    absorb = cfg.absorb_at_exit
    nav, smoke, params, domain = problem.nav, problem.smoke, problem.params, problem.domain
    for i in range(steps):
        try:
            np_, cl = _advance(
                pos, na, evac, dt, increments[:, i, :],
                nav, smoke, params, domain, dphi, dtv, margin,
            )
        except NumericalError as exc:
            failed = True
            fail_step = i
            fail_reason = f"{type(exc).__name__}: {exc}"
            break
        t = t + dt
        reg += dphi
        tv += dtv
        clips += cl
        pushes += np_
        if absorb:
            _absorb_arrays(domain, pos, evac, evac_times, t)
        if (i + 1) % stride == 0 or i + 1 == steps:
            rec_t.append(t)
            rec_x.append(pos.copy())
            rec_reg.append(reg.copy())
            rec_tv.append(tv.copy())
            rec_ev.append(evac.copy())
    return TrajectoryRecord(
        member=member,
        n_active=init.n_active,
        times=np.array(rec_t),
        positions=np.array(rec_x),
        regulator=np.array(rec_reg),
        tv=np.array(rec_tv),
        evac_flags=np.array(rec_ev),
        evac_times=evac_times,
        clip_events=clips,
        substeps=pushes,
        failed=failed,
        fail_step=fail_step,
        fail_reason=fail_reason,
    )


def _run_member(args) -> TrajectoryRecord:
    problem, cfg, member = args
    return run_trajectory(problem, cfg, member)


def simulate(
    problem: SimulationProblem, cfg: SchemeConfig, workers: int = 1
) -> list[TrajectoryRecord]:
    """Run the ensemble.  Members are keyed by index into the seed, so the
    result is bit-identical for any worker count."""
    tasks = [(problem, cfg, e) for e in range(cfg.ensemble_size)]
    if workers <= 1:
        return [_run_member(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    chunk = max(1, cfg.ensemble_size // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_run_member, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# experiments


@dataclass
class StabilityResult:
    magnitudes: np.ndarray  # perturbation sizes, one per point
    initial_sq: np.ndarray  # E |X0' - X0|^2
    max_sq: np.ndarray  # E max_t |X'(t) - X(t)|^2
    ratios: np.ndarray  # max_sq / initial_sq
    slope: float  # least-squares slope of log max_sq against log initial_sq
    pairs_used: np.ndarray  # effective pair count per magnitude


def _paired_max_gap(problem, cfg, increments, shifted_initial):
    na = problem.initial.n_active
    n = problem.initial.n_total
    base = problem.initial.positions()
    pert = np.array(shifted_initial, dtype=float).reshape(n, 2)
    evac_b = problem.initial.evacuated.copy()
    evac_p = problem.initial.evacuated.copy()
    dphi = np.zeros((n, 2))
    dtv = np.zeros(n)
    margin_b = np.zeros(n)
    margin_p = np.zeros(n)
    gap0 = float(np.sum((pert - base) ** 2))
    worst = gap0
    for i in range(cfg.steps):
        dB = increments[:, i, :]
        _advance(
            base, na, evac_b, cfg.dt, dB,
            problem.nav, problem.smoke, problem.params, problem.domain,
            dphi, dtv, margin_b,
        )
        _advance(
            pert, na, evac_p, cfg.dt, dB,
            problem.nav, problem.smoke, problem.params, problem.domain,
            dphi, dtv, margin_p,
        )
        worst = max(worst, float(np.sum((pert - base) ** 2)))
    return gap0, worst


def stability_experiment(
    problem: SimulationProblem,
    cfg: SchemeConfig,
    perturbations: list[float],
) -> StabilityResult:
    """Paired-path sensitivity to the initial condition.  For each
    magnitude, every ensemble member runs the crowd twice with identical
    Brownian streams, from the nominal start and from a start shifted by
    that magnitude along a random unit direction of configuration space."""
    mags = [float(r) for r in perturbations]
    if any(not r > 0.0 for r in mags):
        raise ValidationError("perturbation magnitudes must be positive")
    if any(b >= a for a, b in zip(mags, mags[1:])):
        raise ValidationError("perturbation magnitudes must be decreasing")
    n = problem.initial.n_total
    init_pos = problem.initial.positions()
    initial_sq = []
    max_sq = []
    used = []
    for rho in mags:
        acc0 = 0.0
        accm = 0.0
        good = 0
        for e in range(cfg.ensemble_size):
            u = _stream(cfg.seed, e, _AUX_STREAM).standard_normal(2 * n)
            u /= math.sqrt(float(np.sum(u * u)))
            shifted = init_pos + rho * u.reshape(n, 2)
            for k in range(n):
                if not problem.domain.contains((shifted[k, 0], shifted[k, 1])):
                    raise ValidationError(
                        f"perturbation {rho} pushes pedestrian {k} outside the "
                        "domain; start the crowd further from the walls"
                    )
            inc = brownian_increments(cfg.seed, cfg.n, cfg.T, n, member=e)
            try:
                gap0, worst = _paired_max_gap(problem, cfg, inc, shifted)
            except NumericalError:
                continue
            acc0 += gap0
            accm += worst
            good += 1
        if good == 0:
            raise ValidationError(f"all pairs failed at magnitude {rho}")
        initial_sq.append(acc0 / good)
        max_sq.append(accm / good)
        used.append(good)
    lx = np.log(np.asarray(initial_sq))
    ly = np.log(np.asarray(max_sq))
    slope = float(np.polyfit(lx, ly, 1)[0])
    ratios = np.asarray(max_sq) / np.asarray(initial_sq)
    return StabilityResult(
        magnitudes=np.asarray(mags),
        initial_sq=np.asarray(initial_sq),
        max_sq=np.asarray(max_sq),
        ratios=ratios,
        slope=slope,
        pairs_used=np.asarray(used),
    )


@dataclass
class ConvergenceResult:
    levels: np.ndarray
    errors: np.ndarray  # E max_t |X^(n) - X^(ref)|^2 at common knots
    members_used: np.ndarray
    ref_level: int
    slope_log2: float  # decay rate: positive means error shrinks with n


def convergence_experiment(
    problem: SimulationProblem,
    cfg: SchemeConfig,
    levels: list[int],
    ref_level: int = 12,
) -> ConvergenceResult:
    """Strong self-convergence under dyadic refinement.  Every level reuses
    the same member's fine-level stream folded down, so the comparison
    against the reference level is a coupled pathwise error."""
    levels = sorted(int(v) for v in levels)
    if not levels or levels[0] < 1:
        raise ValidationError("levels must be positive")
    if max(levels) + 2 > ref_level:
        raise ValidationError("reference level must exceed max level by at least 2")
    if ref_level > BASE_LEVEL:
        raise ValidationError(f"reference level cannot exceed {BASE_LEVEL}")
    n = problem.initial.n_total
    sums = {v: 0.0 for v in levels}
    counts = {v: 0 for v in levels}
    ref_cfg = replace(cfg, n=ref_level, record_stride=1)
    for e in range(cfg.ensemble_size):
        base = _base_increments(cfg.seed, cfg.T, n, e)
        ref = run_trajectory(problem, ref_cfg, e, increments=fold_increments(base, ref_level))
        if ref.failed:
            continue
        for v in levels:
            level_cfg = replace(cfg, n=v, record_stride=1)
            rec = run_trajectory(problem, level_cfg, e, increments=fold_increments(base, v))
            if rec.failed:
                continue
            stride = 1 << (ref_level - v)
            gaps = rec.positions - ref.positions[::stride]
            worst = float(np.max(np.sum(gaps**2, axis=(1, 2))))
            sums[v] += worst
            counts[v] += 1
    errors = []
    used = []
    for v in levels:
        if counts[v] == 0:
            raise ValidationError(f"all members failed at level {v}")
        errors.append(sums[v] / counts[v])
        used.append(counts[v])
    errors = np.asarray(errors)
    slope = -float(np.polyfit(np.asarray(levels, dtype=float), np.log2(errors), 1)[0])
    return ConvergenceResult(
        levels=np.asarray(levels),
        errors=errors,
        members_used=np.asarray(used),
        ref_level=ref_level,
        slope_log2=slope,
    )


def holder_quotient(times: np.ndarray, values: np.ndarray, exponent: float = 0.25) -> float:
    """Empirical Holder quotient max |v(t)-v(s)| / |t-s|^exponent over all
    recorded knot pairs.  values may be (K, 2) for one walker or
    (K, n, 2) for a crowd; the max runs over walkers too."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[:, None, :]
    gap_t = np.abs(t[:, None] - t[None, :]) ** exponent
    mask = gap_t > 0.0
    best = 0.0
    for k in range(v.shape[1]):
        dv = np.sqrt(np.sum((v[:, None, k, :] - v[None, :, k, :]) ** 2, axis=-1))
        best = max(best, float(np.max(dv[mask] / gap_t[mask])))
    return best
