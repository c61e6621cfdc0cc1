from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from crowdsim.errors import ValidationError
from crowdsim.geometry import Domain
from crowdsim.integrator import (
    BASE_LEVEL,
    SchemeConfig,
    SimulationProblem,
    brownian_increments,
    convergence_experiment,
    fold_increments,
    holder_quotient,
    run_trajectory,
    simulate,
    stability_experiment,
    step,
)
from crowdsim.model import CrowdState, ModelParams, SmokeField, beta_gate
from crowdsim.navfield import build_grid, solve_navigation

UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
CENTER_HOLE = [(0.4, 0.4), (0.4, 0.6), (0.6, 0.6), (0.6, 0.4)]
BIG_BOX = [(-500.0, 0.0), (500.0, 0.0), (500.0, 1000.0), (-500.0, 1000.0)]


def passive_params(**overrides) -> ModelParams:
    kw = dict(
        zeta=1.0,
        eta=1.0,
        c_attract=0.6,
        c_repulse=1.2,
        ell_attract=0.45,
        ell_repulse=0.22,
        eps=0.08,
        discomfort_radius=0.3,
        smoke_critical=10.0,  # clear air: the gate rounds to exactly 1
        gate_width=0.01,
        kappa=1.0,
        clip_bound=1e6,
    )
    kw.update(overrides)
    return ModelParams(**kw)


@pytest.fixture(scope="module")
def big_box() -> Domain:
    return Domain(BIG_BOX, sphere_radius=5.0)


@pytest.fixture(scope="module")
def lone_walker(big_box) -> SimulationProblem:
    return SimulationProblem(
        domain=big_box,
        params=passive_params().resolved(big_box, 1),
        initial=CrowdState(active=np.zeros((0, 2)), passive=[[0.0, 0.0]], evacuated=None),
    )


def smothered(problem: SimulationProblem) -> SimulationProblem:
    """Same crowd under smoke so dense that drift and noise both vanish."""
    x, y = problem.initial.positions()[0]
    return replace(problem, smoke=SmokeField.plume((x, y), 1e308, 1e6))


# ---------------------------------------------------------------------------
# Brownian streams


def test_increment_moments():
    inc = brownian_increments(seed=7, n=11, T=1.0, count=250)
    assert inc.shape == (250, 2048, 2)
    var = 1.0 * 2.0**-11
    n_samples = inc.size
    assert n_samples >= 10**6
    se = math.sqrt(var) / math.sqrt(n_samples)
    assert abs(float(inc.mean())) <= 4.0 * se
    assert abs(float(inc.var()) - var) <= 0.01 * var


def test_refinement_coupling_is_exact():
    for n in (4, 9, 13):
        fine = brownian_increments(seed=11, n=n + 1, T=0.7, count=3, member=5)
        coarse = brownian_increments(seed=11, n=n, T=0.7, count=3, member=5)
        assert np.array_equal(fine[:, 0::2, :] + fine[:, 1::2, :], coarse)


def test_stream_keying():
    a = brownian_increments(seed=3, n=6, T=1.0, count=2, member=0)
    b = brownian_increments(seed=3, n=6, T=1.0, count=2, member=0)
    assert np.array_equal(a, b)
    c = brownian_increments(seed=3, n=6, T=1.0, count=2, member=1)
    assert not np.array_equal(a, c)
    d = brownian_increments(seed=4, n=6, T=1.0, count=2, member=0)
    assert not np.array_equal(a, d)
    # pedestrian streams are independent of how many neighbors were drawn
    e = brownian_increments(seed=3, n=6, T=1.0, count=5, member=0)
    assert np.array_equal(e[:2], a)


def test_increment_validation():
    with pytest.raises(ValidationError):
        brownian_increments(seed=1, n=0, T=1.0, count=1)
    with pytest.raises(ValidationError):
        brownian_increments(seed=1, n=BASE_LEVEL + 1, T=1.0, count=1)
    with pytest.raises(ValidationError):
        brownian_increments(seed=1, n=4, T=0.0, count=1)
    with pytest.raises(ValidationError):
        fold_increments(np.zeros((1, 24, 2)), 3)


# ---------------------------------------------------------------------------
# single step


def test_step_frozen_identity(lone_walker):
    prob = smothered(lone_walker)
    dB = np.array([[0.3, -0.2]])
    new_state, dphi = step(
        prob.initial, 0.125, dB, None, prob.smoke, prob.params, prob.domain
    )
    assert np.array_equal(new_state.positions(), prob.initial.positions())
    assert np.all(dphi == 0.0)


def test_step_interior_translation(big_box, lone_walker):
    prob = replace(
        lone_walker,
        initial=CrowdState(active=np.zeros((0, 2)), passive=[[3.0, 500.0]], evacuated=None),
    )
    dB = np.array([[0.001, 0.002]])
    new_state, dphi = step(
        prob.initial, 0.125, dB, None, prob.smoke, prob.params, prob.domain
    )
    amp = prob.params.kappa * beta_gate(0.0, prob.params)
    expected = np.array([[3.0 + amp * 0.001, 500.0 + amp * 0.002]])
    assert np.array_equal(new_state.positions(), expected)
    assert np.all(dphi == 0.0)


def test_step_outward_push_at_wall(lone_walker):
    # walker on the bottom wall, noise pointing straight out
    prob = lone_walker
    amp = prob.params.kappa * beta_gate(0.0, prob.params)
    assert amp == 1.0
    dB = np.array([[0.0, -0.4]])
    new_state, dphi = step(
        prob.initial, 0.125, dB, None, prob.smoke, prob.params, prob.domain
    )
    assert np.array_equal(new_state.positions(), np.array([[0.0, 0.0]]))
    assert dphi[0, 0] == 0.0
    assert dphi[0, 1] == 0.4


def test_step_skips_evacuated(big_box):
    params = passive_params().resolved(big_box, 2)
    state = CrowdState(
        active=np.zeros((0, 2)),
        passive=[[0.0, 5.0], [0.2, 5.0]],
        evacuated=[False, True],
    )
    dB = np.array([[0.01, 0.0], [5.0, 5.0]])
    new_state, dphi = step(state, 0.125, dB, None, SmokeField.none(), params, big_box)
    assert np.array_equal(new_state.positions()[1], [0.2, 5.0])
    assert np.all(dphi[1] == 0.0)
    # the survivor saw no neighbor: drift is pure noise
    amp = params.kappa * beta_gate(0.0, params)
    assert new_state.positions()[0, 0] == 0.0 + amp * 0.01


# ---------------------------------------------------------------------------
# trajectories


def test_zero_dynamics_trajectory_constant(lone_walker):
    prob = smothered(lone_walker)
    cfg = SchemeConfig(n=5, T=1.0, seed=10)
    rec = run_trajectory(prob, cfg)
    assert not rec.failed
    assert np.all(rec.positions == prob.initial.positions())
    assert np.all(rec.regulator == 0.0)
    assert np.all(rec.tv == 0.0)
    assert rec.substeps == 0


def test_trajectory_shapes_and_monotone_tv(lone_walker):
    cfg = SchemeConfig(n=6, T=1.0, seed=2)
    rec = run_trajectory(lone_walker, cfg)
    assert rec.times.shape == (65,)
    assert rec.positions.shape == (65, 1, 2)
    assert rec.times[0] == 0.0 and rec.times[-1] == 1.0
    assert np.all(np.diff(rec.tv[:, 0]) >= 0.0)
    # the walker starts on the wall: reflection must have fired
    assert rec.tv[-1, 0] > 0.0
    for k in range(0, 65, 8):
        assert lone_walker.domain.contains(tuple(rec.positions[k, 0]))


def test_record_stride():
    box = Domain(BIG_BOX, sphere_radius=5.0)
    prob = SimulationProblem(
        domain=box,
        params=passive_params().resolved(box, 1),
        initial=CrowdState(active=np.zeros((0, 2)), passive=[[0.0, 500.0]], evacuated=None),
    )
    cfg = SchemeConfig(n=6, T=1.0, seed=1, record_stride=10)
    rec = run_trajectory(prob, cfg)
    dt = cfg.dt
    expected = [0.0] + [10 * k * dt for k in range(1, 7)] + [1.0]
    assert np.allclose(rec.times, expected, atol=1e-15)


def test_simulate_deterministic_across_workers(big_box):
    params = passive_params(kappa=0.5).resolved(big_box, 2)
    prob = SimulationProblem(
        domain=big_box,
        params=params,
        initial=CrowdState(
            active=np.zeros((0, 2)), passive=[[0.0, 2.0], [0.5, 2.0]], evacuated=None
        ),
    )
    cfg = SchemeConfig(n=5, T=1.0, seed=99, ensemble_size=6)
    runs = [simulate(prob, cfg, workers=w) for w in (1, 3, 1)]
    for other in runs[1:]:
        for a, b in zip(runs[0], other):
            assert a.member == b.member
            assert np.array_equal(a.positions, b.positions)
            assert np.array_equal(a.regulator, b.regulator)
            assert np.array_equal(a.tv, b.tv)
            assert a.clip_events == b.clip_events and a.substeps == b.substeps


def test_absorption_at_start_and_mid_run():
    room = Domain(UNIT_SQUARE, exits=[(3, 0.0, 1.0, 0.1)], sphere_radius=0.1)
    nav = solve_navigation(room, build_grid(room, 1.0 / 16.0), 1.0, 0.05)
    params = passive_params(eta=2.0, p_max=2.0).resolved(room, 2)
    prob = SimulationProblem(
        domain=room,
        params=params,
        initial=CrowdState(active=[[0.5, 0.5]], passive=[[0.05, 0.9]], evacuated=None),
        nav=nav,
    )
    cfg = SchemeConfig(n=6, T=1.0, seed=5, absorb_at_exit=True)
    rec = run_trajectory(prob, cfg)
    assert not rec.failed
    # the passive starts within the absorb radius of the left exit
    assert rec.evac_times[1] == 0.0
    assert np.all(rec.positions[:, 1, :] == rec.positions[0, 1, :])
    # the active walks into the exit strip during the run
    assert rec.evacuated[0]
    assert 0.0 < rec.evac_times[0] < 1.0
    frozen = rec.times >= rec.evac_times[0]
    assert np.all(rec.positions[frozen, 0, :] == rec.positions[np.argmax(frozen), 0, :])


def test_failed_trajectory_is_recorded():
    domain = Domain(UNIT_SQUARE, obstacles=[CENTER_HOLE], sphere_radius=0.05)
    params = passive_params().resolved(domain, 1)
    prob = SimulationProblem(
        domain=domain,
        params=params,
        initial=CrowdState(active=np.zeros((0, 2)), passive=[[0.35, 0.35]], evacuated=None),
    )
    cfg = SchemeConfig(n=4, T=1.0, seed=0)
    inc = np.zeros((1, cfg.steps, 2))
    inc[0, 0] = (0.1, 0.1)  # dead-center shot at the hole corner
    rec = run_trajectory(prob, cfg, increments=inc)
    assert rec.failed
    assert rec.fail_step == 0
    assert "StuckInCorner" in rec.fail_reason or "AmbiguousProjection" in rec.fail_reason
    assert rec.times.shape == (1,)


def test_problem_validation(big_box):
    params = passive_params().resolved(big_box, 1)
    with pytest.raises(ValidationError):
        SimulationProblem(
            domain=big_box,
            params=params,
            initial=CrowdState(active=[[0.0, 5.0]], passive=np.zeros((0, 2)), evacuated=None),
        )  # active walker but no navigation field
    with pytest.raises(ValidationError):
        SimulationProblem(
            domain=big_box,
            params=params,
            initial=CrowdState(
                active=np.zeros((0, 2)), passive=[[0.0, -5.0]], evacuated=None
            ),
        )  # starts outside
    with pytest.raises(ValidationError):
        SimulationProblem(
            domain=big_box,
            params=passive_params(),
            initial=CrowdState(active=np.zeros((0, 2)), passive=[[0.0, 5.0]], evacuated=None),
        )  # unresolved params


def test_scheme_validation():
    with pytest.raises(ValidationError):
        SchemeConfig(n=0, T=1.0, seed=1)
    with pytest.raises(ValidationError):
        SchemeConfig(n=BASE_LEVEL + 1, T=1.0, seed=1)
    with pytest.raises(ValidationError):
        SchemeConfig(n=4, T=0.0, seed=1)
    with pytest.raises(ValidationError):
        SchemeConfig(n=4, T=1.0, seed=1, ensemble_size=0)
    with pytest.raises(ValidationError):
        SchemeConfig(n=4, T=1.0, seed=1, record_stride=0)


def test_time_rescaling_consistency():
    # halving the rate while doubling the horizon and doubling the driving
    # increments relabels the clock without changing the trajectory
    room = Domain(UNIT_SQUARE, exits=[(3, 0.0, 1.0, 0.05)], sphere_radius=0.1)
    nav = solve_navigation(room, build_grid(room, 1.0 / 16.0), 1.0, 0.05)
    params = passive_params(
        kappa=0.8, eta=2.0, p_max=3.0, smoke_critical=1.0, gate_width=0.12
    ).resolved(room, 3)
    smoke = SmokeField.plume((0.8, 0.8), 1.2, 0.25)
    prob1 = SimulationProblem(
        domain=room,
        params=params,
        initial=CrowdState(
            active=[[0.6, 0.4]], passive=[[0.4, 0.6], [0.55, 0.55]], evacuated=None
        ),
        smoke=smoke,
        nav=nav,
    )
    prob2 = replace(prob1, params=replace(params, kappa=params.kappa / 2.0))
    cfg1 = SchemeConfig(n=6, T=1.0, seed=77, ensemble_size=1)
    cfg2 = replace(cfg1, T=2.0)
    for member in range(3):
        inc1 = brownian_increments(cfg1.seed, cfg1.n, cfg1.T, 3, member=member)
        rec1 = run_trajectory(prob1, cfg1, member, increments=inc1)
        rec2 = run_trajectory(prob2, cfg2, member, increments=2.0 * inc1)
        assert rec1.clip_events == 0 and rec2.clip_events == 0
        assert np.array_equal(rec1.positions, rec2.positions)
        assert np.array_equal(rec1.regulator, rec2.regulator)
        assert np.array_equal(2.0 * rec1.times, rec2.times)
    # the distributional phrasing: terminal sample means agree trivially
    term1 = rec1.positions[-1].ravel()
    term2 = rec2.positions[-1].ravel()
    assert np.all(np.abs(term1 - term2) <= 1e-15)


# ---------------------------------------------------------------------------
# experiments


def test_stability_frozen_paths(big_box):
    prob = SimulationProblem(
        domain=big_box,
        params=passive_params().resolved(big_box, 2),
        initial=CrowdState(
            active=np.zeros((0, 2)), passive=[[0.0, 500.0], [3.0, 500.0]], evacuated=None
        ),
        smoke=SmokeField.plume((0.0, 500.0), 1e308, 1e6),
    )
    cfg = SchemeConfig(n=4, T=1.0, seed=21, ensemble_size=5)
    res = stability_experiment(prob, cfg, [1e-1, 1e-2])
    assert np.array_equal(res.max_sq, res.initial_sq)
    assert np.allclose(res.initial_sq, [1e-2, 1e-4], rtol=1e-12)
    assert abs(res.slope - 1.0) <= 1e-9
    assert np.allclose(res.ratios, 1.0, rtol=1e-12)
    assert np.all(res.pairs_used == 5)


def test_stability_slope_near_one(big_box):
    params = passive_params(kappa=0.5).resolved(big_box, 2)
    prob = SimulationProblem(
        domain=big_box,
        params=params,
        initial=CrowdState(
            active=np.zeros((0, 2)), passive=[[0.0, 500.0], [0.4, 500.2]], evacuated=None
        ),
    )
    cfg = SchemeConfig(n=5, T=1.0, seed=8, ensemble_size=40)
    res = stability_experiment(prob, cfg, [1e-1, 1e-2, 1e-3])
    assert 0.7 <= res.slope <= 1.3
    assert float(res.ratios.max() / res.ratios.min()) < 10.0


def test_stability_validates_magnitudes(lone_walker):
    cfg = SchemeConfig(n=4, T=1.0, seed=1)
    with pytest.raises(ValidationError):
        stability_experiment(lone_walker, cfg, [1e-3, 1e-2])
    with pytest.raises(ValidationError):
        stability_experiment(lone_walker, cfg, [0.0])


def test_convergence_exact_for_constant_coefficients(big_box):
    prob = SimulationProblem(
        domain=big_box,
        params=passive_params().resolved(big_box, 1),
        initial=CrowdState(active=np.zeros((0, 2)), passive=[[0.0, 50.0]], evacuated=None),
    )
    cfg = SchemeConfig(n=4, T=1.0, seed=31, ensemble_size=3)
    res = convergence_experiment(prob, cfg, [4, 6], ref_level=12)
    assert np.all(res.errors <= 1e-20)


def test_convergence_slope_with_reflection(lone_walker):
    cfg = SchemeConfig(n=4, T=1.0, seed=13, ensemble_size=150)
    res = convergence_experiment(lone_walker, cfg, [4, 5, 6], ref_level=9)
    assert np.all(np.diff(res.errors) < 0.0)
    assert res.slope_log2 > 0.25
    assert np.all(res.members_used == 150)


def test_convergence_validates_levels(lone_walker):
    cfg = SchemeConfig(n=4, T=1.0, seed=1)
    with pytest.raises(ValidationError):
        convergence_experiment(lone_walker, cfg, [8], ref_level=9)
    with pytest.raises(ValidationError):
        convergence_experiment(lone_walker, cfg, [4], ref_level=BASE_LEVEL + 1)


def test_terminal_distribution_half_normal(lone_walker):
    cfg = SchemeConfig(n=9, T=1.0, seed=42, ensemble_size=400, record_stride=512)
    recs = simulate(lone_walker, cfg)
    ys = np.sort([r.positions[-1, 0, 1] for r in recs])
    m = len(ys)
    cdf = math.erf  # half-normal CDF at y is erf(y / sqrt(2))
    F = np.array([cdf(y / math.sqrt(2.0)) for y in ys])
    grid = np.arange(1, m + 1) / m
    ks = float(np.max(np.maximum(np.abs(F - grid), np.abs(F - (grid - 1.0 / m)))))
    assert ks < 0.09


def test_holder_quotient_linear_path():
    times = np.linspace(0.0, 1.0, 9)
    vals = np.stack([times, np.zeros_like(times)], axis=1)
    expected = 0.0
    for i in range(9):
        for j in range(9):
            if i == j:
                continue
            gap = abs(times[i] - times[j])
            expected = max(expected, gap / gap**0.25)
    assert abs(holder_quotient(times, vals) - expected) <= 1e-12


def test_holder_quotient_stable_under_refinement(lone_walker):
    quotients = {}
    for n in (6, 10):
        cfg = SchemeConfig(n=n, T=1.0, seed=3, ensemble_size=25)
        vals = []
        for rec in simulate(lone_walker, cfg):
            vals.append(holder_quotient(rec.times, rec.driven_path()[:, 0, :]))
        quotients[n] = float(np.mean(vals))
    assert quotients[10] <= 2.0 * quotients[6]
