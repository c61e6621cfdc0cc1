"""Command line runner: scenario execution and verification pipelines.

Commands: simulate, navfield, nondim (scenario-driven) and the three
self-contained checks verify-reflect, verify-stability,
verify-convergence.  Exit codes: 0 success, 1 configuration problem,
2 numerical failure or a verification threshold miss.  All artifacts are
written deterministically: rerunning with the same seed gives identical
bytes regardless of worker count.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np
from scipy.special import erf

from . import __version__
from .errors import ConfigError, NumericalError
from .geometry import Domain
from .integrator import (
    SchemeConfig,
    SimulationProblem,
    convergence_experiment,
    simulate,
    stability_experiment,
)
from .model import CrowdState, ModelParams, SmokeField
from .navfield import EXIT, INTERIOR, OUTSIDE, WALL, build_grid, solve_navigation
from .nondim import compute_kappa, dimensionless_groups
from .scenario import Scenario, dumps_canonical, load_scenario

_NODE_NAMES = {OUTSIDE: "outside", INTERIOR: "interior", WALL: "wall", EXIT: "exit"}


# ---------------------------------------------------------------------------
# artifact writers


def _write_trajectories(path: Path, recs, stride: int, steps: int) -> None:
    lines = ["member,step,time,pedestrian,kind,x,y,tv,evacuated"]
    for rec in recs:
        for r in range(rec.times.shape[0]):
            step_no = min(r * stride, steps)
            t_txt = repr(float(rec.times[r]))
            for k in range(rec.n_total):
                lines.append(
                    f"{rec.member},{step_no},{t_txt},{k},{rec.kind(k)},"
                    f"{float(rec.positions[r, k, 0])!r},{float(rec.positions[r, k, 1])!r},"
                    f"{float(rec.tv[r, k])!r},{int(rec.evac_flags[r, k])}"
                )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _evac_stats(recs, n_active: int):
    def bucket(times):
        done = [float(t) for t in times if math.isfinite(t)]
        done.sort()
        out = {"evacuated": len(done), "total": len(times)}
        if done:
            out["mean_time"] = sum(done) / len(done)
            mid = len(done) // 2
            out["median_time"] = done[mid] if len(done) % 2 else 0.5 * (done[mid - 1] + done[mid])
        else:
            out["mean_time"] = None
            out["median_time"] = None
        return out

    all_t, act_t, pas_t = [], [], []
    for rec in recs:
        for k in range(rec.n_total):
            t = rec.evac_times[k]
            all_t.append(t)
            (act_t if k < n_active else pas_t).append(t)
    return {
        "overall": bucket(all_t),
        "active": bucket(act_t),
        "passive": bucket(pas_t),
    }


def _write_metadata(path: Path, scn: Scenario, recs) -> None:
    meta = {
        "version": __version__,
        "seed": scn.scheme.seed,
        "level": scn.scheme.n,
        "horizon": scn.scheme.T,
        "ensemble_size": scn.scheme.ensemble_size,
        "record_stride": scn.scheme.record_stride,
        "absorb_at_exit": scn.scheme.absorb_at_exit,
        "kappa": scn.params.kappa,
        "scale_groups": list(dimensionless_groups(scn.scales)),
        "scale_kappa": compute_kappa(scn.scales),
        "n_active": scn.initial.n_active,
        "n_passive": scn.initial.n_passive,
        "clip_events": sum(r.clip_events for r in recs),
        "boundary_pushes": sum(r.substeps for r in recs),
        "failed_members": [
            {"member": r.member, "step": r.fail_step, "reason": r.fail_reason}
            for r in recs
            if r.failed
        ],
    }
    if scn.scheme.absorb_at_exit:
        meta["evacuation"] = _evac_stats(recs, scn.initial.n_active)
    path.write_text(dumps_canonical(meta), encoding="utf-8")


def _write_navfield(path: Path, nf) -> None:
    mask = nf.grid.mask
    xs = nf.grid.xs()
    ys = nf.grid.ys()
    lines = ["i,j,x,y,node,phi,grad_x,grad_y"]
    for j in range(nf.grid.ny):
        for i in range(nf.grid.nx):
            lines.append(
                f"{i},{j},{float(xs[i])!r},{float(ys[j])!r},{_NODE_NAMES[mask[j, i]]},"
                f"{float(nf.phi[j, i])!r},{float(nf.grad[j, i, 0])!r},{float(nf.grad[j, i, 1])!r}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# built-in verification problems


def _reflected_walker(seed: int, members: int, level: int) -> tuple[SimulationProblem, SchemeConfig]:
    # lone noisy walker released on the bottom wall of a box so large that
    # only that wall is ever reached: unit diffusion, zero drift
    box = Domain(
        outer=[(-500.0, 0.0), (500.0, 0.0), (500.0, 1000.0), (-500.0, 1000.0)],
        sphere_radius=5.0,
    )
    params = ModelParams(
        zeta=1.0,
        eta=1.0,
        c_attract=1.0,
        c_repulse=1.0,
        ell_attract=1.0,
        ell_repulse=1.0,
        eps=0.1,
        discomfort_radius=0.3,
        smoke_critical=10.0,
        gate_width=0.01,
        kappa=1.0,
        clip_bound=1e6,
    ).resolved(box, 1)
    initial = CrowdState(
        active=np.zeros((0, 2)), passive=np.array([[0.0, 0.0]]), evacuated=None
    )
    problem = SimulationProblem(domain=box, params=params, initial=initial)
    cfg = SchemeConfig(
        n=level, T=1.0, seed=seed, ensemble_size=members, record_stride=1 << level
    )
    return problem, cfg


def _stability_benchmark(seed: int, pairs: int) -> tuple[SimulationProblem, SchemeConfig]:
    # six pedestrians, both populations, smoke plume, smooth crowding
    room = Domain(
        outer=[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
        exits=[(3, 0.3, 0.7, 0.05)],
        sphere_radius=0.05,
    )
    params = ModelParams(
        zeta=0.8,
        eta=1.0,
        c_attract=0.6,
        c_repulse=1.2,
        ell_attract=0.45,
        ell_repulse=0.22,
        eps=0.08,
        discomfort_radius=0.3,
        smoke_critical=1.0,
        gate_width=0.12,
        kappa=0.35,
        clip_bound=25.0,
        smooth_discomfort=True,
    ).resolved(room, 6)
    nav = solve_navigation(room, build_grid(room, 1.0 / 32))
    initial = CrowdState(
        active=np.array([[0.35, 0.3], [0.3, 0.6], [0.4, 0.75]]),
        passive=np.array([[0.65, 0.3], [0.7, 0.6], [0.6, 0.75]]),
        evacuated=None,
    )
    problem = SimulationProblem(
        domain=room,
        params=params,
        initial=initial,
        smoke=SmokeField.plume((0.8, 0.8), 1.2, 0.25),
        nav=nav,
    )
    cfg = SchemeConfig(n=6, T=1.0, seed=seed, ensemble_size=pairs)
    return problem, cfg


def ks_distance_half_normal(samples: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance between the samples and the law of
    |Z| for a standard normal Z."""
    r = np.sort(np.asarray(samples, dtype=float))
    n = r.size
    if n == 0:
        raise ConfigError("no samples")
    cdf = erf(r / math.sqrt(2.0))
    grid = np.arange(n, dtype=float)
    return float(max(np.max(cdf - grid / n), np.max((grid + 1.0) / n - cdf)))


# ---------------------------------------------------------------------------
# commands


def _cmd_simulate(args) -> int:
    scn = load_scenario(
        args.scenario, seed=args.seed, level=args.level, ensemble=args.ensemble
    )
    out = scn.out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scn.write_normalized(out)
    problem = scn.build_problem()
    recs = simulate(problem, scn.scheme, workers=args.workers)
    _write_trajectories(
        out / scn.outputs.trajectories, recs, scn.scheme.record_stride, scn.scheme.steps
    )
    _write_metadata(out / scn.outputs.metadata, scn, recs)
    if scn.outputs.navfield is not None:
        nav = problem.nav if problem.nav is not None else scn.solve_field()
        _write_navfield(out / scn.outputs.navfield, nav)
    failed = [r for r in recs if r.failed]
    evacuated = sum(int(r.evac_flags[-1].sum()) for r in recs)
    print(
        f"simulate: {len(recs)} members, {evacuated} evacuations, "
        f"outputs in {out}"
    )
    if failed:
        for r in failed:
            print(f"member {r.member} failed at step {r.fail_step}: {r.fail_reason}",
                  file=sys.stderr)
        return 2
    return 0


def _cmd_navfield(args) -> int:
    scn = load_scenario(args.scenario, seed=args.seed, level=args.level,
                        ensemble=args.ensemble)
    out = scn.out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scn.write_normalized(out)
    nf = scn.solve_field()
    name = scn.outputs.navfield or "navfield.csv"
    _write_navfield(out / name, nf)
    finite = nf.phi[np.isfinite(nf.phi)]
    print(
        f"navfield: {nf.grid.nx}x{nf.grid.ny} nodes, varsigma {nf.varsigma!r}, "
        f"residual {nf.residual_norm:.3e}, "
        f"phi range [{float(finite.min())!r}, {float(finite.max())!r}], "
        f"wrote {out / name}"
    )
    return 0


def _cmd_nondim(args) -> int:
    scn = load_scenario(args.scenario, seed=args.seed, level=args.level,
                        ensemble=args.ensemble)
    crowd, local, pair, gate = dimensionless_groups(scn.scales)
    print(f"crowd: {crowd!r}")
    print(f"local: {local!r}")
    print(f"pair: {pair!r}")
    print(f"gate: {gate!r}")
    print(f"kappa: {compute_kappa(scn.scales)!r}")
    return 0


def _cmd_verify_reflect(args) -> int:
    members = 10_000 if args.ensemble is None else args.ensemble
    level = 10 if args.level is None else args.level
    seed = 2024 if args.seed is None else args.seed
    problem, cfg = _reflected_walker(seed, members, level)
    recs = simulate(problem, cfg, workers=args.workers)
    bad = [r for r in recs if r.failed]
    if bad:
        print(f"verify-reflect: {len(bad)} failed trajectories", file=sys.stderr)
        return 2
    terminal = np.array([r.positions[-1, 0, 1] for r in recs])
    dist = ks_distance_half_normal(terminal)
    ok = dist < 0.02
    print(
        f"verify-reflect: {members} members at level {level}, "
        f"KS distance to half-normal {dist:.5f} (threshold 0.02): "
        f"{'PASS' if ok else 'FAIL'}"
    )
    return 0 if ok else 2


def _cmd_verify_stability(args) -> int:
    pairs = 500 if args.ensemble is None else args.ensemble
    seed = 2024 if args.seed is None else args.seed
    problem, cfg = _stability_benchmark(seed, pairs)
    res = stability_experiment(problem, cfg, [1e-1, 1e-2, 1e-3])
    spread = float(np.max(res.ratios) / np.min(res.ratios))
    slope_ok = 0.8 <= res.slope <= 1.2
    spread_ok = spread <= 10.0
    print(
        f"verify-stability: {pairs} pairs per magnitude, slope {res.slope:.4f} "
        f"(window [0.8, 1.2]): {'PASS' if slope_ok else 'FAIL'}"
    )
    print(
        f"verify-stability: gap ratios {[float(f'{v:.5g}') for v in res.ratios]}, "
        f"spread {spread:.3f} (bound 10): {'PASS' if spread_ok else 'FAIL'}"
    )
    return 0 if slope_ok and spread_ok else 2


def _cmd_verify_convergence(args) -> int:
    members = 2000 if args.ensemble is None else args.ensemble
    seed = 2024 if args.seed is None else args.seed
    problem, cfg = _reflected_walker(seed, members, 4)
    res = convergence_experiment(problem, cfg, levels=[4, 5, 6, 7, 8, 9], ref_level=12)
    ok = res.slope_log2 >= 0.4
    errs = ", ".join(f"{e:.3e}" for e in res.errors)
    print(f"verify-convergence: strong errors [{errs}]")
    print(
        f"verify-convergence: {members} members, log2 slope {res.slope_log2:.4f} "
        f"(threshold 0.4): {'PASS' if ok else 'FAIL'}"
    )
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdsim",
        description="Reflected-SDE crowd evacuation simulator",
    )
    parser.add_argument("--version", action="version", version=f"crowdsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required):
        if scenario_required:
            p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--level", type=int, default=None, help="override the dyadic level")
        p.add_argument("--ensemble", type=int, default=None, help="override the member count")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="worker processes")

    for name, fn, needs_scenario in (
        ("simulate", _cmd_simulate, True),
        ("navfield", _cmd_navfield, True),
        ("nondim", _cmd_nondim, True),
        ("verify-reflect", _cmd_verify_reflect, False),
        ("verify-stability", _cmd_verify_stability, False),
        ("verify-convergence", _cmd_verify_convergence, False),
    ):
        p = sub.add_parser(name)
        common(p, needs_scenario)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
