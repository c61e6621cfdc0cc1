"""Scenario files: one JSON document describes a full run.

A scenario has five blocks: geometry (the room), model (parameters,
smoke, starting crowd, navigation grid), scales (reference magnitudes),
scheme (dyadic level, horizon, seed, ensemble) and outputs (where and
what to write).  Loading materializes every default and keeps the
normalized form, so the echoed copy reloads to an identical scenario and
a run can be reproduced from it bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import Domain
from .integrator import BASE_LEVEL, SchemeConfig, SimulationProblem
from .model import CrowdState, ModelParams, SmokeField
from .navfield import NavigationField, build_grid, solve_navigation
from .nondim import ReferenceScales

_MISSING = object()

# plumbing defaults for a minimal scenario; every materialized value is
# echoed into the normalized copy
_PARAM_DEFAULTS = {
    "zeta": 1.0,
    "eta": 1.0,
    "c_attract": 1.0,
    "c_repulse": 1.0,
    "ell_attract": 1.0,
    "ell_repulse": 1.0,
    "eps": 0.1,
    "smoke_critical": 1.0,
    "gate_width": 0.1,
    "kappa": 1.0,
    "clip_bound": 100.0,
}


def _table(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ValidationError(f"{where} must be a table of key/value pairs")
    return obj


def _check_keys(tbl: dict, allowed, where: str) -> None:
    for key in tbl:
        if key not in allowed:
            raise ValidationError(f"{where}.{key}: unknown key")


def _field(tbl: dict, key: str, where: str, default=_MISSING):
    if key in tbl:
        return tbl[key]
    if default is _MISSING:
        raise ValidationError(f"{where}.{key} is required")
    return default


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where} must be a number")
    return float(v)


def _int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{where} must be an integer")
    return v


def _bool(v, where: str) -> bool:
    if not isinstance(v, bool):
        raise ValidationError(f"{where} must be true or false")
    return v


def _str(v, where: str) -> str:
    if not isinstance(v, str):
        raise ValidationError(f"{where} must be a string")
    return v


def _point(v, where: str) -> list[float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValidationError(f"{where} must be a pair [x, y]")
    return [_num(v[0], f"{where}[0]"), _num(v[1], f"{where}[1]")]


def _points(v, where: str) -> list[list[float]]:
    if not isinstance(v, list):
        raise ValidationError(f"{where} must be a list of [x, y] pairs")
    return [_point(p, f"{where}[{i}]") for i, p in enumerate(v)]


def _rings(v, where: str) -> list[list[list[float]]]:
    if not isinstance(v, list):
        raise ValidationError(f"{where} must be a list of polygons")
    return [_points(r, f"{where}[{i}]") for i, r in enumerate(v)]


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    trajectories: str = "trajectories.csv"
    metadata: str = "metadata.json"
    navfield: str | None = None
    stride: int = 1


@dataclass
class Scenario:
    """A fully validated run description with all defaults materialized."""

    domain: Domain
    params: ModelParams  # resolved against the domain and head count
    smoke: SmokeField
    initial: CrowdState
    nav_spacing: float
    nav_varsigma: float
    nav_speed: float
    scales: ReferenceScales
    scheme: SchemeConfig
    outputs: OutputSpec
    normalized: dict  # JSON-ready echo of the effective configuration
    base_dir: Path  # directory of the source file; anchors relative outputs

    def out_dir(self, override: str | Path | None = None) -> Path:
        if override is not None:
            return Path(override)
        d = Path(self.outputs.directory)
        return d if d.is_absolute() else self.base_dir / d

    def solve_field(self) -> NavigationField:
        grid = build_grid(self.domain, self.nav_spacing)
        return solve_navigation(
            self.domain, grid, speed=self.nav_speed, varsigma=self.nav_varsigma
        )

    def build_problem(self) -> SimulationProblem:
        nav = self.solve_field() if self.initial.n_active > 0 else None
        return SimulationProblem(
            domain=self.domain,
            params=self.params,
            initial=self.initial,
            smoke=self.smoke,
            nav=nav,
        )

    def write_normalized(self, out_dir: str | Path | None = None) -> Path:
        target = self.out_dir(out_dir)
        target.mkdir(parents=True, exist_ok=True)
        path = target / "scenario.normalized.json"
        path.write_text(dumps_canonical(self.normalized), encoding="utf-8")
        return path


def dumps_canonical(obj) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _parse_geometry(block) -> tuple[Domain, dict]:
    tbl = _table(block, "geometry")
    _check_keys(
        tbl, {"outer", "obstacles", "fire", "exits", "sphere_radius"}, "geometry"
    )
    outer = _points(_field(tbl, "outer", "geometry"), "geometry.outer")
    obstacles = _rings(_field(tbl, "obstacles", "geometry", []), "geometry.obstacles")
    fire_raw = _field(tbl, "fire", "geometry", None)
    fire = None if fire_raw is None else _points(fire_raw, "geometry.fire")
    exits_raw = _field(tbl, "exits", "geometry", [])
    if not isinstance(exits_raw, list):
        raise ValidationError("geometry.exits must be a list")
    exits = []
    for k, spec in enumerate(exits_raw):
        where = f"geometry.exits[{k}]"
        if not isinstance(spec, (list, tuple)) or len(spec) != 4:
            raise ValidationError(f"{where} must be [edge, t0, t1, absorb_radius]")
        exits.append(
            (
                _int(spec[0], f"{where}[0]"),
                _num(spec[1], f"{where}[1]"),
                _num(spec[2], f"{where}[2]"),
                _num(spec[3], f"{where}[3]"),
            )
        )
    radius = _num(_field(tbl, "sphere_radius", "geometry", 0.05), "geometry.sphere_radius")
    domain = Domain(
        outer=outer, obstacles=obstacles, fire=fire, exits=exits, sphere_radius=radius
    )
    echo = {
        "outer": outer,
        "obstacles": obstacles,
        "fire": fire,
        "exits": [[e, t0, t1, r] for e, t0, t1, r in exits],
        "sphere_radius": radius,
    }
    return domain, echo


def _parse_params(block, domain: Domain) -> tuple[ModelParams, dict]:
    tbl = _table(block, "model.params")
    allowed = set(_PARAM_DEFAULTS) | {
        "discomfort_radius",
        "discomfort_weight",
        "p_max",
        "smooth_discomfort",
    }
    _check_keys(tbl, allowed, "model.params")
    values = {
        name: _num(_field(tbl, name, "model.params", default), f"model.params.{name}")
        for name, default in _PARAM_DEFAULTS.items()
    }
    values["discomfort_radius"] = _num(
        _field(tbl, "discomfort_radius", "model.params", 0.2 * domain.diameter),
        "model.params.discomfort_radius",
    )
    for opt in ("discomfort_weight", "p_max"):
        raw = _field(tbl, opt, "model.params", None)
        values[opt] = None if raw is None else _num(raw, f"model.params.{opt}")
    values["smooth_discomfort"] = _bool(
        _field(tbl, "smooth_discomfort", "model.params", False),
        "model.params.smooth_discomfort",
    )
    try:
        params = ModelParams(**values)
    except ValidationError as exc:
        raise ValidationError(str(exc)) from None
    return params, dict(values)


def _parse_smoke(block) -> tuple[SmokeField, dict]:
    if block is None:
        return SmokeField.none(), {"kind": "none"}
    tbl = _table(block, "model.smoke")
    kind = _str(_field(tbl, "kind", "model.smoke", "none"), "model.smoke.kind")
    if kind == "none":
        _check_keys(tbl, {"kind"}, "model.smoke")
        return SmokeField.none(), {"kind": "none"}
    if kind == "gaussian_plume":
        _check_keys(tbl, {"kind", "center", "amplitude", "width"}, "model.smoke")
        center = _point(_field(tbl, "center", "model.smoke"), "model.smoke.center")
        amp = _num(_field(tbl, "amplitude", "model.smoke"), "model.smoke.amplitude")
        width = _num(_field(tbl, "width", "model.smoke"), "model.smoke.width")
        plume = SmokeField.plume((center[0], center[1]), amp, width)
        return plume, {"kind": kind, "center": center, "amplitude": amp, "width": width}
    if kind == "user_grid":
        _check_keys(tbl, {"kind", "origin", "spacing", "values"}, "model.smoke")
        origin = _point(_field(tbl, "origin", "model.smoke"), "model.smoke.origin")
        spacing = _num(_field(tbl, "spacing", "model.smoke"), "model.smoke.spacing")
        raw = _field(tbl, "values", "model.smoke")
        if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
            raise ValidationError("model.smoke.values must be a 2-d array of numbers")
        width = len(raw[0])
        vals = []
        for j, row in enumerate(raw):
            if len(row) != width:
                raise ValidationError("model.smoke.values rows must have equal length")
            vals.append([_num(v, f"model.smoke.values[{j}][{i}]") for i, v in enumerate(row)])
        grid_field = SmokeField.from_grid((origin[0], origin[1]), spacing, np.array(vals))
        return grid_field, {"kind": kind, "origin": origin, "spacing": spacing, "values": vals}
    raise ValidationError(f"model.smoke.kind: unknown kind {kind!r}")


def _parse_crowd(block, domain: Domain) -> tuple[CrowdState, dict]:
    tbl = _table(block, "model.crowd")
    _check_keys(tbl, {"active", "passive"}, "model.crowd")
    active = _points(_field(tbl, "active", "model.crowd", []), "model.crowd.active")
    passive = _points(_field(tbl, "passive", "model.crowd", []), "model.crowd.passive")
    if not active and not passive:
        raise ValidationError("model.crowd needs at least one pedestrian")
    for name, pts in (("active", active), ("passive", passive)):
        for i, (x, y) in enumerate(pts):
            if not domain.contains((x, y)):
                raise ValidationError(
                    f"model.crowd.{name}[{i}] at ({x:.6g}, {y:.6g}) is outside the domain"
                )
    state = CrowdState(
        active=np.array(active, dtype=float).reshape(len(active), 2),
        passive=np.array(passive, dtype=float).reshape(len(passive), 2),
        evacuated=None,
    )
    return state, {"active": active, "passive": passive}


def _parse_navigation(block, domain: Domain) -> tuple[float, float, float, dict]:
    tbl = _table(block, "model.navigation") if block is not None else {}
    _check_keys(tbl, {"h", "varsigma", "speed"}, "model.navigation")
    h = _num(_field(tbl, "h", "model.navigation", domain.diameter / 64.0), "model.navigation.h")
    if not h > 0.0:
        raise ValidationError("model.navigation.h must be positive")
    vs_raw = _field(tbl, "varsigma", "model.navigation", None)
    varsigma = 0.02 * domain.diameter if vs_raw is None else _num(vs_raw, "model.navigation.varsigma")
    if not varsigma > 0.0:
        raise ValidationError("model.navigation.varsigma must be positive")
    speed = _num(_field(tbl, "speed", "model.navigation", 1.0), "model.navigation.speed")
    if not speed > 0.0:
        raise ValidationError("model.navigation.speed must be positive")
    echo = {"h": h, "varsigma": varsigma, "speed": speed}
    return h, varsigma, speed, echo


def _parse_scales(block, domain: Domain) -> tuple[ReferenceScales, dict]:
    tbl = _table(block, "scales") if block is not None else {}
    names = (
        "x_ref",
        "t_ref",
        "s_ref",
        "p_ref",
        "upsilon_ref",
        "omega_ref",
        "beta_ref",
        "phi_ref",
        "mu_ref",
        "p_max",
    )
    _check_keys(tbl, set(names), "scales")
    given = {k: _num(tbl[k], f"scales.{k}") for k in tbl}
    scales = ReferenceScales.for_domain(domain, **given)
    echo = {k: getattr(scales, k) for k in names}
    return scales, echo


def _parse_scheme(block, domain: Domain, outputs: OutputSpec) -> tuple[SchemeConfig, dict]:
    tbl = _table(block, "scheme") if block is not None else {}
    _check_keys(tbl, {"n", "T", "seed", "ensemble_size", "absorb_at_exit"}, "scheme")
    n = _int(_field(tbl, "n", "scheme", 8), "scheme.n")
    T = _num(_field(tbl, "T", "scheme", 1.0), "scheme.T")
    seed = _int(_field(tbl, "seed", "scheme", 0), "scheme.seed")
    ensemble = _int(_field(tbl, "ensemble_size", "scheme", 1), "scheme.ensemble_size")
    absorb = _bool(
        _field(tbl, "absorb_at_exit", "scheme", bool(domain.exits)),
        "scheme.absorb_at_exit",
    )
    if not 1 <= n <= BASE_LEVEL:
        raise ValidationError(f"scheme.n must be in [1, {BASE_LEVEL}], got {n}")
    cfg = SchemeConfig(
        n=n,
        T=T,
        seed=seed,
        ensemble_size=ensemble,
        absorb_at_exit=absorb,
        record_stride=outputs.stride,
    )
    echo = {"n": n, "T": T, "seed": seed, "ensemble_size": ensemble, "absorb_at_exit": absorb}
    return cfg, echo


def _parse_outputs(block) -> tuple[OutputSpec, dict]:
    tbl = _table(block, "outputs") if block is not None else {}
    _check_keys(tbl, {"directory", "trajectories", "metadata", "navfield", "stride"}, "outputs")
    directory = _str(_field(tbl, "directory", "outputs", "out"), "outputs.directory")
    traj = _str(_field(tbl, "trajectories", "outputs", "trajectories.csv"), "outputs.trajectories")
    meta = _str(_field(tbl, "metadata", "outputs", "metadata.json"), "outputs.metadata")
    nav_raw = _field(tbl, "navfield", "outputs", None)
    nav = None if nav_raw is None else _str(nav_raw, "outputs.navfield")
    stride = _int(_field(tbl, "stride", "outputs", 1), "outputs.stride")
    if stride < 1:
        raise ValidationError("outputs.stride must be at least 1")
    spec = OutputSpec(
        directory=directory, trajectories=traj, metadata=meta, navfield=nav, stride=stride
    )
    echo = {
        "directory": directory,
        "trajectories": traj,
        "metadata": meta,
        "navfield": nav,
        "stride": stride,
    }
    return spec, echo


def _min_hole_edge(domain: Domain) -> float:
    best = math.inf
    holes = list(domain.obstacles) + ([domain.fire] if domain.fire else [])
    for ring in holes:
        m = len(ring)
        for i in range(m):
            ax, ay = ring[i]
            bx, by = ring[(i + 1) % m]
            best = min(best, math.hypot(bx - ax, by - ay))
    return best


def scenario_from_dict(doc: dict, base_dir: str | Path = ".") -> Scenario:
    """Validate a parsed scenario document and materialize every default."""
    doc = _table(doc, "scenario")
    _check_keys(doc, {"geometry", "model", "scales", "scheme", "outputs"}, "scenario")
    domain, geo_echo = _parse_geometry(_field(doc, "geometry", "scenario"))

    model_tbl = _table(_field(doc, "model", "scenario"), "model")
    _check_keys(model_tbl, {"params", "smoke", "crowd", "navigation"}, "model")
    params, par_echo = _parse_params(_field(model_tbl, "params", "model", {}), domain)
    smoke, smoke_echo = _parse_smoke(_field(model_tbl, "smoke", "model", None))
    initial, crowd_echo = _parse_crowd(_field(model_tbl, "crowd", "model"), domain)
    h, varsigma, speed, nav_echo = _parse_navigation(
        _field(model_tbl, "navigation", "model", None), domain
    )

    scales, scales_echo = _parse_scales(_field(doc, "scales", "scenario", None), domain)
    outputs, out_echo = _parse_outputs(_field(doc, "outputs", "scenario", None))
    scheme, scheme_echo = _parse_scheme(
        _field(doc, "scheme", "scenario", None), domain, outputs
    )

    # cross-block invariants
    if not params.discomfort_radius < domain.diameter:
        raise ValidationError(
            "model.params.discomfort_radius must be smaller than the domain diameter"
        )
    feature = _min_hole_edge(domain)
    if math.isfinite(feature) and not h < feature / 4.0:
        raise ValidationError(
            f"model.navigation.h must be below a quarter of the shortest obstacle "
            f"edge ({feature:.6g}); got {h:.6g}"
        )
    if initial.n_active > 0 and not domain.exits:
        raise ValidationError("geometry.exits: active pedestrians need at least one exit")

    resolved = params.resolved(domain, initial.n_total)
    normalized = {
        "geometry": geo_echo,
        "model": {
            "params": par_echo,
            "smoke": smoke_echo,
            "crowd": crowd_echo,
            "navigation": nav_echo,
        },
        "scales": scales_echo,
        "scheme": scheme_echo,
        "outputs": out_echo,
    }
    return Scenario(
        domain=domain,
        params=resolved,
        smoke=smoke,
        initial=initial,
        nav_spacing=h,
        nav_varsigma=varsigma,
        nav_speed=speed,
        scales=scales,
        scheme=scheme,
        outputs=outputs,
        normalized=normalized,
        base_dir=Path(base_dir),
    )


def load_scenario(
    path: str | Path,
    *,
    seed: int | None = None,
    level: int | None = None,
    ensemble: int | None = None,
) -> Scenario:
    """Read, validate and normalize a scenario file.

    seed, level and ensemble override the scheme block before validation,
    so the normalized echo always reflects the effective run.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    overrides = (("seed", seed), ("n", level), ("ensemble_size", ensemble))
    if any(v is not None for _, v in overrides):
        scheme = dict(_table(doc.get("scheme", {}), "scheme"))
        for key, val in overrides:
            if val is not None:
                scheme[key] = val
        doc = dict(doc)
        doc["scheme"] = scheme
    return scenario_from_dict(doc, base_dir=path.parent)
