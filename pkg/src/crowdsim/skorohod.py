"""Reflection of piecewise-linear driving paths at polygonal boundaries.

Two solvers live here. The one-dimensional map on the half-line [0, inf) is
exact: the regulator is the running minimum of the driver, clipped at zero.
The planar engine advances a path increment by increment: free motion while
the segment stays inside the closure, otherwise a one-shot projection of the
leftover endpoint, validated geometrically and bisected in time whenever the
validation fails (reentrant corners, ambiguous projections, tunneling).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousProjection, OutsideDomain, StuckInCorner, ValidationError
from .geometry import Domain

# reflection engine limits: bisection depth per piece chain, total pieces
_MAX_DEPTH = 64
_MAX_PIECES = 20_000

# a regulator direction must align this well with the normal cone
_CONE_ALIGN = 1.0 - 1e-6


@dataclass
class DrivingPath:
    """Piecewise-linear path given by knots; scalar values or planar points."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValidationError("path.times: need a 1-d array with at least one knot")
        if self.times[0] != 0.0:
            raise ValidationError("path.times: must start at 0")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValidationError("path.times: must be strictly increasing")
        if len(self.values) != len(self.times):
            raise ValidationError("path.values: length must match times")
        if self.values.ndim == 2 and self.values.shape[1] != 2:
            raise ValidationError("path.values: planar paths need shape (K, 2)")

    @property
    def is_scalar(self) -> bool:
        return self.values.ndim == 1


@dataclass
class SkorohodSolution:
    """Reflected path, cumulative regulator, and its running total variation.

    ``normals[k]`` lists the regulator increments applied on the interval
    ending at knot k as (unit direction, magnitude) pairs; empty when the
    interval stayed interior.
    """

    times: np.ndarray
    xi: np.ndarray
    phi: np.ndarray
    tv: np.ndarray
    normals: list = field(default_factory=list)


def gamma_1d(w: DrivingPath) -> SkorohodSolution:
    """Exact Skorohod map on the half-line [0, inf).

    The regulator is phi(t) = -min(0, min_{s<=t} w(s)); piecewise-linear
    paths attain their extrema at knots, so the knot-level running minimum
    is the exact continuous one.
    """
    if not w.is_scalar:
        raise ValidationError("gamma_1d expects a scalar path")
    vals = w.values
    if vals[0] < 0.0:
        raise ValidationError("gamma_1d: path must start in [0, inf)")
    phi = -np.minimum(0.0, np.minimum.accumulate(vals))
    xi = vals + phi
    normals = [[] for _ in range(len(vals))]
    prev = 0.0
    for k in range(len(vals)):
        d = phi[k] - prev
        if d > 0.0:
            normals[k].append((1.0, d))
        prev = phi[k]
    return SkorohodSolution(w.times.copy(), xi, phi, phi.copy(), normals)


def reflect_increment(domain: Domain, x, delta):
    """Reflect the straight driving segment x -> x + delta inside the domain.

    Returns ``(x_new, dphi, hits)`` where dphi = x_new - (x + delta) and each
    hit is a ``(boundary point, unit regulator direction, magnitude)`` triple.
    The endpoint of a crossing segment is projected back onto the closure in
    one shot; the projection is accepted only when the chord from the hit
    point stays inside and the push direction lies in the normal cone at the
    landing point. Otherwise the leftover motion is bisected in time.
    """
    px, py = float(x[0]), float(x[1])
    dx, dy = float(delta[0]), float(delta[1])
    x0, y0 = px, py
    hits = []
    tol_zero = domain.tol_zero
    res_floor = domain.tol_boundary
    stack = [(dx, dy, 0)]
    pops = 0
    while stack:
        pops += 1
        if pops > _MAX_PIECES:
            raise StuckInCorner(
                f"reflection exceeded {_MAX_PIECES} pieces near ({px:.6g}, {py:.6g})"
            )
        ux, uy, depth = stack.pop()
        qx, qy = px + ux, py + uy
        if depth > 0 and math.hypot(ux, uy) <= res_floor:
            # sub-resolution piece: resolve by plain projection; the error
            # stays inside the containment tolerance band, and the push is
            # folded into dphi without a recorded contact
            if domain.contains((qx, qy)):
                px, py = qx, qy
            else:
                try:
                    (px, py), _ = domain.project((qx, qy))
                except AmbiguousProjection:
                    pass  # drop the piece, stay put
            continue
        t = domain.first_exit((px, py), (qx, qy))
        if t is None:
            px, py = qx, qy
            continue
        hx, hy = px + t * ux, py + t * uy
        rx, ry = (1.0 - t) * ux, (1.0 - t) * uy
        if math.hypot(rx, ry) <= tol_zero:
            px, py = hx, hy
            continue
        # one-shot candidate: project the leftover endpoint
        ex, ey = hx + rx, hy + ry
        accepted = False
        ambiguous = None
        try:
            (jx, jy), dist = domain.project((ex, ey))
        except AmbiguousProjection as exc:
            ambiguous = exc
        else:
            if dist > tol_zero:
                gx, gy = jx - ex, jy - ey
                align = domain.cone_support((jx, jy), (gx / dist, gy / dist))
                if align >= _CONE_ALIGN and domain.first_exit((hx, hy), (jx, jy)) is None:
                    hits.append(((jx, jy), (gx / dist, gy / dist), dist))
                    px, py = jx, jy
                    accepted = True
        if accepted:
            continue
        # validation failed: advance to the hit point, retry the leftover in
        # halves; a persistent projection tie propagates once this chain's
        # bisection budget is spent
        if depth >= _MAX_DEPTH:
            if ambiguous is not None:
                raise ambiguous
            raise StuckInCorner(
                f"reflection bisection exhausted {_MAX_DEPTH} levels near "
                f"({hx:.6g}, {hy:.6g})"
            )
        px, py = hx, hy
        stack.append((0.5 * rx, 0.5 * ry, depth + 1))
        stack.append((0.5 * rx, 0.5 * ry, depth + 1))
    dphi = (px - (x0 + dx), py - (y0 + dy))
    return (px, py), dphi, hits


def solve_path(domain: Domain, w: DrivingPath) -> SkorohodSolution:
    """Knot-to-knot reflection of a planar driving path.

    The output decomposes as xi = w + phi with xi inside the closure at
    every knot; tv accumulates the magnitudes of all regulator increments,
    including multiple contacts within one knot interval.
    """
    if w.is_scalar:
        raise ValidationError("solve_path expects a planar path; use gamma_1d for scalars")
    k = len(w.times)
    start = (w.values[0, 0], w.values[0, 1])
    if not domain.contains(start):
        raise OutsideDomain(f"path starts outside the domain at {start}")
    xi = np.empty((k, 2))
    phi = np.zeros((k, 2))
    tv = np.zeros(k)
    normals = [[]]
    xi[0] = start
    px, py = start
    cx, cy = 0.0, 0.0  # cumulative regulator
    cum_tv = 0.0
    for i in range(1, k):
        ux = w.values[i, 0] - w.values[i - 1, 0]
        uy = w.values[i, 1] - w.values[i - 1, 1]
        (px, py), dphi, hits = reflect_increment(domain, (px, py), (ux, uy))
        cx += dphi[0]
        cy += dphi[1]
        for _, _, mag in hits:
            cum_tv += mag
        xi[i] = (px, py)
        phi[i] = (cx, cy)
        tv[i] = cum_tv
        normals.append([(direction, mag) for _, direction, mag in hits])
    return SkorohodSolution(w.times.copy(), xi, phi, tv, normals)
