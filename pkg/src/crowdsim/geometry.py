"""Polygonal walking domains: containment, projection, inward normal cones.

The walkable region is the closure of a simple outer polygon minus a set of
polygonal holes (obstacles, optionally a burning region). Exits are
sub-segments of outer edges and stay part of the reflecting boundary; they
only matter to the navigation solver and to optional absorption bookkeeping.

Boundary reasoning is tolerance based and every tolerance scales with the
domain diameter. A domain also carries the exterior-sphere radius it was
declared with; normal cones verify their directions against that radius and
shrink it per query point where straight corners force a smaller disk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousProjection, EmptyCone, ValidationError

# Halving levels allowed when a cone disk or a reflection needs a smaller scale.
_MAX_RADIUS_HALVINGS = 60


def _signed_area(verts) -> float:
    a = 0.0
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def _winding_number(verts, x: float, y: float) -> int:
    # nonzero iff (x, y) is inside; unreliable only on the boundary itself,
    # which callers guard with a distance check.
    wn = 0
    n = len(verts)
    x0, y0 = verts[n - 1]
    for i in range(n):
        x1, y1 = verts[i]
        if y0 <= y:
            if y1 > y and (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0) > 0.0:
                wn += 1
        elif y1 <= y and (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0) < 0.0:
            wn -= 1
        x0, y0 = x1, y1
    return wn


def _point_segment_dist(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    l2 = dx * dx + dy * dy
    if l2 <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(px - ax - t * dx, py - ay - t * dy)


def _segments_cross(p1, p2, p3, p4) -> bool:
    # proper or improper intersection of closed segments
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True

    def on(a, b, c):
        return (
            orient(a, b, c) == 0.0
            and min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    return on(p3, p4, p1) or on(p3, p4, p2) or on(p1, p2, p3) or on(p1, p2, p4)


def _segment_segment_dist(p1, p2, p3, p4) -> float:
    if _segments_cross(p1, p2, p3, p4):
        return 0.0
    return min(
        _point_segment_dist(p1[0], p1[1], p3[0], p3[1], p4[0], p4[1]),
        _point_segment_dist(p2[0], p2[1], p3[0], p3[1], p4[0], p4[1]),
        _point_segment_dist(p3[0], p3[1], p1[0], p1[1], p2[0], p2[1]),
        _point_segment_dist(p4[0], p4[1], p1[0], p1[1], p2[0], p2[1]),
    )


@dataclass(frozen=True)
class ExitSegment:
    """A sub-segment of an outer edge where evacuees may leave."""

    edge_index: int
    t0: float
    t1: float
    absorb_radius: float
    a: tuple  # endpoint at t0
    b: tuple  # endpoint at t1


@dataclass
class NormalCone:
    """Inward unit normals admitting an exterior disk at a boundary point.

    ``radius`` is the disk radius actually verified; it equals the domain's
    declared sphere radius except near straight reflex corners, where the
    largest admissible disk shrinks with the distance to the corner.
    """

    point: tuple
    vectors: list
    radius: float


@dataclass
class SphereReport:
    """Result of sampling the boundary for exterior-sphere admissibility."""

    sphere_radius: float
    n_samples: int
    failures: list
    largest_uniform_radius: float
    cone_direction_margin: float

    @property
    def all_passed(self) -> bool:
        return not self.failures


class Domain:
    """Immutable planar domain with polygonal holes and exit segments.

    Vertices are given in meters; the outer ring counterclockwise, holes
    clockwise (the walkable side is to the left of every directed edge).
    Construction validates orientation, simplicity, disjointness and, unless
    ``check_sphere`` is off, samples the boundary for exterior-sphere
    admissibility at ``sphere_radius``.
    """

    def __init__(
        self,
        outer,
        obstacles=(),
        fire=None,
        exits=(),
        sphere_radius: float = 0.05,
        validate_samples: int = 128,
        check_sphere: bool = True,
    ):
        self.outer = [(float(x), float(y)) for x, y in outer]
        self.obstacles = [[(float(x), float(y)) for x, y in ob] for ob in obstacles]
        self.fire = [(float(x), float(y)) for x, y in fire] if fire else None
        if sphere_radius <= 0.0:
            raise ValidationError("geometry.sphere_radius must be > 0")
        self.sphere_radius = float(sphere_radius)

        self._holes = list(self.obstacles)
        if self.fire:
            self._holes.append(self.fire)

        self._validate_polygons()

        xs = [p[0] for p in self.outer]
        ys = [p[1] for p in self.outer]
        self.bbox = (min(xs), min(ys), max(xs), max(ys))
        self.diameter = max(
            math.hypot(p[0] - q[0], p[1] - q[1]) for p in self.outer for q in self.outer
        )
        self.area = _signed_area(self.outer) + sum(_signed_area(h) for h in self._holes)
        if self.area <= 0.0:
            raise ValidationError("geometry: walkable area must be positive")

        self.tol_boundary = 1e-9 * self.diameter
        self._tie_tol = 1e-12 * self.diameter
        self._strict_tol = 1e-7 * self.diameter
        self.tol_zero = 1e-15 * self.diameter

        self._build_segments()
        self.exits = self._build_exits(exits)

        if check_sphere:
            report = self.validate_exterior_sphere(n_samples=validate_samples)
            if not report.all_passed:
                pts = ", ".join(f"({p[0]:.6g}, {p[1]:.6g})" for p, _ in report.failures[:4])
                raise ValidationError(
                    "geometry.sphere_radius: no exterior disk of any radius at "
                    f"{len(report.failures)} sampled boundary points (first: {pts})"
                )

    # ------------------------------------------------------------------
    # construction helpers

    def _validate_polygons(self):
        rings = [self.outer] + self._holes
        names = ["outer"] + [f"obstacle[{i}]" for i in range(len(self.obstacles))]
        if self.fire:
            names.append("fire")
        for name, ring in zip(names, rings):
            if len(ring) < 3:
                raise ValidationError(f"geometry.{name}: need at least 3 vertices")
            n = len(ring)
            scale = max(abs(v) for p in ring for v in p) or 1.0
            for i in range(n):
                a, b = ring[i], ring[(i + 1) % n]
                if math.hypot(b[0] - a[0], b[1] - a[1]) <= 1e-12 * scale:
                    raise ValidationError(f"geometry.{name}: zero-length edge at vertex {i}")
            # simplicity: non-adjacent edges must not intersect
            for i in range(n):
                a1, a2 = ring[i], ring[(i + 1) % n]
                for j in range(i + 1, n):
                    if j == i or (j + 1) % n == i or (i + 1) % n == j:
                        continue
                    b1, b2 = ring[j], ring[(j + 1) % n]
                    if _segments_cross(a1, a2, b1, b2):
                        raise ValidationError(
                            f"geometry.{name}: edges {i} and {j} intersect (polygon not simple)"
                        )
        if _signed_area(self.outer) <= 0.0:
            raise ValidationError("geometry.outer: vertices must be counterclockwise")
        for name, hole in zip(names[1:], self._holes):
            if _signed_area(hole) >= 0.0:
                raise ValidationError(f"geometry.{name}: hole vertices must be clockwise")

        # holes strictly inside the outer ring, pairwise separated
        def ring_edges(ring):
            return [(ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring))]

        outer_edges = ring_edges(self.outer)
        for name, hole in zip(names[1:], self._holes):
            for v in hole:
                if _winding_number(self.outer, v[0], v[1]) == 0:
                    raise ValidationError(f"geometry.{name}: vertex {v} not inside the outer ring")
            for e1 in ring_edges(hole):
                for e2 in outer_edges:
                    if _segment_segment_dist(e1[0], e1[1], e2[0], e2[1]) <= 0.0:
                        raise ValidationError(
                            f"geometry.{name}: hole touches the outer boundary"
                        )
        for i in range(len(self._holes)):
            for j in range(i + 1, len(self._holes)):
                h1, h2 = self._holes[i], self._holes[j]
                if _winding_number(h2, h1[0][0], h1[0][1]) != 0:
                    raise ValidationError(f"geometry: holes {i} and {j} are nested")
                if _winding_number(h1, h2[0][0], h2[0][1]) != 0:
                    raise ValidationError(f"geometry: holes {i} and {j} are nested")
                for e1 in ring_edges(h1):
                    for e2 in ring_edges(h2):
                        if _segment_segment_dist(e1[0], e1[1], e2[0], e2[1]) <= 0.0:
                            raise ValidationError(f"geometry: holes {i} and {j} touch")

    def _build_segments(self):
        # flat list of directed boundary edges, walkable side to the left
        segs = []  # (ax, ay, bx, by, nx, ny, poly_idx, vert_idx)
        rings = [self.outer] + self._holes
        for pi, ring in enumerate(rings):
            n = len(ring)
            for i in range(n):
                ax, ay = ring[i]
                bx, by = ring[(i + 1) % n]
                ex, ey = bx - ax, by - ay
                ln = math.hypot(ex, ey)
                nx, ny = -ey / ln, ex / ln  # left normal, points into the domain
                segs.append((ax, ay, bx, by, nx, ny, pi, i))
        self._segs = segs
        self._rings = rings
        arr = np.array([(s[0], s[1], s[2], s[3]) for s in segs], dtype=float)
        self._seg_a = arr[:, 0:2].copy()
        self._seg_d = arr[:, 2:4] - arr[:, 0:2]
        self._seg_l2 = np.einsum("ij,ij->i", self._seg_d, self._seg_d)
        self._seg_len = np.sqrt(self._seg_l2)
        self._seg_n = np.array([(s[4], s[5]) for s in segs])

        # convexity of the outer ring (all left turns)
        n = len(self.outer)
        convex = True
        for i in range(n):
            a, b, c = self.outer[i - 1], self.outer[i], self.outer[(i + 1) % n]
            if (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) < 0.0:
                convex = False
                break
        self._outer_convex = convex
        self._plain_convex = convex and not self._holes
        if convex:
            self._edge_planes = [
                (s[0], s[1], s[4], s[5]) for s in segs if s[6] == 0
            ]
        else:
            self._edge_planes = None
        # expanded hole bounding boxes for segment prefilters
        pad = 2.0 * self.tol_boundary
        self._hole_boxes = []
        for h in self._holes:
            hx = [p[0] for p in h]
            hy = [p[1] for p in h]
            self._hole_boxes.append((min(hx) - pad, min(hy) - pad, max(hx) + pad, max(hy) + pad))

    def _build_exits(self, exits):
        built = []
        n_edges = len(self.outer)
        for k, spec in enumerate(exits):
            if isinstance(spec, ExitSegment):
                spec = (spec.edge_index, spec.t0, spec.t1, spec.absorb_radius)
            edge, t0, t1, r_e = spec
            if not (0 <= edge < n_edges):
                raise ValidationError(f"geometry.exits[{k}].edge: index {edge} out of range")
            if not (0.0 <= t0 < t1 <= 1.0):
                raise ValidationError(f"geometry.exits[{k}]: need 0 <= t0 < t1 <= 1")
            if r_e < 0.0:
                raise ValidationError(f"geometry.exits[{k}].absorb_radius must be >= 0")
            a = self.outer[edge]
            b = self.outer[(edge + 1) % n_edges]
            p0 = (a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1]))
            p1 = (a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1]))
            built.append(ExitSegment(edge, float(t0), float(t1), float(r_e), p0, p1))
        return built

    # ------------------------------------------------------------------
    # membership and distances

    def _inside_strict(self, x: float, y: float) -> bool:
        # winding-based interior test, no boundary fattening
        if _winding_number(self.outer, x, y) == 0:
            return False
        for box, hole in zip(self._hole_boxes, self._holes):
            if box[0] <= x <= box[2] and box[1] <= y <= box[3]:
                if _winding_number(hole, x, y) != 0:
                    return False
        return True

    def contains(self, p, tol: float | None = None) -> bool:
        """True iff p lies in the closed walkable region, fattened by tol."""
        x, y = float(p[0]), float(p[1])
        if tol is None:
            tol = self.tol_boundary
        if self._plain_convex:
            for ax, ay, nx, ny in self._edge_planes:
                if (x - ax) * nx + (y - ay) * ny < -tol:
                    return False
            return True
        if self._inside_strict(x, y):
            return True
        return self.distance_to_boundary((x, y)) <= tol

    def distance_to_boundary(self, p) -> float:
        """Distance from p to the union of all boundary edges."""
        x, y = float(p[0]), float(p[1])
        segs = self._segs
        if len(segs) <= 48:
            best = math.inf
            for ax, ay, bx, by, _, _, _, _ in segs:
                d = _point_segment_dist(x, y, ax, ay, bx, by)
                if d < best:
                    best = d
            return best
        dx = x - self._seg_a[:, 0]
        dy = y - self._seg_a[:, 1]
        t = np.clip((dx * self._seg_d[:, 0] + dy * self._seg_d[:, 1]) / self._seg_l2, 0.0, 1.0)
        rx = dx - t * self._seg_d[:, 0]
        ry = dy - t * self._seg_d[:, 1]
        return float(np.sqrt(np.min(rx * rx + ry * ry)))

    def project(self, p):
        """Nearest point of the closed domain.

        Returns ``((qx, qy), dist)``; for p already inside, p itself with
        distance zero. Raises AmbiguousProjection when two nearest-point
        candidates tie in distance but sit apart, so the caller can substep.
        """
        x, y = float(p[0]), float(p[1])
        if self._plain_convex:
            inside = True
            for ax, ay, nx, ny in self._edge_planes:
                if (x - ax) * nx + (y - ay) * ny < 0.0:
                    inside = False
                    break
            if inside:
                return (x, y), 0.0
        elif self._inside_strict(x, y):
            return (x, y), 0.0

        dx = x - self._seg_a[:, 0]
        dy = y - self._seg_a[:, 1]
        t = np.clip((dx * self._seg_d[:, 0] + dy * self._seg_d[:, 1]) / self._seg_l2, 0.0, 1.0)
        qx = self._seg_a[:, 0] + t * self._seg_d[:, 0]
        qy = self._seg_a[:, 1] + t * self._seg_d[:, 1]
        d2 = (x - qx) ** 2 + (y - qy) ** 2
        i = int(np.argmin(d2))
        dist = math.sqrt(float(d2[i]))
        if dist <= self._tie_tol:
            return (x, y), 0.0
        near = np.flatnonzero(np.sqrt(d2) <= dist + self._tie_tol)
        if len(near) > 1:
            px = qx[near]
            py = qy[near]
            spread2 = (px[:, None] - px[None, :]) ** 2 + (py[:, None] - py[None, :]) ** 2
            if math.sqrt(float(np.max(spread2))) > 1e-9 * self.diameter:
                raise AmbiguousProjection(
                    f"projection of ({x:.9g}, {y:.9g}) has {len(near)} separated candidates"
                )
        return (float(qx[i]), float(qy[i])), dist

    # ------------------------------------------------------------------
    # normal cones

    def _locate_feature(self, x: float, y: float):
        """Identify the boundary feature under a point: an edge or a vertex.

        Returns ("edge", seg_index) or ("vertex", poly_idx, vert_idx), or
        None when the point is farther than the boundary snap tolerance.
        """
        best = math.inf
        bi = -1
        for i, (ax, ay, bx, by, _, _, _, _) in enumerate(self._segs):
            d = _point_segment_dist(x, y, ax, ay, bx, by)
            if d < best:
                best = d
                bi = i
        if best > self.tol_boundary:
            return None
        ax, ay, bx, by, _, _, pi, vi = self._segs[bi]
        ring = self._rings[pi]
        if math.hypot(x - ax, y - ay) <= self.tol_boundary:
            return ("vertex", pi, vi)
        if math.hypot(x - bx, y - by) <= self.tol_boundary:
            return ("vertex", pi, (vi + 1) % len(ring))
        return ("edge", bi)

    def _vertex_normals(self, pi: int, vi: int):
        """Adjacent inward edge normals and the turn sense at a vertex."""
        ring = self._rings[pi]
        n = len(ring)
        a = ring[(vi - 1) % n]
        b = ring[vi]
        c = ring[(vi + 1) % n]
        e_in = (b[0] - a[0], b[1] - a[1])
        e_out = (c[0] - b[0], c[1] - b[1])
        li = math.hypot(*e_in)
        lo = math.hypot(*e_out)
        n_in = (-e_in[1] / li, e_in[0] / li)
        n_out = (-e_out[1] / lo, e_out[0] / lo)
        turn = e_in[0] * e_out[1] - e_in[1] * e_out[0]
        return n_in, n_out, turn

    def _cone_candidates(self, x: float, y: float):
        feat = self._locate_feature(x, y)
        if feat is None:
            raise ValueError(f"({x:.9g}, {y:.9g}) is not on the boundary")
        if feat[0] == "edge":
            s = self._segs[feat[1]]
            return [(s[4], s[5])]
        _, pi, vi = feat
        n_in, n_out, turn = self._vertex_normals(pi, vi)
        sx, sy = n_in[0] + n_out[0], n_in[1] + n_out[1]
        ln = math.hypot(sx, sy)
        if ln < 1e-12:
            bis = n_in  # degenerate spike; the disk test will reject it anyway
        else:
            bis = (sx / ln, sy / ln)
        if turn > 0.0:
            # corner convex from inside: whole arc between the edge normals
            return [n_in, bis, n_out]
        # reflex corner: only the bisector has a chance, with a shrunk disk
        return [bis]

    def _disk_is_exterior(self, x, y, nx, ny, r) -> bool:
        cx, cy = x - r * nx, y - r * ny
        if self._inside_strict(cx, cy):
            return False
        return self.distance_to_boundary((cx, cy)) >= r - self._strict_tol

    def normal_cone(self, x) -> NormalCone:
        """Inward unit normals at a boundary point, disk-verified.

        Edge points carry the single edge normal; convex corners the arc
        between the adjacent edge normals (extremes plus bisector); reflex
        corners degenerate to the bisector alone. Raises EmptyCone when no
        direction admits an exterior disk at any usable radius.
        """
        px, py = float(x[0]), float(x[1])
        cands = self._cone_candidates(px, py)
        floor = 2.0 * self._strict_tol
        r = self.sphere_radius
        for _ in range(_MAX_RADIUS_HALVINGS):
            if all(self._disk_is_exterior(px, py, cx, cy, r) for cx, cy in cands):
                return NormalCone((px, py), [tuple(c) for c in cands], r)
            if r <= floor:
                break
            r = max(0.5 * r, floor)
        raise EmptyCone(
            f"no exterior disk at ({px:.9g}, {py:.9g}) down to radius {floor:.3g}"
        )

    def cone_support(self, q, v) -> float:
        """Largest inner product of unit vector v with the cone at q.

        Geometric test only (no disk verification): 1.0 when v falls inside
        the admissible arc, otherwise the best alignment with an extreme
        normal. Used to accept regulator directions during reflection.
        """
        px, py = float(q[0]), float(q[1])
        vx, vy = float(v[0]), float(v[1])
        feat = self._locate_feature(px, py)
        if feat is None:
            return -1.0
        if feat[0] == "edge":
            s = self._segs[feat[1]]
            return vx * s[4] + vy * s[5]
        _, pi, vi = feat
        n_in, n_out, turn = self._vertex_normals(pi, vi)
        if turn > 0.0:
            denom = n_in[0] * n_out[1] - n_in[1] * n_out[0]
            if abs(denom) > 1e-15:
                alpha = (vx * n_out[1] - vy * n_out[0]) / denom
                beta = (n_in[0] * vy - n_in[1] * vx) / denom
                if alpha >= -1e-12 and beta >= -1e-12:
                    return 1.0
            return max(vx * n_in[0] + vy * n_in[1], vx * n_out[0] + vy * n_out[1])
        sx, sy = n_in[0] + n_out[0], n_in[1] + n_out[1]
        ln = math.hypot(sx, sy)
        if ln < 1e-12:
            return -1.0
        return (vx * sx + vy * sy) / ln

    # ------------------------------------------------------------------
    # segment exit detection (used by the reflection solver)

    def _segment_bbox_clear(self, px, py, qx, qy) -> bool:
        lo_x, hi_x = (px, qx) if px <= qx else (qx, px)
        lo_y, hi_y = (py, qy) if py <= qy else (qy, py)
        for b in self._hole_boxes:
            if hi_x >= b[0] and lo_x <= b[2] and hi_y >= b[1] and lo_y <= b[3]:
                return False
        return True

    def first_exit(self, p, q):
        """First parameter t in [0, 1] where segment p->q leaves the closure.

        Returns None when the whole segment stays inside (sliding along the
        boundary counts as inside). The start point must be in the closure.
        """
        px, py = float(p[0]), float(p[1])
        qx, qy = float(q[0]), float(q[1])
        # classification is tighter than the containment tolerance so that
        # reflections fire before paths drift a meaningful distance outside
        tol = self._tie_tol
        if self._plain_convex:
            if self.contains((qx, qy), tol):
                return None
        elif self._outer_convex and self.contains((qx, qy), tol) and self._segment_bbox_clear(px, py, qx, qy):
            return None
        return self._first_exit_full(px, py, qx, qy)

    def _first_exit_full(self, px, py, qx, qy):
        ux, uy = qx - px, qy - py
        seg_len = math.hypot(ux, uy)
        if seg_len <= 0.0:
            return None
        # candidate parameters: intersections with every boundary edge
        ax = self._seg_a[:, 0]
        ay = self._seg_a[:, 1]
        dx = self._seg_d[:, 0]
        dy = self._seg_d[:, 1]
        denom = ux * dy - uy * dx
        wx = ax - px
        wy = ay - py
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (wx * dy - wy * dx) / denom
            s = (wx * uy - wy * ux) / denom
        eps = 1e-12
        ok = (np.abs(denom) > 1e-300) & (t >= -eps) & (t <= 1.0 + eps) & (s >= -eps) & (s <= 1.0 + eps)
        cand = np.clip(t[ok], 0.0, 1.0)
        ts = sorted({0.0, 1.0, *cand.tolist()})
        tol = self._tie_tol
        prev = ts[0]
        for cur in ts[1:]:
            if cur - prev > 1e-15:
                mx = px + 0.5 * (prev + cur) * ux
                my = py + 0.5 * (prev + cur) * uy
                if not self.contains((mx, my), tol):
                    return prev
            prev = cur
        if not self.contains((qx, qy), tol):
            return ts[-2] if len(ts) >= 2 else 0.0
        return None

    # ------------------------------------------------------------------
    # boundary sampling and the exterior-sphere report

    def boundary_points(self, n: int):
        """n points spread uniformly by arclength plus every vertex."""
        total = float(np.sum(self._seg_len))
        cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        pts = []
        for k in range(n):
            target = (k + 0.5) * total / n
            i = int(np.searchsorted(cum, target, side="right") - 1)
            i = min(i, len(self._segs) - 1)
            f = (target - cum[i]) / self._seg_len[i]
            ax_, ay_, bx_, by_, *_ = self._segs[i]
            pts.append((ax_ + f * (bx_ - ax_), ay_ + f * (by_ - ay_)))
        for ring in self._rings:
            pts.extend(ring)
        return pts

    def validate_exterior_sphere(self, n_samples: int = 256) -> SphereReport:
        """Sample the boundary and probe exterior disks at every sample.

        The report lists samples where no disk of any radius exists, the
        largest uniform radius that all samples admit simultaneously
        (bisection, 1e-6 relative), and the worst alignment margin between a
        sample's candidate normals and their mean direction.
        """
        if n_samples < 1:
            raise ValidationError("validate_exterior_sphere: n_samples must be >= 1")
        samples = self.boundary_points(n_samples)
        failures = []
        margin = 1.0
        per_sample_cands = []
        for pt in samples:
            try:
                cands = self._cone_candidates(pt[0], pt[1])
            except ValueError:
                continue
            per_sample_cands.append((pt, cands))
            try:
                self.normal_cone(pt)
            except EmptyCone as e:
                failures.append((pt, str(e)))
                continue
            sx = sum(c[0] for c in cands)
            sy = sum(c[1] for c in cands)
            ln = math.hypot(sx, sy)
            if ln > 0.0:
                m = min((c[0] * sx + c[1] * sy) / ln for c in cands)
                margin = min(margin, m)

        def all_pass(r: float) -> bool:
            for pt, cands in per_sample_cands:
                if not any(self._disk_is_exterior(pt[0], pt[1], c[0], c[1], r) for c in cands):
                    return False
            return True

        lo, hi = 0.0, self.diameter
        if all_pass(hi):
            r_max = hi
        elif not all_pass(self.tol_zero):
            r_max = 0.0
        else:
            lo = self.tol_zero
            while hi - lo > 1e-6 * max(hi, 1e-300):
                mid = 0.5 * (lo + hi)
                if all_pass(mid):
                    lo = mid
                else:
                    hi = mid
            r_max = lo
        return SphereReport(self.sphere_radius, n_samples, failures, r_max, margin)
