"""Regularized distance-to-exit fields on rectangular node grids.

The walkable region is rasterized onto a node-centered grid, a linear
screened-Poisson problem is solved for u with u = 1 on exit nodes and
zero-flux walls, and the navigation potential is recovered as
phi = -varsigma * ln(u).  Gradients are central differences, one-sided
next to walls, and are served to callers through bilinear interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import OutsideDomain, SolveFailed, TransformRange, ValidationError
from .geometry import Domain, _point_segment_dist

OUTSIDE = 0
INTERIOR = 1
WALL = 2
EXIT = 3

# exit nodes are grabbed from a band this many spacings wide around the segment
_EXIT_BAND = 0.75


@dataclass
class Grid:
    """Node-centered raster of a walking domain's bounding box."""

    origin: tuple[float, float]
    h: float
    nx: int
    ny: int
    mask: np.ndarray

    def xs(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.nx)

    def ys(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.ny)

    def node_xy(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + self.h * i, self.origin[1] + self.h * j)


def build_grid(domain: Domain, h: float) -> Grid:
    """Rasterize the domain: classify every node as outside, interior,
    wall (has a neighbor off the walkable set) or exit (within
    0.75 h of an exit segment; exit wins over wall)."""
    if not h > 0.0:
        raise ValidationError("grid spacing h must be positive")
    xmin, ymin, xmax, ymax = domain.bbox
    nx = int(math.ceil((xmax - xmin) / h - 1e-12)) + 1
    ny = int(math.ceil((ymax - ymin) / h - 1e-12)) + 1

    xs = xmin + h * np.arange(nx)
    ys = ymin + h * np.arange(ny)
    inside = np.zeros((ny, nx), dtype=bool)
    for j in range(ny):
        for i in range(nx):
            inside[j, i] = domain.contains((xs[i], ys[j]))

    mask = np.where(inside, INTERIOR, OUTSIDE).astype(np.uint8)

    padded = np.zeros((ny + 2, nx + 2), dtype=bool)
    padded[1:-1, 1:-1] = inside
    exposed = ~(
        padded[1:-1, 2:] & padded[1:-1, :-2] & padded[2:, 1:-1] & padded[:-2, 1:-1]
    )
    mask[inside & exposed] = WALL

    band = _EXIT_BAND * h
    for ex in domain.exits:
        (ax, ay), (bx, by) = ex.a, ex.b
        for j in range(ny):
            for i in range(nx):
                if inside[j, i] and _point_segment_dist(xs[i], ys[j], ax, ay, bx, by) <= band:
                    mask[j, i] = EXIT

    if domain.exits and not (mask == EXIT).any():
        raise ValidationError("grid spacing too coarse: no node falls on an exit")
    mask.flags.writeable = False
    return Grid(origin=(xmin, ymin), h=h, nx=nx, ny=ny, mask=mask)


@dataclass
class NavigationField:
    """Solved potential and its gradient on a grid; immutable after solve."""

    grid: Grid
    domain: Domain
    phi: np.ndarray
    grad: np.ndarray
    varsigma: float
    speed: np.ndarray
    residual_norm: float
    exit_xy: np.ndarray = field(repr=False)


def solve_navigation(
    domain: Domain,
    grid: Grid,
    speed: float | np.ndarray = 1.0,
    varsigma: float | None = None,
) -> NavigationField:
    """Solve the screened linear problem -lap(u) + (speed/varsigma)^2 u = 0
    with u = 1 on exit nodes and zero-flux walls, then set
    phi = -varsigma ln(u).  The source data enters purely through the
    Dirichlet rows, so the assembled system is an M-matrix and u stays
    in (0, 1]."""
    if varsigma is None:
        varsigma = 0.02 * domain.diameter
    if not varsigma > 0.0:
        raise ValidationError("varsigma must be positive")
    mask = grid.mask
    ny, nx = mask.shape
    f = np.broadcast_to(np.asarray(speed, dtype=float), (ny, nx))
    if not np.all(f > 0.0):
        raise ValidationError("speed must be strictly positive everywhere")
    if not (mask == EXIT).any():
        raise ValidationError("grid has no exit nodes")

    solved = (mask == INTERIOR) | (mask == WALL)
    n = int(solved.sum())
    if n == 0:
        raise ValidationError("grid has no solvable nodes")
    idx = np.full((ny, nx), -1, dtype=np.int64)
    idx[solved] = np.arange(n)

    # vertex-centered finite volumes: each node owns the quadrants whose
    # three supporting neighbors are walkable; link weights are the half
    # faces those quadrants contribute.  Wall rows come out symmetric and
    # second-order accurate, interior rows reduce to the 5-point stencil.
    in_dom = solved | (mask == EXIT)
    pad = np.zeros((ny + 2, nx + 2), dtype=bool)
    pad[1:-1, 1:-1] = in_dom
    e_ = pad[1:-1, 2:]
    w_ = pad[1:-1, :-2]
    n_ = pad[2:, 1:-1]
    s_ = pad[:-2, 1:-1]
    ne = pad[2:, 2:]
    nw = pad[2:, :-2]
    se = pad[:-2, 2:]
    sw = pad[:-2, :-2]
    q_ne = (e_ & n_ & ne).astype(float)
    q_nw = (w_ & n_ & nw).astype(float)
    q_se = (e_ & s_ & se).astype(float)
    q_sw = (w_ & s_ & sw).astype(float)
    vol = (q_ne + q_nw + q_se + q_sw) / 4.0
    tau = {
        (0, 1): (q_ne + q_se) / 2.0,
        (0, -1): (q_nw + q_sw) / 2.0,
        (1, 0): (q_ne + q_nw) / 2.0,
        (-1, 0): (q_se + q_sw) / 2.0,
    }

    h = grid.h
    a = 1.0 / varsigma
    jj, ii = np.nonzero(solved)
    row_ids = np.arange(n)
    diag = (h * a * f[jj, ii]) ** 2 * vol[jj, ii]
    b = np.zeros(n)
    rows = []
    cols = []
    vals = []
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        j2 = jj + dj
        i2 = ii + di
        ok = (j2 >= 0) & (j2 < ny) & (i2 >= 0) & (i2 < nx)
        kind = np.zeros(n, dtype=np.uint8)
        kind[ok] = mask[j2[ok], i2[ok]]
        nb_solved = (kind == INTERIOR) | (kind == WALL)
        nb_exit = kind == EXIT
        t = tau[(dj, di)][jj, ii]
        diag += t * (nb_solved | nb_exit)
        b[nb_exit] += t[nb_exit]
        rows.append(row_ids[nb_solved])
        cols.append(idx[j2[nb_solved], i2[nb_solved]])
        vals.append(-t[nb_solved])

    data = np.concatenate([diag] + vals)
    rows_all = np.concatenate([row_ids] + rows)
    cols_all = np.concatenate([row_ids] + cols)
    A = sp.csc_matrix(sp.coo_matrix((data, (rows_all, cols_all)), shape=(n, n)))

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        raise ValidationError("no solvable node is adjacent to an exit node")
    try:
        lu = spla.splu(
            A,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as exc:  # singular factor: sub-resolution geometry
        raise SolveFailed(f"sparse factorization failed: {exc}") from exc
    u = lu.solve(b)
    if not np.all(np.isfinite(u)):
        raise SolveFailed("linear solve produced non-finite values")
    rel_res = float(np.linalg.norm(A @ u - b)) / bnorm
    if rel_res > 1e-10:
        raise SolveFailed(f"relative residual {rel_res:.3e} exceeds 1e-10")
    if u.min() <= 0.0:
        raise TransformRange(
            "u reached the non-positive range: varsigma too small for this grid"
        )
    if u.max() > 1.0 + 1e-9:
        raise SolveFailed(f"maximum principle violated: max u = {u.max()!r}")
    u = np.minimum(u, 1.0)

    ufull = np.full((ny, nx), np.nan)
    ufull[mask == EXIT] = 1.0
    ufull[solved] = u
    known = solved | (mask == EXIT)
    phi = np.full((ny, nx), np.nan)
    phi[known] = -varsigma * np.log(ufull[known]) + 0.0

    grad = _gradient(phi, known, h)
    exit_jj, exit_ii = np.nonzero(mask == EXIT)
    exit_xy = np.column_stack(
        [grid.origin[0] + h * exit_ii, grid.origin[1] + h * exit_jj]
    )
    for arr in (phi, grad, exit_xy):
        arr.flags.writeable = False
    return NavigationField(
        grid=grid,
        domain=domain,
        phi=phi,
        grad=grad,
        varsigma=varsigma,
        speed=f,
        residual_norm=rel_res,
        exit_xy=exit_xy,
    )


def _gradient(phi: np.ndarray, known: np.ndarray, h: float) -> np.ndarray:
    """Central differences falling back to one-sided next to unknowns."""
    ny, nx = phi.shape
    pad = np.full((ny + 2, nx + 2), np.nan)
    pad[1:-1, 1:-1] = np.where(known, phi, np.nan)
    c = pad[1:-1, 1:-1]
    e = pad[1:-1, 2:]
    w = pad[1:-1, :-2]
    nn = pad[2:, 1:-1]
    ss = pad[:-2, 1:-1]

    def axis(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
        both = np.isfinite(hi) & np.isfinite(lo)
        only_hi = np.isfinite(hi) & ~np.isfinite(lo)
        only_lo = ~np.isfinite(hi) & np.isfinite(lo)
        out = np.select(
            [both, only_hi, only_lo],
            [
                (np.where(both, hi, 0.0) - np.where(both, lo, 0.0)) / (2.0 * h),
                (np.where(only_hi, hi, 0.0) - c) / h,
                (c - np.where(only_lo, lo, 0.0)) / h,
            ],
            default=0.0,
        )
        return np.where(known, out, 0.0)

    return np.stack([axis(e, w), axis(nn, ss)], axis=-1)


def grad_at(nf: NavigationField, p: tuple[float, float]) -> tuple[float, float]:
    """Unit descent direction at p: bilinear interpolation of the stored
    gradient, renormalized; degenerate interpolations fall back to the
    direction of the nearest exit node."""
    x, y = float(p[0]), float(p[1])
    if not nf.domain.contains((x, y)):
        raise OutsideDomain(f"point ({x:.6g}, {y:.6g}) is outside the walking domain")
    g = nf.grid
    fx = (x - g.origin[0]) / g.h
    fy = (y - g.origin[1]) / g.h
    i0 = int(min(max(math.floor(fx), 0), g.nx - 2))
    j0 = int(min(max(math.floor(fy), 0), g.ny - 2))
    tx = min(max(fx - i0, 0.0), 1.0)
    ty = min(max(fy - j0, 0.0), 1.0)
    weights = (
        ((j0, i0), (1.0 - tx) * (1.0 - ty)),
        ((j0, i0 + 1), tx * (1.0 - ty)),
        ((j0 + 1, i0), (1.0 - tx) * ty),
        ((j0 + 1, i0 + 1), tx * ty),
    )
    vx = vy = wsum = 0.0
    for (j, i), wgt in weights:
        if nf.grid.mask[j, i] != OUTSIDE:
            vx += wgt * nf.grad[j, i, 0]
            vy += wgt * nf.grad[j, i, 1]
            wsum += wgt
    if wsum > 1e-12:
        vx /= wsum
        vy /= wsum
        nrm = math.hypot(vx, vy)
        if nrm >= 1e-12:
            return (vx / nrm, vy / nrm)
    return _toward_nearest_exit(nf, x, y)


def _toward_nearest_exit(nf: NavigationField, x: float, y: float) -> tuple[float, float]:
    d2 = (nf.exit_xy[:, 0] - x) ** 2 + (nf.exit_xy[:, 1] - y) ** 2
    order = np.argsort(d2)
    for k in order:
        dist = math.sqrt(float(d2[k]))
        if dist > 1e-15:
            return (
                (float(nf.exit_xy[k, 0]) - x) / dist,
                (float(nf.exit_xy[k, 1]) - y) / dist,
            )
    return (1.0, 0.0)  # sitting exactly on the only exit node


def eikonal_residual(nf: NavigationField, margin: float) -> float:
    """Max |−varsigma lap(phi) + |grad phi|^2 − speed^2| over nodes whose
    full stencil is known and that keep the given distance from the
    boundary.  Measures how well the recovered potential satisfies the
    original nonlinear equation."""
    g = nf.grid
    phi = nf.phi
    ny, nx = phi.shape
    known = np.isfinite(phi)
    worst = 0.0
    xs = g.xs()
    ys = g.ys()
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            if not (
                known[j, i]
                and known[j, i + 1]
                and known[j, i - 1]
                and known[j + 1, i]
                and known[j - 1, i]
            ):
                continue
            if nf.domain.distance_to_boundary((xs[i], ys[j])) < margin:
                continue
            lap = (
                phi[j, i + 1]
                + phi[j, i - 1]
                + phi[j + 1, i]
                + phi[j - 1, i]
                - 4.0 * phi[j, i]
            ) / g.h**2
            gx = (phi[j, i + 1] - phi[j, i - 1]) / (2.0 * g.h)
            gy = (phi[j + 1, i] - phi[j - 1, i]) / (2.0 * g.h)
            r = abs(-nf.varsigma * lap + gx * gx + gy * gy - nf.speed[j, i] ** 2)
            worst = max(worst, r)
    return worst


def descent_defects(nf: NavigationField) -> list[tuple[int, int]]:
    """Nodes that break monotone descent: a non-exit node whose best
    8-neighbor does not strictly decrease phi, or whose steepest-descent
    pointer chain fails to reach an exit node."""
    g = nf.grid
    phi = nf.phi
    mask = g.mask
    ny, nx = phi.shape
    known = np.isfinite(phi)

    best = np.full((ny, nx), np.inf)
    best_to = np.full((ny, nx, 2), -1, dtype=np.int64)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj == 0 and di == 0:
                continue
            js = slice(max(dj, 0), ny + min(dj, 0))
            is_ = slice(max(di, 0), nx + min(di, 0))
            jd = slice(max(-dj, 0), ny + min(-dj, 0))
            id_ = slice(max(-di, 0), nx + min(-di, 0))
            nb = np.where(known[js, is_], phi[js, is_], np.inf)
            better = nb < best[jd, id_]
            best[jd, id_][better] = nb[better]
            sel_j, sel_i = np.nonzero(better)
            best_to[jd, id_][better] = np.column_stack(
                [sel_j + max(-dj, 0) + dj, sel_i + max(-di, 0) + di]
            )

    defects: list[tuple[int, int]] = []
    status = np.zeros((ny, nx), dtype=np.int8)  # 0 unknown, 1 reaches exit, 2 defective
    status[mask == EXIT] = 1
    for j in range(ny):
        for i in range(nx):
            if not known[j, i] or status[j, i] != 0:
                continue
            chain = []
            cj, ci = j, i
            while status[cj, ci] == 0:
                chain.append((cj, ci))
                if not best[cj, ci] < phi[cj, ci]:
                    status[cj, ci] = 2
                    break
                cj, ci = int(best_to[cj, ci, 0]), int(best_to[cj, ci, 1])
            terminal = status[cj, ci]
            for node in chain:
                if status[node] == 0:
                    status[node] = terminal
                if terminal == 2:
                    defects.append(node)
    return sorted(defects)


def write_field_csv(nf: NavigationField, path: str) -> None:
    """Dump x, y, phi, gx, gy for every node carrying a value."""
    g = nf.grid
    xs = g.xs()
    ys = g.ys()
    with open(path, "w") as fh:
        fh.write("x,y,phi,gx,gy\n")
        for j in range(g.ny):
            for i in range(g.nx):
                if not np.isfinite(nf.phi[j, i]):
                    continue
                fh.write(
                    f"{float(xs[i])!r},{float(ys[j])!r},{float(nf.phi[j, i])!r},"
                    f"{float(nf.grad[j, i, 0])!r},{float(nf.grad[j, i, 1])!r}\n"
                )
