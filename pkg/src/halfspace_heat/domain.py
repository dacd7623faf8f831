"""Truncated half-space geometry, weighted measures and the weight phi.

The half-space ``R^N x (0, inf)`` is truncated to the box
``[-Lx, Lx]^N x (0, Ly]`` and split into a tensor grid of cells.  The
x-axes are uniform; the y-axis is graded towards the degenerate boundary
``y = 0`` with faces ``y_{j+1/2} = Ly (j / ny)^beta``.  Every cell carries
its exact measure with respect to ``y^c dx dy``, so sums of cell volumes
reproduce the weighted measure of the box to round-off.

Grid functions are plain 1-D numpy arrays in C order over the grid shape
``(nx,) * N + (ny,)``; the y index runs fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Parameters of a truncated half-space grid.

    ``N`` is the number of x-dimensions (0 gives the pure y half-line), ``c``
    the exponent of the measure ``y^c``.  For ``N = 0`` the x data is unused.
    """

    N: int
    Ly: float
    ny: int
    c: float
    Lx: float = 1.0
    nx: int = 2
    grading: float = 2.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a non-negative integer, got {self.N}")
        if not self.c + 1 > 0:
            raise ValueError(f"c + 1 > 0 is required (measure y^c must be locally finite), got c={self.c}")
        if not self.Ly > 0:
            raise ValueError(f"Ly must be positive, got {self.Ly}")
        if self.ny < 1:
            raise ValueError(f"ny must be >= 1, got {self.ny}")
        if not self.grading >= 1:
            raise ValueError(f"grading exponent must be >= 1, got {self.grading}")
        if self.N > 0:
            if not self.Lx > 0:
                raise ValueError(f"Lx must be positive, got {self.Lx}")
            if self.nx < 2:
                raise ValueError(f"nx must be >= 2, got {self.nx}")

    def scaled(self, s: float) -> "GridSpec":
        """Grid specification dilated by ``s`` (same node counts)."""
        return GridSpec(N=self.N, Ly=s * self.Ly, ny=self.ny, c=self.c,
                        Lx=s * self.Lx, nx=self.nx, grading=self.grading)


def power_integral(lo, hi, m):
    """Exact ``int_lo^hi y^m dy`` for ``m > -1`` and ``0 <= lo <= hi``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return (hi ** (m + 1) - lo ** (m + 1)) / (m + 1)


@dataclass(frozen=True, eq=False)
class HalfSpaceGrid:
    """Cell-centred tensor grid on the truncated half-space.

    Attributes
    ----------
    spec : GridSpec
    x : ndarray, shape (nx,)
        Cell centres of every x-axis (empty for ``N = 0``).
    dx : float
        Uniform x spacing (1 for ``N = 0``, so it drops out of products).
    y_faces : ndarray, shape (ny + 1,)
        Graded faces, ``y_faces[0] = 0`` and ``y_faces[-1] = Ly``.
    y : ndarray, shape (ny,)
        Nodes at the midpoints of consecutive faces; ``y[0] > 0``.
    cell_y_measure : ndarray, shape (ny,)
        ``int y^c dy`` over each y-cell.
    dual_y_measure : ndarray, shape (ny - 1,)
        ``int y^c dy`` between consecutive nodes.
    volumes : ndarray, shape (n,)
        Weighted cell volumes in flat (C) order.
    """

    spec: GridSpec
    x: np.ndarray
    dx: float
    y_faces: np.ndarray
    y: np.ndarray
    cell_y_measure: np.ndarray
    dual_y_measure: np.ndarray
    volumes: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def c(self) -> float:
        return self.spec.c

    @property
    def shape(self) -> tuple[int, ...]:
        return (len(self.x),) * self.N + (len(self.y),)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def hy(self) -> np.ndarray:
        """Distances between consecutive y nodes."""
        return np.diff(self.y)

    @property
    def h_min(self) -> float:
        h = [self.y_faces[1] - self.y_faces[0]]
        if self.N > 0:
            h.append(self.dx)
        return float(min(h))

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(n, N + 1)``; the last column is y."""
        axes = [self.x] * self.N + [self.y]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def y_of_nodes(self) -> np.ndarray:
        return np.broadcast_to(self.y, self.shape).ravel()

    def total_measure(self) -> float:
        """Closed-form weighted measure of the truncated box."""
        s = self.spec
        box = (2.0 * s.Lx) ** s.N if s.N > 0 else 1.0
        return box * s.Ly ** (s.c + 1) / (s.c + 1)

    def cell_index(self, z) -> int:
        """Flat index of the cell containing the point ``z = (x..., y)``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (self.N + 1,):
            raise ValueError(f"point must have {self.N + 1} coordinates, got {z.shape}")
        s = self.spec
        yv = z[-1]
        if not 0 < yv < s.Ly:
            raise ValueError(f"point y={yv} outside the truncated slab (0, {s.Ly})")
        j = int(np.searchsorted(self.y_faces, yv, side="right") - 1)
        j = min(max(j, 0), len(self.y) - 1)
        idx = []
        for xv in z[:-1]:
            if not -s.Lx < xv < s.Lx:
                raise ValueError(f"point x={xv} outside the truncated box (-{s.Lx}, {s.Lx})")
            i = int(np.floor((xv + s.Lx) / self.dx))
            idx.append(min(max(i, 0), len(self.x) - 1))
        return int(np.ravel_multi_index(tuple(idx) + (j,), self.shape))

    def node(self, index: int) -> np.ndarray:
        """Coordinates of the node with flat index ``index``."""
        multi = np.unravel_index(index, self.shape)
        return np.array([self.x[i] for i in multi[:-1]] + [self.y[multi[-1]]])

    def validity_mask(self, t: float, factor: float = 3.0) -> np.ndarray:
        """Nodes at distance ``>= factor * sqrt(t)`` from the artificial walls.

        The walls are ``|x_k| = Lx`` and ``y = Ly``; ``y = 0`` is a genuine
        boundary and does not restrict the mask.
        """
        r = factor * np.sqrt(t)
        ok_y = self.y <= self.spec.Ly - r
        mask = np.broadcast_to(ok_y, self.shape)
        if self.N > 0:
            ok_x = np.abs(self.x) <= self.spec.Lx - r
            for k in range(self.N):
                shp = [1] * (self.N + 1)
                shp[k] = len(self.x)
                mask = mask & ok_x.reshape(shp)
        return np.asarray(mask).ravel()


def build_grid(spec: GridSpec) -> HalfSpaceGrid:
    """Build the graded grid with exact weighted cell volumes."""
    c = spec.c
    j = np.arange(spec.ny + 1)
    y_faces = spec.Ly * (j / spec.ny) ** spec.grading
    y = 0.5 * (y_faces[:-1] + y_faces[1:])
    cell_y = power_integral(y_faces[:-1], y_faces[1:], c)
    dual_y = power_integral(y[:-1], y[1:], c)
    if spec.N > 0:
        dx = 2.0 * spec.Lx / spec.nx
        x = -spec.Lx + (np.arange(spec.nx) + 0.5) * dx
    else:
        dx = 1.0
        x = np.zeros(0)
    vol = np.broadcast_to(cell_y * dx ** spec.N, (len(x),) * spec.N + (spec.ny,)).ravel().copy()
    if np.any(vol <= 0):
        raise ValueError("non-positive cell volume; grid too fine for double precision")
    return HalfSpaceGrid(spec=spec, x=x, dx=dx, y_faces=y_faces, y=y,
                         cell_y_measure=cell_y, dual_y_measure=dual_y, volumes=vol)


def weighted_norm(f, p, grid: HalfSpaceGrid) -> float:
    """``(sum |f_i|^p Vol_i)^(1/p)``, or ``max |f_i|`` for ``p = inf``."""
    f = np.asarray(f)
    if f.shape != (grid.size,):
        raise ValueError(f"grid function has shape {f.shape}, expected ({grid.size},)")
    if p == np.inf:
        return float(np.max(np.abs(f))) if f.size else 0.0
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(np.sum(np.abs(f) ** p * grid.volumes) ** (1.0 / p))


def weighted_inner(f, g, grid: HalfSpaceGrid) -> complex | float:
    """``<f, g>`` in ``L^2(y^c dz)`` (conjugate-linear in ``g``)."""
    return np.sum(f * np.conj(g) * grid.volumes)


def discrete_delta(grid: HalfSpaceGrid, z) -> np.ndarray:
    """Unit-mass spike on the cell containing ``z``: ``1 / Vol_i`` there, 0 elsewhere."""
    i = grid.cell_index(z)
    f = np.zeros(grid.size)
    f[i] = 1.0 / grid.volumes[i]
    return f


def interpolated_delta(grid: HalfSpaceGrid, z) -> np.ndarray:
    """Unit-mass spike at ``z`` spread over the surrounding nodes.

    The node weights are the multilinear interpolation weights of ``z``, so
    ``sum_i f_i g_i Vol_i`` is the interpolant of ``g`` at ``z``.  Points
    below the first y node put their weight on that node.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    grid.cell_index(z)  # range check
    axes = [grid.x] * grid.N + [grid.y]
    per_axis = []
    for ax, v in zip(axes, z):
        i = int(np.clip(np.searchsorted(ax, v) - 1, 0, len(ax) - 2)) if len(ax) > 1 else 0
        if len(ax) == 1 or v <= ax[0]:
            per_axis.append([(0, 1.0)])
        elif v >= ax[-1]:
            per_axis.append([(len(ax) - 1, 1.0)])
        else:
            w = (v - ax[i]) / (ax[i + 1] - ax[i])
            per_axis.append([(i, 1.0 - w), (i + 1, w)])
    f = np.zeros(grid.size)
    for combo in np.ndindex(*[len(p) for p in per_axis]):
        idx = tuple(per_axis[k][j][0] for k, j in enumerate(combo))
        w = np.prod([per_axis[k][j][1] for k, j in enumerate(combo)])
        flat = np.ravel_multi_index(idx, grid.shape)
        f[flat] += w / grid.volumes[flat]
    return f


@dataclass(frozen=True)
class PhiParams:
    """Exponent and transition knots of the weight phi."""

    c: float
    lo: float = 0.5
    hi: float = 2.0

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError(f"need 0 < lo < hi, got {self.lo}, {self.hi}")


def eta(y, params: PhiParams = PhiParams(0.0)):
    """C^2 cutoff: 1 on ``[0, lo]``, 0 on ``[hi, inf)``, quintic smoothstep between."""
    s = np.clip((np.asarray(y, dtype=float) - params.lo) / (params.hi - params.lo), 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def eta_derivative(y, params: PhiParams = PhiParams(0.0)):
    w = params.hi - params.lo
    s = (np.asarray(y, dtype=float) - params.lo) / w
    inside = (s > 0) & (s < 1)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, -30.0 * s * s * (1.0 - s) ** 2 / w, 0.0)


def weight_phi(y, params: PhiParams):
    """``phi(y) = eta(y) + (1 - eta(y)) y^(-c/2)`` for ``y > 0``."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("phi is defined for y > 0 only")
    e = eta(y, params)
    return e + (1.0 - e) * y ** (-params.c / 2.0)


def weight_phi_derivative(y, params: PhiParams):
    y = np.asarray(y, dtype=float)
    e = eta(y, params)
    de = eta_derivative(y, params)
    p = y ** (-params.c / 2.0)
    return de * (1.0 - p) + (1.0 - e) * (-params.c / 2.0) * p / y


def phi_derivative_constant(params: PhiParams, y_max: float = 1e4, n: int = 4001) -> float:
    """Realised ``C0`` in ``|phi'(y)| <= C0 phi(y) / y`` sampled on ``[1, y_max]``."""
    y = np.geomspace(1.0, y_max, n)
    return float(np.max(np.abs(weight_phi_derivative(y, params)) * y / weight_phi(y, params)))
