"""Discrete generators built from the weighted bilinear form.

The form of ``L = Tr(Q D^2) + (c/y) D_y`` (Neumann at ``y = 0``) in
``L^2(y^m dz)`` with ``m = c / gamma`` is

    a(u, v) = int  grad(v)^T G grad(u)  y^m dz,      G = [[Q1, 2q], [0, gamma]].

Its symmetric part ``[[Q1, q], [q^T, gamma]]`` is discretised edge by edge:
axis edges carry the diagonal entries and, on every (x_k, y) square, one
diagonal edge carries the mixed entry ``q_k``.  The edge orientation follows
the sign of ``q_k`` and the spurious axis contributions of the diagonal edge
are removed from the adjacent axis edges, so all edge weights stay
non-negative when ``|q_k| dx/hy <= Q1_kk`` and ``|q_k| hy/dx <= gamma``.
The antisymmetric part ``q_k int (v_x u_y - v_y u_x) y^m`` is the exact
integral of the Jacobian of the bilinear interpolants over each square,
i.e. a trapezoidal circulation around its four corners.

With ``A[i, j] = a(e_j, e_i)`` and ``M`` the cell volumes the generator is
``L_h u = -A u / M``; its adjoint with respect to the ``M`` inner product is
``-A^T u / M``.  Constants lie in the kernel of both ``A`` and ``A^T``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import map_coordinates

from .domain import HalfSpaceGrid


@dataclass(frozen=True)
class OperatorCoeffs:
    """Coefficients of ``Delta_x + 2 a . grad_x D_y + D_yy + (c/y) D_y``."""

    c: float
    a: tuple = ()

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "a", a)
        if not self.c + 1 > 0:
            raise ValueError(f"c + 1 > 0 is required, got c={self.c}")
        if np.linalg.norm(a) >= 1:
            raise ValueError(f"|a| < 1 is required for ellipticity, got |a|={np.linalg.norm(a)}")

    @property
    def N(self) -> int:
        return len(self.a)

    @property
    def norm_a(self) -> float:
        return float(np.linalg.norm(self.a)) if self.a else 0.0


@dataclass(frozen=True, eq=False)
class GeneralCoeffs:
    """``Tr(Q D^2) + (b . grad_x)/y + (c/y) D_y`` with ``Q = [[Q1, q], [q^T, gamma]]``."""

    Q1: np.ndarray
    q: np.ndarray
    gamma: float
    c: float
    b: np.ndarray = None

    def __post_init__(self):
        Q1 = np.atleast_2d(np.asarray(self.Q1, dtype=float))
        n = Q1.shape[0]
        q = np.asarray(self.q, dtype=float).reshape(n)
        b = np.zeros(n) if self.b is None else np.asarray(self.b, dtype=float).reshape(n)
        object.__setattr__(self, "Q1", Q1)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "b", b)
        if Q1.shape != (n, n) or not np.allclose(Q1, Q1.T):
            raise ValueError("Q1 must be a symmetric square matrix")
        if n and np.linalg.eigvalsh(Q1).min() <= 0:
            raise ValueError("Q1 is not positive definite")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        schur = self.gamma - (q @ np.linalg.solve(Q1, q) if n else 0.0)
        if schur <= 0:
            raise ValueError(f"Q is not positive definite: gamma - q^T Q1^-1 q = {schur}")
        if not self.c / self.gamma + 1 > 0:
            raise ValueError(f"c/gamma + 1 > 0 is required, got {self.c / self.gamma}")
        if self.c == 0 and np.any(b != 0):
            raise ValueError("b must vanish when c = 0")

    @property
    def N(self) -> int:
        return self.Q1.shape[0]

    @property
    def m(self) -> float:
        """Exponent of the reference measure ``y^(c/gamma)``."""
        return self.c / self.gamma

    def full_matrix(self) -> np.ndarray:
        n = self.N
        Q = np.empty((n + 1, n + 1))
        Q[:n, :n] = self.Q1
        Q[:n, n] = Q[n, :n] = self.q
        Q[n, n] = self.gamma
        return Q

    @classmethod
    def from_matrix(cls, Q, c, b=None):
        Q = np.asarray(Q, dtype=float)
        return cls(Q1=Q[:-1, :-1], q=Q[:-1, -1], gamma=float(Q[-1, -1]), c=c, b=b)

    @classmethod
    def from_coeffs(cls, coeffs: OperatorCoeffs):
        n = coeffs.N
        return cls(Q1=np.eye(n), q=np.array(coeffs.a), gamma=1.0, c=coeffs.c)


@dataclass(eq=False)
class AssembledOperator:
    """Mass vector and form matrix of a discrete generator.

    ``side`` is ``"forward"`` for ``L`` and ``"adjoint"`` for ``L*``; the
    adjoint carries the transposed form matrix.
    """

    M: np.ndarray
    A: sp.csr_matrix
    grid: HalfSpaceGrid
    coeffs: object
    side: str = "forward"
    info: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.M.size

    def apply(self, u):
        """Generator action ``-A u / M``."""
        return -(self.A @ u) / self.M

    @cached_property
    def _flux(self):
        coo = self.A.tocoo()
        off = coo.row != coo.col
        return coo.row[off], coo.col[off], coo.data[off]

    @cached_property
    def zero_row_sums(self) -> bool:
        """Whether ``A 1 = 0`` up to rounding in the largest diagonal entry."""
        scale = np.abs(self.A.diagonal()).max(initial=0.0)
        return bool(np.abs(self.A @ np.ones(self.size)).max(initial=0.0) <= 1e-12 * max(scale, 1.0))

    def form_action(self, u):
        """``A u``, written as ``sum_j A_ij (u_j - u_i)`` when the rows of ``A`` sum to zero.

        The difference form vanishes on constants in floating point, so time
        steppers built on it preserve constants exactly.
        """
        u = np.asarray(u, dtype=float)
        if not self.zero_row_sums:
            return self.A @ u
        r, c_, v = self._flux
        return np.bincount(r, v * (u[c_] - u[r]), minlength=self.size)

    def adjoint(self) -> "AssembledOperator":
        side = "adjoint" if self.side == "forward" else "forward"
        return AssembledOperator(self.M, self.A.T.tocsr(), self.grid, self.coeffs, side, dict(self.info))


def _sl(ndim, axis, start, stop):
    s = [slice(None)] * ndim
    s[axis] = slice(start, stop)
    return tuple(s)


def _form_matrix(grid: HalfSpaceGrid, Q1, q, gamma):
    N, m = grid.N, grid.c
    shape = grid.shape
    nd = N + 1
    idx = np.arange(grid.size).reshape(shape)
    dx = grid.dx
    I = grid.cell_y_measure
    J = grid.dual_y_measure
    hy = grid.hy
    rows, cols, vals = [], [], []

    def put(r, c_, v):
        r, c_, v = np.broadcast_arrays(r, c_, v)
        rows.append(r.ravel())
        cols.append(c_.ravel())
        vals.append(v.ravel())

    # symmetric axis-edge weights, reduced below by the diagonal splits
    wx = []
    for k in range(N):
        w = np.empty([len(grid.x) - 1 if ax == k else n for ax, n in enumerate(shape)])
        w[...] = Q1[k, k] * dx ** (N - 2) * I
        wx.append(w)
    wy = np.empty(shape[:-1] + (len(grid.y) - 1,))
    wy[...] = gamma * dx ** N * J / hy ** 2

    diag_edges = []
    for k in range(N):
        qk = q[k]
        if qk == 0 or len(grid.y) < 2:
            continue
        lam = abs(qk) * dx ** (N - 1) * J / hy
        sq = _sl(nd, k, 0, -1)
        sq = sq[:-1] + (slice(0, -1),)
        # corners of every (x_k, y) square, counter-clockwise from bottom-left
        c0 = idx[sq]
        c1 = idx[_sl(nd, k, 1, None)][..., :-1]
        c2 = idx[_sl(nd, k, 1, None)][..., 1:]
        c3 = idx[_sl(nd, k, 0, -1)][..., 1:]
        lam_b = np.broadcast_to(lam, c0.shape)
        if qk > 0:
            diag_edges.append((c0, c2, lam_b))
        else:
            diag_edges.append((c1, c3, lam_b))
        wx[k][..., :-1] -= lam_b / 2
        wx[k][..., 1:] -= lam_b / 2
        wy[_sl(nd, k, 0, -1)] -= lam_b / 2
        wy[_sl(nd, k, 1, None)] -= lam_b / 2
        tau = np.broadcast_to(qk * dx ** (N - 1) * J / hy / 2, c0.shape)
        for p_, r_ in ((c0, c1), (c1, c2), (c2, c3), (c3, c0)):
            put(p_, r_, tau)
            put(r_, p_, -tau)

    for k, l in itertools.combinations(range(N), 2):
        qkl = Q1[k, l]
        if qkl == 0:
            continue
        lam = abs(qkl) * dx ** (N - 2) * I
        base = _sl(nd, k, 0, -1)
        c00 = idx[_sl(nd, l, 0, -1)][base]
        c10 = idx[_sl(nd, l, 0, -1)][_sl(nd, k, 1, None)]
        c11 = idx[_sl(nd, l, 1, None)][_sl(nd, k, 1, None)]
        c01 = idx[_sl(nd, l, 1, None)][base]
        lam_b = np.broadcast_to(lam, c00.shape)
        diag_edges.append((c00, c11, lam_b) if qkl > 0 else (c10, c01, lam_b))
        wx[k][_sl(nd, l, 0, -1)] -= lam_b / 2
        wx[k][_sl(nd, l, 1, None)] -= lam_b / 2
        wx[l][_sl(nd, k, 0, -1)] -= lam_b / 2
        wx[l][_sl(nd, k, 1, None)] -= lam_b / 2

    edges = []
    for k in range(N):
        edges.append((idx[_sl(nd, k, 0, -1)], idx[_sl(nd, k, 1, None)], wx[k]))
    edges.append((idx[..., :-1], idx[..., 1:], wy))
    edges.extend(diag_edges)
    min_weight = np.inf
    for p_, r_, w in edges:
        if w.size:
            min_weight = min(min_weight, float(w.min()))
        put(p_, p_, w)
        put(r_, r_, w)
        put(p_, r_, -w)
        put(r_, p_, -w)

    n = grid.size
    if rows:
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
    else:
        A = sp.csr_matrix((n, n))
    A.sum_duplicates()
    A.eliminate_zeros()
    off = A - sp.diags(A.diagonal())
    pos = off.data[off.data > 0]
    scale = float(np.abs(A.diagonal()).max()) if n else 1.0
    info = {
        "min_edge_weight": float(min_weight) if np.isfinite(min_weight) else 0.0,
        "positive_offdiagonals": int(np.sum(pos > 1e-13 * scale)),
        "max_positive_offdiagonal": float(pos.max()) if pos.size else 0.0,
    }
    info["monotone"] = info["positive_offdiagonals"] == 0
    return A, info


def _check_measure(grid: HalfSpaceGrid, m: float, N: int):
    if grid.N != N:
        raise ValueError(f"coefficients are for N={N} but the grid has N={grid.N}")
    if not np.isclose(grid.c, m, rtol=0, atol=1e-14):
        raise ValueError(f"grid measure exponent {grid.c} does not match operator exponent {m}")


def assemble(grid: HalfSpaceGrid, coeffs: OperatorCoeffs) -> AssembledOperator:
    """Form matrix of ``Delta_x + 2 a . grad_x D_y + B_y`` with Neumann condition."""
    _check_measure(grid, coeffs.c, coeffs.N)
    A, info = _form_matrix(grid, np.eye(coeffs.N), np.array(coeffs.a), 1.0)
    return AssembledOperator(grid.volumes.copy(), A, grid, coeffs, "forward", info)


def assemble_adjoint(grid: HalfSpaceGrid, coeffs: OperatorCoeffs) -> AssembledOperator:
    """Transpose form matrix: the generator of the adjoint semigroup."""
    return assemble(grid, coeffs).adjoint()


def assemble_general(grid: HalfSpaceGrid, gc: GeneralCoeffs) -> AssembledOperator:
    """Form matrix of ``Tr(Q D^2) + (c/y) D_y`` on a grid with measure ``y^(c/gamma)``.

    The oblique drift ``b`` is not part of this operator; conjugate with
    :func:`apply_shear` (or use :func:`oblique_qtilde`) for ``b != 0``.
    """
    _check_measure(grid, gc.m, gc.N)
    A, info = _form_matrix(grid, gc.Q1, gc.q, gc.gamma)
    return AssembledOperator(grid.volumes.copy(), A, grid, gc, "forward", info)


def gradient_energy(grid: HalfSpaceGrid, u) -> float:
    """Discrete weighted Dirichlet energy ``||grad u||^2_{L^2_c}`` (the ``a = 0`` form)."""
    A, _ = _form_matrix(grid, np.eye(grid.N), np.zeros(grid.N), 1.0)
    return float(np.real(np.vdot(u, A @ u)))


@dataclass(frozen=True, eq=False)
class Reduction:
    """Change of variables ``x -> M x`` taking a general operator to reduced form.

    ``p_general(t, z1, z2) = det(M) p_reduced(gamma t, (M x1, y1), (M x2, y2))``.
    """

    M: np.ndarray
    coeffs: OperatorCoeffs
    time_scale: float

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.M)) if self.M.size else 1.0

    def map_points(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = z.copy()
        out[:, :-1] = z[:, :-1] @ self.M.T
        return out


def reduce_general(gc: GeneralCoeffs) -> Reduction:
    """Map ``Tr(Q D^2) + (c/y) D_y`` to ``gamma (Delta + 2a.grad D_y + B_{c/gamma})``.

    Uses the symmetric square root: ``M = sqrt(gamma) Q1^(-1/2)`` and
    ``a = M q / gamma`` with ``|a|^2 = q^T Q1^-1 q / gamma``.
    """
    if gc.N:
        w, V = np.linalg.eigh(gc.Q1)
        M = np.sqrt(gc.gamma) * (V / np.sqrt(w)) @ V.T
        a = M @ gc.q / gc.gamma
    else:
        M = np.zeros((0, 0))
        a = np.zeros(0)
    return Reduction(M=M, coeffs=OperatorCoeffs(c=gc.m, a=tuple(a)), time_scale=gc.gamma)


def oblique_qtilde(gc: GeneralCoeffs) -> np.ndarray:
    """Matrix of the sheared operator ``T^-1 (Tr(Q D^2) + v.grad/y) T = Tr(Qt D^2) + (c/y) D_y``.

    ``T u(x, y) = u(x - (b/c) y, y)``.  The x-block is symmetrised, which is
    all that acts on a Hessian.
    """
    if gc.c == 0:
        raise ValueError("the shear needs c != 0 (b = 0 is forced when c = 0)")
    beta = gc.b / gc.c
    n = gc.N
    Qt = np.empty((n + 1, n + 1))
    Qt[:n, :n] = gc.Q1 - np.outer(gc.q, beta) - np.outer(beta, gc.q) + gc.gamma * np.outer(beta, beta)
    Qt[:n, n] = Qt[n, :n] = gc.q - gc.gamma * beta
    Qt[n, n] = gc.gamma
    return Qt


def apply_shear(grid: HalfSpaceGrid, f, direction: str, b, c):
    """Evaluate ``f(x -/+ (b/c) y, y)`` by multilinear interpolation in x.

    ``direction="forward"`` is ``T f(x, y) = f(x - (b/c) y, y)``, ``"inverse"``
    the opposite shift.  Points sheared out of the box take the nearest
    boundary value.  Returns ``(g, n_clamped)``.
    """
    if c == 0:
        raise ValueError("the shear needs c != 0")
    if direction not in ("forward", "inverse"):
        raise ValueError(f"unknown direction {direction!r}")
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.shape != (grid.N,):
        raise ValueError(f"b must have {grid.N} components")
    f = np.asarray(f, dtype=float).reshape(grid.shape)
    if np.all(b == 0):
        return f.ravel().copy(), 0
    sign = -1.0 if direction == "forward" else 1.0
    beta = sign * b / c
    out = np.empty_like(f)
    nx = len(grid.x)
    base = np.meshgrid(*([grid.x] * grid.N), indexing="ij")
    clamped = 0
    for j, yj in enumerate(grid.y):
        pts = [(base[k] + beta[k] * yj - grid.x[0]) / grid.dx for k in range(grid.N)]
        clamped += int(np.sum(np.any([(p < 0) | (p > nx - 1) for p in pts], axis=0)))
        out[..., j] = map_coordinates(f[..., j], pts, order=1, mode="nearest")
    return out.ravel(), clamped


def dump_triplets(path, matrix) -> None:
    """Write a sparse matrix as ``row col value`` lines under a ``rows cols nnz`` header."""
    m = sp.coo_matrix(matrix)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c_, v in zip(m.row, m.col, m.data):
            fh.write(f"{int(r)} {int(c_)} {float(v)!r}\n")


def load_triplets(path) -> sp.csr_matrix:
    with open(path, encoding="utf-8") as fh:
        nr, nc, nnz = (int(v) for v in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(nr, nc)).tocsr()
