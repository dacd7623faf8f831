"""Time stepping of the discrete semigroup and kernel slices.

One step of the theta-scheme for ``M u' = -A u`` solves

    (M + theta dt A) u_{n+1} = (M - (1 - theta) dt A) u_n,

theta = 1 (implicit Euler) or 1/2 (Crank-Nicolson).  Crank-Nicolson runs
start with a layer of implicit-Euler steps that damps the stiff modes
excited by delta data.  Every step is a rational function of ``M^-1 A``, so
stepping with ``A^T`` is the exact adjoint of stepping with ``A`` in the
``M`` inner product.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from .domain import (HalfSpaceGrid, build_grid, discrete_delta, interpolated_delta, weighted_inner,
                     weighted_norm)
from .operator import AssembledOperator, assemble, assemble_adjoint

SCHEMES = ("implicit-euler", "crank-nicolson")


class SolverError(RuntimeError):
    """Linear solve did not meet the requested residual tolerance."""

    def __init__(self, residual, tol):
        super().__init__(f"linear solve residual {residual:.3e} exceeds tolerance {tol:.3e}")
        self.residual = residual
        self.tol = tol


@dataclass(frozen=True)
class PropagatorConfig:
    """Time-stepping parameters.

    ``dt=None`` picks ``n = max(min_steps, ceil(rho * t / h_min^2))`` steps.
    ``substeps`` is the number of implicit-Euler steps that open a
    Crank-Nicolson run.
    """

    scheme: str = "crank-nicolson"
    dt: float | None = None
    substeps: int = 10
    tol: float = 1e-10
    min_steps: int = 64
    rho: float = 0.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.tol <= 1e-6:
            raise ValueError(f"tolerance must lie in (0, 1e-6], got {self.tol}")
        if self.substeps < 0 or self.min_steps < 1 or self.rho < 0:
            raise ValueError("substeps >= 0, min_steps >= 1 and rho >= 0 are required")

    def n_steps(self, t: float, h_min: float) -> int:
        if self.dt is not None:
            return max(1, math.ceil(t / self.dt - 1e-9))
        return max(self.min_steps, math.ceil(self.rho * t / h_min ** 2))


class Propagator:
    """Applies the theta-scheme for one assembled operator, caching factorizations."""

    def __init__(self, op: AssembledOperator, cfg: PropagatorConfig = PropagatorConfig()):
        self.op = op
        self.cfg = cfg
        self._lu = {}
        self.max_residual = 0.0

    def _factor(self, dt, theta):
        key = (dt, theta)
        if key not in self._lu:
            lhs = (sp.diags(self.op.M) + theta * dt * self.op.A).tocsc()
            self._lu[key] = (splu(lhs), lhs)
        return self._lu[key]

    def _step(self, u, dt, theta):
        # increment form (M + theta dt A) d = -dt A u: constants give A u = 0, so d = 0 exactly
        lu, lhs = self._factor(dt, theta)
        rhs = -dt * self.op.form_action(u)
        d = lu.solve(rhs)
        scale = np.linalg.norm(self.op.M * u) or 1.0
        res = np.linalg.norm(lhs @ d - rhs) / scale
        if res > self.cfg.tol:
            d = d + lu.solve(rhs - lhs @ d)
            res = np.linalg.norm(lhs @ d - rhs) / scale
            if res > self.cfg.tol:
                raise SolverError(res, self.cfg.tol)
        self.max_residual = max(self.max_residual, res)
        return u + d

    def schedule(self, t):
        """List of ``(dt, theta)`` steps reaching time ``t``."""
        n = self.cfg.n_steps(t, self.op.grid.h_min)
        dt = t / n
        if self.cfg.scheme == "implicit-euler":
            return [(dt, 1.0)] * n
        k = min(self.cfg.substeps, n)
        return [(dt, 1.0)] * k + [(dt, 0.5)] * (n - k)

    def evolve(self, f0, t):
        if not t > 0:
            raise ValueError(f"t must be positive, got {t}")
        u = np.asarray(f0, dtype=float).copy()
        if u.shape != (self.op.size,):
            raise ValueError(f"datum has shape {u.shape}, expected ({self.op.size},)")
        for dt, theta in self.schedule(t):
            u = self._step(u, dt, theta)
        return u


def evolve(op: AssembledOperator, f0, t: float, cfg: PropagatorConfig = PropagatorConfig()):
    """Approximate ``e^{tL} f0`` with the configured scheme."""
    return Propagator(op, cfg).evolve(f0, t)


@dataclass(eq=False)
class KernelSlice:
    """Values of ``p(t, ., z_src)`` (forward) or ``p(t, z_src, .)`` (adjoint).

    Values are densities with respect to ``y^c dz``.  ``z_src`` is the node
    actually used; ``z_requested`` the point asked for.
    """

    t: float
    z_src: np.ndarray
    z_requested: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    side: str
    grid: HalfSpaceGrid
    coeffs: object
    flags: list = field(default_factory=list)

    def mass(self, masked: bool = True) -> float:
        w = self.grid.volumes * (self.mask if masked else 1.0)
        return float(np.sum(self.values * w))

    def at(self, points) -> np.ndarray:
        """Multilinear interpolation of the slice at ``points`` (shape ``(k, N+1)``)."""
        return interpolate(self.grid, self.values, points)


def interpolate(grid: HalfSpaceGrid, values, points):
    axes = [grid.x] * grid.N + [grid.y]
    f = RegularGridInterpolator(axes, np.asarray(values).reshape(grid.shape),
                                method="linear", bounds_error=True)
    return f(np.atleast_2d(points))


def kernel_slice(op: AssembledOperator, z_src, t: float, cfg: PropagatorConfig = PropagatorConfig(),
                 side: str = "forward", propagator: Propagator | None = None,
                 source: str = "cell") -> KernelSlice:
    """Evolve a discrete delta at ``z_src``.

    ``op`` is the forward operator.  ``side="forward"`` evolves under ``L``
    and gives ``p(t, ., z_src)``; ``side="adjoint"`` evolves under ``L*``
    and gives ``p(t, z_src, .)``.  ``source="cell"`` puts the delta on the
    node of the containing cell (``z_src`` of the slice is that node);
    ``source="interpolated"`` spreads it over the neighbouring nodes so the
    slice refers to ``z_src`` itself.
    """
    if side not in ("forward", "adjoint"):
        raise ValueError(f"side must be 'forward' or 'adjoint', got {side!r}")
    grid = op.grid
    z_req = np.atleast_1d(np.asarray(z_src, dtype=float))
    idx = grid.cell_index(z_req)
    mask = grid.validity_mask(t)
    flags = []
    if not mask[idx]:
        msg = f"source {z_req.tolist()} lies outside the validity region for t={t}"
        warnings.warn(msg, stacklevel=2)
        flags.append("source-outside-validity-region")
    if propagator is not None:
        # reuse cached factorizations when they belong to the requested side
        if propagator.op.grid is not grid or propagator.op.side != side:
            raise ValueError("propagator does not match the operator side or grid")
    else:
        propagator = Propagator(op if side == "forward" else op.adjoint(), cfg)
    if source == "cell":
        vals = propagator.evolve(discrete_delta(grid, z_req), t)
        z_used = grid.node(idx)
    elif source == "interpolated":
        vals = propagator.evolve(interpolated_delta(grid, z_req), t)
        z_used = z_req.copy()
    else:
        raise ValueError(f"source must be 'cell' or 'interpolated', got {source!r}")
    return KernelSlice(t=t, z_src=z_used, z_requested=z_req, values=vals, mask=mask,
                       side=side, grid=grid, coeffs=op.coeffs, flags=flags)


def semigroup_properties(op: AssembledOperator, f, t: float, cfg: PropagatorConfig = PropagatorConfig()):
    """Positivity, contraction and conservation figures for one evolution of ``f >= 0``."""
    prop = Propagator(op, cfg)
    grid = op.grid
    f = np.asarray(f, dtype=float)
    u = prop.evolve(f, t)
    one = prop.evolve(np.ones(grid.size), t)
    return {
        "min_over_max": float(u.min() / np.abs(u).max()),
        "sup_ratio": weighted_norm(u, np.inf, grid) / weighted_norm(f, np.inf, grid),
        "l2_ratio": weighted_norm(u, 2, grid) / weighted_norm(f, 2, grid),
        "constant_error": float(np.abs(one - 1).max()),
        "max_residual": prop.max_residual,
    }


def check_semigroup(op: AssembledOperator, f, t: float, s: float, cfg: PropagatorConfig = PropagatorConfig()):
    """``||e^{(t+s)L} f - e^{sL} e^{tL} f|| / ||f||`` in ``L^2_c``."""
    if s == 0:
        return 0.0
    prop = Propagator(op, cfg)
    whole = prop.evolve(f, t + s)
    split = prop.evolve(prop.evolve(f, t), s)
    return weighted_norm(whole - split, 2, op.grid) / weighted_norm(f, 2, op.grid)


def check_duality(op_forward: AssembledOperator, op_adjoint: AssembledOperator, f, g, t: float,
                  cfg: PropagatorConfig = PropagatorConfig()):
    """``|<e^{tL} f, g> - <f, e^{tL*} g>| / (||f|| ||g||)`` in ``L^2_c``."""
    grid = op_forward.grid
    lhs = weighted_inner(evolve(op_forward, f, t, cfg), g, grid)
    rhs = weighted_inner(f, evolve(op_adjoint, g, t, cfg), grid)
    return float(abs(lhs - rhs) / (weighted_norm(f, 2, grid) * weighted_norm(g, 2, grid)))


@dataclass
class ScalingReport:
    s: float
    t: float
    deviation: float
    p_base: np.ndarray
    p_scaled: np.ndarray


def check_scaling(spec, coeffs, t: float, s: float, probes, cfg: PropagatorConfig = PropagatorConfig(),
                  scaled_spec=None) -> ScalingReport:
    """Compare ``s^{N+1+c} p(s^2 t, s z1, s z2)`` with ``p(t, z1, z2)``.

    ``probes`` is a sequence of ``(z1, z2)`` pairs.  The second grid defaults
    to the dilation of ``spec`` by ``s`` with ``dt`` scaled by ``s^2``; pass
    ``scaled_spec`` to compare against an independent grid instead.
    """
    probes = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in probes]
    if s == 1 and scaled_spec is None:
        return ScalingReport(s, t, 0.0, np.ones(len(probes)), np.ones(len(probes)))
    g1 = build_grid(spec)
    g2 = build_grid(scaled_spec if scaled_spec is not None else spec.scaled(s))
    n1 = cfg.n_steps(t, g1.h_min)
    cfg1 = PropagatorConfig(scheme=cfg.scheme, dt=t / n1, substeps=cfg.substeps, tol=cfg.tol)
    cfg2 = PropagatorConfig(scheme=cfg.scheme, dt=s * s * t / n1, substeps=cfg.substeps, tol=cfg.tol)
    op1, op2 = assemble(g1, coeffs), assemble(g2, coeffs)
    m1, m2 = g1.validity_mask(t), g2.validity_mask(s * s * t)
    for z1, z2 in probes:
        for g, m, z in ((g1, m1, z1), (g1, m1, z2), (g2, m2, s * z1), (g2, m2, s * z2)):
            if not m[g.cell_index(z)]:
                raise ValueError(f"probe {z.tolist()} lies outside the validity region")
    prop1 = Propagator(op1.adjoint(), cfg1)
    prop2 = Propagator(op2.adjoint(), cfg2)
    slices = {}
    base, scaled = [], []
    for z1, z2 in probes:
        key = tuple(z1)
        if key not in slices:
            # adjoint slices from z1 give p(t, z1, .)
            slices[key] = (
                kernel_slice(op1, z1, t, side="adjoint", propagator=prop1, source="interpolated"),
                kernel_slice(op2, s * z1, s * s * t, side="adjoint", propagator=prop2,
                             source="interpolated"))
        sl1, sl2 = slices[key]
        base.append(sl1.at(z2)[0])
        scaled.append(sl2.at(s * z2)[0] * s ** (g1.N + 1 + coeffs.c))
    base, scaled = np.array(base), np.array(scaled)
    dev = float(np.max(np.abs(scaled - base) / np.abs(base)))
    return ScalingReport(s, t, dev, base, scaled)
