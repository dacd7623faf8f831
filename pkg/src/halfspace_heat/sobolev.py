"""Weighted Sobolev, Gagliardo-Nirenberg and Maz'ya quotients on test functions.

Quotients are evaluated with a quadrature built for each test function on
its own support box: Gauss-Legendre panels in x and geometric panels in y,
the first of which is a Gauss-Jacobi rule carrying the singular weight
``y^w`` exactly.  The rule is therefore independent of any PDE grid, and
it dilates exactly with the function.

Test functions are built from the smooth bump ``B(r) = exp(1 - 1/(1 - r^2))``
(``r < 1``), which is flat to all orders at ``r = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .domain import PhiParams, weight_phi

FAMILIES = ("bump", "shifted-bump", "boundary-flat")


def sobolev_exponent(N: int, c) -> Fraction | float:
    """``2*_c = 2 (N+1+c) / (N+c-1)``, exact for rational ``c``; ``inf`` when ``N + c <= 1``."""
    cf = Fraction(c).limit_denominator(10 ** 6) if not isinstance(c, Fraction) else c
    den = N + cf - 1
    if den <= 0:
        return math.inf
    return 2 * (N + 1 + cf) / den


def gn_theta(N: int, c: float, q: float) -> float:
    """``theta = (N + 1 + c^+) (1/2 - 1/q)``."""
    return (N + 1 + max(c, 0.0)) * (0.5 - 1.0 / q)


@dataclass(frozen=True)
class SobolevParams:
    N: int
    c: float
    q: float
    alpha: float | None = None
    beta: float | None = None
    r: float | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N >= 1 is required")
        if not self.c + 1 > 0:
            raise ValueError(f"c + 1 > 0 is required, got {self.c}")
        if not self.q >= 1:
            raise ValueError(f"q >= 1 is required, got {self.q}")

    @property
    def theta(self) -> float:
        return gn_theta(self.N, self.c, self.q)

    @property
    def critical(self):
        return sobolev_exponent(self.N, self.c)


def _bump(r):
    r = np.asarray(r, dtype=float)
    inside = r < 1
    out = np.zeros_like(r)
    ri = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ri * ri))
    return out


def _bump_dr(r):
    """Derivative of the bump with respect to r."""
    r = np.asarray(r, dtype=float)
    inside = r < 1
    out = np.zeros_like(r)
    ri = r[inside]
    d = 1.0 - ri * ri
    out[inside] = np.exp(1.0 - 1.0 / d) * (-2.0 * ri / (d * d))
    return out


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported test function on the closed half-space.

    bump
        ``B(|z - (x0, 0)| / R)``: centred on the boundary, even in y.
    shifted-bump
        ``B(|z - (x0, y0)| / R)``; interior when ``y0 >= R``.
    boundary-flat
        ``B(|x - x0| / R) g(y)`` with ``g = 1`` on ``[0, delta]``,
        ``g(y) = B((y - delta) / (H - delta))`` above and ``delta = 0.1 H``,
        so ``D_y u = 0`` for ``y <= delta``.
    """

    __test__ = False  # keep pytest from collecting this class

    family: str
    x0: tuple
    R: float
    y0: float = 0.0
    H: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if not self.R > 0 or not self.H > 0 or self.y0 < 0:
            raise ValueError("R, H must be positive and y0 non-negative")

    @property
    def N(self) -> int:
        return len(self.x0)

    @property
    def delta(self) -> float:
        return 0.1 * self.H

    def support_box(self):
        """``(x_lo, x_hi, y_lo, y_hi)`` with x bounds per axis."""
        x0 = np.array(self.x0)
        if self.family == "bump":
            return x0 - self.R, x0 + self.R, 0.0, self.R
        if self.family == "shifted-bump":
            return x0 - self.R, x0 + self.R, max(0.0, self.y0 - self.R), self.y0 + self.R
        return x0 - self.R, x0 + self.R, 0.0, self.H

    def y_breaks(self):
        """Interior y points where the function is least smooth."""
        return [self.delta] if self.family == "boundary-flat" else []

    def evaluate(self, z):
        """Values and gradients at points ``z`` of shape ``(n, N+1)``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        x, y = z[:, :-1], z[:, -1]
        dx = x - np.array(self.x0)
        if self.family in ("bump", "shifted-bump"):
            yc = 0.0 if self.family == "bump" else self.y0
            dz = np.concatenate([dx, (y - yc)[:, None]], axis=1)
            r = np.sqrt(np.sum(dz * dz, axis=1)) / self.R
            u = _bump(r)
            with np.errstate(invalid="ignore", divide="ignore"):
                fac = np.where(r > 0, _bump_dr(r) / (r * self.R * self.R), 0.0)
            return u, fac[:, None] * dz
        rx = np.sqrt(np.sum(dx * dx, axis=1)) / self.R
        bx = _bump(rx)
        with np.errstate(invalid="ignore", divide="ignore"):
            gx = np.where(rx > 0, _bump_dr(rx) / (rx * self.R * self.R), 0.0)[:, None] * dx
        w = self.H - self.delta
        s = np.clip((y - self.delta) / w, 0.0, None)
        gy = np.where(y <= self.delta, 1.0, _bump(s))
        dgy = np.where(y <= self.delta, 0.0, _bump_dr(s) / w)
        grad = np.concatenate([gx * gy[:, None], (bx * dgy)[:, None]], axis=1)
        return bx * gy, grad

    def dilate(self, s: float) -> "TestFunction":
        """``I_s u(z) = u(s z)``."""
        return replace(self, x0=tuple(v / s for v in self.x0), R=self.R / s, y0=self.y0 / s, H=self.H / s)

    def concentrate(self, s: float, z0) -> "TestFunction":
        """``u(s (z - z0) + z0)``."""
        z0 = np.asarray(z0, dtype=float)
        x0 = (np.array(self.x0) - z0[:-1]) / s + z0[:-1]
        y0 = (self.y0 - z0[-1]) / s + z0[-1]
        if self.family != "shifted-bump":
            raise ValueError("concentration about an interior point needs the shifted-bump family")
        return replace(self, x0=tuple(x0), R=self.R / s, y0=y0)


@dataclass(frozen=True)
class QuadratureOptions:
    order: int = 12
    x_panels: int = 6
    y_panels: int = 6
    geometric_levels: int = 4


def _gauss_panels(edges, order):
    t, w = roots_legendre(order)
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        pts.append(0.5 * (b - a) * t + 0.5 * (a + b))
        wts.append(0.5 * (b - a) * w)
    return np.concatenate(pts), np.concatenate(wts)


def y_rule(lo, hi, w, order=12, panels=6, levels=4, breaks=()):
    """Nodes and weights for ``int_lo^hi g(y) y^w dy``.

    With ``lo = 0`` the panels are geometric towards 0 and the first one
    uses Gauss-Jacobi so that ``y^w`` is integrated exactly; otherwise the
    weight is multiplied into Gauss-Legendre weights.
    """
    if not w > -1:
        raise ValueError(f"weight exponent must exceed -1, got {w}")
    inner = list(np.linspace(lo, hi, panels + 1)[1:-1]) + [b for b in breaks if lo < b < hi]
    if lo == 0:
        first = hi / panels
        inner += [first * 2.0 ** (-k) for k in range(levels)]
    edges = np.unique(np.concatenate([[lo, hi], inner]))
    if lo == 0:
        y1 = edges[1]
        t, wj = roots_jacobi(order, 0.0, w)
        y_first = 0.5 * y1 * (1 + t)
        w_first = wj * (0.5 * y1) ** (w + 1)
        yp, wp = _gauss_panels(edges[1:], order)
        return np.concatenate([y_first, yp]), np.concatenate([w_first, wp * yp ** w])
    yp, wp = _gauss_panels(edges, order)
    return yp, wp * yp ** w


class Quadrature:
    """Tensor rule on the support box of one test function for the measure ``y^w dz``."""

    def __init__(self, u: TestFunction, w: float, opts: QuadratureOptions = QuadratureOptions()):
        xlo, xhi, ylo, yhi = u.support_box()
        ys, wy = y_rule(ylo, yhi, w, opts.order, opts.y_panels, opts.geometric_levels, u.y_breaks())
        axes, wax = [], []
        for a, b in zip(xlo, xhi):
            xs, wx = _gauss_panels(np.linspace(a, b, opts.x_panels + 1), opts.order)
            axes.append(xs)
            wax.append(wx)
        grids = np.meshgrid(*axes, ys, indexing="ij")
        self.points = np.stack([g.ravel() for g in grids], axis=1)
        wgrids = np.meshgrid(*wax, wy, indexing="ij")
        self.weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)


class FunctionData:
    """Values and gradient norms of a test function on its quadrature rules."""

    def __init__(self, u: TestFunction, opts: QuadratureOptions = QuadratureOptions()):
        self.u = u
        self.opts = opts
        self._cache = {}

    def on(self, w):
        key = round(float(w), 14)
        if key not in self._cache:
            qd = Quadrature(self.u, w, self.opts)
            val, grad = self.u.evaluate(qd.points)
            self._cache[key] = (qd, val, np.sqrt(np.sum(grad * grad, axis=1)))
        return self._cache[key]

    def norm(self, p, w=0.0, gradient=False, density=None):
        """``(int |f|^p y^w dz)^(1/p)`` with ``f = u`` or ``|grad u|``; ``p = inf`` gives the sup."""
        qd, val, gn = self.on(w)
        f = np.abs(gn if gradient else val)
        if p == math.inf:
            return float(f.max())
        wts = qd.weights if density is None else qd.weights * density(qd.points)
        return float(np.sum(f ** p * wts) ** (1.0 / p))


def _nu_density(c):
    params = PhiParams(c)
    return lambda pts: weight_phi(pts[:, -1], params) ** 2


def quotient_sobolev(u, params: SobolevParams, opts: QuadratureOptions = QuadratureOptions(), q=None):
    """``||u||_{L^q_c} / ||grad u||_{L^2_c}`` with ``q = 2*_c`` unless given."""
    q = float(params.critical) if q is None else q
    d = u if isinstance(u, FunctionData) else FunctionData(u, opts)
    den = d.norm(2, params.c, gradient=True)
    if den < 1e-14:
        raise ValueError("gradient norm vanishes; the quotient is undefined")
    return d.norm(q, params.c) / den


def quotient_gn(u, params: SobolevParams, measure: str = "c", theta=None, full_norm=False,
                opts: QuadratureOptions = QuadratureOptions()):
    """``||u||_q / (||grad u||_2^theta ||u||_2^(1-theta))`` in ``L^p(mu)``.

    ``measure`` is ``"c"`` (``y^c dz``) or ``"nu"`` (``phi^2 y^c dz``).
    ``full_norm=True`` replaces the gradient norm by the full ``H^1(mu)``
    norm.  ``theta`` defaults to ``(N + 1 + c^+)(1/2 - 1/q)``.
    """
    th = params.theta if theta is None else theta
    if not 0 < th <= 1:
        raise ValueError(f"theta = {th} lies outside (0, 1]")
    if theta is None and params.N == 1 and params.c <= 0 and th >= 1:
        raise ValueError("theta < 1 is required when N = 1 and c <= 0")
    if measure not in ("c", "nu"):
        raise ValueError(f"unknown measure {measure!r}")
    dens = _nu_density(params.c) if measure == "nu" else None
    d = u if isinstance(u, FunctionData) else FunctionData(u, opts)
    lq = d.norm(params.q, params.c, density=dens)
    l2 = d.norm(2, params.c, density=dens)
    g2 = d.norm(2, params.c, gradient=True, density=dens)
    if full_norm:
        g2 = math.hypot(g2, l2)
    if g2 < 1e-14:
        raise ValueError("gradient norm vanishes; the quotient is undefined")
    return lq / (g2 ** th * l2 ** (1 - th))


def holder_chain(u, params: SobolevParams, opts: QuadratureOptions = QuadratureOptions()):
    """Both sides of ``||u||_q <= ||u||_{2*_c}^theta ||u||_2^(1-theta)`` (measure ``y^c``)."""
    qc = float(params.critical)
    if not 2 < params.q < qc:
        raise ValueError(f"need 2 < q < 2*_c = {qc}")
    th = (0.5 - 1 / params.q) / (0.5 - 1 / qc)
    d = u if isinstance(u, FunctionData) else FunctionData(u, opts)
    return d.norm(params.q, params.c), d.norm(qc, params.c) ** th * d.norm(2, params.c) ** (1 - th)


def mazya_check(p: int, N: int, alpha: float, beta: float, q: float):
    """Validate the exponent relations of the Maz'ya inequality with gradient in ``L^p``, ``p`` in {1, 2}.

    Returns nothing or raises a ValueError naming the failed relation.
    """
    if p == 1:
        if not 1 <= q <= (N + 1) / N:
            raise ValueError(f"relation 1 <= q <= (N+1)/N fails for q={q}")
        expected = alpha - 1 + (q - 1) / q * (N + 1)
        if not math.isclose(beta, expected, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"relation beta = alpha - 1 + (q-1)(N+1)/q fails: {beta} != {expected}")
        if not beta > -1 / q:
            raise ValueError(f"relation beta > -1/q fails for beta={beta}")
    elif p == 2:
        upper = math.inf if N == 1 else 2 * (N + 1) / (N - 1)
        if not 2 <= q <= upper:
            raise ValueError(f"relation 2 <= q <= 2* fails for q={q}")
        if not beta + 1 / q > 0:
            raise ValueError(f"relation beta + 1/q > 0 fails for beta={beta}")
        expected = alpha - 1 + (N + 1) * (0.5 - 1 / q)
        if not math.isclose(beta, expected, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"relation beta = alpha - 1 + (N+1)(1/2 - 1/q) fails: {beta} != {expected}")
    else:
        raise ValueError(f"p must be 1 or 2, got {p}")


def quotient_mazya(u, alpha: float, beta: float, q: float, p: int = 2,
                   opts: QuadratureOptions = QuadratureOptions()):
    """``||y^beta u||_{L^q} / ||y^alpha grad u||_{L^p}`` with Lebesgue norms, ``p = 2`` or ``1``."""
    d = u if isinstance(u, FunctionData) else FunctionData(u, opts)
    mazya_check(p, d.u.N, alpha, beta, q)
    lhs = d.norm(q, beta * q)
    rhs = d.norm(p, alpha * p, gradient=True)
    return lhs / rhs


def make_family(N: int, n: int = 200, seed: int = 0, families=FAMILIES, max_height: float | None = None):
    """Deterministic pseudo-random test functions cycling through ``families``.

    With ``max_height`` every support lies in ``R^N x [0, max_height]``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        fam = families[i % len(families)]
        x0 = tuple(rng.uniform(-2, 2, N))
        if fam == "bump":
            R = math.exp(rng.uniform(math.log(0.1), math.log(5)))
            if max_height is not None:
                R = min(R, max_height)
            out.append(TestFunction("bump", x0, R))
        elif fam == "shifted-bump":
            R = math.exp(rng.uniform(math.log(0.1), math.log(3)))
            y0 = R * rng.uniform(0.3, 3.0)
            if max_height is not None and y0 + R > max_height:
                scale = max_height / (y0 + R)
                R, y0 = R * scale, y0 * scale
            out.append(TestFunction("shifted-bump", x0, R, y0=y0))
        else:
            H = math.exp(rng.uniform(math.log(0.1), math.log(5)))
            R = math.exp(rng.uniform(math.log(0.2), math.log(4)))
            if max_height is not None:
                H = min(H, max_height)
            out.append(TestFunction("boundary-flat", x0, R, H=H))
    return out


@dataclass
class ScanResult:
    functions: list
    quotients: np.ndarray

    @property
    def empirical_sup(self) -> float:
        return float(np.max(self.quotients))

    def rows(self):
        for u, v in zip(self.functions, self.quotients):
            yield {"family": u.family, "x0": ";".join(f"{x:.6g}" for x in u.x0), "R": u.R,
                   "y0": u.y0, "H": u.H, "quotient": float(v)}


def scan(functions, quotient, opts: QuadratureOptions = QuadratureOptions()) -> ScanResult:
    """Apply ``quotient(FunctionData)`` to each function."""
    vals = np.array([quotient(FunctionData(u, opts)) for u in functions])
    return ScanResult(list(functions), vals)


@dataclass
class EmbeddingReport:
    params: SobolevParams
    scan: ScanResult
    finite: bool

    @property
    def empirical_sup(self) -> float:
        return self.scan.empirical_sup


def local_embedding_check(params: SobolevParams, functions=None, n: int = 200, seed: int = 0,
                          opts: QuadratureOptions = QuadratureOptions()) -> EmbeddingReport:
    """Empirical sup of ``||u||_{L^q_c} / ||grad u||_{L^2_c}`` over supports in ``R^N x [0, r]``."""
    if params.r is None:
        raise ValueError("the support radius r is required")
    if functions is None:
        functions = make_family(params.N, n, seed, max_height=params.r)
    for u in functions:
        if u.support_box()[3] > params.r * (1 + 1e-12):
            raise ValueError("test function support exceeds the radius r")
    res = scan(functions, lambda d: quotient_sobolev(d, params, q=params.q), opts)
    return EmbeddingReport(params, res, bool(np.all(np.isfinite(res.quotients))))


@dataclass
class WitnessReport:
    scales: np.ndarray
    quotients: np.ndarray
    q: float
    expected_exponent: float

    @property
    def growth(self) -> float:
        return float(self.quotients[-1] / self.quotients[0])

    @property
    def exponent(self) -> float:
        """Least-squares slope of ``log quotient`` against ``log s``."""
        return float(np.polyfit(np.log(self.scales), np.log(self.quotients), 1)[0])


def global_failure_witness(N: int, c: float, scales=(1, 2, 4, 8, 16), base: TestFunction | None = None,
                           opts: QuadratureOptions = QuadratureOptions()) -> WitnessReport:
    """Sobolev quotient at ``q = 2*_c`` along ``u(s (z - z0) + z0)``, ``z0 = (0, 1)``.

    When ``2*_c`` is infinite (``N + c <= 1``) the sup norm is used.  The
    expected growth exponent ``-c / (N + 1 + c)`` is derived for finite
    ``2*_c`` only.
    """
    if c >= 0:
        raise ValueError("the global failure needs c < 0")
    params = SobolevParams(N, c, 2.0)
    q = float(params.critical)
    z0 = np.zeros(N + 1)
    z0[-1] = 1.0
    if base is None:
        base = TestFunction("shifted-bump", tuple(z0[:-1]), 0.5, y0=1.0)
    vals = []
    for s in scales:
        d = FunctionData(base.concentrate(s, z0), opts)
        vals.append(d.norm(q, c) / d.norm(2, c, gradient=True))
    expected = -c / (N + 1 + c) if math.isfinite(q) else math.nan
    return WitnessReport(np.asarray(scales, dtype=float), np.array(vals), q, expected)
