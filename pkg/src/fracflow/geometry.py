"""Test sets E: signed indicator, boundary frames, curvatures.

Conventions
-----------
Every boundary point carries an orthonormal frame whose last column is the
graph normal ``nu = (-grad gamma, 1) / sqrt(1 + |grad gamma|^2)`` of the local
graph ``E = {y_N > gamma(y')}``. With that orientation ``nu`` points into E,
so a ball has mean curvature ``+1/R`` and a shrinking ball has positive
normal velocity along ``nu``.

Most integrals over E reduce to the sphere fraction

    f(x, rho) = |S_rho(x) cap E| / |S_rho(x)|,

the share of the sphere of radius ``rho`` about ``x`` that lies in E.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special

from .kernels import sphere_area
from .quadrature import QuadratureFailure, integrate


class GeometryDomainError(ValueError):
    pass


def cap_fraction_below(k, dim: int) -> np.ndarray:
    """Share of the unit sphere S^{dim-1} with omega . e < k."""
    k = np.clip(np.asarray(k, dtype=float), -1.0, 1.0)
    a = 0.5 * (dim - 1)
    ak = np.abs(k)
    # two forms of the same incomplete beta, each accurate on its half
    near = 0.5 * special.betainc(0.5, a, k * k)
    cap = 0.5 * special.betainc(a, 0.5, (1.0 - ak) * (1.0 + ak))
    above = np.where(ak <= 0.5, 0.5 - near, cap)
    return np.where(k >= 0, 1.0 - above, above)


def normal_frame(normal) -> np.ndarray:
    """Orthonormal matrix whose last column is ``normal``.

    In the plane the frame is the rotation (tangent, normal) with
    tangent = (n_2, -n_1).
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    if n.size == 2:
        return np.array([[n[1], n[0]], [-n[0], n[1]]])
    e = np.zeros_like(n)
    e[-1] = 1.0
    w = e - n
    if np.linalg.norm(w) < 1e-14:
        return np.eye(n.size)
    return np.eye(n.size) - 2.0 * np.outer(w, w) / (w @ w)


@dataclass(frozen=True)
class BoundaryPoint:
    """A point of the boundary with its graph frame.

    Attributes
    ----------
    position : ndarray
        y on the boundary.
    frame : ndarray
        Orthonormal columns; the last one is the normal nu.
    graph_radius : float
        Radius r of the cylinder in which the boundary is a graph over the
        tangent plane.
    label : str
        Identifier used in reports.
    """

    position: np.ndarray
    frame: np.ndarray
    graph_radius: float
    label: str = ""
    param: object = None

    @property
    def normal(self) -> np.ndarray:
        return self.frame[:, -1]

    @property
    def tangents(self) -> np.ndarray:
        return self.frame[:, :-1]

    def to_frame(self, x) -> np.ndarray:
        """Coordinates of x in the boundary frame (last entry along nu)."""
        return (np.asarray(x, dtype=float) - self.position) @ self.frame

    def from_frame(self, z) -> np.ndarray:
        return self.position + np.asarray(z, dtype=float) @ self.frame.T


def _bisect_brackets(fn, lo, hi, iters: int = 60):
    """Vectorised bisection; ``fn(lo)`` and ``fn(hi)`` have opposite signs."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def angular_fraction(level: Callable, x, rho, n_samples: int = 512) -> np.ndarray:
    """Sphere fraction in the plane from a level function (positive inside).

    Samples the circle on a uniform angular grid and locates each sign change
    by bisection. Crossing pairs closer than one sample spacing are missed.
    """
    x = np.asarray(x, dtype=float)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    shape = rho.shape
    r = rho.reshape(-1, 1)
    theta = np.linspace(0.0, 2 * np.pi, n_samples + 1)

    def lv(th, rr):
        pts = np.stack((x[0] + rr * np.cos(th), x[1] + rr * np.sin(th)), axis=-1)
        return level(pts)

    vals = lv(theta[None, :], r)
    inside = vals > 0
    a, b = inside[:, :-1], inside[:, 1:]
    width = np.diff(theta)[None, :] * np.ones_like(r)
    total = np.where(a & b, width, 0.0)
    cross = a != b
    if np.any(cross):
        ri, ci = np.nonzero(cross)
        rr = r[ri, 0]
        root = _bisect_brackets(lambda th: lv(th, rr), theta[ci], theta[ci + 1])
        part = np.where(a[ri, ci], root - theta[ci], theta[ci + 1] - root)
        np.add.at(total, (ri, ci), part)
    return (total.sum(axis=1) / (2 * np.pi)).reshape(shape)


class SetShape(abc.ABC):
    """A set E in R^N with a smooth boundary."""

    kind: str = ""
    dim: int = 2

    @abc.abstractmethod
    def level(self, x) -> np.ndarray:
        """Signed level function: positive in E, negative outside."""

    def tau(self, x):
        """Signed indicator 1_E - 1_{complement}; 0 exactly on the boundary."""
        v = np.sign(self.level(x))
        return int(v) if np.ndim(v) == 0 else v.astype(int)

    @abc.abstractmethod
    def boundary_point(self, param=None, label: str = "") -> BoundaryPoint:
        ...

    @abc.abstractmethod
    def sphere_fraction(self, x, rho, on_boundary: bool = False) -> np.ndarray:
        """Share of the sphere of radius rho about x inside E.

        ``on_boundary`` declares that x lies exactly on the boundary, so the
        rounding error of the level function at x is discarded; this matters
        at radii near machine precision times the shape size.
        """

    def critical_radii(self, x) -> list[float]:
        """Radii where rho -> sphere_fraction(x, rho) is not smooth."""
        return []

    def outer_radius(self, x) -> float:
        """Radius beyond which the sphere about x misses E (inf if unbounded)."""
        return math.inf

    def bounding_ball(self) -> tuple[np.ndarray, float] | None:
        return None

    @property
    def volume(self) -> float:
        return math.inf

    def mean_curvature(self, p: BoundaryPoint) -> float:
        return mean_curvature_fd(self, p)

    def local_graph(self, p: BoundaryPoint, y_prime) -> float:
        """gamma(y') in the frame of p, solved along nu from the level function."""
        yp = np.atleast_1d(np.asarray(y_prime, dtype=float))
        r = p.graph_radius
        if np.linalg.norm(yp) >= r:
            raise GeometryDomainError(f"|y'| = {np.linalg.norm(yp):.4g} outside graph radius {r:.4g}")
        base = p.position + p.tangents @ yp
        nu = p.normal
        lim = min(r, 1e3)
        g = lambda h: float(self.level(base + h * nu))
        return optimize.brentq(g, -lim, lim, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)

    def translated(self, shift) -> SetShape:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfSpace(SetShape):
    """E = {x : x . normal > offset}."""

    normal: tuple = (0.0, 1.0)
    offset: float = 0.0
    kind = "halfspace"

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.ndim != 1 or n.size < 2 or not np.linalg.norm(n) > 0:
            raise GeometryDomainError("half-space normal must be a nonzero vector in R^N, N >= 2")
        object.__setattr__(self, "normal", tuple(n / np.linalg.norm(n)))

    @property
    def dim(self) -> int:
        return len(self.normal)

    @property
    def _n(self) -> np.ndarray:
        return np.asarray(self.normal)

    def level(self, x):
        return np.asarray(x, dtype=float) @ self._n - self.offset

    def boundary_point(self, param=None, label: str = "") -> BoundaryPoint:
        """``param`` is an optional tangential offset (vector in R^{N-1})."""
        frame = normal_frame(self._n)
        pos = self.offset * self._n
        if param is not None:
            pos = pos + frame[:, :-1] @ np.atleast_1d(np.asarray(param, dtype=float))
        return BoundaryPoint(pos, frame, math.inf, label or "flat", param)

    def sphere_fraction(self, x, rho, on_boundary=False):
        d = 0.0 if on_boundary else float(self.level(x))
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(rho > 0, d / np.where(rho > 0, rho, 1.0), np.sign(d) * np.inf)
        # inside iff omega . n > -d / rho
        return cap_fraction_below(k, self.dim)

    def critical_radii(self, x):
        return [abs(float(self.level(x)))]

    def mean_curvature(self, p):
        return 0.0

    def local_graph(self, p, y_prime):
        return 0.0

    def translated(self, shift):
        shift = np.asarray(shift, dtype=float)
        return HalfSpace(self.normal, self.offset + float(shift @ self._n))

    def to_dict(self):
        return {"kind": self.kind, "normal": list(self.normal), "offset": self.offset, "dim": self.dim}


@dataclass(frozen=True)
class Ball(SetShape):
    """Open ball of radius R about ``center``."""

    radius: float = 1.0
    center: tuple = (0.0, 0.0)
    kind = "ball"

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryDomainError(f"ball radius must be positive, got {self.radius}")
        c = tuple(float(v) for v in self.center)
        if len(c) < 2:
            raise GeometryDomainError("ball center must lie in R^N with N >= 2")
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.center)

    def level(self, x):
        x = np.asarray(x, dtype=float)
        return self.radius - np.linalg.norm(x - self._c, axis=-1)

    def boundary_point(self, param=None, label: str = "") -> BoundaryPoint:
        """``param`` is an outward direction, or an angle when N = 2."""
        if param is None:
            omega = np.zeros(self.dim)
            omega[-1] = -1.0
        elif np.ndim(param) == 0:
            if self.dim != 2:
                raise GeometryDomainError("angle parametrisation needs N = 2")
            omega = np.array([math.cos(param), math.sin(param)])
        else:
            omega = np.asarray(param, dtype=float)
            omega = omega / np.linalg.norm(omega)
        pos = self._c + self.radius * omega
        return BoundaryPoint(pos, normal_frame(-omega), 0.5 * self.radius, label, param)

    def sphere_fraction(self, x, rho, on_boundary=False):
        rho = np.asarray(rho, dtype=float)
        R = self.radius
        d = R if on_boundary else float(np.linalg.norm(np.asarray(x, dtype=float) - self._c))
        if d == 0.0:
            return np.where(rho < R, 1.0, 0.0)
        gap = 0.0 if on_boundary else (R - d) * (R + d)
        safe = np.where(rho > 0, rho, 1.0)
        k = (gap - rho * rho) / (2.0 * safe * d)
        k = np.where(rho > 0, k, math.copysign(math.inf, gap) if gap != 0 else 0.0)
        # x + rho omega in E iff omega . (x - c)/d < k
        return cap_fraction_below(k, self.dim)

    def critical_radii(self, x):
        d = float(np.linalg.norm(np.asarray(x, dtype=float) - self._c))
        return sorted({abs(self.radius - d), self.radius + d})

    def outer_radius(self, x):
        return self.radius + float(np.linalg.norm(np.asarray(x, dtype=float) - self._c))

    def bounding_ball(self):
        return self._c.copy(), self.radius

    @property
    def volume(self) -> float:
        n = self.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n

    def mean_curvature(self, p):
        return 1.0 / self.radius

    def local_graph(self, p, y_prime):
        yp = np.atleast_1d(np.asarray(y_prime, dtype=float))
        q = float(yp @ yp)
        if math.sqrt(q) >= p.graph_radius:
            raise GeometryDomainError(f"|y'| = {math.sqrt(q):.4g} outside graph radius {p.graph_radius:.4g}")
        R = self.radius
        return q / (R + math.sqrt(R * R - q))

    def translated(self, shift):
        return Ball(self.radius, tuple(self._c + np.asarray(shift, dtype=float)))

    def to_dict(self):
        return {"kind": self.kind, "radius": self.radius, "center": list(self.center), "dim": self.dim}


@dataclass(frozen=True)
class Ellipse(SetShape):
    """Planar ellipse with semi-axes a (along the rotated x-axis) and b."""

    a: float = 2.0
    b: float = 1.0
    center: tuple = (0.0, 0.0)
    angle: float = 0.0
    kind = "ellipse"
    dim = 2

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise GeometryDomainError("ellipse semi-axes must be positive")
        c = tuple(float(v) for v in self.center)
        if len(c) != 2:
            raise GeometryDomainError("ellipses live in the plane")
        object.__setattr__(self, "center", c)

    @property
    def _rot(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def _local(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.asarray(self.center)) @ self._rot

    def level(self, x):
        X = self._local(x)
        return 1.0 - (X[..., 0] / self.a) ** 2 - (X[..., 1] / self.b) ** 2

    def point_at(self, theta: float) -> np.ndarray:
        return np.asarray(self.center) + self._rot @ np.array([self.a * math.cos(theta), self.b * math.sin(theta)])

    def boundary_point(self, param=None, label: str = "") -> BoundaryPoint:
        """``param`` is the parametric angle theta of (a cos theta, b sin theta)."""
        theta = 0.0 if param is None else float(param)
        pos = self.point_at(theta)
        inward = -(self._rot @ np.array([self.b * math.cos(theta), self.a * math.sin(theta)]))
        return BoundaryPoint(pos, normal_frame(inward), 0.5 * min(self.a, self.b), label, theta)

    def curvature_at(self, theta: float) -> float:
        a, b = self.a, self.b
        return a * b / (a * a * math.sin(theta) ** 2 + b * b * math.cos(theta) ** 2) ** 1.5

    def mean_curvature(self, p):
        theta = p.param if isinstance(p.param, float) else self._theta_of(p.position)
        return self.curvature_at(theta)

    def _theta_of(self, y) -> float:
        X = self._local(y)
        return math.atan2(X[1] / self.b, X[0] / self.a)

    def _trig_coefficients(self, x, rho, on_boundary=False):
        X0, Y0 = self._local(x)
        ia, ib = 1.0 / self.a**2, 1.0 / self.b**2
        offset = 0.0 if on_boundary else X0 * X0 * ia + Y0 * Y0 * ib - 1.0
        a0 = offset + 0.5 * rho * rho * (ia + ib)
        a1 = 2.0 * rho * X0 * ia
        b1 = 2.0 * rho * Y0 * ib
        a2 = 0.5 * rho * rho * (ia - ib)
        return a0, a1, b1, a2

    def sphere_fraction(self, x, rho, on_boundary=False):
        # On the circle x + rho e_theta (ellipse frame), q(theta) < 0 inside with
        # q = a0 + a1 cos + b1 sin + a2 cos 2theta; z = e^{i theta} turns q = 0 into a quartic.
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        shp = rho.shape
        rho = rho.ravel()
        a0, a1, b1, a2 = self._trig_coefficients(x, rho, on_boundary)
        n = rho.size
        coef = np.stack((a2 / 2, (a1 - 1j * b1) / 2, a0 + 0j, (a1 + 1j * b1) / 2, a2 / 2 + 0j), axis=1)
        scale = np.abs(coef).max(axis=1)
        scale[scale == 0] = 1.0
        coef = coef / scale[:, None]
        roots = np.full((n, 4), np.nan + 0j)
        quartic = np.abs(coef[:, 0]) > 1e-13
        if np.any(quartic):
            c = coef[quartic]
            comp = np.zeros((c.shape[0], 4, 4), dtype=complex)
            comp[:, 0, :] = -c[:, 1:] / c[:, :1]
            comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
            roots[quartic] = np.linalg.eigvals(comp)
        if np.any(~quartic):
            # circle: z (c3 z^2 + c2 z + c1) = 0
            c = coef[~quartic]
            disc = np.sqrt(c[:, 2] ** 2 - 4 * c[:, 1] * c[:, 3] + 0j)
            with np.errstate(divide="ignore", invalid="ignore"):
                r1 = (-c[:, 2] + disc) / (2 * c[:, 1])
                r2 = (-c[:, 2] - disc) / (2 * c[:, 1])
            roots[~quartic, 0] = r1
            roots[~quartic, 1] = r2
        on_circle = np.abs(np.abs(roots) - 1.0) < 1e-6
        ang = np.where(on_circle, np.angle(roots), np.nan)

        def q(th):
            return (a0[:, None] + a1[:, None] * np.cos(th) + b1[:, None] * np.sin(th)
                    + a2[:, None] * np.cos(2 * th))

        def dq(th):
            return -a1[:, None] * np.sin(th) + b1[:, None] * np.cos(th) - 2 * a2[:, None] * np.sin(2 * th)

        # Newton polish; skipped where the root is (nearly) double
        for _ in range(2):
            with np.errstate(divide="ignore", invalid="ignore"):
                step = q(ang) / dq(ang)
            ok = np.isfinite(step) & (np.abs(step) < 1e-6)
            ang = np.where(ok, ang - step, ang)
        ang = np.mod(ang, 2 * np.pi)
        ang = np.sort(np.where(np.isnan(ang), np.inf, ang), axis=1)
        cnt = np.isfinite(ang).sum(axis=1)
        inside = np.zeros(n)
        first = ang[:, 0]
        for j in range(4):
            start = ang[:, j]
            nxt = ang[:, j + 1] if j < 3 else np.full(n, np.inf)
            last = j == cnt - 1
            end = np.where(last, first + 2 * np.pi, nxt)
            valid = j < cnt
            start = np.where(valid, start, 0.0)
            end = np.where(valid, end, 0.0)
            mid = 0.5 * (start + end)
            arc = end - start
            inside += np.where(valid & (q(mid[:, None])[:, 0] < 0), arc, 0.0)
        none = cnt == 0
        if np.any(none):
            inside[none] = np.where(q(np.zeros((n, 1)))[none, 0] < 0, 2 * np.pi, 0.0)
        return (inside / (2 * np.pi)).reshape(shp)

    def _stationary_thetas(self, x) -> np.ndarray:
        X0, Y0 = self._local(x)
        a, b = self.a, self.b

        def g(th):
            return 0.5 * (b * b - a * a) * np.sin(2 * th) + a * X0 * np.sin(th) - b * Y0 * np.cos(th)

        th = np.linspace(0.0, 2 * np.pi, 2049)
        v = g(th)
        idx = np.flatnonzero(np.sign(v[:-1]) != np.sign(v[1:]))
        if len(idx) == 0:
            return np.array([0.0])
        return _bisect_brackets(g, th[idx], th[idx + 1])

    def critical_radii(self, x):
        th = self._stationary_thetas(x)
        X0, Y0 = self._local(x)
        dist = np.hypot(self.a * np.cos(th) - X0, self.b * np.sin(th) - Y0)
        return sorted(set(float(d) for d in dist))

    def outer_radius(self, x):
        return max(self.critical_radii(x))

    def bounding_ball(self):
        return np.asarray(self.center), max(self.a, self.b)

    @property
    def volume(self) -> float:
        return math.pi * self.a * self.b

    def translated(self, shift):
        return Ellipse(self.a, self.b, tuple(np.asarray(self.center) + np.asarray(shift, dtype=float)), self.angle)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "center": list(self.center), "angle": self.angle, "dim": 2}


@dataclass(frozen=True)
class GraphSet(SetShape):
    """Supergraph E = {x : x_N > gamma(x')} of a function on R^{N-1}.

    ``gamma`` is vectorised over the leading axes of an (..., N-1) array.
    ``grad`` and ``hess`` are optional; without them curvature falls back to
    finite differences of the local graph.
    """

    gamma: Callable = field(compare=False)
    dim: int = 2
    grad: Callable | None = field(default=None, compare=False)
    hess: Callable | None = field(default=None, compare=False)
    radius: float = 1.0
    spec: dict = field(default_factory=dict, compare=False)
    kind = "graph"

    @classmethod
    def power(cls, beta: float, coef: float = 1.0, dim: int = 2, radius: float = 1.0) -> GraphSet:
        """gamma(y') = coef |y'|^{1+beta}: C^{1,beta} at the origin."""
        if not 0.0 < beta <= 1.0:
            raise GeometryDomainError(f"beta must lie in (0, 1], got {beta}")
        p = 1.0 + beta

        def gamma(y):
            return coef * np.linalg.norm(np.asarray(y, dtype=float), axis=-1) ** p

        def grad(y):
            y = np.asarray(y, dtype=float)
            r = np.linalg.norm(y)
            return np.zeros_like(y) if r == 0 else coef * p * r ** (p - 2) * y

        spec = {"kind": "graph", "beta": beta, "coef": coef, "dim": dim, "radius": radius}
        return cls(gamma, dim, grad, None, radius, spec)

    def level(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., -1] - self.gamma(x[..., :-1])

    def boundary_point(self, param=None, label: str = "") -> BoundaryPoint:
        yp = np.zeros(self.dim - 1) if param is None else np.atleast_1d(np.asarray(param, dtype=float))
        pos = np.append(yp, float(self.gamma(yp)))
        g = self.grad(yp) if self.grad is not None else _numeric_grad(self.gamma, yp)
        normal = np.append(-np.asarray(g, dtype=float), 1.0)
        return BoundaryPoint(pos, normal_frame(normal), self.radius, label, param)

    def sphere_fraction(self, x, rho, on_boundary=False):
        if self.dim != 2:
            raise GeometryDomainError("graph-set sphere fractions are implemented for N = 2")
        return angular_fraction(self.level, x, rho)

    def critical_radii(self, x):
        return [abs(float(self.level(x)))]

    def mean_curvature(self, p):
        if self.hess is None:
            return mean_curvature_fd(self, p)
        yp = p.position[:-1]
        g = np.asarray(self.grad(yp), dtype=float)
        h = np.atleast_2d(self.hess(yp))
        w = 1.0 + g @ g
        return float((np.trace(h) * w - g @ h @ g) / (w**1.5 * (self.dim - 1)))

    def translated(self, shift):
        shift = np.asarray(shift, dtype=float)
        gam, grd = self.gamma, self.grad
        sp, sn = shift[:-1], shift[-1]
        return GraphSet(
            lambda y: gam(np.asarray(y) - sp) + sn, self.dim,
            None if grd is None else (lambda y: grd(np.asarray(y) - sp)),
            None, self.radius, dict(self.spec, shift=list(shift)),
        )

    def to_dict(self):
        return dict(self.spec)


def _numeric_grad(fn, y, h: float = 1e-6) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    g = np.zeros_like(y)
    for i in range(y.size):
        e = np.zeros_like(y)
        e[i] = h
        g[i] = (float(fn(y + e)) - float(fn(y - e))) / (2 * h)
    return g


# ---------------------------------------------------------------------------


def shape_from_dict(cfg: dict) -> SetShape:
    """Build a shape from a JSON-style descriptor."""
    cfg = dict(cfg)
    kind = str(cfg.pop("kind", "")).lower()
    dim = int(cfg.pop("dim", 2))
    try:
        if kind == "ball":
            center = cfg.pop("center", [0.0] * dim)
            return Ball(float(cfg.pop("radius", 1.0)), tuple(center))
        if kind == "ellipse":
            if dim != 2:
                raise GeometryDomainError("ellipse needs dim = 2")
            return Ellipse(float(cfg.pop("a")), float(cfg.pop("b")), tuple(cfg.pop("center", (0.0, 0.0))),
                           float(cfg.pop("angle", 0.0)))
        if kind in ("halfspace", "half-space"):
            normal = cfg.pop("normal", [0.0] * (dim - 1) + [1.0])
            return HalfSpace(tuple(normal), float(cfg.pop("offset", 0.0)))
        if kind == "graph":
            return GraphSet.power(float(cfg.pop("beta")), float(cfg.pop("coef", 1.0)), dim,
                                  float(cfg.pop("radius", 1.0)))
    except KeyError as exc:
        raise GeometryDomainError(f"shape {kind!r} is missing field {exc}") from None
    raise GeometryDomainError(f"unknown shape kind {kind!r}")


def tau(shape: SetShape, x):
    return shape.tau(x)


def orientation_sign(shape: SetShape, p: BoundaryPoint, delta: float = 1e-6) -> int:
    """tau at p + delta nu: +1 when nu points into E."""
    return int(shape.tau(p.position + delta * p.normal))


def local_graph(shape: SetShape, p: BoundaryPoint, y_prime) -> float:
    return shape.local_graph(p, y_prime)


def mean_curvature_fd(shape: SetShape, p: BoundaryPoint, step: float | None = None) -> float:
    """Delta gamma(0) / (N-1) from central second differences of the local graph."""
    n = shape.dim
    h = step if step is not None else min(1e-3, 0.1 * p.graph_radius)
    lap = 0.0
    g0 = shape.local_graph(p, np.zeros(n - 1))
    for i in range(n - 1):
        e = np.zeros(n - 1)
        e[i] = h
        lap += (shape.local_graph(p, e) - 2 * g0 + shape.local_graph(p, -e)) / (h * h)
    return lap / (n - 1)


def mean_curvature(shape: SetShape, p: BoundaryPoint) -> float:
    """Normalised mean curvature Delta gamma(0) / (N-1); 1/R on a ball."""
    return shape.mean_curvature(p)


def _length_scale(shape: SetShape, p: BoundaryPoint) -> float:
    return min(p.graph_radius, 1.0) if math.isfinite(p.graph_radius) else 1.0


def fractional_mean_curvature(shape: SetShape, p: BoundaryPoint, s: float, tol: float = 1e-8) -> float:
    """Principal value of int tau_E(y) |p - y|^{-N-2s} dy.

    Integrating over spheres about p turns the integral into

        |S^{N-1}| int_0^inf rho^{-1-2s} (2 f(rho) - 1) drho,

    where the flat part of E near p cancels against its reflection, so the
    integrand is O(rho^{-2s}) at the origin and the PV limit is absolutely
    convergent. Beyond the outer radius the sphere lies outside E and the
    tail is closed-form.
    """
    if not 0.0 < s < 0.5:
        raise GeometryDomainError(f"the principal value is used for s in (0, 1/2), got {s}")
    if isinstance(shape, HalfSpace):
        return 0.0
    n = shape.dim
    area = sphere_area(n)
    x = p.position
    L = _length_scale(shape, p)
    rho_min = 1e-9 * L
    rho_out = shape.outer_radius(x)
    unbounded = not math.isfinite(rho_out)
    rho_end = 1e8 * L if unbounded else rho_out
    geo = rho_min * 2.0 ** np.arange(0, int(math.log2(rho_end / rho_min)) + 1)
    crit = [r for r in shape.critical_radii(x) if rho_min < r < rho_end]
    edges = np.unique(np.concatenate(([rho_min], geo[geo < rho_end], crit, [rho_end])))
    flagged = np.array([
        any(abs(lo - c) <= 1e-12 * c or abs(hi - c) <= 1e-12 * c for c in crit + [rho_end])
        for lo, hi in zip(edges[:-1], edges[1:])
    ])

    def g(r):
        return r ** (-1 - 2 * s) * (2 * shape.sphere_fraction(x, r, on_boundary=True) - 1)

    scale = L ** (-2 * s)
    try:
        body = integrate(g, edges, flagged, atol=tol * scale, rtol=tol)
    except QuadratureFailure as exc:
        raise QuadratureFailure(exc.estimate * area, exc.error * area,
                                f"fractional curvature did not converge (estimate {area * exc.estimate:.6g})") from None
    # inner piece: 2f - 1 ~ A rho near the point
    slope = float(2 * shape.sphere_fraction(x, np.array([rho_min]), on_boundary=True)[0] - 1) / rho_min
    inner = slope * rho_min ** (1 - 2 * s) / (1 - 2 * s)
    if unbounded:
        far = float(2 * shape.sphere_fraction(x, np.array([rho_end]))[0] - 1)
    else:
        far = -1.0
    tail = far * rho_end ** (-2 * s) / (2 * s)
    return area * (body.value + inner + tail)
