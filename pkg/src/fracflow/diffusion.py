"""u = K_s(., sigma) * tau_E by direct quadrature and on a periodic FFT grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import integrate as sintegrate
from scipy.interpolate import RegularGridInterpolator

from .geometry import BoundaryPoint, GraphSet, SetShape, angular_fraction
from .kernels import Family, KernelSpec, sphere_area
from .quadrature import QuadratureFailure, integrate

FIELD_HEADER = "fracflow-field v1"


class GridTooSmall(ValueError):
    def __init__(self, message: str, required_extent: float):
        self.required_extent = required_extent
        super().__init__(message)


class UnderResolved(ValueError):
    pass


@dataclass(frozen=True)
class ConvolutionRequest:
    kernel: KernelSpec
    shape: SetShape
    sigma: float
    x: tuple
    tol: float = 1e-8

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 1e-12 < self.tol < 1e-2:
            raise ValueError(f"tol must lie in (1e-12, 1e-2), got {self.tol}")
        x = tuple(float(v) for v in np.ravel(self.x))
        if len(x) != self.kernel.dim or self.shape.dim != self.kernel.dim:
            raise ValueError("point, shape and kernel dimensions differ")
        object.__setattr__(self, "x", x)


def kernel_tail_mass(kernel: KernelSpec, sigma: float, radius: float) -> float:
    """Leading-order mass of K_s(., sigma) outside the ball of ``radius``."""
    s, n = kernel.s, kernel.dim
    return sphere_area(n) * kernel.limit_constant * sigma * radius ** (-2 * s) / (2 * s)


def _radial_edges(ell: float, rho_end: float, crit) -> tuple[np.ndarray, np.ndarray]:
    kmax = max(1, int(math.ceil(math.log2(rho_end / ell))) + 1)
    geo = ell * 2.0 ** np.arange(-8, kmax)
    crit = [c for c in crit if 0 < c < rho_end]
    edges = np.unique(np.concatenate(([0.0], geo[geo < rho_end], crit, [rho_end])))
    marks = np.array(crit + [rho_end])
    lo, hi = edges[:-1], edges[1:]
    near = lambda v: np.any(np.abs(v[:, None] - marks[None, :]) <= 1e-12 * marks[None, :], axis=1)
    return edges, near(lo) | near(hi)


def u_direct(req: ConvolutionRequest) -> float:
    """Pointwise convolution of the kernel with the signed indicator.

    Writing the integral over spheres about x,

        u(x) = |S^{N-1}| int_0^inf K(rho) rho^{N-1} (2 f(rho) - 1) drho,

    with f the sphere fraction of the shape. For bounded shapes the unit
    mass turns this into ``2 |S| int_0^{rho_out} K rho^{N-1} f - 1``, which
    has no tail. The radial integral is split at the kernel scale (dyadic
    panels) and at the radii where f has square-root kinks.
    ``req.tol`` bounds the absolute error in u.
    """
    K, E, sig = req.kernel, req.shape, req.sigma
    x = np.asarray(req.x)
    n = K.dim
    area = sphere_area(n)
    ell = K.length_scale(sig)
    rho_out = E.outer_radius(x)
    bounded = math.isfinite(rho_out)
    crit = E.critical_radii(x)
    rho_end = rho_out if bounded else ell * 2.0**70
    edges, flags = _radial_edges(ell, rho_end, crit)
    if bounded:
        fn = lambda r: K.radial(r, sig) * r ** (n - 1) * E.sphere_fraction(x, r)
        scale = 2 * area
    else:
        fn = lambda r: K.radial(r, sig) * r ** (n - 1) * (2 * E.sphere_fraction(x, r) - 1)
        scale = area
    try:
        res = integrate(fn, edges, flags, atol=req.tol / scale, rtol=1e-15)
    except QuadratureFailure as exc:
        raise QuadratureFailure(scale * exc.estimate - bounded, scale * exc.error,
                                f"u_direct did not reach tol {req.tol:g} at x={tuple(x)}") from None
    if bounded:
        return scale * res.value - 1.0
    far = float(2 * E.sphere_fraction(x, np.array([rho_end]))[0] - 1)
    return scale * res.value + far * kernel_tail_mass(K, sig, rho_end)


def convolve_point(kernel: KernelSpec, shape: SetShape, sigma: float, x, tol: float = 1e-8) -> float:
    return u_direct(ConvolutionRequest(kernel, shape, sigma, tuple(np.ravel(x)), tol))


def radial_oracle_center(kernel: KernelSpec, radius: float, sigma: float) -> float:
    """u at the centre of a ball: 2 |S| int_0^R K rho^{N-1} - 1 (scipy quad)."""
    n = kernel.dim
    ell = kernel.length_scale(sigma)
    pts = [ell * 2.0**k for k in range(-4, 60) if ell * 2.0**k < radius]
    f = lambda r: float(kernel.radial(np.array(r), sigma)) * r ** (n - 1)
    val = 0.0
    edges = [0.0] + pts + [radius]
    for a, b in zip(edges[:-1], edges[1:]):
        val += sintegrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    return 2 * sphere_area(n) * val - 1.0


# ---------------------------------------------------------------------------
# grid fields
# ---------------------------------------------------------------------------


@dataclass
class GridField:
    """Samples on the cell centres of the periodic box centre + [-L/2, L/2)^N.

    Attributes
    ----------
    values : ndarray
        Array of shape (n,) * N.
    extent : float
        Box side L; the spacing is L / n.
    center : tuple
        Box centre.
    meta : dict
        Free-form metadata (s, sigma, family, error estimates, ...).
    """

    values: np.ndarray
    extent: float
    center: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim < 2 or len(set(v.shape)) != 1:
            raise ValueError(f"grid must be square with N >= 2 axes, got shape {v.shape}")
        n = v.shape[0]
        if n & (n - 1):
            raise ValueError(f"points per axis must be a power of two, got {n}")
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        if not self.center:
            self.center = (0.0,) * v.ndim
        self.center = tuple(float(c) for c in self.center)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def spacing(self) -> float:
        return self.extent / self.n

    def axis(self, i: int = 0) -> np.ndarray:
        h = self.spacing
        return self.center[i] - 0.5 * self.extent + (np.arange(self.n) + 0.5) * h

    def points(self) -> np.ndarray:
        grids = np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")
        return np.stack(grids, axis=-1)

    def index_of(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        h = self.spacing
        idx = np.floor((x - np.asarray(self.center) + 0.5 * self.extent) / h).astype(int)
        return tuple(int(i) % self.n for i in idx)

    def measure_positive(self) -> float:
        return float(np.count_nonzero(self.values > 0)) * self.spacing**self.dim

    def interpolate(self, x) -> np.ndarray:
        """Periodic multilinear interpolation at points x (..., N)."""
        x = np.asarray(x, dtype=float)
        h = self.spacing
        u = (x - np.asarray(self.center) + 0.5 * self.extent) / h - 0.5
        i0 = np.floor(u).astype(int)
        w = u - i0
        out = np.zeros(x.shape[:-1])
        for corner in range(2**self.dim):
            bits = [(corner >> d) & 1 for d in range(self.dim)]
            idx = tuple((i0[..., d] + bits[d]) % self.n for d in range(self.dim))
            wt = np.prod([np.where(bits[d], w[..., d], 1 - w[..., d]) for d in range(self.dim)], axis=0)
            out += wt * self.values[idx]
        return out

    # -- text formats ------------------------------------------------------

    def to_text(self) -> str:
        meta = " ".join(f"{k}={v}" for k, v in sorted(self.meta.items()) if np.isscalar(v))
        head = [
            FIELD_HEADER,
            f"dim={self.dim} n={self.n} extent={self.extent!r} center={','.join(repr(c) for c in self.center)}",
            f"meta {meta}".rstrip(),
        ]
        flat = np.asarray(self.values, dtype=float).ravel(order="C")
        body = "\n".join(" ".join(f"{v:.12g}" for v in row) for row in flat.reshape(-1, self.n))
        return "\n".join(head) + "\n" + body + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii")

    @classmethod
    def from_text(cls, text: str) -> GridField:
        lines = text.splitlines()
        if not lines or lines[0].strip() != FIELD_HEADER:
            raise ValueError(f"missing {FIELD_HEADER!r} header")
        kv = dict(tok.split("=", 1) for tok in lines[1].split())
        dim, n = int(kv["dim"]), int(kv["n"])
        center = tuple(float(c) for c in kv["center"].split(","))
        meta = {}
        for tok in lines[2].split()[1:]:
            k, v = tok.split("=", 1)
            try:
                meta[k] = float(v)
            except ValueError:
                meta[k] = v
        data = np.array(" ".join(lines[3:]).split(), dtype=float)
        return cls(data.reshape((n,) * dim), float(kv["extent"]), center, meta)

    @classmethod
    def load(cls, path) -> GridField:
        return cls.from_text(Path(path).read_text(encoding="ascii"))

    def csv_slice(self, axis: int = 1, index: int | None = None) -> str:
        """x,y,value rows of a 2-D slice (the field itself when N = 2)."""
        v = self.values
        if self.dim > 2:
            index = self.n // 2 if index is None else index
            v = np.take(v, index, axis=axis)
        a0, a1 = self.axis(0), self.axis(1)
        rows = ["x,y,value"]
        for i, xv in enumerate(a0):
            rows.extend(f"{xv:.10g},{yv:.10g},{v[i, j]:.12g}" for j, yv in enumerate(a1))
        return "\n".join(rows) + "\n"


def default_extent(shape: SetShape) -> float:
    """Smallest box side leaving a margin of L/4 around the shape's bounding ball."""
    bb = shape.bounding_ball()
    if bb is None:
        return 4.0
    c, r = bb
    return 4.0 * (r + float(np.abs(c).max()))


def sample_shape(shape: SetShape, n: int, extent: float | None = None, center=None) -> GridField:
    """tau_E at cell centres; exact zeros (boundary hits) count as outside."""
    L = default_extent(shape) if extent is None else float(extent)
    c = tuple(np.zeros(shape.dim)) if center is None else tuple(center)
    bb = shape.bounding_ball()
    if bb is not None:
        bc, br = bb
        margin = 0.5 * L - (np.abs(np.asarray(bc) - np.asarray(c)).max() + br)
        if margin < 0.25 * L - 1e-12:
            raise GridTooSmall(
                f"box side {L:g} leaves margin {margin:.4g} < L/4 around the shape",
                default_extent(shape),
            )
    f = GridField(np.zeros((n,) * shape.dim), L, c)
    tau = np.where(shape.level(f.points()) > 0, 1.0, -1.0)
    return GridField(tau, L, c, {"kind": shape.kind})


def wavenumbers(n: int, extent: float, dim: int) -> np.ndarray:
    """|xi| on the rfftn layout of an n^dim grid."""
    k_full = 2 * np.pi * sfft.fftfreq(n, d=extent / n)
    k_half = 2 * np.pi * sfft.rfftfreq(n, d=extent / n)
    axes = [k_full] * (dim - 1) + [k_half]
    grids = np.meshgrid(*axes, indexing="ij", sparse=True)
    return np.sqrt(sum(g * g for g in grids))


@lru_cache(maxsize=8)
def _lattice_zeta(dim: int, s: float, m_max: int = 64) -> float:
    """sum over nonzero integer vectors of |m|^{-N-2s} (direct sum + integral tail)."""
    r = np.arange(-m_max, m_max + 1, dtype=float)
    grids = np.meshgrid(*([r] * dim), indexing="ij", sparse=True)
    d2 = sum(g * g for g in grids)
    with np.errstate(divide="ignore"):
        terms = np.where(d2 > 0, d2 ** (-(dim + 2 * s) / 2), 0.0)
    return float(terms.sum()) + _cube_exterior_integral(dim, s, m_max + 0.5)


def _cube_exterior_integral(dim: int, s: float, a: float) -> float:
    """int over |y|_inf > a of |y|^{-N-2s} dy."""
    if dim == 2:
        val = sintegrate.quad(lambda th: max(abs(math.cos(th)), abs(math.sin(th))) ** (2 * s), 0, math.pi / 4)[0]
        return 8 * val * a ** (-2 * s) / (2 * s)
    if dim == 3:
        def f(phi, th):
            w = (math.sin(th) * math.cos(phi), math.sin(th) * math.sin(phi), math.cos(th))
            return max(abs(c) for c in w) ** (2 * s) * math.sin(th)

        val = sintegrate.dblquad(f, 0, math.pi, 0, 2 * math.pi, epsabs=1e-10)[0]
        return val * a ** (-2 * s) / (2 * s)
    raise ValueError("lattice tails implemented for N = 2, 3")


def image_estimate(kernel: KernelSpec, sigma: float, extent: float, volume: float) -> float:
    """Leading-order shift of u from the periodic images of a set of given volume."""
    n, s = kernel.dim, kernel.s
    return 2 * volume * kernel.limit_constant * sigma * _lattice_zeta(n, s) * extent ** (-n - 2 * s)


def required_extent(kernel: KernelSpec, sigma: float, volume: float, tol: float) -> float:
    n, s = kernel.dim, kernel.s
    return (2 * volume * kernel.limit_constant * sigma * _lattice_zeta(n, s) / tol) ** (1 / (n + 2 * s))


def image_kernel(kernel: KernelSpec, sigma: float, extent: float, n: int, dim: int,
                 coarse: int = 33, m_max: int = 48) -> np.ndarray:
    """Sum over nonzero lattice shifts of K(w - m L, sigma) on the fine displacement grid.

    Evaluated exactly for |m|_inf <= m_max on a coarse grid of displacements
    w in [-L/2, L/2]^N, plus a leading-order integral for the remaining
    shells, then interpolated (the sum is smooth in w) onto the fft layout.
    """
    L = extent
    w1 = np.linspace(-0.5 * L, 0.5 * L, coarse)
    W = np.stack(np.meshgrid(*([w1] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    shifts = np.arange(-m_max, m_max + 1)
    M = np.stack(np.meshgrid(*([shifts] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    M = M[np.any(M != 0, axis=1)] * L
    total = np.zeros(len(W))
    for chunk in np.array_split(M, max(1, len(M) // 2048)):
        r = np.linalg.norm(W[:, None, :] - chunk[None, :, :], axis=-1)
        total += kernel.radial(r, sigma).sum(axis=1)
    total += kernel.limit_constant * sigma * _cube_exterior_integral(dim, kernel.s, (m_max + 0.5) * L) / L**dim
    coarse_vals = total.reshape((coarse,) * dim)
    interp = RegularGridInterpolator([w1] * dim, coarse_vals, method="cubic")
    k = np.arange(n)
    w_fine = np.where(k < n // 2, k, k - n) * (L / n)
    Wf = np.stack(np.meshgrid(*([w_fine] * dim), indexing="ij"), axis=-1)
    return interp(Wf.reshape(-1, dim)).reshape((n,) * dim)


class GridConvolver:
    """Reusable spectral convolution for one (kernel, sigma, grid) triple.

    Parameters
    ----------
    mode : {"periodic", "free"}
        "periodic" convolves on the torus. "free" additionally subtracts the
        contribution of the periodic images of E, approximating the whole-space
        convolution with tau = -1 outside the box. The correction is exact
        (up to the image-kernel interpolation) wherever every x - y with y in
        E lies in [-L/2, L/2]^N, which the L/4 margin guarantees on the
        central half of the box.
    """

    def __init__(self, kernel: KernelSpec, sigma: float, n: int, extent: float, dim: int = 2,
                 mode: str = "periodic", workers: int | None = None):
        if mode not in ("periodic", "free"):
            raise ValueError(f"unknown grid mode {mode!r}")
        self.kernel, self.sigma, self.n, self.extent, self.dim, self.mode = kernel, sigma, n, extent, dim, mode
        self.workers = workers
        self.multiplier = kernel.multiplier(wavenumbers(n, extent, dim), sigma)
        self.image_hat = None
        if mode == "free":
            g = image_kernel(kernel, sigma, extent, n, dim)
            h = extent / n
            self.image_hat = sfft.rfftn(g, workers=workers) * h**dim
            self.image_center = float(g.flat[0])

    def __call__(self, tau: np.ndarray) -> np.ndarray:
        t_hat = sfft.rfftn(tau, workers=self.workers)
        u_hat = self.multiplier * t_hat
        if self.image_hat is not None:
            ones = np.zeros_like(t_hat)
            ones.flat[0] = tau.size
            u_hat = u_hat - self.image_hat * (t_hat + ones)
        return sfft.irfftn(u_hat, s=tau.shape, workers=self.workers)


def u_grid(field_: GridField, kernel: KernelSpec, sigma: float, mode: str = "periodic",
           wrap_tol: float | None = 1e-3, workers: int | None = None) -> GridField:
    """Spectral convolution of a grid field with K_s(., sigma).

    In periodic mode the shift of u caused by the periodic images of the
    positive set is estimated from the kernel's far field; above ``wrap_tol``
    the call is refused with the box side that would meet it. Pass
    ``wrap_tol=None`` for fields that are not a bounded set in the box.
    """
    if field_.dim != kernel.dim:
        raise ValueError("field and kernel dimensions differ")
    volume = field_.measure_positive()
    est = image_estimate(kernel, sigma, field_.extent, volume)
    if mode == "periodic" and wrap_tol is not None and est > wrap_tol:
        need = required_extent(kernel, sigma, volume, wrap_tol)
        raise GridTooSmall(
            f"periodic images shift u by ~{est:.2e} > {wrap_tol:g}; need box side >= {need:.3g} "
            f"(or mode='free')", need)
    conv = GridConvolver(kernel, sigma, field_.n, field_.extent, field_.dim, mode, workers)
    u = conv(np.asarray(field_.values, dtype=float))
    meta = dict(field_.meta, s=kernel.s, sigma=sigma, family=kernel.tag, mode=mode,
                image_estimate=est if mode == "periodic" else 0.0,
                image_correction=2 * volume * conv.image_center if mode == "free" else 0.0)
    return GridField(u, field_.extent, field_.center, meta)


def grid_gradient_bound(u: GridField) -> float:
    """max |grad u| from centred periodic differences."""
    h = u.spacing
    g2 = np.zeros_like(u.values)
    for ax in range(u.dim):
        d = (np.roll(u.values, -1, axis=ax) - np.roll(u.values, 1, axis=ax)) / (2 * h)
        g2 += d * d
    return float(np.sqrt(g2.max()))


# ---------------------------------------------------------------------------
# monotonicity along the normal
# ---------------------------------------------------------------------------

PROBE_PATTERN = np.array([
    (0.0, 0.0), (0.0, 0.5), (0.0, -0.5), (0.0, 0.9), (0.0, -0.9),
    (0.5, 0.0), (-0.5, 0.0), (0.6, 0.6), (-0.6, 0.6), (0.6, -0.6), (-0.6, -0.6),
])


def directional_derivative(kernel: KernelSpec, shape: SetShape, sigma: float, z, direction,
                           step: float | None = None, tol: float = 1e-11) -> float:
    """Fourth-order central difference of u_direct along ``direction``."""
    ell = kernel.length_scale(sigma)
    eta = 0.05 * ell if step is None else step
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    z = np.asarray(z, dtype=float)
    u = lambda a: convolve_point(kernel, shape, sigma, z + a * d, tol)
    return (8 * (u(eta) - u(-eta)) - (u(2 * eta) - u(-2 * eta))) / (12 * eta)


@dataclass(frozen=True)
class NormalDerivativeReport:
    """Slopes at the probes; ``noise`` bounds the error of min_scaled from tol and point rounding."""

    sigma: float
    ell: float
    slopes: tuple
    min_slope: float
    min_scaled: float
    passed: bool
    noise: float = 0.0


def normal_derivative_check(shape: SetShape, kernel: KernelSpec, sigma: float, p: BoundaryPoint,
                            probes=None, tol: float = 1e-11) -> NormalDerivativeReport:
    """Slope of u along nu at probes z in B(p, ell), ell = sigma^{1/(2s)}.

    ``probes`` are (tangential, normal) offsets in units of ell, inside the
    unit disc (N = 2) or the unit ball of the frame (first tangent only).
    """
    ell = kernel.length_scale(sigma)
    if ell >= p.graph_radius / 8:
        raise ValueError(f"kernel scale {ell:.3g} not below graph radius / 8 = {p.graph_radius / 8:.3g}")
    pattern = PROBE_PATTERN if probes is None else np.asarray(probes, dtype=float)
    slopes, zmax = [], 0.0
    for a, b in pattern:
        off = np.zeros(shape.dim)
        off[0], off[-1] = a, b
        z = p.from_frame(ell * off)
        zmax = max(zmax, float(np.abs(z).max()))
        slopes.append(directional_derivative(kernel, shape, sigma, z, p.normal, tol=tol))
    slopes = tuple(float(v) for v in slopes)
    m = min(slopes)
    # the difference quotient weights its four values by 18 / (12 eta); each value carries
    # the quadrature tol plus the shift from rounding z, |grad u| * eps * |z|
    eta = 0.05 * ell
    eps = np.finfo(float).eps
    noise = 1.5 * (tol + abs(m) * eps * zmax) / eta * ell
    return NormalDerivativeReport(sigma, ell, slopes, m, m * ell, bool(m > 0), noise)


def monotone_ladder(reports) -> bool:
    """min slope * ell non-decreasing as sigma decreases (reports in any order).

    Consecutive values are compared at the resolution of the difference
    quotients: a drop smaller than the two reports' noise bounds is a tie.
    """
    rs = sorted(reports, key=lambda r: -r.sigma)
    steps = zip(rs[:-1], rs[1:])
    return all(r.passed for r in rs) and all(b.min_scaled >= a.min_scaled - (a.noise + b.noise) for a, b in steps)


def halfspace_normal_slope(kernel: KernelSpec, sigma: float) -> float:
    """2 int_{R^{N-1}} K_s((y', 0), sigma) dy', the slope of u across a flat interface."""
    return 2 * hyperplane_moment(kernel, 0) / kernel.length_scale(sigma)


def hyperplane_moment(kernel: KernelSpec, power: float, radius: float = math.inf) -> float:
    """int over |y'| < radius in R^{N-1} of |y'|^power P_s(|y'|)."""
    n = kernel.dim
    area = 2.0 if n == 2 else sphere_area(n - 1)
    expo = n - 2 + power
    if kernel.family is Family.FRACTIONAL_HEAT:
        tab = kernel.table
        top = min(radius, tab.r_max)
        val = tab.moment(expo, top)
        if radius > tab.r_max:
            val += tab.tail_moment(expo, radius)
        return float(area * val)
    f = lambda r: float(kernel.profile(np.array(r))) * r**expo
    pts = [0.0, 1.0, 10.0, 100.0]
    val = 0.0
    edges = [p for p in pts if p < radius] + [radius]
    for a, b in zip(edges[:-1], edges[1:]):
        val += sintegrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=500)[0]
    return float(area * val)


# ---------------------------------------------------------------------------
# the two pieces of the small-time expansion near a graph point
# ---------------------------------------------------------------------------


def j_integral(kernel: KernelSpec, shape: GraphSet, t: float, r: float, tol: float = 1e-10) -> float:
    """J_r(t) = int over the square Q_r = (-r, r)^2 of K_s(y, t) tau_E(y) dy.

    With the even kernel, the y_2-integral over (-r, r) of K tau equals
    -2 int_0^{gamma(y_1)} K dy_2, leaving a one-dimensional outer integral.
    """
    if shape.dim != 2:
        raise ValueError("J_r is implemented for N = 2")
    ell = kernel.length_scale(t)
    xg, wg = np.polynomial.legendre.leggauss(48)

    def inner(y1):
        flat = y1.ravel()
        g = np.clip(shape.gamma(flat[:, None]), -r, r)
        y2 = 0.5 * g[:, None] * (xg + 1.0)
        rr = np.hypot(flat[:, None], y2)
        return ((kernel.radial(rr, t) @ wg) * 0.5 * g).reshape(y1.shape)

    kmax = int(math.ceil(math.log2(r / ell))) + 1
    geo = ell * 2.0 ** np.arange(-6, kmax)
    half = np.unique(np.concatenate(([0.0], geo[geo < r], [r])))
    edges = np.concatenate((-half[::-1], half[1:]))
    res = integrate(lambda y: -2 * inner(y), edges, atol=tol * t, rtol=tol)
    return res.value


def limit_deficit(kernel: KernelSpec, rho, t: float) -> np.ndarray:
    """t^{-1} K_s(y, t) - C_{N,s} |y|^{-N-2s} at |y| = rho, without cancellation."""
    rho = np.asarray(rho, dtype=float)
    n, s = kernel.dim, kernel.s
    ell = kernel.length_scale(t)
    C = kernel.limit_constant
    lead = C * rho ** (-n - 2 * s)
    if kernel.family is Family.FRACTIONAL_HEAT:
        tab = kernel.table
        q = rho / ell
        far = q > tab.r_max
        out = np.empty_like(rho)
        out[~far] = kernel.radial(rho[~far], t) / t - lead[~far]
        if np.any(far):
            out[far] = tab._series.subleading(q[far]) * ell ** (-n) / t
        return out
    a = (n + 2 * s) / 2 if kernel.family is Family.HARMONIC_EXTENSION else (n + 1) / 2
    # profile p (1 + q^2)^{-a} with q = rho/ell and t^{-1} ell^{-N} ell^{N+2s} = 1
    return lead * np.expm1(-a * np.log1p((ell / rho) ** 2))


def i_integral(kernel: KernelSpec, shape: GraphSet, t: float, r: float, tol: float = 1e-9) -> float:
    """I_r(t) = int outside Q_r of (t^{-1} K_s(y, t) - C |y|^{-N-2s}) tau_E(y) dy (N = 2)."""
    if shape.dim != 2:
        raise ValueError("I_r is implemented for N = 2")
    origin = np.zeros(2)
    cube = lambda y: np.max(np.abs(y), axis=-1) - r
    in_e = lambda y: np.minimum(shape.level(y), cube(y))
    out_e = lambda y: np.minimum(-shape.level(y), cube(y))

    def weight(rho):
        return 2 * np.pi * (angular_fraction(in_e, origin, rho) - angular_fraction(out_e, origin, rho))

    def fn(rho):
        flat = rho.ravel()
        return (limit_deficit(kernel, flat, t) * flat * weight(flat)).reshape(rho.shape)

    edges = np.concatenate(([r, r * math.sqrt(2)], r * 2.0 ** np.arange(1, 40)))
    flags = np.zeros(len(edges) - 1, bool)
    flags[:2] = True
    return integrate(fn, edges, flags, atol=tol, rtol=tol).value
