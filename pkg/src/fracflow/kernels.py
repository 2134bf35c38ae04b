"""Radial kernel families K_s(x, t) = t^{-N/(2s)} P_s(t^{-1/(2s)} |x|).

Three profiles are supported:

* ``FRACTIONAL_HEAT``: the density with Fourier transform exp(-|xi|^{2s}).
  It has no closed form (except s = 1/2), so it is tabulated once per
  (s, N) by a Bessel-weighted radial inversion and interpolated.
* ``EXPLICIT_HALF``: the s = 1/2 closed form C (1 + r^2)^{-(N+1)/2}.
* ``HARMONIC_EXTENSION``: the Poisson kernel of the extension problem,
  p (1 + r^2)^{-(N+2s)/2}.

Fourier convention: hat f(xi) = int f(x) exp(-i x.xi) dx, so that a unit
value at xi = 0 means unit mass.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

log = logging.getLogger(__name__)

TABLE_HEADER = "fracflow-kernel v1"
DEFAULT_R_MAX = 1.0e3
DEFAULT_N_POINTS = 2048
_R_FIRST = 1.0e-4
# exp(-45) ~ 3e-20: integrand cut-off in the Fourier variable
_EXP_CUTOFF = 45.0
_GL_ORDER = 24
_DIRECT_PANELS = 4000
_ACCEL_PANELS = 400


class Family(str, enum.Enum):
    FRACTIONAL_HEAT = "fractional-heat"
    EXPLICIT_HALF = "explicit-half"
    HARMONIC_EXTENSION = "harmonic-extension"

    @classmethod
    def parse(cls, tag: str | Family) -> Family:
        if isinstance(tag, Family):
            return tag
        key = str(tag).strip().lower().replace("_", "-")
        aliases = {
            "fractionalheat": cls.FRACTIONAL_HEAT,
            "heat": cls.FRACTIONAL_HEAT,
            "explicithalf": cls.EXPLICIT_HALF,
            "half": cls.EXPLICIT_HALF,
            "harmonicextension": cls.HARMONIC_EXTENSION,
            "poisson": cls.HARMONIC_EXTENSION,
        }
        for member in cls:
            if key == member.value:
                return member
        if key.replace("-", "") in aliases:
            return aliases[key.replace("-", "")]
        raise ValueError(f"unknown kernel family {tag!r}")


class KernelDomainError(ValueError):
    """Raised for arguments outside a kernel's domain (e.g. t <= 0)."""


class QuadratureError(RuntimeError):
    """Raised when the radial inversion fails to converge at some radius."""

    def __init__(self, radius: float, estimate: float, message: str = ""):
        self.radius = radius
        self.estimate = estimate
        super().__init__(
            f"radial inversion did not converge at r={radius:.6g} "
            f"(error estimate {estimate:.3g}){': ' + message if message else ''}"
        )


def sphere_area(dim: int) -> float:
    """Surface measure |S^{dim-1}| of the unit sphere in R^dim."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def gamma_limit_constant(dim: int, s: float) -> float:
    """s 2^{2s} sin(pi s) Gamma(N/2 + s) Gamma(s) / pi^{1 + N/2}."""
    return (
        s
        * 2.0 ** (2 * s)
        * math.sin(math.pi * s)
        * math.gamma(dim / 2 + s)
        * math.gamma(s)
        / math.pi ** (1 + dim / 2)
    )


def explicit_half_constant(dim: int) -> float:
    """Unit-mass constant of C t / (t^2 + |y|^2)^{(N+1)/2}."""
    return math.gamma((dim + 1) / 2) / math.pi ** ((dim + 1) / 2)


def poisson_constant(dim: int, s: float) -> float:
    """p_{N,s} = 1 / int (1 + |y|^2)^{-(N+2s)/2} dy, by radial quadrature."""
    a = (dim + 2 * s) / 2

    def f(r):
        return r ** (dim - 1) * (1.0 + r * r) ** (-a)

    head, _ = integrate.quad(f, 0.0, 1.0, epsabs=0, epsrel=1e-13)
    # r -> 1/w maps the tail onto (0, 1]
    tail, _ = integrate.quad(
        lambda w: w ** (2 * a - dim - 1) * (1.0 + w * w) ** (-a), 0.0, 1.0, epsabs=0, epsrel=1e-13
    )
    return 1.0 / (sphere_area(dim) * (head + tail))


def poisson_constant_closed_form(dim: int, s: float) -> float:
    return math.gamma(dim / 2 + s) / (math.pi ** (dim / 2) * math.gamma(s))


# ---------------------------------------------------------------------------
# fractional heat profile: series and radial inversion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Series:
    """Large-r expansion sum_j c_j r^{-N-2sj} of the fractional heat profile.

    Convergent for s < 1/2, asymptotic otherwise (truncated at the smallest
    term).
    """

    s: float
    dim: int
    log_abs: np.ndarray
    sign: np.ndarray
    log_env: np.ndarray

    @property
    def asymptotic(self) -> bool:
        return self.s > 0.5

    @classmethod
    def build(cls, s: float, dim: int, jmax: int = 400) -> _Series:
        j = np.arange(1, jmax + 1, dtype=float)
        sin = np.sin(np.pi * s * j)
        with np.errstate(divide="ignore"):
            log_abs = (
                2 * s * j * math.log(2.0)
                - (dim / 2 + 1) * math.log(math.pi)
                + np.log(np.abs(sin))
                + special.gammaln(1 + s * j)
                + special.gammaln(dim / 2 + s * j)
                - special.gammaln(j + 1)
            )
        log_env = log_abs - np.log(np.maximum(np.abs(sin), 1e-300))
        sign = np.where(j % 2 == 1, 1.0, -1.0) * np.sign(sin)
        # sin(pi s j) == 0 up to rounding: drop the term
        dead = np.abs(sin) < 1e-14
        log_abs[dead] = -np.inf
        sign[dead] = 0.0
        return cls(s, dim, log_abs, sign, log_env)

    def __call__(self, r: np.ndarray, start: int = 0) -> np.ndarray:
        """Sum of the terms j >= start + 1 (start=1 drops the C_{N,s} r^{-N-2s} term)."""
        r = np.asarray(r, dtype=float)
        lr = np.log(r)
        total = np.zeros_like(r)
        prev = np.full_like(r, np.inf)
        active = np.ones_like(r, dtype=bool)
        for j in range(len(self.log_abs)):
            expo = self.dim + 2 * self.s * (j + 1)
            with np.errstate(over="ignore"):
                env = np.exp(self.log_env[j] - expo * lr)
            if self.asymptotic:
                # stop each radius at the smallest term of the envelope
                active &= env < prev
                prev = np.where(active, env, prev)
            if self.sign[j] != 0.0 and j >= start:
                with np.errstate(over="ignore"):
                    mag = np.exp(self.log_abs[j] - expo * lr)
                total = total + np.where(active, self.sign[j] * mag, 0.0)
            if not np.any(active & (env > 1e-18 * np.abs(total))):
                break
        return total

    def subleading(self, r: np.ndarray) -> np.ndarray:
        return self(r, start=1)

    def tail_integral(self, r0: float, power: float) -> float:
        """int_{r0}^inf r^power * series(r) dr, termwise (needs power < N - 1 + 2s)."""
        total = 0.0
        lr = math.log(r0)
        prev = math.inf
        for j in range(len(self.log_abs)):
            expo = power - self.dim - 2 * self.s * (j + 1) + 1.0
            if expo >= 0:
                raise ValueError("tail integral diverges")
            env = math.exp(self.log_env[j] + expo * lr) / (-expo)
            if self.asymptotic and env > prev:
                break
            prev = env
            if self.sign[j] != 0.0:
                total += self.sign[j] * math.exp(self.log_abs[j] + expo * lr) / (-expo)
            if env < 1e-18 * abs(total):
                break
        return total

    def truncation_estimate(self, r: float) -> float:
        """Smallest envelope term relative to the sum, at radius r."""
        val = float(self(np.array([r]))[0])
        expo = self.dim + 2 * self.s * np.arange(1, len(self.log_env) + 1)
        return float(np.exp(self.log_env - expo * math.log(r)).min() / abs(val))


def wynn_epsilon(partial_sums: np.ndarray) -> tuple[float, float]:
    """Wynn's epsilon extrapolation of a sequence of partial sums.

    Returns the estimate and the difference between the last two estimates.
    """
    eps_prev = np.zeros(len(partial_sums) + 1)
    eps = np.asarray(partial_sums, dtype=float).copy()
    estimates = [eps[-1]]
    order = 0
    while len(eps) > 1:
        diff = np.diff(eps)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = eps_prev[1 : len(eps)] + 1.0 / diff
        if not np.all(np.isfinite(nxt)):
            break
        eps_prev, eps = eps, nxt
        order += 1
        if order % 2 == 0:
            estimates.append(eps[-1])
    if len(estimates) < 2:
        return float(estimates[-1]), math.inf
    return float(estimates[-1]), float(abs(estimates[-1] - estimates[-2]))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


def fractional_heat_value(r: float, s: float, dim: int, rtol: float = 1e-10) -> float:
    """P_s(r) by Bessel-weighted inversion of exp(-|xi|^{2s}) in R^dim.

    P(r) = (2 pi)^{-N/2} r^{1-N/2} int_0^inf exp(-k^{2s}) k^{N/2} J_{N/2-1}(k r) dk.
    The k-axis is cut into panels between consecutive (asymptotic) Bessel
    zeros; long alternating panel sums are accelerated with Wynn's epsilon.
    """
    k_max = _EXP_CUTOFF ** (1.0 / (2 * s))
    if r == 0.0:
        return (
            sphere_area(dim)
            * math.gamma(dim / (2 * s))
            / (2 * s)
            / (2 * math.pi) ** dim
        )
    nu = dim / 2 - 1

    def f(k):
        return np.exp(-(k ** (2 * s))) * k ** (dim / 2) * special.jv(nu, k * r)

    pref = (2 * math.pi) ** (-dim / 2) * r ** (1 - dim / 2)
    first_zero = (1 + nu / 2 - 0.25) * math.pi / r
    head_end = min(first_zero, k_max)
    hints = [x for x in (1e-3, 1e-2, 1e-1, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1e3) if x < head_end]
    with np.errstate(all="ignore"):
        head, head_err = integrate.quad(
            f, 0.0, head_end, points=hints or None, limit=1000, epsabs=0.0, epsrel=1e-13
        )
    if not math.isfinite(head):
        raise QuadratureError(r, math.inf, "non-finite head integral")
    if head_end >= k_max:
        scale = max(abs(head), 1e-300)
        if head_err > rtol * scale and head_err > 1e-300:
            raise QuadratureError(r, head_err / scale)
        return pref * head

    n_panels = int(math.floor((k_max * r / math.pi) - (nu / 2 - 0.25))) - 1
    if n_panels < 1:
        n_panels = 1
    m = np.arange(1, n_panels + 2, dtype=float)
    edges = (m + nu / 2 - 0.25) * math.pi / r
    edges[-1] = max(k_max, edges[-2] + 1e-12)
    if n_panels > _DIRECT_PANELS:
        edges = edges[: _ACCEL_PANELS + 1]
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    panels = (f(nodes) * _GL_W[None, :]).sum(axis=1) * half
    if n_panels <= _DIRECT_PANELS:
        body = float(panels.sum())
        return pref * (head + body)

    sums = head + np.cumsum(panels)
    tail = sums[-41:]
    est, err = wynn_epsilon(tail)
    scale = max(abs(est), np.abs(panels[-40:]).max() * 1e-6)
    if not math.isfinite(est) or err > rtol * max(abs(est), 1e-300) * 1e3 and err > 1e-9 * scale:
        raise QuadratureError(r, err / max(abs(est), 1e-300), "accelerated panel sum stalled")
    return pref * est


@dataclass(frozen=True)
class RadialTable:
    """Tabulated radial profile with cubic (log-log) interpolation.

    Beyond ``r_max`` a fractional-heat table continues with the large-r
    series; any other table continues with the matched power law
    ``tail_constant * r**(-tail_exponent)``.
    """

    s: float
    dim: int
    family: Family
    radii: np.ndarray
    values: np.ndarray
    tail_exponent: float
    tail_constant: float = field(default=math.nan)

    def __post_init__(self):
        r, v = self.radii, self.values
        if r.ndim != 1 or r.shape != v.shape or len(r) < 4:
            raise ValueError("radii/values must be 1-D arrays of equal length >= 4")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("radii must start at 0 and be strictly increasing")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("profile values must be finite and strictly positive")
        if math.isnan(self.tail_constant):
            object.__setattr__(
                self, "tail_constant", float(v[-1] * r[-1] ** self.tail_exponent)
            )

    @property
    def r_max(self) -> float:
        return float(self.radii[-1])

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(np.log(self.radii[1:]), np.log(self.values[1:]))

    @cached_property
    def _series(self) -> _Series | None:
        if self.family is Family.FRACTIONAL_HEAT:
            return _Series.build(self.s, self.dim)
        return None

    def tail(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self._series is not None:
            return self._series(r)
        return self.tail_constant * r ** (-self.tail_exponent)

    def __call__(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        r1 = self.radii[1]
        core = r < r1
        mid = (~core) & (r <= self.r_max)
        far = r > self.r_max
        if np.any(core):
            v0, v1 = self.values[0], self.values[1]
            out[core] = v0 + (v1 - v0) * (r[core] / r1) ** 2
        if np.any(mid):
            out[mid] = np.exp(self._spline(np.log(r[mid])))
        if np.any(far):
            out[far] = self.tail(r[far])
        return out

    def moment(self, power: float, top: float | None = None) -> float:
        """int_0^top P(r) r^power dr over the tabulated range (top <= r_max)."""
        top = self.r_max if top is None else min(float(top), self.r_max)
        r1 = self.radii[1]
        v0, v1 = self.values[0], self.values[1]
        c = min(top, r1)
        core = v0 * c ** (power + 1) / (power + 1) + (v1 - v0) * c ** (power + 3) / ((power + 3) * r1**2)
        if top <= r1:
            return core
        x, w = np.polynomial.legendre.leggauss(8)
        grid = self.radii[1:]
        grid = np.append(grid[grid < top], top)
        lr = np.log(grid)
        lo, hi = lr[:-1], lr[1:]
        u = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * x[None, :]
        body = float((np.exp(self._spline(u) + (power + 1) * u) * w).sum(axis=1) @ (0.5 * (hi - lo)))
        return core + body

    def tail_moment(self, power: float, top: float = math.inf) -> float:
        """int_{r_max}^top P(r) r^power dr from the tail model."""
        r0 = self.r_max
        if top <= r0:
            return 0.0
        if self._series is not None:
            upper = 0.0 if math.isinf(top) else self._series.tail_integral(top, power)
            return self._series.tail_integral(r0, power) - upper
        e = power + 1 - self.tail_exponent
        if math.isinf(top):
            if e >= 0:
                raise ValueError("tail moment diverges")
            return self.tail_constant * r0**e / (-e)
        if e == 0:
            return self.tail_constant * math.log(top / r0)
        return self.tail_constant * (top**e - r0**e) / e

    def mass(self) -> float:
        """Total mass |S^{N-1}| int_0^inf P(r) r^{N-1} dr of the representation."""
        n = self.dim
        return sphere_area(n) * (self.moment(n - 1) + self.tail_moment(n - 1))

    def splice_mismatch(self) -> float:
        """Relative jump between the last tabulated value and the tail model."""
        tail_val = float(self.tail(np.array([self.r_max]))[0])
        return abs(tail_val / self.values[-1] - 1.0)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.radii.tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()[:16]

    # -- text persistence --------------------------------------------------

    def to_text(self) -> str:
        lines = [
            f"{TABLE_HEADER} s={self.s!r} N={self.dim} family={self.family.value}"
            f" tail_exponent={self.tail_exponent!r}"
        ]
        lines.extend(f"{r:.17g} {v:.17g}" for r, v in zip(self.radii, self.values))
        return "\n".join(lines) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii")

    @classmethod
    def from_text(cls, text: str) -> RadialTable:
        lines = text.strip().splitlines()
        head = lines[0]
        if not head.startswith(TABLE_HEADER):
            raise ValueError(f"not a {TABLE_HEADER} file: {head[:40]!r}")
        meta = dict(tok.split("=", 1) for tok in head[len(TABLE_HEADER) :].split())
        data = np.loadtxt(lines[1:], dtype=float, ndmin=2)
        s = float(meta["s"])
        dim = int(meta["N"])
        return cls(
            s=s,
            dim=dim,
            family=Family.parse(meta["family"]),
            radii=data[:, 0].copy(),
            values=data[:, 1].copy(),
            tail_exponent=float(meta.get("tail_exponent", dim + 2 * s)),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> RadialTable:
        return cls.from_text(Path(path).read_text(encoding="ascii"))


def table_radii(r_max: float = DEFAULT_R_MAX, n_points: int = DEFAULT_N_POINTS) -> np.ndarray:
    return np.concatenate(([0.0], np.logspace(math.log10(_R_FIRST), math.log10(r_max), n_points - 1)))


def build_fractional_heat_profile(
    s: float,
    dim: int,
    r_max: float = DEFAULT_R_MAX,
    n_points: int = DEFAULT_N_POINTS,
    mass_tol: float = 1e-6,
) -> RadialTable:
    """Tabulate the fractional heat profile P_s on [0, r_max].

    Each radius is an independent Bessel-weighted quadrature (see
    :func:`fractional_heat_value`). The table is rescaled to unit mass;
    a raw mass further than ``mass_tol`` from 1 is an error.
    """
    if not 0.0 < s < 1.0:
        raise KernelDomainError(f"s must lie in (0, 1), got {s}")
    if dim < 2:
        raise KernelDomainError(f"dimension must be >= 2, got {dim}")
    if r_max <= _R_FIRST * 10:
        raise KernelDomainError(f"r_max too small: {r_max}")
    if n_points < 64:
        raise KernelDomainError(f"n_points must be >= 64, got {n_points}")
    radii = table_radii(r_max, n_points)
    values = np.array([fractional_heat_value(float(r), s, dim) for r in radii])
    bad = np.flatnonzero(~(values > 0))
    if len(bad):
        r_bad = float(radii[bad[0]])
        raise QuadratureError(r_bad, math.inf, f"non-positive profile value {values[bad[0]]:.3g}")
    table = RadialTable(s, dim, Family.FRACTIONAL_HEAT, radii, values, dim + 2 * s)
    mass = table.mass()
    if abs(mass - 1.0) > mass_tol:
        raise QuadratureError(float(radii[-1]), abs(mass - 1.0), f"tabulated mass {mass:.9f} != 1")
    log.debug("fractional heat table s=%g N=%d mass=%.12f", s, dim, mass)
    return RadialTable(s, dim, Family.FRACTIONAL_HEAT, radii, values / mass, dim + 2 * s)


def _cache_path(cache_dir: Path, s: float, dim: int, r_max: float, n_points: int) -> Path:
    return cache_dir / f"fractional-heat_s{s:.10g}_N{dim}_rmax{r_max:g}_n{n_points}.txt"


def default_cache_dir() -> Path | None:
    env = os.environ.get("FRACFLOW_CACHE")
    return Path(env) if env else None


_MEMO: dict[tuple, RadialTable] = {}


def fractional_heat_table(
    s: float,
    dim: int,
    r_max: float = DEFAULT_R_MAX,
    n_points: int = DEFAULT_N_POINTS,
    cache_dir: str | os.PathLike | None = None,
) -> RadialTable:
    """Memoised and optionally disk-cached :func:`build_fractional_heat_profile`."""
    key = (float(s), int(dim), float(r_max), int(n_points))
    if key in _MEMO:
        return _MEMO[key]
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    path = _cache_path(cache, s, dim, r_max, n_points) if cache else None
    if path is not None and path.exists():
        table = RadialTable.load(path)
    else:
        table = build_fractional_heat_profile(s, dim, r_max, n_points)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            table.save(tmp)
            tmp.replace(path)
    _MEMO[key] = table
    return table


# ---------------------------------------------------------------------------
# kernel spec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """One admissible kernel: order s, dimension N, and profile family."""

    s: float
    dim: int
    family: Family
    table: RadialTable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not 0.0 < self.s < 1.0:
            raise KernelDomainError(f"s must lie in (0, 1), got {self.s}")
        if self.dim < 2:
            raise KernelDomainError(f"dimension must be >= 2, got {self.dim}")
        if self.family is Family.EXPLICIT_HALF and self.s != 0.5:
            raise KernelDomainError("the explicit kernel exists only for s = 1/2")
        if self.family is Family.FRACTIONAL_HEAT and self.table is None:
            raise ValueError("fractional heat kernels need a RadialTable; use make_kernel()")

    @property
    def tag(self) -> str:
        return self.family.value

    @cached_property
    def _poisson_p(self) -> float:
        return poisson_constant(self.dim, self.s)

    def profile(self, r) -> np.ndarray:
        """P_s(r) = K_s(y, 1) for |y| = r."""
        r = np.abs(np.asarray(r, dtype=float))
        if self.family is Family.FRACTIONAL_HEAT:
            return self.table(r)
        if self.family is Family.EXPLICIT_HALF:
            return explicit_half_constant(self.dim) * (1.0 + r * r) ** (-(self.dim + 1) / 2)
        return self._poisson_p * (1.0 + r * r) ** (-(self.dim + 2 * self.s) / 2)

    def radial(self, rho, t: float) -> np.ndarray:
        """K_s evaluated at |y| = rho."""
        if not t > 0:
            raise KernelDomainError(f"kernel time must be positive, got {t}")
        ell = t ** (1.0 / (2 * self.s))
        return ell ** (-self.dim) * self.profile(np.asarray(rho, dtype=float) / ell)

    def length_scale(self, t: float) -> float:
        """t^{1/(2s)}: the spatial scale of K_s(., t)."""
        if not t > 0:
            raise KernelDomainError(f"kernel time must be positive, got {t}")
        return t ** (1.0 / (2 * self.s))

    @cached_property
    def limit_constant(self) -> float:
        return limit_constant(self)

    def multiplier(self, k, t: float) -> np.ndarray:
        """Fourier transform of K_s(., t) at frequency magnitude k."""
        k = np.abs(np.asarray(k, dtype=float))
        if self.family is Family.FRACTIONAL_HEAT:
            return np.exp(-t * k ** (2 * self.s))
        if self.family is Family.EXPLICIT_HALF:
            return np.exp(-t * k)
        z = self.length_scale(t) * k
        out = np.ones_like(z)
        nz = z > 0
        with np.errstate(over="ignore", under="ignore"):
            out[nz] = 2.0 ** (1 - self.s) / math.gamma(self.s) * z[nz] ** self.s * special.kv(self.s, z[nz])
        return np.nan_to_num(out, nan=0.0)


def make_kernel(
    family: Family | str,
    s: float,
    dim: int = 2,
    *,
    r_max: float = DEFAULT_R_MAX,
    n_points: int = DEFAULT_N_POINTS,
    cache_dir: str | os.PathLike | None = None,
) -> KernelSpec:
    family = Family.parse(family)
    table = None
    if family is Family.FRACTIONAL_HEAT:
        table = fractional_heat_table(s, dim, r_max, n_points, cache_dir)
    return KernelSpec(s, dim, family, table)


def eval_kernel(spec: KernelSpec, y, t: float) -> np.ndarray | float:
    """K_s(y, t) for a point (or array of points, last axis = coordinates)."""
    if not t > 0:
        raise KernelDomainError(f"kernel time must be positive, got {t}")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != spec.dim:
        raise ValueError(f"expected points in R^{spec.dim}, got shape {y.shape}")
    out = spec.radial(np.linalg.norm(y, axis=-1), t)
    return float(out) if out.ndim == 0 else out


def limit_constant(spec: KernelSpec) -> float:
    """C_{N,s} with t^{-1} K_s(y, t) -> C_{N,s} |y|^{-N-2s} as t -> 0."""
    if spec.family is Family.HARMONIC_EXTENSION:
        return spec._poisson_p
    return gamma_limit_constant(spec.dim, spec.s)


@dataclass(frozen=True)
class BoundsReport:
    c_lower: float
    c_upper: float
    constant: float
    passed: bool


def verify_kernel_bounds(spec: KernelSpec, radii) -> BoundsReport:
    """Empirical sandwich P(r) (1 + r^{N+2s}) in [c_lower, c_upper] over ``radii``."""
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii < 0):
        raise ValueError("radii must be non-empty and non-negative")
    q = spec.profile(radii) * (1.0 + radii ** (spec.dim + 2 * spec.s))
    lo, hi = float(q.min()), float(q.max())
    ok = bool(np.isfinite(lo) and np.isfinite(hi) and lo > 0 and hi > 0)
    const = max(hi, 1.0 / lo) if ok else math.inf
    return BoundsReport(lo, hi, const, ok)


def profile_slope(spec: KernelSpec, r, rel_step: float = 1e-5) -> np.ndarray:
    """Central finite-difference P_s'(r)."""
    r = np.asarray(r, dtype=float)
    h = rel_step * np.maximum(r, 1e-2)
    return (spec.profile(r + h) - spec.profile(np.abs(r - h))) / (2 * h)


def marginal_density_at_zero(s: float) -> float:
    """int_{R^{N-1}} P_s(y', 0) dy' for the fractional heat kernel (any N)."""
    return math.gamma(1 + 1 / (2 * s)) / math.pi
