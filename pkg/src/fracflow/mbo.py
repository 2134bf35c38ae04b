"""Threshold dynamics: iterate E <- {K_s(., sigma_s(h)) * tau_E > 0} on a grid."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .diffusion import GridConvolver, GridField, UnderResolved, image_estimate, sample_shape
from .geometry import SetShape
from .kernels import KernelSpec, sphere_area
from .scaling import ScalingLaw

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("n", "time", "area", "radius_equiv", "interface_length")
MIN_CELLS_PER_LENGTH = 3.0


@dataclass(frozen=True)
class StepSummary:
    n: int
    time: float
    area: float
    radius_equiv: float
    interface_length: float


@dataclass
class FlowTrace:
    """Per-step observables of one threshold-dynamics run."""

    h: float
    family: str
    s: float
    sigma: float
    n_grid: int
    extent: float
    dim: int
    mode: str
    steps: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    vanished: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.steps])

    @property
    def radii(self) -> np.ndarray:
        return np.array([r.radius_equiv for r in self.steps])

    @property
    def areas(self) -> np.ndarray:
        return np.array([r.area for r in self.steps])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.steps:
            w.writerow([r.n, repr(r.time), repr(r.area), repr(r.radius_equiv), repr(r.interface_length)])
        return buf.getvalue()

    def summary(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("steps", "snapshots")}
        d["n_steps"] = len(self.steps) - 1
        d["snapshot_steps"] = sorted(self.snapshots)
        return d


def equivalent_radius(volume: float, dim: int) -> float:
    """Radius of the ball with the given area (N=2) or volume."""
    if volume <= 0:
        return 0.0
    unit = sphere_area(dim) / dim
    return (volume / unit) ** (1.0 / dim)


def interface_length(tau: np.ndarray, spacing: float) -> float:
    """Crofton estimate of the perimeter (N=2) or surface area (N=3) of {tau > 0}.

    Sign changes are counted along grid lines (and, in 2D, the two diagonals).
    Staircase boundaries are therefore not overcounted the way an edge count would.
    """
    pos = tau > 0
    if pos.ndim == 2:
        cx = np.count_nonzero(pos != np.roll(pos, 1, axis=0))
        cy = np.count_nonzero(pos != np.roll(pos, 1, axis=1))
        diag = np.roll(np.roll(pos, 1, axis=0), 1, axis=1)
        anti = np.roll(np.roll(pos, 1, axis=0), -1, axis=1)
        cd = np.count_nonzero(pos != diag) + np.count_nonzero(pos != anti)
        # diagonal lines are spaced h / sqrt(2)
        return math.pi / 8 * spacing * (cx + cy + cd / math.sqrt(2))
    counts = [np.count_nonzero(pos != np.roll(pos, 1, axis=a)) for a in range(pos.ndim)]
    return 2.0 * float(np.mean(counts)) * spacing ** (pos.ndim - 1)


def minimum_step(kernel: KernelSpec, law: ScalingLaw, spacing: float) -> float:
    """Smallest h whose kernel length scale spans MIN_CELLS_PER_LENGTH cells."""
    sig = (MIN_CELLS_PER_LENGTH * spacing) ** (2 * kernel.s)
    return law.inverse(sig)


def _check_resolution(kernel: KernelSpec, law: ScalingLaw, h: float, spacing: float) -> float:
    sig = law(h)
    ell = kernel.length_scale(sig)
    if ell < MIN_CELLS_PER_LENGTH * spacing:
        raise UnderResolved(
            f"kernel length {ell:.3g} spans {ell / spacing:.2f} cells (< {MIN_CELLS_PER_LENGTH:g}); "
            f"need h >= {minimum_step(kernel, law, spacing):.3g}")
    return sig


def mbo_step(field_: GridField, kernel: KernelSpec, law: ScalingLaw, h: float, mode: str = "periodic",
             convolver: GridConvolver | None = None) -> GridField:
    """One convolution and threshold; ties (u == 0) go outside.

    Parameters
    ----------
    convolver : GridConvolver, optional
        Reused across steps; built on demand otherwise.
    """
    if law.s != kernel.s:
        raise ValueError("scaling law and kernel have different s")
    sig = _check_resolution(kernel, law, h, field_.spacing)
    conv = convolver or GridConvolver(kernel, sig, field_.n, field_.extent, field_.dim, mode)
    u = conv(np.asarray(field_.values, dtype=float))
    tau = np.where(u > 0, 1.0, -1.0)
    return GridField(tau, field_.extent, field_.center, dict(field_.meta))


def _summarize(tau: np.ndarray, n: int, h: float, spacing: float) -> StepSummary:
    dim = tau.ndim
    area = float(np.count_nonzero(tau > 0)) * spacing**dim
    return StepSummary(n, n * h, area, equivalent_radius(area, dim), interface_length(tau, spacing))


def run_flow(initial: SetShape | GridField, kernel: KernelSpec, law: ScalingLaw, h: float, n_steps: int,
             *, n_grid: int = 1024, extent: float | None = None, mode: str = "periodic",
             wrap_tol: float = 1e-3, snapshot_every: int = 0, stop_radius: float = 0.0,
             workers: int | None = None) -> FlowTrace:
    """Iterate the scheme from a shape (sampled on the grid) or a ready field.

    Parameters
    ----------
    mode : {"periodic", "free"}
        In periodic mode the run is refused when the periodic images of the
        initial set shift u by more than ``wrap_tol``.
    snapshot_every : int
        Keep the field every k steps (0 keeps none).
    stop_radius : float
        Stop once the equivalent radius drops below this value.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    field_ = initial if isinstance(initial, GridField) else sample_shape(initial, n_grid, extent)
    sig = _check_resolution(kernel, law, h, field_.spacing)
    if mode == "periodic":
        est = image_estimate(kernel, sig, field_.extent, field_.measure_positive())
        if est > wrap_tol:
            raise UnderResolved(f"periodic images shift u by ~{est:.2e} > {wrap_tol:g}; use mode='free' "
                                "or a larger box")
    trace = FlowTrace(h, kernel.tag, kernel.s, sig, field_.n, field_.extent, field_.dim, mode)
    spacing = field_.spacing
    tau = np.asarray(field_.values, dtype=float)
    trace.steps.append(_summarize(tau, 0, h, spacing))
    if snapshot_every:
        trace.snapshots[0] = field_
    if n_steps == 0:
        return trace
    conv = GridConvolver(kernel, sig, field_.n, field_.extent, field_.dim, mode, workers)
    for n in range(1, n_steps + 1):
        field_ = mbo_step(field_, kernel, law, h, mode, conv)
        tau = field_.values
        row = _summarize(tau, n, h, spacing)
        trace.steps.append(row)
        if snapshot_every and n % snapshot_every == 0:
            trace.snapshots[n] = field_
        if row.area == 0.0:
            trace.vanished = True
            log.info("set vanished at step %d", n)
            break
        if row.radius_equiv < stop_radius:
            break
    return trace


def mcf_radius_squared(r0: float, c: float, t) -> np.ndarray:
    """R(t)^2 under R' = -c H = -c / R (H normalised to 1/R on every sphere)."""
    return r0**2 - 2.0 * c * np.asarray(t, dtype=float)


def fractional_radius_ode(r0: float, a: float, hs_unit: float, s: float, t_end: float,
                          n_steps: int = 2000) -> tuple[np.ndarray, np.ndarray]:
    """RK4 for R' = -a |H_s(B_1)| R^{-2s}, stopped if R reaches zero.

    Returns
    -------
    t, R : ndarray
    """
    k = a * abs(hs_unit)
    rhs = lambda r: -k * max(r, 0.0) ** (-2 * s) if r > 0 else 0.0
    dt = t_end / n_steps
    ts = np.linspace(0.0, t_end, n_steps + 1)
    rs = np.empty(n_steps + 1)
    rs[0] = r = r0
    for i in range(n_steps):
        k1 = rhs(r)
        k2 = rhs(r + 0.5 * dt * k1)
        k3 = rhs(r + 0.5 * dt * k2)
        k4 = rhs(r + dt * k3)
        r = max(r + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6, 0.0)
        rs[i + 1] = r
    return ts, rs


def deviation_from_mcf(trace: FlowTrace, c: float, r_min: float = 0.5) -> float:
    """max |R^2 - (R0^2 - 2 c t)| / R0^2 over steps with R >= r_min."""
    r, t = trace.radii, trace.times
    keep = r >= r_min
    ref = mcf_radius_squared(r[0], c, t[keep])
    return float(np.max(np.abs(r[keep] ** 2 - ref)) / r[0] ** 2)


def deviation_from_fractional_ode(trace: FlowTrace, a: float, hs_unit: float, r_min: float = 0.5,
                                  r_max: float = 1.0) -> float:
    """max relative deviation of R(nh) from the RK4 reference while R is in [r_min, r_max]."""
    r, t = trace.radii, trace.times
    ts, rs = fractional_radius_ode(r[0], a, hs_unit, trace.s, float(t[-1]) if t[-1] > 0 else 1.0,
                                   n_steps=max(2000, 20 * len(t)))
    ref = np.interp(t, ts, rs)
    keep = (r >= r_min) & (r <= r_max)
    return float(np.max(np.abs(r[keep] - ref[keep]) / ref[keep]))
