"""Normal velocity of the thresholded set and its small-time prediction."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .diffusion import ConvolutionRequest, hyperplane_moment, u_direct
from .geometry import BoundaryPoint, SetShape, fractional_mean_curvature, mean_curvature
from .kernels import KernelSpec
from .scaling import Branch, ScalingLaw

log = logging.getLogger(__name__)

RECORD_FIELDS = ("s", "family", "shape", "point", "t", "sigma", "v_measured", "v_predicted",
                 "residual", "residual_scaled")


class VelocityError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExpansionConstants:
    """Hyperplane integrals of the profile and the velocity coefficients.

    Attributes
    ----------
    I0 : float
        int over R^{N-1} of P_s(y', 0).
    I2 : float
        int |y'|^2 P_s(y', 0) (s > 1/2 only, else nan).
    limit_constant : float
        C_{N,s}.
    """

    s: float
    dim: int
    family: str
    I0: float
    limit_constant: float
    I2: float = math.nan
    _kernel: KernelSpec | None = field(default=None, repr=False, compare=False)

    @property
    def branch(self) -> Branch:
        return Branch.of(self.s)

    @property
    def a(self) -> float:
        if self.branch is not Branch.SUB_HALF:
            raise ValueError("a_{N,s} is defined for s < 1/2 only")
        return self.limit_constant / (2 * self.I0)

    @property
    def c(self) -> float:
        if self.branch is not Branch.SUPER_HALF:
            raise ValueError("c_{N,s} needs s > 1/2: the second moment diverges otherwise")
        return self.I2 / (2 * self.I0)

    def I2_ball(self, rho: float) -> float:
        """int over |y'| < rho of |y'|^2 P_{1/2}(y', 0)."""
        if self._kernel is None:
            raise ValueError("constants were built without a kernel")
        return hyperplane_moment(self._kernel, 2, rho)

    def b(self, t: float) -> float:
        """b_N(t) = I2(1/sigma) / (2 |log sigma| I0) for s = 1/2."""
        if self.branch is not Branch.HALF:
            raise ValueError("b_N(t) is defined for s = 1/2 only")
        sig = ScalingLaw(0.5)(t)
        return self.I2_ball(1.0 / sig) / (2 * abs(math.log(sig)) * self.I0)

    @property
    def b_limit(self) -> float:
        """Limit of b_N(t) as t -> 0: |S^{N-2}| C / (2 I0)."""
        from .kernels import sphere_area

        area = 2.0 if self.dim == 2 else sphere_area(self.dim - 1)
        return area * self.limit_constant / (2 * self.I0)

    def predict(self, curvature: float, t: float) -> float:
        """Predicted velocity along the inward graph normal.

        ``curvature`` is H for s >= 1/2 and H_s for s < 1/2. With the normal
        pointing into E the sub-half prediction is -a H_s (H_s < 0 on convex
        sets, which shrink).
        """
        if self.branch is Branch.SUPER_HALF:
            return self.c * curvature
        if self.branch is Branch.HALF:
            return self.b(t) * curvature
        return -self.a * curvature


def expansion_constants(kernel: KernelSpec, tol: float = 1e-10) -> ExpansionConstants:
    I0 = hyperplane_moment(kernel, 0)
    I2 = hyperplane_moment(kernel, 2) if kernel.s > 0.5 else math.nan
    return ExpansionConstants(kernel.s, kernel.dim, kernel.tag, I0, kernel.limit_constant, I2, kernel)


@dataclass(frozen=True)
class VelocityRecord:
    s: float
    family: str
    shape: str
    point: str
    t: float
    sigma: float
    v_measured: float
    v_predicted: float
    residual: float
    residual_scaled: float
    delta: float = math.nan
    window: float = math.nan
    root_tol: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    @property
    def relative_error(self) -> float:
        return abs(self.residual) / abs(self.v_predicted) if self.v_predicted else math.inf

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in RECORD_FIELDS}


def scale_residual(residual: float, s: float, t: float, sigma: float) -> float:
    b = Branch.of(s)
    if b is Branch.SUPER_HALF:
        return residual * t ** (-(2 * s - 1) / 2)
    if b is Branch.HALF:
        return residual * abs(math.log(sigma))
    return residual


def boundary_curvature(shape: SetShape, p: BoundaryPoint, s: float, tol: float = 1e-10) -> float:
    """H for s >= 1/2, H_s for s < 1/2."""
    if s < 0.5:
        return fractional_mean_curvature(shape, p, s, tol)
    return mean_curvature(shape, p)


def measure_velocity(shape: SetShape, kernel: KernelSpec, law: ScalingLaw, p: BoundaryPoint, t: float,
                     tol_u: float | None = None, *, constants: ExpansionConstants | None = None,
                     curvature: float | None = None, shape_id: str = "", point_id: str = "") -> VelocityRecord:
    """Root of delta -> u(p + delta nu, sigma_s(t)) in the window |delta| < sigma^{1/(2s)}.

    Parameters
    ----------
    tol_u : float, optional
        Absolute accuracy of each u evaluation; default 1e-2 sigma.
    constants, curvature : optional
        Precomputed expansion constants and H (or H_s) at p.
    """
    if law.s != kernel.s:
        raise ValueError("scaling law and kernel have different s")
    s = kernel.s
    sig = law(t)
    ell = kernel.length_scale(sig)
    if ell >= p.graph_radius:
        raise VelocityError(f"window {ell:.3g} exceeds graph radius {p.graph_radius:.3g}; t={t:g} too large")
    tol_u = 1e-2 * sig if tol_u is None else tol_u
    tol_u = min(max(tol_u, 2e-12), 5e-3)
    xtol = 1e-3 * sig ** ((1 + 2 * s) / (2 * s))
    nu = p.normal

    def g(delta):
        return u_direct(ConvolutionRequest(kernel, shape, sig, tuple(p.position + delta * nu), tol_u))

    lo, hi = g(-ell), g(ell)
    if not (lo < 0 < hi):
        raise VelocityError(f"interface escaped the monotonicity window at t={t:g} "
                            f"(u(-ell)={lo:.3g}, u(+ell)={hi:.3g})")
    delta, info = optimize.brentq(g, -ell, ell, xtol=xtol, rtol=4 * np.finfo(float).eps,
                                  maxiter=200, full_output=True)
    if not info.converged:
        raise VelocityError(f"root finder did not converge at t={t:g}: {info.flag}")
    v = delta / t
    consts = constants if constants is not None else expansion_constants(kernel)
    curv = boundary_curvature(shape, p, s) if curvature is None else curvature
    pred = consts.predict(curv, t)
    res = v - pred
    return VelocityRecord(s, kernel.tag, shape_id or shape.kind, point_id or p.label, t, sig, v, pred, res,
                          scale_residual(res, s, t, sig), delta, ell, xtol / t)


# ---------------------------------------------------------------------------
# ladders
# ---------------------------------------------------------------------------


def default_ladder(s: float) -> list[float]:
    if s == 0.5:
        return [math.exp(-4), math.exp(-6), math.exp(-8)]
    return [1e-2, 1e-3, 1e-4]


def loglog_slope(t, residual) -> float:
    """Least-squares slope of log|residual| against log t."""
    t = np.asarray(t, dtype=float)
    r = np.abs(np.asarray(residual, dtype=float))
    if len(t) < 2 or np.any(r == 0):
        return math.nan
    return float(np.polyfit(np.log(t), np.log(r), 1)[0])


def theil_sen_slope(x, y) -> float:
    if len(x) < 2:
        return math.nan
    return float(stats.theilslopes(y, x)[0])


def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b < a for a, b in zip(v[:-1], v[1:]))


@dataclass
class LadderSummary:
    """Convergence summary of one (s, family, shape, point) ladder."""

    s: float
    family: str
    shape: str
    point: str
    t: list
    residual: list
    residual_scaled: list
    relative_error: list
    slope: float = math.nan
    scaled_slope: float = math.nan
    monotone: bool = False
    passed: bool = False
    criterion: str = ""
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def summarize_ladder(records: list[VelocityRecord], rel_tol: float = 0.10, slope_slack: float = 0.15,
                     scaled_band: float = 0.2) -> LadderSummary:
    """Regime-specific pass/fail for one ladder (records sorted by decreasing t)."""
    ok = sorted([r for r in records if r.ok], key=lambda r: -r.t)
    first = records[0]
    out = LadderSummary(first.s, first.family, first.shape, first.point,
                        [r.t for r in ok], [r.residual for r in ok], [r.residual_scaled for r in ok],
                        [r.relative_error for r in ok], failures=[r.error for r in records if not r.ok])
    if len(ok) < 2:
        out.criterion = "fewer than two successful records"
        return out
    t = [r.t for r in ok]
    out.slope = loglog_slope(t, out.residual)
    out.scaled_slope = theil_sen_slope(np.log(t), out.residual_scaled)
    out.monotone = strictly_decreasing(abs(v) for v in out.residual)
    final_ok = out.relative_error[-1] <= rel_tol
    b = Branch.of(first.s)
    if b is Branch.SUPER_HALF:
        need = (2 * first.s - 1) / 2 - slope_slack
        out.passed = bool(final_ok and out.slope >= need)
        out.criterion = f"final rel. error <= {rel_tol:g} and log-log slope >= {need:.3g}"
    elif b is Branch.HALF:
        out.passed = bool(abs(out.scaled_slope) <= scaled_band)
        out.criterion = f"|Theil-Sen slope of residual*|log sigma|| <= {scaled_band:g}"
    else:
        out.passed = bool(final_ok and out.monotone)
        out.criterion = f"|residual| strictly decreasing and final rel. error <= {rel_tol:g}"
    return out


@dataclass
class LadderJob:
    shape: SetShape
    shape_id: str
    points: list
    kernel: KernelSpec
    ladder: list
    curvatures: dict = field(default_factory=dict)


def velocity_table(jobs: list[LadderJob], tol_u: float | None = None):
    """Run every (job, point, t); failures are recorded, not raised.

    Returns
    -------
    records : list of VelocityRecord
    summaries : list of LadderSummary
    """
    records: list[VelocityRecord] = []
    summaries: list[LadderSummary] = []
    for job in jobs:
        if not job.ladder:
            continue
        law = ScalingLaw(job.kernel.s)
        consts = expansion_constants(job.kernel)
        for p in job.points:
            curv = job.curvatures.get(p.label)
            if curv is None:
                curv = boundary_curvature(job.shape, p, job.kernel.s)
            batch = []
            for t in job.ladder:
                try:
                    rec = measure_velocity(job.shape, job.kernel, law, p, t, tol_u, constants=consts,
                                           curvature=curv, shape_id=job.shape_id, point_id=p.label)
                except (VelocityError, ValueError, RuntimeError) as exc:
                    log.warning("velocity record failed: %s", exc)
                    sig = law(t) if t < law.t_cap else math.nan
                    rec = VelocityRecord(job.kernel.s, job.kernel.tag, job.shape_id, p.label, t, sig,
                                         math.nan, math.nan, math.nan, math.nan, error=str(exc))
                batch.append(rec)
            records.extend(batch)
            summaries.append(summarize_ladder(batch))
    return records, summaries
