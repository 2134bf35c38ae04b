"""Critical time scale sigma_s(t) of the threshold scheme."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

HALF_BRANCH_SIGMA_MAX = math.exp(-0.5)
HALF_BRANCH_T_CAP = 0.5 * math.exp(-1.0)


class ScalingDomainError(ValueError):
    pass


class Branch(str, enum.Enum):
    SUB_HALF = "sub-half"
    HALF = "half"
    SUPER_HALF = "super-half"

    @classmethod
    def of(cls, s: float) -> Branch:
        if s < 0.5:
            return cls.SUB_HALF
        if s > 0.5:
            return cls.SUPER_HALF
        return cls.HALF


@dataclass(frozen=True)
class ScalingLaw:
    """sigma_s(t) for a fixed order s.

    Parameters
    ----------
    s : float
        Fractional order in (0, 1).
    rtol : float
        Relative tolerance of the implicit solve (s = 1/2 only).
    """

    s: float
    rtol: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ScalingDomainError(f"s must lie in (0, 1), got {self.s}")

    @property
    def branch(self) -> Branch:
        return Branch.of(self.s)

    @property
    def t_cap(self) -> float:
        return HALF_BRANCH_T_CAP if self.branch is Branch.HALF else math.inf

    def __call__(self, t: float) -> float:
        return sigma(self, t)

    def inverse(self, sig: float) -> float:
        """t with sigma_s(t) = sig."""
        if not sig > 0:
            raise ScalingDomainError(f"sigma must be positive, got {sig}")
        if self.branch is Branch.SUB_HALF:
            return sig ** ((1 + 2 * self.s) / (2 * self.s))
        if self.branch is Branch.SUPER_HALF:
            return sig ** (1 / self.s)
        return sigma_inverse_check(self, sig)


def _half_branch(t: float, rtol: float) -> float:
    # g(x) = x^2 log(1/x) - t is increasing on (0, e^{-1/2}) and concave
    # in log-coordinates; Newton on u = log x with a bisection guard.
    lo, hi = -745.0, -0.5
    u = math.log(math.sqrt(t / abs(math.log(math.sqrt(t)))))
    u = min(max(u, lo), hi)
    log_t = math.log(t)
    for _ in range(200):
        # work with G(u) = 2u + log(-u) - log t, monotone increasing on u < -1/2
        g = 2.0 * u + math.log(-u) - log_t
        if g > 0:
            hi = u
        else:
            lo = u
        dg = 2.0 + 1.0 / u
        step = g / dg if dg > 0 else math.inf
        nxt = u - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - u) <= 1e-3 * rtol or hi - lo <= 1e-3 * rtol:
            u = nxt
            break
        u = nxt
    return math.exp(u)


def sigma(law: ScalingLaw, t: float) -> float:
    """Evaluate sigma_s(t).

    s < 1/2 gives t^{2s/(1+2s)}, s > 1/2 gives t^s, and s = 1/2 the root of
    sigma^2 |log sigma| = t on the branch sigma < e^{-1/2}.
    """
    if not t > 0:
        raise ScalingDomainError(f"t must be positive, got {t}")
    s = law.s
    if law.branch is Branch.SUB_HALF:
        return t ** (2 * s / (1 + 2 * s))
    if law.branch is Branch.SUPER_HALF:
        return t**s
    if not t < HALF_BRANCH_T_CAP:
        raise ScalingDomainError(
            f"t={t} outside (0, {HALF_BRANCH_T_CAP:.6g}): sigma^2|log sigma| = t has no "
            "unique root on the small-sigma branch"
        )
    return _half_branch(t, law.rtol)


def sigma_inverse_check(law: ScalingLaw, sigma_value: float) -> float:
    """t = sigma^2 |log sigma| for the s = 1/2 branch."""
    if not 0.0 < sigma_value < HALF_BRANCH_SIGMA_MAX:
        raise ScalingDomainError(
            f"sigma={sigma_value} outside (0, e^(-1/2)) for the s=1/2 branch"
        )
    return sigma_value**2 * abs(math.log(sigma_value))
