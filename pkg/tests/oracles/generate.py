"""Independent reference values, frozen into values.json.

Run ``python3 tests/oracles/generate.py`` to regenerate. Nothing here
imports the package: every number comes from mpmath or scipy directly.
"""

from __future__ import annotations

import json
import math
import warnings
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy import integrate

mp.mp.dps = 30
OUT = Path(__file__).with_name("values.json")


def fh_profile(s: float, r: float) -> float:
    """Radial inverse Fourier transform of exp(-|xi|^{2s}) in the plane."""
    s = mp.mpf(s)
    if r == 0:
        return float(mp.quad(lambda k: k * mp.exp(-k ** (2 * s)), [0, mp.inf]) / (2 * mp.pi))
    f = lambda k: k * mp.exp(-k ** (2 * s)) * mp.besselj(0, k * r)
    val = mp.quadosc(f, [0, mp.inf], zeros=lambda n: mp.besseljzero(0, n) / r)
    return float(val / (2 * mp.pi))


def gamma_constant(s: float) -> float:
    s = mp.mpf(s)
    return float(s * 2 ** (2 * s) * mp.sin(s * mp.pi) * mp.gamma(1 + s) * mp.gamma(s) / mp.pi**2)


def hs_unit_disk(s: float) -> float:
    """Nonlocal curvature of the unit disk from the exact circle-fraction reduction."""
    s = mp.mpf(s)
    # the integrand behaves like -r^{-2s}/pi at 0; that part is integrated in closed form
    smooth = lambda r: r ** (-1 - 2 * s) * (2 * mp.acos(r / 2) / mp.pi - 1) + r ** (-2 * s) / mp.pi
    inner = mp.quad(smooth, [0, 1, 2]) - 2 ** (1 - 2 * s) / ((1 - 2 * s) * mp.pi)
    return float(2 * mp.pi * (inner - 2 ** (-2 * s) / (2 * s)))


def hs_unit_disk_bruteforce(s: float, eps_list=(0.04, 0.02, 0.01), far: float = 50.0) -> dict:
    """Two-dimensional PV integral with the disk eps excised, Richardson-extrapolated in eps.

    The excised region contributes O(eps^{1-2s}); the region beyond ``far``
    (all outside the set) is added analytically.
    """
    x = np.array([1.0, 0.0])

    def tau(y1, y2):
        return 1.0 if y1 * y1 + y2 * y2 < 1.0 else -1.0

    def shell(eps):
        # polar about x, inner angle integral left to adaptive quad (brute force)
        g = lambda th, r: tau(x[0] + r * math.cos(th), x[1] + r * math.sin(th)) * r ** (-1 - 2 * s)
        val = 0.0
        pts = [eps, 0.1, 0.5, 1.0, 2.0, far]
        for a, b in zip(pts[:-1], pts[1:]):
            if b <= eps:
                continue
            val += integrate.dblquad(g, max(a, eps), b, 0.0, 2 * math.pi, epsabs=1e-11, epsrel=1e-11)[0]
        return val - 2 * math.pi * far ** (-2 * s) / (2 * s)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        vals = [shell(e) for e in eps_list]
    p = 1 - 2 * s
    q = 2.0**p
    r1 = (q * vals[1] - vals[0]) / (q - 1)
    r2 = (q * vals[2] - vals[1]) / (q - 1)
    return {"raw": vals, "richardson": [r1, r2]}


def j_square_poisson(s: float, t: float, r: float = 0.5, beta: float = 0.9) -> float:
    """int over (-r, r)^2 of K(y, t) sign(y_2 - |y_1|^{1+beta}) for the planar Poisson-type kernel.

    K(y, t) = t^{-1/s} (s / pi) (1 + |y|^2 t^{-1/s})^{-(1+s)}, integrated by
    nested adaptive quad with the inner range split at the graph.
    """
    ell = t ** (1 / (2 * s))
    kern = lambda y1, y2: (s / math.pi) * ell**-2 * (1 + (y1 * y1 + y2 * y2) / ell**2) ** (-(1 + s))

    pts = sorted({ell * 2.0**k for k in range(-6, 40) if ell * 2.0**k < r})

    def seg(f, a, b):
        # 0 <= a <= b; panels at dyadic multiples of the kernel scale
        cuts = [a] + [p for p in pts if a < p < b] + [b]
        return sum(integrate.quad(f, u, v, epsabs=0, epsrel=1e-13, limit=200)[0] for u, v in zip(cuts[:-1], cuts[1:]))

    def inner(y1):
        g = min(abs(y1) ** (1 + beta), r)
        k = lambda y2: kern(y1, y2)
        # int_g^r K - int_{-r}^g K, with K even in y2
        return seg(k, g, r) - seg(k, 0.0, r) - seg(k, 0.0, g)

    edges = [0.0] + pts + [r]
    total = sum(integrate.quad(inner, a, b, epsabs=0, epsrel=1e-12, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    return 2 * total


def main() -> None:
    out = {}
    out["fh_profile"] = {
        str(s): {str(r): fh_profile(s, r) for r in (0.0, 0.5, 1.0, 2.0, 5.0)} for s in (0.25, 0.75)
    }
    out["gamma_constant"] = {str(s): gamma_constant(s) for s in (0.25, 0.5, 0.75)}
    out["hs_unit_disk"] = {str(s): hs_unit_disk(s) for s in (0.1, 0.25, 0.4)}
    out["hs_unit_disk_bruteforce_0.25"] = hs_unit_disk_bruteforce(0.25)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out["j_square_poisson_0.25"] = {str(t): j_square_poisson(0.25, t) for t in (1e-2, 1e-3, 1e-4)}
    OUT.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
