"""Independent reference computations used by the tests.

Nothing here imports the package's numerical kernels.  Densities are plain
sums of exponentials, integrals go through ``scipy.integrate.quad``,
Gauss-Hermite rules or ``mpmath``, and the closed-form bounds are rebuilt
from their formulas in 50-digit arithmetic.
"""
from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy import integrate

SQRT2PI = math.sqrt(2 * math.pi)


# ---------------------------------------------------------------------------
# line densities
# ---------------------------------------------------------------------------


def pdf(points, weights, y):
    y = np.asarray(y, dtype=float)
    d = y[..., None] - np.asarray(points)
    return (np.asarray(weights) * np.exp(-0.5 * d * d)).sum(-1) / SQRT2PI


def _quad(fun, lo, hi, breaks=()):
    pts = sorted(b for b in breaks if lo < b < hi)
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(fun, a, b, epsabs=1e-14, epsrel=1e-13, limit=400)[0]
    return total


def entropy_quad(points, weights, margin=12.0):
    """``-int f log f`` by adaptive quadrature split at the atoms."""
    lo, hi = min(points) - margin, max(points) + margin

    def g(y):
        f = float(pdf(points, weights, y))
        return -f * math.log(f) if f > 0 else 0.0

    return _quad(g, lo, hi, points)


def mi_quad(points, weights):
    return entropy_quad(points, weights) - 0.5 * math.log(2 * math.pi * math.e)


def mi_hermite(points, weights, n=300):
    """``I = -E log f(Y) - h(Z)`` with ``E`` over ``Y = X + Z`` by Gauss-Hermite."""
    x, w = np.polynomial.hermite.hermgauss(n)
    z = math.sqrt(2) * x
    total = 0.0
    for th, p in zip(points, weights):
        total += p * float(w @ np.log(pdf(points, weights, th + z))) / math.sqrt(math.pi)
    return -total - 0.5 * math.log(2 * math.pi * math.e)


def entropy_mc(points, weights, n=10_000_000, seed=1234):
    """Monte Carlo ``-E log f(Y)`` and its standard error."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(points), size=n, p=np.asarray(weights))
    y = np.asarray(points)[idx] + rng.standard_normal(n)
    vals = np.empty(n)
    for s in range(0, n, 1_000_000):
        vals[s:s + 1_000_000] = -np.log(pdf(points, weights, y[s:s + 1_000_000]))
    return float(vals.mean()), float(vals.std() / math.sqrt(n))


def kl_quad(fp, fw, gp, gw, margin=12.0):
    lo, hi = min(min(fp), min(gp)) - margin, max(max(fp), max(gp)) + margin

    def h(y):
        f, g = float(pdf(fp, fw, y)), float(pdf(gp, gw, y))
        return f * math.log(f / g) if f > 0 else 0.0

    return _quad(h, lo, hi, [*fp, *gp])


def chi2_quad(fp, fw, gp, gw, A):
    lo, hi = -3 * A - 10, 3 * A + 10

    def h(y):
        f, g = float(pdf(fp, fw, y)), float(pdf(gp, gw, y))
        return (f - g) ** 2 / g

    return _quad(h, lo, hi, [*fp, *gp])


def tv_quad(fp, fw, gp, gw, margin=12.0):
    lo, hi = min(min(fp), min(gp)) - margin, max(max(fp), max(gp)) + margin
    return _quad(lambda y: 0.5 * abs(float(pdf(fp, fw, y)) - float(pdf(gp, gw, y))), lo, hi,
                 [*fp, *gp])


def log_l2_quad(points, weights, margin=12.0):
    lo, hi = min(points) - margin, max(points) + margin

    def g(y):
        f = float(pdf(points, weights, y))
        return f * math.log(f) ** 2

    return math.sqrt(_quad(g, lo, hi, points))


def entropy_mp(points, weights, dps=30):
    """Differential entropy by ``mpmath.quad`` at ``dps`` digits."""
    with mp.workdps(dps):
        pts = [mp.mpf(p) for p in points]
        ws = [mp.mpf(w) for w in weights]

        def f(y):
            return sum(w * mp.exp(-(y - p) ** 2 / 2) for p, w in zip(pts, ws)) / mp.sqrt(2 * mp.pi)

        def g(y):
            v = f(y)
            return -v * mp.log(v)

        lo, hi = min(pts) - 14, max(pts) + 14
        return mp.quad(g, [lo, *sorted(pts), hi])


# ---------------------------------------------------------------------------
# circle
# ---------------------------------------------------------------------------


def wrapped_pdf_direct(points, weights, B, theta, kmax=60):
    theta = np.asarray(theta, dtype=float)
    ks = np.arange(-kmax, kmax + 1)
    y = (B / math.pi) * (theta[..., None] + 2 * math.pi * ks)
    return (B / math.pi) * pdf(points, weights, y).sum(-1)


def wrapped_chi2_trapezoid(points, weights, A, n=40960):
    th = -math.pi + 2 * math.pi * np.arange(n) / n
    f = wrapped_pdf_direct(points, weights, A, th)
    return 2 * math.pi * float(((f - 1 / (2 * math.pi)) ** 2).sum()) * 2 * math.pi / n


# ---------------------------------------------------------------------------
# two-atom exhaustive search
# ---------------------------------------------------------------------------


def binary_mi_grid(distances, probs, n=120):
    """MI of ``{0: 1-p, d: p}`` on a grid of ``d`` and ``p`` (translation invariant)."""
    x, w = np.polynomial.hermite.hermgauss(n)
    z = math.sqrt(2) * x
    d = np.asarray(distances)[:, None, None]
    p = np.asarray(probs)[None, :, None]

    def neg_log_f(y):
        return -np.log(((1 - p) * np.exp(-0.5 * y * y) + p * np.exp(-0.5 * (y - d) ** 2)) / SQRT2PI)

    e0 = neg_log_f(z) @ w / math.sqrt(math.pi)
    e1 = neg_log_f(d + z) @ w / math.sqrt(math.pi)
    h = (1 - p[..., 0]) * e0 + p[..., 0] * e1
    return h - 0.5 * math.log(2 * math.pi * math.e)


def best_two_atom(A, step=1e-3):
    """Exhaustive 2-atom search; returns ``(mi, distance, weight)``."""
    ds = np.arange(0, 2 * A + step / 2, step)
    ps = np.arange(step, 0.5 + step / 2, step)
    best = (-1.0, 0.0, 0.0)
    for s in range(0, ds.size, 250):
        grid = binary_mi_grid(ds[s:s + 250], ps)
        i, j = np.unravel_index(np.argmax(grid), grid.shape)
        if grid[i, j] > best[0]:
            best = (float(grid[i, j]), float(ds[s + i]), float(ps[j]))
    return best


# ---------------------------------------------------------------------------
# closed-form bounds in 50-digit arithmetic
# ---------------------------------------------------------------------------

DPS = 50


def _hp(fn):
    """Run ``fn`` at ``DPS`` digits without touching the global precision."""

    def wrapped(*args, **kw):
        with mp.workdps(DPS):
            return fn(*args, **kw)

    wrapped.__name__ = fn.__name__
    return wrapped


@_hp
def alpha0_mp():
    return mp.sqrt(2 * mp.pi) * mp.erf(1 / mp.sqrt(2))


@_hp
def m0_mp(alternate=False):
    pre = 3 / mp.pi + 1 / mp.sqrt(2 * mp.pi)
    if alternate:
        return pre * mp.e**3 / alpha0_mp()
    return pre * (2 * mp.e**2 / alpha0_mp()) * mp.pi * mp.e**2


@_hp
def cl_mp():
    return 1 / (8 * (2 * mp.pi * m0_mp() + 1))


@_hp
def b0_mp():
    return mp.sqrt(mp.pi * mp.e / 2)


@_hp
def c1_mp():
    inner = (6 + mp.sqrt(2 * mp.pi)) * 2 * mp.pi * mp.e**4 / alpha0_mp() + 1
    return 1 / (8 * (1 + mp.sqrt(mp.pi * mp.e / 2)) * inner**2)


@_hp
def c2_mp(beta):
    return (2 * mp.mpf(beta) + 5) * mp.e / (4 * mp.log(2) + 3)


@_hp
def c3_mp():
    return 8 * mp.e * mp.sqrt(2 * mp.e / (4 * mp.log(2) + 3))


@_hp
def logplus_mp(x):
    return max(mp.log(x), mp.mpf(0)) if x > 0 else mp.mpf(0)


@_hp
def achievability_mp(A, eps, kappa, separate=False):
    A, eps, kappa = mp.mpf(A), mp.mpf(eps), mp.mpf(kappa)
    delta = min(eps / 2, eps**2 / (40 * (1 + A**2) ** 2))
    c = mp.log(kappa) / (4 * kappa)
    floor = 3 * mp.sqrt(kappa) * A if separate else 3 * mp.sqrt(kappa * A)
    m1 = int(mp.ceil(floor + A * mp.sqrt(mp.log(1 / delta) / c)))
    m2 = int(mp.ceil(max(mp.mpf(3), kappa * A**2) + A**2 * mp.log(1 / delta)))
    return (m1 if m1 <= kappa * A**2 else m2), m1, m2, delta


@_hp
def converse_mp(A, eps):
    A, eps = mp.mpf(A), mp.mpf(eps)
    arg = cl_mp() / (mp.sqrt(eps / 2) + mp.sqrt(b0_mp() / (2 * A)))
    return A / (2 * mp.pi) * mp.sqrt(logplus_mp(arg))


@_hp
def band_mp(A, beta):
    A = mp.mpf(A)
    low = A * mp.sqrt(logplus_mp(c1_mp() * A)) / (2 * mp.sqrt(2) * mp.pi)
    up_poly = 32 * mp.e * A * mp.sqrt(c2_mp(beta) * max(mp.log(A), 0))
    up_exp = c3_mp() * A ** mp.mpf(1.5)
    return low, up_poly, low, up_exp


@_hp
def two_regime_mp(m, A, kappa):
    m, A, kappa = mp.mpf(m), mp.mpf(A), mp.mpf(kappa)
    if m >= kappa * A**2:
        return mp.exp(-m * mp.log(m) / A**2)
    if 3 * mp.sqrt(kappa * A) <= m:
        return mp.exp(-(mp.log(kappa) / (4 * kappa)) * m**2 / A**2)
    return None


def ulp_close(x: float, ref, ulps: int = 4) -> bool:
    """``x`` within ``ulps`` units in the last place of the exact ``ref``."""
    r = float(ref)
    if r == 0:
        return x == 0
    return abs(x - r) <= ulps * math.ulp(r)


def dual_points(kappa_min, n=50, seed=20240917):
    """Deterministic spread of ``(A, eps, beta, kappa)`` inside every hypothesis."""
    rng = np.random.default_rng(seed)
    pts = []
    for i in range(n):
        A = float(10 ** rng.uniform(0, 7))
        eps = float(min(1.0, 1.0 / A) * 10 ** rng.uniform(-12, 0))
        beta = float(rng.uniform(1, 4))
        kappa = kappa_min if i % 3 == 0 else float(kappa_min * 10 ** rng.uniform(0, 3))
        pts.append((A, eps, beta, kappa))
    return pts
