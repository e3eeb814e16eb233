"""Total variation, relative entropy and chi-square between output laws.

Argument order is always ``(numerator law, reference law)``: ``kl(f, g)``
is ``int f log(f/g)`` and ``chi2(f, g)`` is ``int (f - g)^2 / g``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .mixture import (
    DiscreteInput,
    MixtureDensity,
    QuadratureScheme,
    gauss_q,
    gaussian_tail_integral,
)

KINDS = ("TV", "KL", "CHI2")
UNBOUNDED_LEVEL = 1e12


class Unbounded(ArithmeticError):
    """The chi-square integrand is too large for a trustworthy estimate."""


@dataclass(frozen=True)
class DivergenceValue:
    """A divergence value with its absolute error bound."""

    value: float
    error_bound: float
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown divergence kind {self.kind!r}")

    @property
    def lo(self) -> float:
        return self.value - self.error_bound

    @property
    def hi(self) -> float:
        return self.value + self.error_bound

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "error_bound": self.error_bound}


def _density(d):
    return d.output() if isinstance(d, DiscreteInput) else d


def _common_scheme(f, g, q, margin_scale: float = 1.0):
    A = max(f.amplitude, g.amplitude)
    if q is None:
        q = QuadratureScheme(-margin_scale * A - 8.0, margin_scale * A + 8.0, A)
    q.require(A)
    return A, q


def _mass_tail(q: QuadratureScheme, A: float) -> float:
    return float(gauss_q(q.hi - A) + gauss_q(-A - q.lo))


def tv(f, g, q: QuadratureScheme | None = None) -> DivergenceValue:
    """Total variation ``(1/2) int |f - g|``."""
    f, g = _density(f), _density(g)
    A, q = _common_scheme(f, g, q)
    est = q.estimate(lambda y: 0.5 * np.abs(f.pdf(y) - g.pdf(y)))
    # each law puts at most the Gaussian tail mass outside the domain
    return DivergenceValue(max(est.value, 0.0), est.error + _mass_tail(q, A), "TV")


def kl(f, g, q: QuadratureScheme | None = None) -> DivergenceValue:
    """Relative entropy ``int f log(f/g)``."""
    f, g = _density(f), _density(g)
    A, q = _common_scheme(f, g, q)

    def integrand(y):
        lf = f.log_pdf(y)
        return np.exp(lf) * (lf - g.log_pdf(y))

    est = q.estimate(integrand)
    # |log f/g| <= (|y| + A)^2 / 2 and f <= phi(|y| - A) outside [-A, A]
    env = np.array([2.0 * A * A, 2.0 * A, 0.5])
    tail = gaussian_tail_integral(env, q.hi - A) + gaussian_tail_integral(env, -A - q.lo)
    return DivergenceValue(est.value, est.error + tail, "KL")


def _chi2_integrand(f, g, y):
    pf, pg = f.pdf(y), g.pdf(y)
    out = np.empty_like(pf)
    ok = pg > 1e-280
    out[ok] = (pf[ok] - pg[ok]) ** 2 / pg[ok]
    if not ok.all():
        ys = y[~ok]
        lf, lg = f.log_pdf(ys), g.log_pdf(ys)
        with np.errstate(divide="ignore"):
            ldiff = np.maximum(lf, lg) + np.log(-np.expm1(-np.abs(lf - lg)))
        out[~ok] = np.exp(2 * ldiff - lg)
    return out


def _one_side_chi2_tail(a, v, b, wv, edge):
    """Bound ``int_edge^inf f^2/g`` for atoms ``a`` (masses ``v``) over ``b`` (``wv``).

    ``f^2 <= sum_i v_i phi(y - a_i)^2`` by Jensen and ``g >= wv_j phi(y - b_j)``
    for every ``j``; the resulting Gaussian integral is closed form.
    """
    c = 2 * a[:, None] - b[None, :]
    logs = (np.log(v)[:, None] - np.log(wv)[None, :] + (a[:, None] - b[None, :]) ** 2
            + log_ndtr(c - edge))
    return float(np.exp(np.min(logsumexp(logs, axis=0))))


def chi2_tail_bound(f, g, q: QuadratureScheme) -> float:
    """Bound on ``int (f-g)^2/g`` outside the domain of ``q``."""
    A = max(f.amplitude, g.amplitude)
    if isinstance(f, MixtureDensity) and isinstance(g, MixtureDensity):
        a, v, b, wv = f.atoms, f.masses, g.atoms, g.masses
        right = _one_side_chi2_tail(a, v, b, wv, q.hi)
        left = _one_side_chi2_tail(-a, v, -b, wv, -q.lo)
        f2g = right + left
    else:
        # generic envelopes f <= phi(|y|-A), g >= phi(|y|+A)
        f2g = math.exp(4 * A * A) * float(gauss_q(q.hi - 3 * A) + gauss_q(-3 * A - q.lo))
    return f2g + _mass_tail(q, A)


def chi2(f, g, q: QuadratureScheme | None = None,
         max_integrand: float | None = UNBOUNDED_LEVEL) -> DivergenceValue:
    """Chi-square divergence ``int (f - g)^2 / g`` of ``f`` from reference ``g``.

    The default domain is ``[-3A-8, 3A+8]`` because the integrand of
    ``f^2/g`` peaks near ``2 theta_i - theta_j``, beyond the usual ``A + 8``.

    Raises
    ------
    Unbounded
        If the integrand exceeds ``max_integrand`` on the grid.  Pass
        ``None`` to disable the check.
    """
    f, g = _density(f), _density(g)
    A, q = _common_scheme(f, g, q, margin_scale=3.0)
    vals = _chi2_integrand(f, g, q.nodes)
    if max_integrand is not None and np.max(vals) > max_integrand:
        raise Unbounded(f"chi-square integrand reaches {np.max(vals):.3g}")
    est = q.estimate(lambda y: _chi2_integrand(f, g, y))
    return DivergenceValue(max(est.value, 0.0), est.error + chi2_tail_bound(f, g, q), "CHI2")


def entropy_gap_upper_bound(log_l2: float, chi2_val: float) -> float:
    """``log_l2 * sqrt(chi2) + chi2``: bounds ``h(f) - h(g)`` given ``chi2(g||f)``."""
    if log_l2 < 0 or chi2_val < 0:
        raise ValueError("inputs must be nonnegative")
    return log_l2 * math.sqrt(chi2_val) + chi2_val


def log_l2_upper_bound(A: float) -> float:
    """``sqrt(10) (1 + A^2)``, a universal bound on the log-density L2 norm."""
    if not A > 0:
        raise ValueError("A must be positive")
    return math.sqrt(10.0) * (1.0 + A * A)
