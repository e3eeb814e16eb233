"""Wrapping real-line laws onto the circle, plus the constants and
inequalities used to turn wrapped non-uniformity into a support-size
lower bound.

The wrapping map sends ``w`` to ``(pi/B) (w mod 2B)`` where
``w mod 2B = w - 2B floor((w + B) / (2B))``, landing in ``[-pi, pi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .divergence import DivergenceValue, kl as line_kl
from .mixture import (
    DiscreteInput,
    Estimate,
    MixtureDensity,
    QuadratureScheme,
    UniformNoise,
    gauss_q,
    mutual_information,
    phi,
)

CIRCLE_POINTS = 4096
TRUNCATION_TARGET = 1e-12
_EPS = float(np.finfo(float).eps)


class DomainError(ValueError):
    """Argument outside the domain of a formula."""


class ChainViolation(ArithmeticError):
    """A link of the converse inequality chain failed beyond its error bars."""

    def __init__(self, link: "ChainLink", report: "ChainReport"):
        super().__init__(
            f"link '{link.name}' fails: lhs={link.lhs:.6g}±{link.lhs_err:.2g} "
            f"> rhs={link.rhs:.6g}±{link.rhs_err:.2g} (slack {link.slack:.3g})"
        )
        self.link = link
        self.slack = link.slack
        self.report = report


# ---------------------------------------------------------------------------
# the map and wrapped densities
# ---------------------------------------------------------------------------


def wrap_value(w, B: float):
    """Map ``w`` to ``[-pi, pi)`` by reduction modulo ``2B`` and rescaling."""
    w = np.asarray(w, dtype=float)
    r = w - 2 * B * np.floor((w + B) / (2 * B))
    out = (math.pi / B) * r
    return float(out) if out.ndim == 0 else out


def _sup_beyond(base, r: float) -> float:
    """Upper bound on ``base.pdf(y)`` for ``|y| >= r``, assuming ``r >= amplitude``."""
    A = base.amplitude
    if isinstance(base, UniformNoise):
        return float(gauss_q(r - A)) / (2 * A)
    return float(phi(r - A))


def default_truncation(A: float) -> int:
    """Starting series cutoff ``max(3, ceil(1 + sqrt(18 / (2 A^2))))``."""
    return max(3, math.ceil(1 + math.sqrt(18.0 / (2.0 * A * A))))


def series_tail_bound(base, B: float, k: int) -> float:
    """Bound on the wrapped-series terms with ``|k'| > k``, uniformly in angle.

    For ``|k'| >= k + 1`` the argument satisfies ``|y| >= B (2|k'| - 1)``.
    """
    total = 0.0
    j = k + 1
    while True:
        r = B * (2 * j - 1)
        if r < base.amplitude:
            return math.inf
        term = _sup_beyond(base, r)
        total += term
        if term < 1e-300 or term < 1e-18 * total or j > k + 10_000:
            break
        j += 1
    return (B / math.pi) * 2 * total


@dataclass(frozen=True, eq=False)
class WrappedLaw:
    """Law of ``(pi/B)(W mod 2B)`` for a real-line law ``base``.

    Parameters
    ----------
    base : MixtureDensity, DiscreteInput or UniformNoise
    B : float
        Half-period of the reduction.
    truncation_k : int, optional
        Series cutoff ``|k| <= truncation_k``.  By default it starts at the
        usual formula and grows until the dropped tail is below ``1e-12``.
    """

    base: object
    B: float
    truncation_k: int | None = None
    tail_bound: float = field(init=False)

    def __post_init__(self):
        base = self.base.output() if isinstance(self.base, DiscreteInput) else self.base
        object.__setattr__(self, "base", base)
        if not self.B > 0:
            raise DomainError("B must be positive")
        k = self.truncation_k
        if k is None:
            k = default_truncation(max(base.amplitude, self.B))
            while series_tail_bound(base, self.B, k) > TRUNCATION_TARGET and k < 10_000:
                k += 1
        if k < 1:
            raise DomainError("truncation_k must be positive")
        object.__setattr__(self, "truncation_k", int(k))
        object.__setattr__(self, "tail_bound", series_tail_bound(base, self.B, k))

    def pdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        ks = np.arange(-self.truncation_k, self.truncation_k + 1)
        y = (self.B / math.pi) * (theta.reshape(-1, 1) + 2 * math.pi * ks)
        vals = self.base.pdf(y.ravel()).reshape(y.shape).sum(axis=1)
        out = (self.B / math.pi) * vals
        return out.reshape(theta.shape)


def wrapped_pdf(law: WrappedLaw, theta):
    """Wrapped density at ``theta``; accuracy is ``law.tail_bound``."""
    return law.pdf(theta)


def uniform_wrapped(A: float) -> WrappedLaw:
    """Wrapped output of a uniform input on ``[-A, A]``; exactly uniform."""
    return WrappedLaw(UniformNoise(A), A)


def circle_grid(n: int = CIRCLE_POINTS) -> np.ndarray:
    return -math.pi + 2 * math.pi * np.arange(n) / n


def _circle_estimate(values: np.ndarray) -> Estimate:
    """Periodic trapezoid rule on a uniform grid, with a halving error estimate."""
    n = values.size
    h = 2 * math.pi / n
    full = h * float(values.sum())
    half = 2 * h * float(values[::2].sum())
    return Estimate(full, abs(full - half) + 16 * _EPS * h * float(np.abs(values).sum()))


def wrapped_chi2_vs_uniform(d, n: int = CIRCLE_POINTS) -> DivergenceValue:
    """Chi-square of the wrapped output (``B = A``) from the uniform circle law."""
    law = d if isinstance(d, WrappedLaw) else WrappedLaw(d, d.amplitude)
    f = law.pdf(circle_grid(n))
    u = 1 / (2 * math.pi)
    dev = f - u
    est = _circle_estimate(dev * dev)
    tau = law.tail_bound
    trunc = 2 * math.pi * (2 * float(np.abs(dev).max()) * tau + tau * tau) * 2 * math.pi
    return DivergenceValue(2 * math.pi * est.value, 2 * math.pi * est.error + trunc, "CHI2")


def wrapped_tv(a: WrappedLaw, b: WrappedLaw, n: int = CIRCLE_POINTS) -> DivergenceValue:
    theta = circle_grid(n)
    est = _circle_estimate(0.5 * np.abs(a.pdf(theta) - b.pdf(theta)))
    trunc = math.pi * (a.tail_bound + b.tail_bound)
    return DivergenceValue(max(est.value, 0.0), est.error + trunc, "TV")


def wrapped_kl(a: WrappedLaw, b: WrappedLaw, n: int = CIRCLE_POINTS) -> DivergenceValue:
    theta = circle_grid(n)
    fa, fb = a.pdf(theta), b.pdf(theta)
    lr = np.log(fa) - np.log(fb)
    est = _circle_estimate(fa * lr)
    # first-order sensitivity of the integrand to the truncated series terms
    sens = float(np.max(np.abs(lr) + 1 + fa / fb))
    trunc = 2 * math.pi * sens * (a.tail_bound + b.tail_bound)
    return DivergenceValue(est.value, est.error + trunc, "KL")


def wrapped_chi2_lower_bound(K: int, A: float) -> float:
    """``(1/2) exp(-4 pi^2 K^2 / A^2)``: minimal wrapped chi-square of a ``K``-atom input."""
    if int(K) != K or K < 2:
        raise DomainError("K must be an integer >= 2")
    if not A > 0:
        raise DomainError("A must be positive")
    return 0.5 * math.exp(-4 * math.pi**2 * K * K / (A * A))


# ---------------------------------------------------------------------------
# constants and scalar inequalities
# ---------------------------------------------------------------------------



@dataclass(frozen=True)
class WrapConstants:
    """Numerical constants of the wrapped-law argument.

    Attributes
    ----------
    alpha0 : float
        ``int_{-1}^{1} exp(-t^2/2) dt``.
    m0 : float
        Sup bound on the wrapped density of near-optimal inputs.
    c0 : float
        ``1 / (4 (2 pi m0 + 1))``.
    c_l : float
        ``1 / (8 (2 pi m0 + 1))``, the converse constant.
    b0 : float
        ``sqrt(pi e / 2)``.
    """

    alpha0: float
    m0: float
    c0: float
    c_l: float
    b0: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("alpha0", "m0", "c0", "c_l", "b0")}


CONSTANT_DPS = 40


@lru_cache(maxsize=None)
def exact_constants() -> dict:
    """The wrapped-law constants as 40-digit ``mpmath`` numbers.

    ``alpha0`` comes from adaptive quadrature at that precision, so every
    rounded double below is correctly rounded.
    """
    with mpmath.workdps(CONSTANT_DPS):
        e, pi = mpmath.e, mpmath.pi
        a0 = mpmath.quad(lambda t: mpmath.exp(-t * t / 2), [-1, 1])
        pre = 3 / pi + 1 / mpmath.sqrt(2 * pi)
        out = {"alpha0": a0, "b0": mpmath.sqrt(pi * e / 2),
               "m0_primary": pre * (2 * e**2 / a0) * pi * e**2,
               "m0_alternate": pre * e**3 / a0}
        for tag in ("primary", "alternate"):
            m0 = out[f"m0_{tag}"]
            out[f"c0_{tag}"] = 1 / (4 * (2 * pi * m0 + 1))
            out[f"c_l_{tag}"] = 1 / (8 * (2 * pi * m0 + 1))
        return out


def _alpha0() -> float:
    return float(exact_constants()["alpha0"])


def m0_variants() -> dict[str, float]:
    """The two published forms of the wrapped-density sup constant.

    ``primary`` carries the factor ``(2e^2/alpha0) pi e^2`` and ``alternate``
    the factor ``e^3/alpha0``.  A third form, ``(2e^2/alpha0)(e/2)``, reduces
    algebraically to ``alternate``.
    """
    k = exact_constants()
    return {"primary": float(k["m0_primary"]), "alternate": float(k["m0_alternate"])}


def _build_constants(tag: str) -> WrapConstants:
    k = exact_constants()
    return WrapConstants(float(k["alpha0"]), float(k[f"m0_{tag}"]), float(k[f"c0_{tag}"]),
                         float(k[f"c_l_{tag}"]), float(k["b0"]))


@lru_cache(maxsize=None)
def constants() -> WrapConstants:
    """Canonical constants, using the ``primary`` sup constant."""
    return _build_constants("primary")


@lru_cache(maxsize=None)
def alternate_constants() -> WrapConstants:
    """Constants rebuilt from the smaller ``alternate`` sup constant."""
    return _build_constants("alternate")


def binary_kl(p: float, q: float) -> float:
    """Binary relative entropy ``d(p||q)`` in nats."""
    for name, v in (("p", p), ("q", q)):
        if not 0 < v < 1:
            raise DomainError(f"{name} must lie in (0, 1), got {v!r}")
    return p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))


def binary_kl_lower(p: float, q: float) -> float:
    """``p log(p/q) + q - p``, a lower bound on :func:`binary_kl`."""
    return p * math.log(p / q) + q - p


def peak_stability_bound(eps: float, f_star_sup: float) -> float:
    """``max(eps/alpha0, (2 e^2/alpha0) f_star_sup)``.

    Bounds the sup of an output density whose relative entropy to the
    optimal output law is at most ``eps``.
    """
    a0 = constants().alpha0
    return max(eps / a0, 2 * math.e**2 / a0 * f_star_sup)


def chi2_to_tv_lower(chi2_val: float, m_sup: float) -> float:
    """``chi2 / (2 (2 pi M + 1))``, a TV lower bound for circle laws with sup ``<= M``."""
    if chi2_val < 0 or not m_sup > 0:
        raise DomainError("need chi2 >= 0 and M > 0")
    return chi2_val / (2 * (2 * math.pi * m_sup + 1))


# ---------------------------------------------------------------------------
# converse chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainLink:
    """One inequality ``lhs <= rhs`` checked with error bars."""

    name: str
    lhs: float
    rhs: float
    lhs_err: float
    rhs_err: float

    @property
    def slack(self) -> float:
        """``(rhs + rhs_err) - (lhs - lhs_err)``; negative means a certain violation."""
        return (self.rhs + self.rhs_err) - (self.lhs - self.lhs_err)

    @property
    def holds(self) -> bool:
        return self.slack >= 0

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "lhs_err": self.lhs_err, "rhs_err": self.rhs_err, "holds": self.holds}


@dataclass(frozen=True)
class ChainReport:
    amplitude: float
    support_size: int
    epsilon: Estimate
    quantities: dict
    links: tuple

    @property
    def holds(self) -> bool:
        return all(link.holds for link in self.links)

    def first_failure(self) -> ChainLink | None:
        return next((link for link in self.links if not link.holds), None)

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "support_size": self.support_size,
            "epsilon": {"value": self.epsilon.value, "error": self.epsilon.error},
            "quantities": {k: {"value": v.value, "error": v.error}
                           for k, v in self.quantities.items()},
            "links": [link.to_dict() for link in self.links],
        }


def _interval(lo: float, hi: float) -> Estimate:
    return Estimate(0.5 * (lo + hi), 0.5 * (hi - lo))


def _sqrt_half(e: Estimate) -> Estimate:
    """``sqrt(x/2)`` of an interval, clipping a negative lower end at zero."""
    return _interval(math.sqrt(max(e.lo, 0.0) / 2), math.sqrt(max(e.hi, 0.0) / 2))


def _est(v: DivergenceValue) -> Estimate:
    return Estimate(v.value, v.error_bound)


def _sum(*es: Estimate) -> Estimate:
    return Estimate(sum(e.value for e in es), sum(e.error for e in es))


def converse_chain_audit(d: DiscreteInput, ref, q: QuadratureScheme | None = None,
                         n: int = CIRCLE_POINTS, raise_on_violation: bool = True) -> ChainReport:
    """Evaluate the chain from wrapped non-uniformity to capacity gap.

    Parameters
    ----------
    d : DiscreteInput
        Any feasible input; its own gap ``eps = C - I`` is used.
    ref : CapacityResult
        Reference solution supplying ``C`` and the optimal output law.
    q : QuadratureScheme, optional
        Line quadrature for the unwrapped quantities.

    Returns
    -------
    ChainReport
        Seven quantities ``L0 <= ... <= L6`` with error bars and the six links.

    Raises
    ------
    ChainViolation
        When a link fails by more than its combined error bars and
        ``raise_on_violation`` is set.
    """
    A = d.amplitude
    if ref.optimal_input.amplitude != A:
        raise DomainError("reference solution is for a different amplitude")
    c = constants()
    q = QuadratureScheme.for_amplitude(A) if q is None else q
    K = d.size

    f_x = d.output()
    f_u = UniformNoise(A)
    f_star = ref.optimal_input.output()
    w_x, w_u, w_star = WrappedLaw(f_x, A), WrappedLaw(f_u, A), WrappedLaw(f_star, A)

    info = mutual_information(d, q)
    c_lo = ref.capacity_nats - ref.quadrature_error
    c_hi = ref.capacity_nats + ref.convergence_gap + ref.quadrature_error
    eps = _interval(max(c_lo - info.hi, 0.0), max(c_hi - info.lo, 0.0))

    chi2_w = _est(wrapped_chi2_vs_uniform(w_x, n))
    tv_xu = _est(wrapped_tv(w_x, w_u, n))
    tv_xs = _est(wrapped_tv(w_x, w_star, n))
    tv_us = _est(wrapped_tv(w_u, w_star, n))
    kl_wx = _est(wrapped_kl(w_x, w_star, n))
    kl_wu = _est(wrapped_kl(w_u, w_star, n))
    kl_x = _est(line_kl(f_x, f_star, q))
    kl_u = _est(line_kl(f_u, f_star, q))

    L = {
        "wrapped_chi2_floor": Estimate(c.c0 / 2 * math.exp(-4 * math.pi**2 * K * K / (A * A)), 0.0),
        "scaled_wrapped_chi2": Estimate(c.c0 * chi2_w.value, c.c0 * chi2_w.error),
        "wrapped_tv_to_uniform": tv_xu,
        "triangle_via_optimal": _sum(tv_xs, tv_us),
        "pinsker_wrapped": _sum(_sqrt_half(kl_wx), _sqrt_half(kl_wu)),
        "pinsker_line": _sum(_sqrt_half(kl_x), _sqrt_half(kl_u)),
        "gap_budget": _sum(_sqrt_half(eps), Estimate(math.sqrt(c.b0 / (2 * A)), 0.0)),
    }
    names = list(L)
    links = tuple(
        ChainLink(f"{a} <= {b}", L[a].value, L[b].value, L[a].error, L[b].error)
        for a, b in zip(names[:-1], names[1:])
    )
    quantities = dict(L)
    quantities.update({
        "wrapped_chi2": chi2_w, "mutual_information": Estimate(*info),
        "kl_line_input": kl_x, "kl_line_uniform": kl_u,
        "kl_wrapped_input": kl_wx, "kl_wrapped_uniform": kl_wu,
    })
    report = ChainReport(A, K, eps, quantities, links)
    bad = report.first_failure()
    if bad is not None and raise_on_violation:
        raise ChainViolation(bad, report)
    return report
