"""Closed-form support-size bounds and the theory-versus-solver sweep.

Everything except :func:`scaling_sweep` is plain arithmetic.  Hypotheses
of the underlying results (``A >= 1``, ``eps <= 1/A``, ``A > 1600``) are
either enforced with :class:`DomainError` or reported as flags; evaluating
outside them is allowed where it is cheap and always labelled.
"""
from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import mpmath

from .capacity import (
    BudgetExhausted,
    CapacityResult,
    KepsResult,
    NoConvergence,
    OptimizerBudget,
    k_eps,
    reference_capacity,
)
from .wrapping import DomainError, constants, exact_constants

DPS = 40
with mpmath.workdps(DPS):
    KAPPA_MIN = float(16 * mpmath.e**3)
LARGE_A = 1600.0
READINGS = ("product", "separate")


def _hp(fn):
    """Evaluate ``fn`` at ``DPS`` digits; callers round the result once."""

    @functools.wraps(fn)
    def wrapped(*args, **kw):
        with mpmath.workdps(DPS):
            return fn(*args, **kw)

    return wrapped


class OutOfRegime:
    """Marker returned when no branch of the approximation bound applies."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "OUT_OF_REGIME"

    def __str__(self) -> str:
        return "out_of_regime"


OUT_OF_REGIME = OutOfRegime()


def _check_kappa(kappa: float) -> None:
    if not kappa >= KAPPA_MIN:
        raise DomainError(f"kappa={kappa!r} is below 16 e^3 = {KAPPA_MIN!r}")


def _log_pos(x):
    return mpmath.log(x) if x > 1 else mpmath.mpf(0)


def _k(name: str):
    return exact_constants()[name]


@_hp
def _floor_mp(A, kappa, reading):
    A, kappa = mpmath.mpf(A), mpmath.mpf(kappa)
    if reading == "product":
        return 3 * mpmath.sqrt(kappa * A)
    if reading == "separate":
        return 3 * mpmath.sqrt(kappa) * A
    raise ValueError(f"reading must be one of {READINGS}")


def regime_floor(A: float, kappa: float = KAPPA_MIN, reading: str = "product") -> float:
    """Smallest ``m`` covered by the quadratic regime.

    ``reading="product"`` gives ``3 sqrt(kappa A)``; ``"separate"`` gives
    ``3 sqrt(kappa) A``.
    """
    return float(_floor_mp(A, kappa, reading))


# ---------------------------------------------------------------------------
# achievability
# ---------------------------------------------------------------------------


@_hp
def _delta_mp(A, eps):
    A, eps = mpmath.mpf(A), mpmath.mpf(eps)
    return min(eps / 2, eps * eps / (40 * (1 + A * A) ** 2))


def delta_a(A: float, eps: float) -> float:
    """``min(eps/2, eps^2 / (40 (1 + A^2)^2))``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    return float(_delta_mp(A, eps))


@dataclass(frozen=True)
class Achievability:
    m: int
    m1: int
    m2: int
    delta_a: float
    regime: str


@_hp
def _achievability_mp(A, eps, kappa, reading):
    d = _delta_mp(A, eps)
    A, kappa = mpmath.mpf(A), mpmath.mpf(kappa)
    c = mpmath.log(kappa) / (4 * kappa)
    L = mpmath.log(1 / d)
    m1 = int(mpmath.ceil(_floor_mp(A, kappa, reading) + A * mpmath.sqrt(L / c)))
    m2 = int(mpmath.ceil(max(mpmath.mpf(3), kappa * A * A) + A * A * L))
    return m1, m2, d, m1 <= kappa * A * A


def achievability_m(A: float, eps: float, kappa: float = KAPPA_MIN,
                    reading: str = "product") -> Achievability:
    """Support size sufficient for an ``eps``-optimal input.

    ``m1`` serves the quadratic regime and ``m2`` the large-``m`` regime;
    ``m = m1`` when ``m1 <= kappa A^2`` and ``m2`` otherwise.

    Raises
    ------
    DomainError
        Unless ``A >= 1``, ``0 < eps <= 1`` and ``kappa >= 16 e^3``.
    """
    if not A >= 1:
        raise DomainError(f"A={A!r} must be at least 1")
    if not 0 < eps <= 1:
        raise DomainError(f"eps={eps!r} must lie in (0, 1]")
    _check_kappa(kappa)
    m1, m2, d, small = _achievability_mp(A, eps, kappa, reading)
    if small:
        return Achievability(m1, m1, m2, float(d), "quadratic")
    return Achievability(m2, m1, m2, float(d), "large_m")


@_hp
def _branches_mp(m, A, kappa, reading):
    m, A, kappa = mpmath.mpf(m), mpmath.mpf(A), mpmath.mpf(kappa)
    return {
        "large_m": float(mpmath.exp(-m * mpmath.log(m) / (A * A))),
        "large_m_applies": bool(m >= kappa * A * A),
        "quadratic": float(mpmath.exp(-(mpmath.log(kappa) / (4 * kappa)) * m * m / (A * A))),
        "quadratic_applies": bool(_floor_mp(A, kappa, reading) <= m <= kappa * A * A),
    }


def approximation_error_branches(m: int, A: float, kappa: float = KAPPA_MIN,
                                 reading: str = "product") -> dict:
    """Both regime formulas with their applicability flags."""
    _check_kappa(kappa)
    return _branches_mp(m, A, kappa, reading)


def approximation_error_bound(m: int, A: float, kappa: float = KAPPA_MIN,
                              reading: str = "product"):
    """Chi-square error achievable by ``m``-atom mixtures of bounded-support laws.

    Returns the large-``m`` formula when ``m >= kappa A^2`` (also at
    equality), the quadratic formula on ``[floor, kappa A^2)``, and
    :data:`OUT_OF_REGIME` below the floor.
    """
    if int(m) != m or m < 1:
        raise DomainError("m must be a positive integer")
    if not A > 0:
        raise DomainError("A must be positive")
    b = approximation_error_branches(int(m), A, kappa, reading)
    if b["large_m_applies"]:
        return b["large_m"]
    if b["quadratic_applies"]:
        return b["quadratic"]
    return OUT_OF_REGIME


# ---------------------------------------------------------------------------
# converse
# ---------------------------------------------------------------------------


@_hp
def _converse_mp(A, eps, c_l):
    A, eps = mpmath.mpf(A), mpmath.mpf(eps)
    arg = c_l / (mpmath.sqrt(eps / 2) + mpmath.sqrt(_k("b0") / (2 * A)))
    return A / (2 * mpmath.pi) * mpmath.sqrt(_log_pos(arg))


def converse_k_lower(A: float, eps: float, allow_out_of_hypothesis: bool = False,
                     c_l: float | None = None) -> float:
    """``(A / 2 pi) sqrt(log+(c_L / (sqrt(eps/2) + sqrt(b0/(2A)))))``.

    Raises
    ------
    DomainError
        If ``eps <= 0``, or if ``A < 1`` or ``eps > 1/A`` without
        ``allow_out_of_hypothesis``.
    """
    if not eps > 0 or not A > 0:
        raise DomainError("A and eps must be positive")
    if not allow_out_of_hypothesis:
        if A < 1:
            raise DomainError(f"A={A!r} must be at least 1")
        if eps > 1 / A:
            raise DomainError(f"eps={eps!r} exceeds 1/A={1 / A!r}")
    c = _k("c_l_primary") if c_l is None else mpmath.mpf(c_l)
    return float(_converse_mp(A, eps, c))


@_hp
def _simplified_constant_mp(valid):
    c_l, b0 = _k("c_l_primary"), _k("b0")
    if valid:
        return 2 * c_l**2 / (1 + mpmath.sqrt(b0)) ** 2
    return 2 * c_l**2 / (1 + b0)


def simplified_converse_constant(valid: bool = False) -> float:
    """Constant ``c`` in ``K >= A sqrt(log+(c A)) / (2 sqrt(2) pi)``.

    ``valid=False`` gives the published ``2 c_L^2 / (1 + b0)``.  That form
    relies on ``sqrt(x) + sqrt(y) <= sqrt(x + y)``, which fails; the
    ``valid=True`` form ``2 c_L^2 / (1 + sqrt(b0))^2`` follows from
    ``eps <= 1/A`` alone.
    """
    return float(_simplified_constant_mp(valid))


@_hp
def _scaled_log_form(A, c):
    A = mpmath.mpf(A)
    return A / (2 * mpmath.sqrt(2) * mpmath.pi) * mpmath.sqrt(_log_pos(c * A))


def converse_k_lower_simplified(A: float, valid: bool = False) -> float:
    """``A sqrt(log+(c A)) / (2 sqrt(2) pi)``; see :func:`simplified_converse_constant`."""
    if not A > 0:
        raise DomainError("A must be positive")
    return float(_scaled_log_form(A, _simplified_constant_mp(valid)))


# ---------------------------------------------------------------------------
# large-A scaling band
# ---------------------------------------------------------------------------


@_hp
def _c1_mp():
    e, pi = mpmath.e, mpmath.pi
    inner = (6 + mpmath.sqrt(2 * pi)) * 2 * pi * e**4 / _k("alpha0") + 1
    return 1 / (8 * (1 + mpmath.sqrt(pi * e / 2)) * inner**2)


@_hp
def _c2_mp(beta):
    return (2 * mpmath.mpf(beta) + 5) * mpmath.e / (4 * mpmath.log(2) + 3)


@_hp
def _c3_mp():
    e = mpmath.e
    return 8 * e * mpmath.sqrt(2 * e / (4 * mpmath.log(2) + 3))


def c1() -> float:
    return float(_c1_mp())


def c2(beta: float) -> float:
    return float(_c2_mp(beta))


def c3() -> float:
    return float(_c3_mp())


@dataclass(frozen=True)
class ScalingBand:
    poly_lower: float
    poly_upper: float
    exp_lower: float
    exp_upper: float
    in_hypothesis: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@_hp
def _band_mp(A, beta):
    A = mpmath.mpf(A)
    low = _scaled_log_form(A, _c1_mp())
    poly_up = 32 * mpmath.e * A * mpmath.sqrt(_c2_mp(beta) * _log_pos(A))
    exp_up = _c3_mp() * A * mpmath.sqrt(A)
    return low, poly_up, exp_up


def scaling_band(A: float, beta: float = 1.0) -> ScalingBand:
    """Lower and upper support-size edges for polynomial and exponential gaps.

    The polynomial band is for ``eps = A^-beta`` and the exponential one for
    ``eps = e^-A``.  Both share the same lower edge.  ``in_hypothesis`` is
    ``A > 1600``; outside it the numbers carry no guarantee.
    """
    if not A > 0:
        raise DomainError("A must be positive")
    if not beta >= 1:
        raise DomainError("beta must be at least 1")
    low, poly_up, exp_up = _band_mp(A, beta)
    low = float(low)
    return ScalingBand(low, float(poly_up), low, float(exp_up), A > LARGE_A)


@_hp
def _derivation_mp(beta, kappa):
    kappa = mpmath.mpf(kappa)
    lk = mpmath.log(kappa)
    return (4 * mpmath.sqrt(4 * (2 * mpmath.mpf(beta) + 5) * kappa / lk),
            2 * mpmath.sqrt(2 * kappa / lk))


def derivation_constants(beta: float = 1.0, kappa: float = KAPPA_MIN) -> dict:
    """Prefactors ``C`` of ``C A sqrt(log A)`` and ``C A^(3/2)`` from the upper-bound derivation."""
    _check_kappa(kappa)
    poly, exp = _derivation_mp(beta, kappa)
    return {"poly": float(poly), "exp": float(exp)}


# ---------------------------------------------------------------------------
# report for one (A, eps)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """All closed-form quantities for one ``(A, eps)``.

    Fields that fall outside their hypotheses are ``None`` and listed in
    ``flags``.
    """

    A: float
    eps: float
    kappa: float
    m1: int | None
    m2: int | None
    m_achievability: int | None
    delta_a: float
    converse_lower: float | None
    regime: str | None
    constants: dict
    beta: float | None = None
    band: ScalingBand | None = None
    reading: str = "product"
    flags: tuple = ()

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "A", "eps", "kappa", "beta", "reading", "m1", "m2", "m_achievability",
            "delta_a", "converse_lower", "regime", "constants")}
        out["band"] = None if self.band is None else self.band.to_dict()
        out["flags"] = list(self.flags)
        return out


def bound_report(A: float, eps: float, kappa: float = KAPPA_MIN, beta: float | None = None,
                 reading: str = "product", allow_out_of_hypothesis: bool = False) -> BoundReport:
    """Evaluate every closed-form bound at ``(A, eps)``.

    Raises
    ------
    DomainError
        On invalid arguments, or when a hypothesis fails and
        ``allow_out_of_hypothesis`` is not set.
    """
    if not (A > 0 and math.isfinite(A)):
        raise DomainError("A must be positive and finite")
    if not eps > 0:
        raise DomainError("eps must be positive")
    _check_kappa(kappa)
    flags = []
    ach = None
    try:
        ach = achievability_m(A, eps, kappa, reading)
    except DomainError as exc:
        if not allow_out_of_hypothesis:
            raise
        flags.append(f"achievability: {exc}")
    conv = None
    if A < 1 or eps > 1 / A:
        if not allow_out_of_hypothesis:
            converse_k_lower(A, eps)  # raises with the specific reason
        flags.append("converse evaluated outside eps <= 1/A, A >= 1")
        conv = converse_k_lower(A, eps, allow_out_of_hypothesis=True)
    else:
        conv = converse_k_lower(A, eps)
    band = scaling_band(A, 1.0 if beta is None else beta)
    if not band.in_hypothesis:
        flags.append("scaling band outside A > 1600")
    k = constants()
    consts = {"c1": c1(), "c3": c3(), "c_l": k.c_l, "b0": k.b0, "alpha0": k.alpha0, "m0": k.m0}
    if beta is not None:
        consts["c2"] = c2(beta)
    return BoundReport(
        A=float(A), eps=float(eps), kappa=float(kappa),
        m1=None if ach is None else ach.m1, m2=None if ach is None else ach.m2,
        m_achievability=None if ach is None else ach.m, delta_a=delta_a(A, min(eps, 1.0)),
        converse_lower=conv, regime=None if ach is None else ach.regime, constants=consts,
        beta=beta, band=band, reading=reading, flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpsRule:
    """How the target gap depends on ``A``: ``A^-beta``, ``e^-A`` or a constant."""

    kind: str
    beta: float = 1.0
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("poly", "exp", "fixed"):
            raise ValueError(f"unknown eps rule {self.kind!r}")
        if self.kind == "fixed" and not (self.value is not None and self.value > 0):
            raise ValueError("fixed eps rule needs a positive value")
        if self.kind == "poly" and not self.beta >= 1:
            raise ValueError("beta must be at least 1")

    def eps_for(self, A: float) -> float:
        if self.kind == "poly":
            return A ** (-self.beta)
        if self.kind == "exp":
            return math.exp(-A)
        return float(self.value)

    def describe(self) -> str:
        if self.kind == "poly":
            return f"poly(beta={self.beta!r})"
        if self.kind == "exp":
            return "exp"
        return f"fixed({self.value!r})"


SWEEP_COLUMNS = (
    "A", "eps", "capacity_nats", "support_size_proxy", "k_eps_empirical",
    "converse_lower", "converse_in_hypothesis", "achievability_m", "achievability_regime",
    "band_poly_lower", "band_poly_upper", "band_exp_lower", "band_exp_upper",
    "band_in_hypothesis", "local_exponent", "warnings",
)

COLUMN_LEGEND = {
    "A": "amplitude limit",
    "eps": "target capacity gap in nats",
    "capacity_nats": "reference capacity C(A)",
    "support_size_proxy": "atoms of the optimal input after pruning weights below 1e-12",
    "k_eps_empirical": "smallest K found with I >= C - eps",
    "converse_lower": "converse lower bound on K_eps (A >= 1, eps <= 1/A)",
    "converse_in_hypothesis": "whether eps <= 1/A and A >= 1",
    "achievability_m": "achievability support size m (A >= 1, eps <= 1)",
    "achievability_regime": "quadratic if m1 <= kappa A^2 else large_m",
    "band_poly_lower": "scaling-band lower edge (shared by both gap rules)",
    "band_poly_upper": "scaling-band upper edge for eps = A^-beta",
    "band_exp_lower": "scaling-band lower edge for eps = e^-A",
    "band_exp_upper": "scaling-band upper edge for eps = e^-A",
    "band_in_hypothesis": "whether A > 1600",
    "local_exponent": "finite-difference d log K / d log A over the empirical column",
    "warnings": "semicolon-separated notes",
}


@dataclass
class SweepTable:
    """Rows of the scaling sweep, one per amplitude, in input order."""

    rows: list = field(default_factory=list)
    columns: tuple = SWEEP_COLUMNS

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "rows": self.rows}

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()


def format_cell(v) -> str:
    """Shortest round-trip text for numbers, empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _local_exponents(As, Ks):
    out = [None] * len(As)
    pts = [(i, a, k) for i, (a, k) in enumerate(zip(As, Ks)) if k is not None and k > 0]
    for j, (i, a, k) in enumerate(pts):
        lo = pts[j - 1] if j > 0 else None
        hi = pts[j + 1] if j + 1 < len(pts) else None
        left, right = lo or (i, a, k), hi or (i, a, k)
        if left[1] == right[1]:
            continue
        out[i] = (math.log(right[2]) - math.log(left[2])) / (math.log(right[1]) - math.log(left[1]))
    return out


def scaling_sweep(A_list, eps_rule: EpsRule, budget: OptimizerBudget = OptimizerBudget(),
                  kappa: float = KAPPA_MIN, beta: float = 1.0,
                  capacity_fn: Callable[[float], CapacityResult] | None = None,
                  keps_fn: Callable[..., KepsResult] | None = None,
                  empirical_range=(0.25, 16.0)) -> SweepTable:
    """Compare the solver's ``K_eps`` with the closed-form bounds over amplitudes.

    ``capacity_fn`` and ``keps_fn`` default to the direct solvers; callers
    can pass cached versions to make interrupted sweeps resumable.
    """
    capacity_fn = capacity_fn or (lambda A: reference_capacity(A))
    keps_fn = keps_fn or (lambda A, eps, ref: k_eps(A, eps, budget, ref))
    rows = []
    for A in A_list:
        A = float(A)
        eps = eps_rule.eps_for(A)
        warn = []
        row = {"A": A, "eps": eps}
        if empirical_range[0] <= A <= empirical_range[1]:
            try:
                ref = capacity_fn(A)
                row["capacity_nats"] = ref.capacity_nats
                row["support_size_proxy"] = ref.support_size
                row["k_eps_empirical"] = keps_fn(A, eps, ref).k_eps
            except NoConvergence as exc:
                warn.append(f"capacity: {exc}")
            except BudgetExhausted as exc:
                warn.append(f"k_eps: {exc}")
            except ValueError as exc:
                warn.append(f"k_eps: {exc}")
        else:
            warn.append("empirical columns outside desk-scale range")
        in_hyp = A >= 1 and eps <= 1 / A
        row["converse_in_hypothesis"] = in_hyp
        if in_hyp:
            row["converse_lower"] = converse_k_lower(A, eps)
        if A >= 1 and eps <= 1:
            ach = achievability_m(A, eps, kappa)
            row["achievability_m"] = ach.m
            row["achievability_regime"] = ach.regime
        band = scaling_band(A, beta)
        row.update({
            "band_poly_lower": band.poly_lower, "band_poly_upper": band.poly_upper,
            "band_exp_lower": band.exp_lower, "band_exp_upper": band.exp_upper,
            "band_in_hypothesis": band.in_hypothesis,
        })
        k = row.get("k_eps_empirical")
        if k is not None and row.get("achievability_m") is not None and k > row["achievability_m"]:
            warn.append("empirical above achievability")
        if k is not None and in_hyp and row["converse_lower"] > k:
            warn.append("converse above empirical")
        row["warnings"] = "; ".join(warn)
        rows.append(row)
    ks = _local_exponents([r["A"] for r in rows], [r.get("k_eps_empirical") for r in rows])
    for r, e in zip(rows, ks):
        r["local_exponent"] = e
    prev = None
    for r in rows:
        k = r.get("k_eps_empirical")
        if k is not None and prev is not None and k < prev:
            r["warnings"] = "; ".join(filter(None, [r["warnings"], "empirical K decreased"]))
        prev = k if k is not None else prev
    return SweepTable(rows)
