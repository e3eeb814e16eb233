"""Discrete amplitude-limited inputs and their Gaussian-mixture output laws.

Everything here is in nats.  Integral-valued quantities come back as
:class:`Estimate` pairs ``(value, error)`` so that downstream inequality
checks can work with intervals instead of bare floats.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
GAUSS_ENTROPY = 0.5 * math.log(2.0 * math.pi * math.e)
TAIL_MARGIN = 8.0
MIN_WEIGHT = 1e-15
MIN_GAP = 1e-12
_EPS = float(np.finfo(float).eps)


class InvalidInput(ValueError):
    """Raised when a discrete input violates its construction invariants."""


class DomainTooSmall(ValueError):
    """Raised when a quadrature domain does not cover the required interval."""


class Estimate(NamedTuple):
    """A numerical value with an absolute error bound."""

    value: float
    error: float

    @property
    def lo(self) -> float:
        return self.value - self.error

    @property
    def hi(self) -> float:
        return self.value + self.error


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - LOG_SQRT_2PI)


def gauss_q(x):
    """Upper tail probability ``P(Z > x)``."""
    return ndtr(-np.asarray(x, dtype=float))


def gaussian_tail_moments(n: int, a: float) -> np.ndarray:
    """Return ``[M_0(a), ..., M_n(a)]`` with ``M_k(a) = int_a^inf t^k phi(t) dt``.

    Uses ``M_k = a^(k-1) phi(a) + (k-1) M_(k-2)``, which holds for any real ``a``.
    """
    m = np.zeros(n + 1)
    pa = float(phi(a))
    m[0] = float(gauss_q(a))
    if n >= 1:
        m[1] = pa
    for k in range(2, n + 1):
        m[k] = a ** (k - 1) * pa + (k - 1) * m[k - 2]
    return m


def gaussian_tail_integral(coeffs, a: float) -> float:
    """``int_a^inf p(t) phi(t) dt`` for the polynomial with ascending ``coeffs``.

    Only used with nonnegative coefficients, so the result is an upper bound
    whenever ``p`` dominates the integrand of interest.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    return float(coeffs @ gaussian_tail_moments(len(coeffs) - 1, a))


def _poly_square(c):
    return np.convolve(c, c)


def _log_envelope_poly(A: float) -> np.ndarray:
    """Coefficients in ``t`` of ``(t + 2A)^2 / 2 + c0``.

    With ``t = |y| - A`` this is the bound ``-log f(y) <= (|y| + A)^2/2 + c0``
    valid for any mixture supported on ``[-A, A]``.
    """
    return np.array([2.0 * A * A + LOG_SQRT_2PI, 2.0 * A, 0.5])


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteInput:
    """Finite probability law on ``[-A, A]``.

    Parameters
    ----------
    amplitude : float
        Peak constraint ``A > 0``.
    points : array_like
        Strictly increasing atom locations, each in ``[-A, A]``.
    weights : array_like
        Positive probabilities summing to one (within ``1e-12``).

    Notes
    -----
    Invalid atoms are rejected rather than repaired: the support size is
    the quantity under study, so silently merging or dropping atoms would
    change the answer.
    """

    amplitude: float
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        A = float(self.amplitude)
        th = np.array(self.points, dtype=float).reshape(-1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if not (math.isfinite(A) and A > 0):
            raise InvalidInput(f"amplitude must be positive and finite, got {A!r}")
        if th.size == 0:
            raise InvalidInput("input needs at least one atom")
        if th.shape != w.shape:
            raise InvalidInput("points and weights differ in length")
        if not np.all(np.isfinite(th)) or not np.all(np.isfinite(w)):
            raise InvalidInput("non-finite atom or weight")
        if np.any(np.abs(th) > A):
            raise InvalidInput(f"atom outside [-A, A] with A={A!r}")
        if np.any(w < MIN_WEIGHT):
            raise InvalidInput(f"weight below {MIN_WEIGHT:g}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInput(f"weights sum to {w.sum()!r}, not 1")
        if th.size > 1 and np.min(np.diff(th)) <= MIN_GAP:
            raise InvalidInput("points must be strictly increasing with gaps above 1e-12")
        th.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "amplitude", A)
        object.__setattr__(self, "points", th)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return int(self.points.size)

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteInput):
            return NotImplemented
        return (
            self.amplitude == other.amplitude
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self) -> int:
        return hash((self.amplitude, self.points.tobytes(), self.weights.tobytes()))

    def __repr__(self) -> str:
        return f"DiscreteInput(A={self.amplitude:g}, K={self.size})"

    @classmethod
    def point(cls, A: float, theta: float = 0.0) -> "DiscreteInput":
        return cls(A, [theta], [1.0])

    @classmethod
    def uniform_grid(cls, A: float, n: int) -> "DiscreteInput":
        """``n`` equally weighted, equispaced atoms spanning ``[-A, A]``."""
        if n == 1:
            return cls.point(A)
        th = np.linspace(-A, A, n)
        return cls(A, th, np.full(n, 1.0 / n))

    @classmethod
    def from_arrays(cls, A: float, points, weights, normalize: bool = True) -> "DiscreteInput":
        """Sort atoms and optionally renormalize before validating."""
        th = np.asarray(points, dtype=float)
        w = np.asarray(weights, dtype=float)
        order = np.argsort(th, kind="stable")
        th, w = th[order] + 0.0, w[order]  # + 0.0 turns -0.0 into 0.0
        if normalize:
            w = w / w.sum()
        return cls(A, th, w)

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "points": [float(x) for x in self.points],
            "weights": [float(x) for x in self.weights],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DiscreteInput":
        return cls(obj["amplitude"], obj["points"], obj["weights"])

    def to_json(self) -> str:
        # Python's float repr is the shortest string that round-trips exactly.
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DiscreteInput":
        return cls.from_dict(json.loads(text))

    def output(self) -> "MixtureDensity":
        return MixtureDensity(self)


def random_input(rng: np.random.Generator, A: float, n_atoms: int | None = None,
                 max_atoms: int = 12) -> DiscreteInput:
    """Draw a random input for property tests.

    Atom count is uniform on ``{1..max_atoms}`` unless given, locations are
    i.i.d. uniform on ``[-A, A]`` (redrawn on near-collisions) and weights
    are flat Dirichlet.
    """
    k = int(rng.integers(1, max_atoms + 1)) if n_atoms is None else int(n_atoms)
    while True:
        th = np.sort(rng.uniform(-A, A, size=k))
        w = rng.dirichlet(np.ones(k))
        if k > 1 and np.min(np.diff(th)) <= 1e-9:
            continue
        if np.any(w < 1e-12):
            continue
        w = w / w.sum()
        return DiscreteInput(A, th, w)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    """Composite Gauss-Legendre rule on ``[lo, hi]``.

    Parameters
    ----------
    lo, hi : float
        Integration domain.
    amplitude : float
        Support half-width of the laws this scheme is meant for; only used
        for the analytic tail mass bound.
    panel_width : float
        Maximum panel width.
    order : int
        Gauss-Legendre nodes per panel.

    Notes
    -----
    The error estimate of :meth:`estimate` compares against the rule with
    half the nodes on the same panels.  This grossly overstates the error of
    the fine rule, which is the point: it is a bound we can trust in
    interval checks.
    """

    lo: float
    hi: float
    amplitude: float
    panel_width: float = 0.5
    order: int = 20
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("empty quadrature domain")
        nodes, weights = _panel_rule(self.lo, self.hi, self.panel_width, self.order)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def for_amplitude(cls, A: float, margin: float = TAIL_MARGIN, **kw) -> "QuadratureScheme":
        return cls(-A - margin, A + margin, A, **kw)

    @property
    def domain(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def tail_bound(self) -> float:
        """Upper bound on the output mass outside the domain."""
        A = self.amplitude
        return float(gauss_q(self.hi - A) + gauss_q(-A - self.lo))

    def covers(self, A: float, margin: float = TAIL_MARGIN) -> bool:
        return self.lo <= -A - margin and self.hi >= A + margin

    def require(self, A: float, margin: float = TAIL_MARGIN) -> None:
        if not self.covers(A, margin):
            raise DomainTooSmall(
                f"quadrature domain [{self.lo:g}, {self.hi:g}] does not contain "
                f"[{-A - margin:g}, {A + margin:g}]"
            )

    def refined(self) -> "QuadratureScheme":
        """Same domain with panels half as wide."""
        return QuadratureScheme(self.lo, self.hi, self.amplitude, self.panel_width / 2, self.order)

    def coarse(self) -> tuple[np.ndarray, np.ndarray]:
        return _panel_rule(self.lo, self.hi, self.panel_width, self.order // 2)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return self.weights @ values

    def estimate(self, func: Callable[[np.ndarray], np.ndarray]) -> Estimate:
        """Integrate ``func`` and return the value with a quadrature error bound."""
        g = func(self.nodes)
        value = float(self.weights @ g)
        xc, wc = self.coarse()
        coarse = float(wc @ func(xc))
        roundoff = 16 * _EPS * float(self.weights @ np.abs(g))
        return Estimate(value, abs(value - coarse) + roundoff)


def _panel_rule(lo, hi, width, order):
    n_panels = max(1, int(math.ceil((hi - lo) / width - 1e-9)))
    edges = np.linspace(lo, hi, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


# ---------------------------------------------------------------------------
# output laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixtureDensity:
    """Output density ``f(y) = sum_i w_i phi(y - theta_i)`` of a discrete input."""

    input: DiscreteInput

    @property
    def amplitude(self) -> float:
        return self.input.amplitude

    @property
    def atoms(self) -> np.ndarray:
        return self.input.points

    @property
    def masses(self) -> np.ndarray:
        return self.input.weights

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        u = y.reshape(-1, 1) - self.atoms
        return (np.exp(-0.5 * u * u - LOG_SQRT_2PI) @ self.masses).reshape(y.shape)

    def log_pdf(self, y):
        y = np.asarray(y, dtype=float)
        u = y.reshape(-1, 1) - self.atoms
        a = np.log(self.masses) - 0.5 * u * u
        return (logsumexp(a, axis=1) - LOG_SQRT_2PI).reshape(y.shape)


@dataclass(frozen=True, eq=False)
class UniformNoise:
    """Output density of a uniform input on ``[-B, B]`` through the channel."""

    amplitude: float

    def pdf(self, y):
        B = self.amplitude
        y = np.abs(np.asarray(y, dtype=float))
        # Q(y - B) - Q(y + B), written with survival functions for accuracy
        return (ndtr(B - y) - ndtr(-B - y)) / (2 * B)

    def log_pdf(self, y):
        B = self.amplitude
        y = np.abs(np.asarray(y, dtype=float))
        big = log_ndtr(B - y)
        small = log_ndtr(-B - y)
        return big + np.log(-np.expm1(small - big)) - math.log(2 * B)


def mixture_pdf(d: MixtureDensity, y):
    """``sum_i w_i phi(y - theta_i)`` by direct summation."""
    return d.pdf(y)


def mixture_log_pdf(d: MixtureDensity, y):
    """Log of the mixture density via a max-shifted log-sum-exp."""
    return d.log_pdf(y)


def _as_density(d) -> MixtureDensity:
    return d.output() if isinstance(d, DiscreteInput) else d


def entropy_tail_bound(q: QuadratureScheme, A: float) -> float:
    """Bound on ``int |f log f|`` outside the quadrature domain."""
    env = _log_envelope_poly(A)
    return gaussian_tail_integral(env, q.hi - A) + gaussian_tail_integral(env, -A - q.lo)


def differential_entropy(d, q: QuadratureScheme | None = None) -> Estimate:
    """Differential entropy ``-int f log f`` of a mixture output law.

    Parameters
    ----------
    d : MixtureDensity or DiscreteInput
    q : QuadratureScheme, optional
        Must contain ``[-A-8, A+8]``.  Defaults to the standard scheme.

    Returns
    -------
    Estimate
        Value in nats and an error bound including the analytic tail term.
    """
    d = _as_density(d)
    A = d.amplitude
    q = QuadratureScheme.for_amplitude(A) if q is None else q
    q.require(A)
    est = q.estimate(lambda y: -d.pdf(y) * d.log_pdf(y))
    return Estimate(est.value, est.error + entropy_tail_bound(q, A))


def mutual_information(d, q: QuadratureScheme | None = None) -> Estimate:
    """``I(X;Y) = h(Y) - h(Z)`` for the unit-variance channel, clipped at zero."""
    h = differential_entropy(d, q)
    return Estimate(max(h.value - GAUSS_ENTROPY, 0.0), h.error)


def log_l2_norm(d, q: QuadratureScheme | None = None) -> Estimate:
    """``(int (log f)^2 f)^(1/2)`` with an error bound."""
    d = _as_density(d)
    A = d.amplitude
    q = QuadratureScheme.for_amplitude(A) if q is None else q
    q.require(A)

    def integrand(y):
        lf = d.log_pdf(y)
        return lf * lf * np.exp(lf)

    est = q.estimate(integrand)
    env2 = _poly_square(_log_envelope_poly(A))
    tail = gaussian_tail_integral(env2, q.hi - A) + gaussian_tail_integral(env2, -A - q.lo)
    s = est.value
    e = est.error + tail
    root = math.sqrt(max(s, 0.0))
    err = max(math.sqrt(s + e) - root, root - math.sqrt(max(s - e, 0.0)))
    return Estimate(root, err)
