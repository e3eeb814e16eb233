"""Capacity of the amplitude-limited unit-variance Gaussian channel, best
``K``-point inputs, and best ``m``-point chi-square approximations.

The reference solver runs Blahut-Arimoto on a grid, then polishes atom
locations and weights jointly with a projected Newton method, starting
from the binary input (or, failing that, from the grid mass clusters).
Atoms are inserted where the marginal information exceeds the current
rate and split where it is locally convex.
Success is certified by the continuous dual gap ``sup_x D(x) - I``, which
upper-bounds ``C - I`` up to quadrature error.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.optimize import nnls
from scipy.special import logsumexp

from .divergence import DivergenceValue, kl
from .mixture import (
    GAUSS_ENTROPY,
    LOG_SQRT_2PI,
    MIN_GAP,
    DiscreteInput,
    Estimate,
    QuadratureScheme,
    mutual_information,
)

PRUNE_WEIGHT = 1e-12


class NoConvergence(RuntimeError):
    """The dual gap did not reach the tolerance; ``best`` holds the best result."""

    def __init__(self, message: str, best: "CapacityResult"):
        super().__init__(message)
        self.best = best


class BudgetExhausted(RuntimeError):
    """The support-size scan hit its cap; ``partial`` holds the best attempt."""

    def __init__(self, message: str, partial: "KepsResult"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class OptimizerBudget:
    """Effort knobs for the multi-start optimizers.

    Attributes
    ----------
    restarts : int
        Random starting points per ``K`` (on top of deterministic ones).
    rounds : int
        Alternating weight/location rounds per start.
    backtrack : float
        Step shrink factor in the location line search.
    seed : int
        Seed for the restart generator.
    ba_inner : int
        Weight (Blahut-Arimoto) sweeps per round.
    polish_iters : int
        Newton iterations for the final fixed-size polish.
    k_cap : int, optional
        Largest support size the scan may try.
    """

    restarts: int = 16
    rounds: int = 200
    backtrack: float = 0.5
    seed: int = 0
    ba_inner: int = 20
    polish_iters: int = 60
    k_cap: int | None = None

    def __post_init__(self):
        if self.restarts < 0 or self.rounds < 1 or not 0 < self.backtrack < 1:
            raise ValueError("invalid optimizer budget")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def default_grid_n(A: float) -> int:
    return 40 * math.ceil(A) + 41


def default_k_cap(A: float) -> int:
    return 4 * math.ceil(A * math.sqrt(math.log(A + 3))) + 32


# ---------------------------------------------------------------------------
# fast evaluation on a fixed quadrature
# ---------------------------------------------------------------------------


class _Channel:
    """Channel functionals on a fixed quadrature, without error bookkeeping."""

    def __init__(self, A: float, quad: QuadratureScheme | None = None):
        self.A = float(A)
        self.quad = QuadratureScheme.for_amplitude(A) if quad is None else quad
        self.quad.require(A)
        self.y = self.quad.nodes
        self.wq = self.quad.weights

    def kernel(self, x):
        u = self.y[:, None] - np.asarray(x, dtype=float)[None, :]
        return u, np.exp(-0.5 * u * u - LOG_SQRT_2PI)

    def log_out(self, th, w):
        u = self.y[:, None] - th[None, :]
        return logsumexp(np.log(w) - 0.5 * u * u, axis=1) - LOG_SQRT_2PI

    def mi(self, th, w) -> float:
        lf = self.log_out(th, w)
        return float(-(self.wq * np.exp(lf)) @ lf - GAUSS_ENTROPY)

    def marginals(self, x, lf):
        """Marginal information ``D(x)`` and its first two derivatives."""
        u, ph = self.kernel(x)
        a = self.wq * lf
        d0 = -GAUSS_ENTROPY - a @ ph
        d1 = -a @ (u * ph)
        d2 = -a @ ((u * u - 1) * ph)
        return d0, d1, d2


def _merge_close(th, w, tol):
    if tol <= 0 or th.size < 2:
        return th, w
    keep = np.r_[True, np.diff(th) > tol]
    if keep.all():
        return th, w
    starts = np.flatnonzero(keep)
    wn = np.add.reduceat(w, starts)
    tn = np.add.reduceat(w * th, starts) / wn
    return tn, wn


def _symmetrize(th, w):
    return 0.5 * (th - th[::-1]), 0.5 * (w + w[::-1])


def _is_symmetric(th, w, tol=1e-6):
    return np.allclose(th, -th[::-1], atol=tol) and np.allclose(w, w[::-1], atol=tol)


def _newton(ch: _Channel, th, w, iters=100, sym=False, merge_tol=1e-3, step_cap=0.25,
            gtol=1e-13):
    """Projected Newton ascent of ``I`` in atom locations and weights jointly.

    Uses the exact Hessian restricted to the simplex tangent space, shifted
    to be negative definite.  Atoms pinned at ``+-A`` with outward gradient
    are held fixed; weights that hit zero are pruned.
    """
    A = ch.A
    it = 0
    for it in range(1, iters + 1):
        K = th.size
        if K == 1:
            break
        u, ph = ch.kernel(th)
        f = ph @ w
        lf = np.log(f)
        a = ch.wq * lf
        p1 = u * ph
        D = -GAUSS_ENTROPY - a @ ph
        D1 = -a @ p1
        D2 = -a @ ((u * u - 1) * ph)
        gth = w * D1
        free = ~(((th >= A) & (gth >= 0)) | ((th <= -A) & (gth <= 0)))
        G = np.hstack([ph, p1 * w])
        H = -(G * (ch.wq / f)[:, None]).T @ G
        H[:K, K:] += np.diag(D1)
        H[K:, :K] += np.diag(D1)
        H[K:, K:] += np.diag(w * D2)
        g = np.r_[D, gth]
        idx = np.r_[np.arange(K), K + np.flatnonzero(free)]
        Hs, gs = H[np.ix_(idx, idx)], g[idx]
        n = idx.size
        e = np.zeros(n)
        e[:K] = 1
        Z = np.linalg.svd(e[None, :])[2][1:].T
        Hz, gz = Z.T @ Hs @ Z, Z.T @ gs
        if np.abs(gz).max() < gtol:
            break
        ev = np.linalg.eigvalsh(Hz)
        mu = max(0.0, ev.max() + 1e-10 * max(1.0, np.abs(ev).max()))
        d = Z @ np.linalg.solve(Hz - mu * np.eye(n - 1), -gz)
        dw = d[:K]
        dth = np.zeros(K)
        dth[free] = d[K:]
        step = 1.0
        big = np.abs(dth).max()
        if big * step > step_cap:
            step = step_cap / big
        i0 = ch.mi(th, w)
        accepted = None
        while step > 1e-14:
            wn = np.maximum(w + step * dw, 0.0)
            tn = np.clip(th + step * dth, -A, A)
            if sym:
                tn, wn = _symmetrize(tn, wn)
            keep = wn > PRUNE_WEIGHT
            tn, wn = tn[keep], wn[keep] / wn[keep].sum()
            if tn.size and np.all(np.diff(tn) > MIN_GAP) and ch.mi(tn, wn) >= i0 - 1e-15:
                accepted = (tn, wn)
                break
            step *= 0.5
        if accepted is None:
            break
        th, w = _merge_close(*accepted, merge_tol)
    return th, w, it


def _dual_max(ch: _Channel, th, w, dense):
    """Maximize ``D(x)`` over ``[-A, A]``.

    Every local maximum on a dense grid and every atom is refined by a few
    safeguarded Newton steps.  Returns the maximum, an insertion candidate
    away from existing atoms, the rate and the atom derivatives.
    """
    A = ch.A
    lf = ch.log_out(th, w)
    dg, _, _ = ch.marginals(dense, lf)
    da, d1a, d2a = ch.marginals(th, lf)
    n = dense.size
    up = np.r_[True, dg[1:] >= dg[:-1]]
    down = np.r_[dg[:-1] >= dg[1:], True]
    x = np.r_[dense[up & down], th]
    for _ in range(12):
        _, d1, d2 = ch.marginals(x, lf)
        st = np.where(d2 < 0, -d1 / np.where(d2 < 0, d2, 1.0), np.sign(d1) * 0.01)
        x = np.clip(x + np.clip(st, -0.05, 0.05), -A, A)
    dx, _, _ = ch.marginals(x, lf)
    far = np.min(np.abs(x[:, None] - th[None, :]), axis=1) > 0.1
    xm = x[far][np.argmax(dx[far])] if far.any() else x[np.argmax(dx)]
    rate = float(w @ da)
    dmax = float(max(dx.max(), dg.max(), da.max()))
    return dmax, float(xm), rate, d1a, d2a


def _dense_grid(A):
    return np.linspace(-A, A, 50 * math.ceil(A) + 1)


def _refine(ch: _Channel, th, w, tol, max_outer=80, sym=True):
    """Grow and polish a support until the dual gap is below ``tol``."""
    A = ch.A
    dense = _dense_grid(A)
    total = 0
    sym = sym and _is_symmetric(th, w)
    if sym:
        th, w = _symmetrize(th, w)
    best = None
    for outer in range(max_outer):
        final = not sym
        th, w, it = _newton(ch, th, w, sym=sym)
        total += it
        dmax, xm, rate, d1, d2 = _dual_max(ch, th, w, dense)
        gap = dmax - rate
        if best is None or (gap < best[2]):
            best = (th, w, gap)
        if gap < tol:
            if final:
                break
            sym = False
            continue
        convex = (d2 > 0) & (np.abs(th) < A)
        if convex.any():
            nt, nw = [], []
            for t, ww, c in zip(th, w, convex):
                if c:
                    nt += [t - 0.05, t + 0.05]
                    nw += [ww / 2, ww / 2]
                else:
                    nt.append(t)
                    nw.append(ww)
            nt, nw = np.clip(nt, -A, A), np.array(nw)
            order = np.argsort(nt, kind="stable")
            th, w = _merge_close(nt[order], nw[order], MIN_GAP * 10)
        else:
            if sym:
                new = [0.0] if abs(xm) < 0.05 else [-abs(xm), abs(xm)]
            else:
                new = [xm]
            for x in new:
                if np.min(np.abs(th - x)) <= 1e-9:
                    continue
                i = np.searchsorted(th, x)
                th, w = np.insert(th, i, x), np.insert(w, i, 1e-3)
            w = w / w.sum()
    th, w, gap = best
    return th, w, gap, total


# ---------------------------------------------------------------------------
# reference capacity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CapacityResult:
    """Reference capacity with its certificate.

    ``convergence_gap`` is the continuous dual gap ``sup_x D(x) - I``.
    ``optimal_input`` has weights below ``1e-12`` pruned; its size is the
    support-size proxy used elsewhere.
    """

    amplitude: float
    capacity_nats: float
    optimal_input: DiscreteInput
    iterations: int
    convergence_gap: float
    quadrature_error: float
    grid_n: int = 0
    tol: float = 0.0
    grid_gap: float = math.nan
    ba_iterations: int = 0
    ba_history: tuple = field(default=(), repr=False, compare=False)

    @property
    def slack(self) -> float:
        return self.convergence_gap + self.quadrature_error

    @property
    def upper_bound(self) -> float:
        return self.capacity_nats + self.slack

    @property
    def support_size(self) -> int:
        return self.optimal_input.size

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "capacity_nats": self.capacity_nats,
            "optimal_input": self.optimal_input.to_dict(),
            "support_size_proxy": self.support_size,
            "iterations": self.iterations,
            "convergence_gap": self.convergence_gap,
            "quadrature_error": self.quadrature_error,
            "grid_n": self.grid_n,
            "tol": self.tol,
            "grid_gap": self.grid_gap,
            "ba_iterations": self.ba_iterations,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CapacityResult":
        return cls(
            amplitude=obj["amplitude"],
            capacity_nats=obj["capacity_nats"],
            optimal_input=DiscreteInput.from_dict(obj["optimal_input"]),
            iterations=obj["iterations"],
            convergence_gap=obj["convergence_gap"],
            quadrature_error=obj["quadrature_error"],
            grid_n=obj.get("grid_n", 0),
            tol=obj.get("tol", 0.0),
            grid_gap=obj.get("grid_gap", math.nan),
            ba_iterations=obj.get("ba_iterations", 0),
        )


def blahut_arimoto(ch: _Channel, grid: np.ndarray, iters: int, target_gap: float = 0.0):
    """Blahut-Arimoto on a fixed set of candidate atoms.

    Returns
    -------
    p : ndarray
        Final grid weights.
    history : list of float
        Rate after each iteration; nondecreasing.
    gap : float
        Final grid gap ``max_j D(x_j) - I``.
    """
    _, ph = ch.kernel(grid)
    p = np.full(grid.size, 1.0 / grid.size)
    history = []
    gap = math.inf
    for _ in range(iters):
        lf = np.log(ph @ p)
        D = -GAUSS_ENTROPY - (ch.wq * lf) @ ph
        rate = float(p @ D)
        history.append(rate)
        gap = float(D.max() - rate)
        if gap <= target_gap:
            break
        p = p * np.exp(D - D.max())
        p /= p.sum()
    return p, history, gap


def _clusters(grid, p, rel=1e-4):
    """Collapse each basin of the grid weights to one atom at its peak."""
    n = p.size
    up = np.r_[True, p[1:] >= p[:-1]]
    down = np.r_[p[:-1] > p[1:], True]
    peaks = np.flatnonzero(up & down & (p > rel * p.max()))
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(p))])
    # basins are split at the minimum of p between consecutive peaks
    cuts = [0]
    for a, b in zip(peaks[:-1], peaks[1:]):
        cuts.append(a + int(np.argmin(p[a:b + 1])))
    cuts.append(n)
    w = np.array([p[cuts[i]:cuts[i + 1]].sum() for i in range(peaks.size)])
    return grid[peaks].astype(float), w / w.sum()


def _capacity_from(ch, th, w, tol):
    th, w, gap, its = _refine(ch, th, w, tol)
    return th, w, max(gap, 0.0), its


def reference_capacity(A: float, grid_n: int | None = None, tol: float = 1e-9,
                       max_iters: int = 2000, quad: QuadratureScheme | None = None
                       ) -> CapacityResult:
    """Capacity ``C(A)`` with a dual-gap certificate.

    Parameters
    ----------
    A : float
        Amplitude limit.
    grid_n : int, optional
        Number of Blahut-Arimoto candidate atoms, default ``40 ceil(A) + 41``.
    tol : float
        Required dual gap.
    max_iters : int
        Blahut-Arimoto iteration cap for the seeding stage.

    Raises
    ------
    NoConvergence
        If the certified gap stays above ``tol``; the best result is attached.
    """
    if not (math.isfinite(A) and A > 0):
        raise ValueError(f"A must be positive, got {A!r}")
    grid_n = default_grid_n(A) if grid_n is None else int(grid_n)
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    if not tol >= 1e-12:
        raise ValueError("tol must be at least 1e-12")
    ch = _Channel(A, quad)
    grid = np.linspace(-A, A, grid_n)
    p, history, grid_gap = blahut_arimoto(ch, grid, max_iters, target_gap=min(tol, 1e-7))

    attempts = []
    # the binary start grows its support by insertion and is the more
    # reliable route; grid clusters are the fallback
    seeds = [(np.array([-A, A]), np.array([0.5, 0.5])), _clusters(grid, 0.5 * (p + p[::-1]))]
    total = len(history)
    for th0, w0 in seeds:
        th, w, gap, its = _capacity_from(ch, th0, w0, tol)
        total += its
        attempts.append((gap > tol, -ch.mi(th, w), th, w, gap))
        if gap <= tol:
            break
    attempts.sort(key=lambda t: (t[0], t[1]))
    _, _, th, w, gap = attempts[0]
    d = DiscreteInput.from_arrays(A, th, w)
    info = mutual_information(d, ch.quad)
    res = CapacityResult(
        amplitude=float(A), capacity_nats=info.value, optimal_input=d, iterations=total,
        convergence_gap=float(gap), quadrature_error=info.error, grid_n=grid_n, tol=float(tol),
        grid_gap=float(grid_gap), ba_iterations=len(history), ba_history=tuple(history),
    )
    if gap > tol:
        raise NoConvergence(f"dual gap {gap:.3g} above tol {tol:.3g} at A={A:g}", res)
    return res


# ---------------------------------------------------------------------------
# best K-point inputs
# ---------------------------------------------------------------------------


def _seed_for(budget: OptimizerBudget, *parts) -> np.random.Generator:
    ints = [budget.seed]
    for p in parts:
        if isinstance(p, float):
            ints.extend(struct.unpack("<2I", struct.pack("<d", p)))
        else:
            ints.append(int(p))
    return np.random.default_rng(np.random.SeedSequence(ints))


def _split_largest(th, w, A):
    """Split the heaviest atom into two, ``+-spacing/4`` apart."""
    i = int(np.argmax(w))
    if th.size > 1:
        gaps = np.diff(th)
        spacing = float(np.min(gaps[max(i - 1, 0):i + 1]))
    else:
        spacing = A
    h = spacing / 4
    left, right = max(th[i] - h, -A), min(th[i] + h, A)
    if right - left <= 1e-9:
        left, right = th[i] - h, th[i] + h
    nt = np.r_[th[:i], left, right, th[i + 1:]]
    nw = np.r_[w[:i], w[i] / 2, w[i] / 2, w[i + 1:]]
    return np.clip(nt, -A, A), nw


def _grow_to(th, w, K, A):
    while th.size < K:
        th, w = _split_largest(th, w, A)
    return th, w


def _alternate(ch: _Channel, th, w, budget: OptimizerBudget):
    """Blahut-Arimoto weights on a fixed support, then projected gradient on locations."""
    A = ch.A
    step = 0.5
    prev = ch.mi(th, w)
    stall = 0
    for _ in range(budget.rounds):
        _, ph = ch.kernel(th)
        for _ in range(budget.ba_inner):
            lf = np.log(ph @ w)
            D = -GAUSS_ENTROPY - (ch.wq * lf) @ ph
            w = w * np.exp(D - D.max())
            w /= w.sum()
        w = np.maximum(w, 1e-300)
        w /= w.sum()
        lf = ch.log_out(th, w)
        _, d1, _ = ch.marginals(th, lf)
        grad = w * d1
        cur = ch.mi(th, w)
        s = 2 * step
        while s > 1e-12:
            tn = np.clip(th + s * grad, -A, A)
            order = np.argsort(tn, kind="stable")
            tn, wn = tn[order], w[order]
            if np.all(np.diff(tn) > 1e-9) and ch.mi(tn, wn) > cur:
                th, w, step = tn, wn, s
                break
            s *= budget.backtrack
        now = ch.mi(th, w)
        stall = stall + 1 if now - prev < 1e-14 else 0
        prev = now
        if stall >= 3:
            break
    return th, w


def _fixed_polish(ch, th, w, iters):
    th, w, _ = _newton(ch, th, w, iters=iters, merge_tol=0.0)
    return th, w


def _random_start(rng, A, K):
    while True:
        th = np.sort(rng.uniform(-A, A, K))
        if K == 1 or np.min(np.diff(th)) > 1e-6:
            return th, rng.dirichlet(np.ones(K))


def best_k_point_mi(A: float, K: int, budget: OptimizerBudget = OptimizerBudget(),
                    warm_start=(), quad: QuadratureScheme | None = None
                    ) -> tuple[float, DiscreteInput]:
    """Best mutual information found over inputs with at most ``K`` atoms.

    Starts from an equispaced symmetric constellation, from each warm start
    grown to ``K`` atoms by splitting its heaviest atom, and from
    ``budget.restarts`` random inputs.  Each start runs the alternating
    optimizer; the best is polished by a fixed-size Newton pass.  Feasible
    warm starts are kept as candidates, so the result never falls below them.

    Returns
    -------
    (float, DiscreteInput)
        A lower bound on the ``K``-point capacity and the input achieving it.
    """
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    K = int(K)
    if K == 1:
        return 0.0, DiscreteInput.point(A)
    ch = _Channel(A, quad)
    rng = _seed_for(budget, float(A), K)
    starts = [(np.linspace(-A, A, K), np.full(K, 1.0 / K))]
    feasible = []
    for d in warm_start:
        th, w = np.array(d.points), np.array(d.weights)
        if th.size <= K:
            feasible.append((th, w))
            starts.append(_grow_to(th, w, K, A))
    starts += [_random_start(rng, A, K) for _ in range(budget.restarts)]

    runs = []
    for th, w in starts:
        th, w = _alternate(ch, th.copy(), w.copy(), budget)
        runs.append((ch.mi(th, w), th, w))
    runs.sort(key=lambda r: -r[0])
    cands = list(feasible)
    for _, th, w in runs[:3]:
        cands.append(_fixed_polish(ch, th, w, budget.polish_iters))
        cands.append((th, w))
    best = None
    for th, w in cands:
        keep = w > PRUNE_WEIGHT
        th, w = th[keep], w[keep] / w[keep].sum()
        if th.size > 1 and np.min(np.diff(th)) <= MIN_GAP:
            th, w = _merge_close(th, w, 1e-9)
        d = DiscreteInput.from_arrays(A, th, w)
        val = mutual_information(d, ch.quad).value
        key = (val, -d.size)
        if best is None or key > best[0]:
            best = (key, d)
    return best[0][0], best[1]


# ---------------------------------------------------------------------------
# K_eps scan and reduced support
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KepsResult:
    """Smallest support size found meeting ``I >= C - eps``.

    ``slack`` is the interval allowance used in the threshold test and
    ``support_size_proxy`` the pruned size of the reference optimal input.
    """

    amplitude: float
    epsilon: float
    k_eps: int
    achieving_input: DiscreteInput
    mi_achieved: float
    reference_capacity: float
    slack: float
    threshold: float
    support_size_proxy: int
    mi_by_k: tuple = ()
    complete: bool = True

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "epsilon": self.epsilon,
            "k_eps": self.k_eps,
            "achieving_input": self.achieving_input.to_dict(),
            "mi_achieved": self.mi_achieved,
            "reference_capacity": self.reference_capacity,
            "slack": self.slack,
            "threshold": self.threshold,
            "support_size_proxy": self.support_size_proxy,
            "mi_by_k": list(self.mi_by_k),
            "complete": self.complete,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "KepsResult":
        return cls(
            amplitude=obj["amplitude"], epsilon=obj["epsilon"], k_eps=obj["k_eps"],
            achieving_input=DiscreteInput.from_dict(obj["achieving_input"]),
            mi_achieved=obj["mi_achieved"], reference_capacity=obj["reference_capacity"],
            slack=obj["slack"], threshold=obj["threshold"],
            support_size_proxy=obj["support_size_proxy"],
            mi_by_k=tuple(obj.get("mi_by_k", ())), complete=obj.get("complete", True),
        )


class KPointLadder:
    """Memoized ``K = 1, 2, ...`` sequence of best ``K``-point inputs.

    Each rung warm-starts from the previous one (and from the reference
    optimal input once ``K`` reaches its size), so the sequence of rates is
    nondecreasing by construction.
    """

    def __init__(self, A: float, budget: OptimizerBudget, ref: CapacityResult | None = None,
                 quad: QuadratureScheme | None = None):
        self.A = float(A)
        self.budget = budget
        self.ref = ref
        self.quad = quad
        self.rungs: list[tuple[float, DiscreteInput]] = []

    def __getitem__(self, K: int) -> tuple[float, DiscreteInput]:
        while len(self.rungs) < K:
            k = len(self.rungs) + 1
            warm = [self.rungs[-1][1]] if self.rungs else []
            if self.ref is not None and self.ref.optimal_input.size <= k:
                warm.append(self.ref.optimal_input)
            self.rungs.append(best_k_point_mi(self.A, k, self.budget, warm, self.quad))
        return self.rungs[K - 1]


_LADDERS: dict = {}


def _ladder(A, budget, ref):
    key = (float(A), budget, None if ref is None else hash(ref.optimal_input))
    if key not in _LADDERS:
        _LADDERS[key] = KPointLadder(A, budget, ref)
    return _LADDERS[key]


def k_eps(A: float, eps: float, budget: OptimizerBudget = OptimizerBudget(),
          ref: CapacityResult | None = None, k_cap: int | None = None) -> KepsResult:
    """Smallest ``K`` whose best ``K``-point rate reaches ``C(A) - eps``.

    ``K`` is scanned upward from one.  A rung passes when its rate plus the
    combined slack (dual gap and quadrature errors) reaches ``C - eps``.

    Raises
    ------
    ValueError
        If ``eps`` is not above twice the reference slack.
    BudgetExhausted
        If the cap is reached first.
    """
    if not (math.isfinite(A) and A > 0):
        raise ValueError("A must be positive")
    ref = reference_capacity(A) if ref is None else ref
    if not eps > 2 * ref.slack:
        raise ValueError(f"eps={eps:g} must exceed twice the solver slack {ref.slack:.3g}")
    cap = k_cap or budget.k_cap or default_k_cap(A)
    ladder = _ladder(A, budget, ref)
    threshold = ref.capacity_nats - eps
    rates = []
    best = None
    for K in range(1, cap + 1):
        val, d = ladder[K]
        rates.append(val)
        slack = ref.slack + (mutual_information(d).error if d.size > 1 else 0.0)
        if best is None or val > best[0]:
            best = (val, d, K)
        if val + slack >= threshold:
            return KepsResult(float(A), float(eps), K, d, val, ref.capacity_nats, slack,
                              threshold, ref.support_size, tuple(rates))
    val, d, K = best
    partial = KepsResult(float(A), float(eps), K, d, val, ref.capacity_nats, ref.slack,
                         threshold, ref.support_size, tuple(rates), complete=False)
    raise BudgetExhausted(f"no K <= {cap} reached C - eps at A={A:g}", partial)


def reduced_support_capacity(A: float, m: int, budget: OptimizerBudget = OptimizerBudget(),
                             ref: CapacityResult | None = None) -> tuple[float, float]:
    """Best rate with ``m`` fewer atoms than the optimal input, and the loss.

    Returns
    -------
    (c_minus_m, delta_m)
    """
    ref = reference_capacity(A) if ref is None else ref
    n = ref.support_size
    if int(m) != m or not 1 <= m < n:
        raise ValueError(f"need 1 <= m < {n} (support-size proxy)")
    c_minus, _ = _ladder(A, budget, ref)[n - int(m)]
    return c_minus, ref.capacity_nats - c_minus


def kl_to_optimal(d: DiscreteInput, ref: CapacityResult, q: QuadratureScheme | None = None
                  ) -> tuple[DivergenceValue, Estimate]:
    """Relative entropy from the optimal output law, with the rate gap ``C - I``.

    The second element bounds the first from above (up to its error).
    """
    if d.amplitude != ref.amplitude:
        raise ValueError("input and reference use different amplitudes")
    q = QuadratureScheme.for_amplitude(d.amplitude) if q is None else q
    div = kl(d.output(), ref.optimal_input.output(), q)
    info = mutual_information(d, q)
    gap = Estimate(ref.capacity_nats - info.value, ref.slack + info.error)
    return div, gap


# ---------------------------------------------------------------------------
# best m-point chi-square approximation
# ---------------------------------------------------------------------------


def gauss_rule(points, weights, m: int, dps: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """``m``-node Gauss rule of a discrete measure.

    Runs Lanczos with full reorthogonalization in ``dps``-digit arithmetic,
    so the nodes are correct to the last double-precision bit.  The rule
    matches the first ``2m - 1`` moments; if the measure has at most ``m``
    atoms, the measure itself is returned.
    """
    x = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if m >= x.size:
        return x.copy(), w / w.sum()
    with mpmath.workdps(dps):
        xs = [mpmath.mpf(float(v)) for v in x]
        tot = mpmath.fsum(mpmath.mpf(float(v)) for v in w)
        q = [mpmath.sqrt(mpmath.mpf(float(v)) / tot) for v in w]
        basis, alpha, beta = [], [], []
        for j in range(m):
            basis.append(q)
            v = [a * b for a, b in zip(xs, q)]
            alpha.append(mpmath.fsum(a * b for a, b in zip(q, v)))
            for _ in range(2):
                for b in basis:
                    c = mpmath.fsum(s * t for s, t in zip(b, v))
                    v = [s - c * t for s, t in zip(v, b)]
            if j + 1 < m:
                nb = mpmath.sqrt(mpmath.fsum(t * t for t in v))
                if nb < mpmath.mpf(10) ** (-dps // 2):
                    break
                beta.append(nb)
                q = [t / nb for t in v]
        k = len(alpha)
        T = mpmath.matrix(k, k)
        for i in range(k):
            T[i, i] = alpha[i]
            if i + 1 < k:
                T[i, i + 1] = T[i + 1, i] = beta[i]
        evals, evecs = mpmath.eigsy(T)
        order = sorted(range(k), key=lambda i: evals[i])
        nodes = np.array([float(evals[i]) for i in order])
        gw = np.array([float(evecs[0, i] ** 2) for i in order])
    return nodes, gw / gw.sum()


class _Chi2Objective:
    """``chi2(f_Q || f_P)`` for a fixed target ``P`` on a fixed quadrature.

    Values are accumulated in extended precision where the platform offers
    it; near-optimal ``Q`` make ``f_Q - f_P`` cancel to far below double
    rounding of the two densities.
    """

    def __init__(self, target: DiscreteInput, quad: QuadratureScheme | None = None):
        A = target.amplitude
        self.A = A
        self.quad = QuadratureScheme(-3 * A - 8, 3 * A + 8, A) if quad is None else quad
        y, wq = self.quad.nodes, self.quad.weights
        fp = target.output().pdf(y)
        keep = fp > 1e-300
        self.y, self.wq, self.fp = y[keep], wq[keep], fp[keep]
        self._yl = self.y.astype(np.longdouble)
        self._wql = self.wq.astype(np.longdouble)
        self._fpl = self._ext_mix(target.points, target.weights)

    def _ext_mix(self, th, w):
        u = self._yl[:, None] - np.asarray(th, dtype=np.longdouble)[None, :]
        ph = np.exp(-0.5 * u * u) / np.sqrt(2 * np.longdouble(np.pi))
        # renormalize in extended precision: a mass defect of 1e-16 alone
        # would put a 1e-32 floor under the divergence
        wl = np.asarray(w, dtype=np.longdouble)
        return ph @ (wl / wl.sum())

    def kernel(self, th):
        u = self.y[:, None] - th[None, :]
        return u, np.exp(-0.5 * u * u - LOG_SQRT_2PI)

    def value(self, th, w) -> float:
        r = self._ext_mix(th, w) - self._fpl
        return float(self._wql @ (r * r / self._fpl))

    def best_weights(self, th):
        """Minimizer over the simplex for fixed locations (double precision)."""
        _, ph = self.kernel(th)
        s = np.sqrt(self.wq / self.fp)
        M = ph * s[:, None]
        b = self.fp * s
        # a heavily weighted extra row enforces the sum-to-one constraint
        scale = 1e3 * max(1.0, float(np.abs(M).max()))
        Ma = np.vstack([M, scale * np.ones(th.size)])
        ba = np.r_[b, scale]
        w, _ = nnls(Ma, ba, maxiter=50 * th.size)
        if w.sum() <= 0:
            return None
        return w / w.sum()

    def grad_locations(self, th, w):
        u, ph = self.kernel(th)
        r = (ph @ w - self.fp) / self.fp
        return 2 * w * ((self.wq * r) @ (u * ph))


def _chi2_alternate(obj: _Chi2Objective, th, w, budget: OptimizerBudget):
    A = obj.A
    cur = obj.value(th, w)
    step = 0.1
    stall = 0
    for _ in range(budget.rounds):
        wn = obj.best_weights(th)
        if wn is not None:
            keep = wn > 0
            if keep.all():
                v = obj.value(th, wn)
                if v < cur:
                    w, cur = wn, v
        g = obj.grad_locations(th, w)
        gmax = float(np.abs(g).max())
        if gmax == 0:
            break
        s = 2 * step
        moved = False
        while s * gmax > 1e-14:
            tn = np.clip(th - s * g, -A, A)
            if np.all(np.diff(tn) > 1e-9):
                v = obj.value(tn, w)
                if v < cur:
                    gain = cur - v
                    th, cur, step, moved = tn, v, s, True
                    break
            s *= budget.backtrack
        if not moved or gain < 1e-12 * cur:
            stall += 1
        else:
            stall = 0
        if stall >= 3:
            break
    return th, w, cur


def best_m_point_chi2(target: DiscreteInput, m: int, budget: OptimizerBudget = OptimizerBudget(),
                      quad: QuadratureScheme | None = None, warm_start=()
                      ) -> tuple[float, DiscreteInput]:
    """Smallest ``chi2(f_Q || f_P)`` found over inputs ``Q`` with at most ``m`` atoms.

    Starts come from the Gauss rule of the target, from Gauss-Legendre nodes
    on the target's support interval, and from warm starts grown by
    splitting.  Feasible warm starts are kept, so the value never rises above
    theirs.
    """
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)
    A = target.amplitude
    obj = _Chi2Objective(target, quad)
    lo, hi = float(target.points[0]), float(target.points[-1])
    starts = [gauss_rule(target.points, target.weights, m)]
    if hi > lo:
        x, gw = np.polynomial.legendre.leggauss(m)
        starts.append((0.5 * (lo + hi) + 0.5 * (hi - lo) * x, gw / 2))
    feasible = []
    for d in warm_start:
        th, w = np.array(d.points), np.array(d.weights)
        if th.size <= m:
            feasible.append((th, w))
            starts.append(_grow_to(th, w, m, A))
    rng = _seed_for(budget, float(A), m, 2)
    starts += [_random_start(rng, A, m) for _ in range(min(budget.restarts, 4))]
    cands = list(feasible)
    for th, w in starts:
        th, w = np.clip(th, -A, A), np.asarray(w, dtype=float)
        if th.size > 1 and np.min(np.diff(th)) <= 1e-9:
            continue
        th, w, _ = _chi2_alternate(obj, th, w / w.sum(), budget)
        cands.append((th, w))
    best = None
    for th, w in cands:
        keep = w > MIN_GAP
        th, w = th[keep], w[keep] / w[keep].sum()
        v = obj.value(th, w)
        if best is None or v < best[0]:
            best = (v, th, w)
    v, th, w = best
    return max(v, 0.0), DiscreteInput.from_arrays(A, th, w)
