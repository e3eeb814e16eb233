"""Named numerical inequality checks.

Every check draws its trials from a seeded generator, evaluates both sides
of an inequality with error bars, and counts a failure only when the gap
exceeds the combined error (``lhs.lo > rhs.hi``).  The report keeps the
largest normalized excess so near-misses stay visible.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import achievability_m, converse_k_lower
from .capacity import kl_to_optimal, reference_capacity
from .divergence import chi2, entropy_gap_upper_bound, kl, log_l2_upper_bound
from .mixture import (
    DiscreteInput,
    QuadratureScheme,
    differential_entropy,
    log_l2_norm,
    mixture_log_pdf,
    mutual_information,
    random_input,
)
from .wrapping import (
    WrappedLaw,
    binary_kl,
    binary_kl_lower,
    chi2_to_tv_lower,
    circle_grid,
    constants,
    converse_chain_audit,
    peak_stability_bound,
    uniform_wrapped,
    wrapped_chi2_lower_bound,
    wrapped_chi2_vs_uniform,
    wrapped_kl,
    wrapped_tv,
)


@dataclass
class CheckResult:
    """Outcome of one named check.

    ``worst`` is the largest ``lhs - rhs`` seen (negative when every trial
    holds with room to spare); ``detail`` is a short human-readable line.
    """

    name: str
    anchor: str
    trials: int = 0
    failures: int = 0
    worst: float = -math.inf
    detail: str = ""
    seconds: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.trials > 0 and self.failures == 0

    def record(self, lhs_lo: float, rhs_hi: float) -> None:
        self.trials += 1
        self.worst = max(self.worst, lhs_lo - rhs_hi)
        if lhs_lo > rhs_hi:
            self.failures += 1

    def to_dict(self) -> dict:
        return {
            "name": self.name, "anchor": self.anchor, "passed": self.passed,
            "trials": self.trials, "failures": self.failures, "worst_excess": self.worst,
            "detail": self.detail, "seconds": self.seconds, "notes": list(self.notes),
        }


@dataclass(frozen=True)
class VerifyConfig:
    """Settings shared by the checks.

    ``trials`` scales every randomized check (``None`` uses each check's
    default).  ``amplitudes`` overrides the per-check amplitude list.
    """

    seed: int = 0
    trials: int | None = None
    amplitudes: tuple | None = None

    def __post_init__(self):
        if self.trials is not None and self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.amplitudes is not None and not all(a > 0 for a in self.amplitudes):
            raise ValueError("amplitudes must be positive")

    def n(self, default: int) -> int:
        return default if self.trials is None else self.trials

    def amps(self, default) -> tuple:
        return tuple(default) if self.amplitudes is None else tuple(self.amplitudes)

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, *name.encode()])


_REFS: dict = {}


def _ref(A: float):
    if A not in _REFS:
        _REFS[A] = reference_capacity(A)
    return _REFS[A]


def _perturb(rng, d: DiscreteInput, scale: float) -> DiscreteInput:
    A = d.amplitude
    th = np.clip(d.points + scale * rng.standard_normal(d.size), -A, A)
    w = d.weights * np.exp(scale * rng.standard_normal(d.size))
    th, idx = np.unique(th, return_index=True)
    return DiscreteInput.from_arrays(A, th, w[idx])


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------


def check_wrap_uniformity(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("wrap-uniformity", "wrapped uniform input plus noise is uniform on the circle")
    theta = -math.pi + 2 * math.pi * (np.arange(512) + 0.5) / 512
    devs = []
    for A in cfg.amps((1.0, 2.0, 4.0)):
        law = uniform_wrapped(A)
        dev = float(np.max(np.abs(law.pdf(theta) - 1 / (2 * math.pi))))
        devs.append(dev)
        r.record(dev, 1e-8)
    r.detail = f"max deviation {max(devs):.3e} (limit 1e-8)"
    return r


def check_wrap_mass(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("wrap-mass", "wrapping preserves total probability")
    rng = cfg.rng(r.name)
    theta = circle_grid()
    for A in cfg.amps((0.5, 1.0, 2.0, 4.0)):
        for _ in range(cfg.n(25)):
            law = WrappedLaw(random_input(rng, A), A)
            total = float(law.pdf(theta).sum()) * 2 * math.pi / theta.size
            r.record(abs(total - 1), 1e-10 + 2 * math.pi * law.tail_bound)
    r.detail = f"worst |mass - 1| minus allowance {r.worst:.3e}"
    return r


def check_mixture_envelope(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("mixture-lower-envelope", "output density dominates the farthest-shift Gaussian")
    rng = cfg.rng(r.name)
    for A in cfg.amps((0.5, 1.0, 2.0, 4.0)):
        y = np.linspace(-A - 30, A + 30, 4001)
        env = -0.5 * (np.abs(y) + A) ** 2 - 0.5 * math.log(2 * math.pi)
        for _ in range(cfg.n(25)):
            lf = mixture_log_pdf(random_input(rng, A).output(), y)
            r.record(float(np.max(env - lf)), 1e-12 * float(np.max(np.abs(env))))
    r.detail = f"worst log-envelope excess {r.worst:.3e}"
    return r


def check_entropy_stability(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("entropy-stability",
                    "entropy difference bounded by log-density norm times root chi-square plus chi-square")
    rng = cfg.rng(r.name)
    lo_chi, hi_chi = math.inf, 0.0
    for A in cfg.amps((0.5, 1.0, 2.0, 4.0)):
        q = QuadratureScheme.for_amplitude(A)
        qc = QuadratureScheme(-3 * A - 8, 3 * A + 8, A)
        for i in range(cfg.n(500)):
            f = random_input(rng, A)
            if i % 2:
                g = random_input(rng, A)
            else:
                g = _perturb(rng, f, 10 ** rng.uniform(-4.5, -0.5))
            hf, hg = differential_entropy(f, q), differential_entropy(g, q)
            norm = log_l2_norm(f, q)
            c = chi2(g, f, qc, max_integrand=None)
            lo_chi, hi_chi = min(lo_chi, c.value), max(hi_chi, c.value)
            rhs = entropy_gap_upper_bound(norm.hi, c.hi)
            r.record(hf.lo - hg.hi, rhs)
    r.detail = f"chi-square range [{lo_chi:.2e}, {hi_chi:.2e}], worst excess {r.worst:.3e}"
    return r


def check_log_l2(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("log-l2-bound", "log-density L2 norm at most sqrt(10)(1 + A^2)")
    rng = cfg.rng(r.name)
    for A in cfg.amps((1.0, 2.0, 4.0)):
        for _ in range(cfg.n(100)):
            r.record(log_l2_norm(random_input(rng, A)).lo, log_l2_upper_bound(A))
    r.detail = f"worst norm minus bound {r.worst:.3e}"
    return r


def check_wrapped_chi2_floor(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("wrapped-chi2-floor", "K-atom wrapped output stays away from uniform")
    rng = cfg.rng(r.name)
    for A in cfg.amps((1.0, 2.0, 4.0)):
        for K in range(2, 9):
            bound = wrapped_chi2_lower_bound(K, A)
            for _ in range(cfg.n(50)):
                v = wrapped_chi2_vs_uniform(random_input(rng, A, n_atoms=K))
                r.record(bound, v.hi)
    r.detail = f"worst floor minus value {r.worst:.3e}"
    return r


def check_binary_kl(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("binary-kl-lower", "binary relative entropy dominates p log(p/q) + q - p")
    grid = np.arange(1, 100) / 100
    for p in grid:
        for q in grid:
            r.record(binary_kl_lower(p, q), binary_kl(p, q) + 1e-14)
    r.detail = f"99x99 grid, worst excess {r.worst:.3e}"
    return r


def check_peak_stability(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("peak-stability", "output peak controlled by divergence from the optimal output")
    rng = cfg.rng(r.name)
    for A in cfg.amps((2.0,)):
        ref = _ref(A)
        y = np.linspace(-A - 6, A + 6, 20001)
        fstar = float(np.max(ref.optimal_input.output().pdf(y)))
        for i in range(cfg.n(50)):
            d = _perturb(rng, ref.optimal_input, 0.3) if i % 2 else random_input(rng, A)
            div, _ = kl_to_optimal(d, ref)
            peak = float(np.max(d.output().pdf(y)))
            r.record(peak, peak_stability_bound(max(div.hi, 0.0), fstar) + ref.slack)
    r.detail = f"worst peak minus bound {r.worst:.3e}"
    return r


def check_chi2_tv(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("chi2-tv-relation", "circle TV at least chi-square over 2(2 pi M + 1)")
    rng = cfg.rng(r.name)
    theta = circle_grid()
    for A in cfg.amps((1.0, 2.0, 4.0)):
        u = uniform_wrapped(A)
        for _ in range(cfg.n(100)):
            law = WrappedLaw(random_input(rng, A), A)
            sup = float(np.max(law.pdf(theta))) + law.tail_bound
            c = wrapped_chi2_vs_uniform(law)
            t = wrapped_tv(law, u)
            r.record(chi2_to_tv_lower(max(c.lo, 0.0), sup), t.hi)
    r.detail = f"worst lower minus TV {r.worst:.3e}"
    return r


def check_wrapped_peak_near_capacity(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("wrapped-peak-near-capacity",
                    "near-optimal inputs have wrapped density below the universal peak constant")
    rng = cfg.rng(r.name)
    m0 = constants().m0
    theta = circle_grid()
    skipped = 0
    for A in cfg.amps((2.0, 4.0)):
        ref = _ref(A)
        for _ in range(cfg.n(30)):
            d = _perturb(rng, ref.optimal_input, 10 ** rng.uniform(-3, -0.5))
            gap = ref.upper_bound - mutual_information(d).lo
            if gap > 1 / A:
                skipped += 1
                continue
            law = WrappedLaw(d, A)
            r.record(float(np.max(law.pdf(theta))) - law.tail_bound, m0)
    r.detail = f"worst peak minus M0 {r.worst:.3e}, {skipped} draws outside the gap window"
    return r


def check_data_processing(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("wrap-data-processing", "wrapping cannot increase relative entropy")
    rng = cfg.rng(r.name)
    for A in cfg.amps((1.0, 2.0, 4.0)):
        for _ in range(cfg.n(34)):
            f, g = random_input(rng, A), random_input(rng, A)
            wk = wrapped_kl(WrappedLaw(f, A), WrappedLaw(g, A))
            r.record(wk.lo, kl(f, g).hi)
    r.detail = f"worst wrapped minus line KL {r.worst:.3e}"
    return r


def check_kl_rate_gap(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("kl-rate-gap", "divergence from the optimal output at most the rate gap")
    rng = cfg.rng(r.name)
    for A in cfg.amps((1.0, 2.0)):
        ref = _ref(A)
        for _ in range(cfg.n(200)):
            div, gap = kl_to_optimal(random_input(rng, A), ref)
            r.record(div.lo, gap.hi)
    r.detail = f"worst divergence minus gap {r.worst:.3e}"
    return r


def check_uniform_stability(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("uniform-vs-optimal-wrapped",
                    "wrapped optimal output is within b0/A of uniform in relative entropy")
    b0 = constants().b0
    vals = []
    for A in cfg.amps((1.0, 2.0, 4.0)):
        v = wrapped_kl(uniform_wrapped(A), WrappedLaw(_ref(A).optimal_input, A))
        vals.append(v.value)
        r.record(v.lo, b0 / A)
    r.notes.append("imported result, checked numerically only")
    r.detail = "divergences " + ", ".join(f"{v:.3e}" for v in vals)
    return r


def check_converse_chain(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("converse-chain", "wrapped non-uniformity chain down to the capacity gap")
    for A in cfg.amps((2.0,)):
        ref = _ref(A)
        for label, d in (("near-optimal", ref.optimal_input), ("single-atom", DiscreteInput.point(A)),
                         ("uniform-grid", DiscreteInput.uniform_grid(A, 101))):
            rep = converse_chain_audit(d, ref, raise_on_violation=False)
            for link in rep.links:
                r.record(-link.slack, 0.0)
            if not rep.holds:
                r.notes.append(f"{label} at A={A:g}: {rep.first_failure().name}")
    r.detail = f"{r.trials} links, smallest slack {-r.worst:.3e}"
    return r


def check_bound_sandwich(cfg: VerifyConfig) -> CheckResult:
    r = CheckResult("bound-sandwich", "converse lower bound below achievability size")
    for A in (1.0, 2.0, 10.0, 100.0, 1e4, 1e6, 1e9):
        for e in (1.0, 1e-1, 1e-3, 1e-6, 1e-12):
            eps = min(e, 1 / A)
            r.record(converse_k_lower(A, eps), achievability_m(A, eps).m)
    r.detail = f"worst converse minus achievability {r.worst:.3e}"
    return r


CHECKS = {
    name: fn
    for name, fn in (
        ("wrap-uniformity", check_wrap_uniformity),
        ("wrap-mass", check_wrap_mass),
        ("mixture-lower-envelope", check_mixture_envelope),
        ("entropy-stability", check_entropy_stability),
        ("log-l2-bound", check_log_l2),
        ("wrapped-chi2-floor", check_wrapped_chi2_floor),
        ("binary-kl-lower", check_binary_kl),
        ("peak-stability", check_peak_stability),
        ("chi2-tv-relation", check_chi2_tv),
        ("wrapped-peak-near-capacity", check_wrapped_peak_near_capacity),
        ("wrap-data-processing", check_data_processing),
        ("kl-rate-gap", check_kl_rate_gap),
        ("uniform-vs-optimal-wrapped", check_uniform_stability),
        ("converse-chain", check_converse_chain),
        ("bound-sandwich", check_bound_sandwich),
    )
}


def run_checks(names=None, cfg: VerifyConfig = VerifyConfig()) -> list[CheckResult]:
    """Run the named checks (all by default) in registry order."""
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    out = []
    for n in names:
        t0 = time.perf_counter()
        res = CHECKS[n](cfg)
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
