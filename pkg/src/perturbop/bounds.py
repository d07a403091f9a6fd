"""Quantitative bounds for iterates of a perturbed composition operator.

A :class:`BoundProfile` packages the sequences alpha^+, alpha^-, beta, delta
and the scalars gamma, kappa0, c1, c2, eta that control kappa and g along
a- and b-orbits.  From it we evaluate the series S_sigma, S_+, S_delta, S_-,
S_*, the envelopes of V_r, and a certified bracket for the radius of
convergence of ``sum_r z^r T_g^r[1]``.

Lower-bound factors ``kappa0 - alpha_k^-`` are clipped at zero everywhere:
kappa is nonnegative, so the clipped factor is still a valid lower bound and
a product of two negative factors can never masquerade as a positive bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import BracketFailure, DivergenceError, DomainError, ShapeError
from .operator_core import CompositionSystem, RunWord, word_weight

TAIL_TOL = 1e-14
MAX_TERMS = 100_000
C2_MARGIN = 1.1


@dataclass(frozen=True)
class BoundProfile:
    """Sequences and constants describing kappa and g along orbits.

    The ``*_ratio`` fields are geometric ratio bounds used to certify series
    tails: ``alpha(k+1) <= ratio * alpha(k)`` for ``k >= 2`` and
    ``delta(l+1) <= delta_ratio * delta(l)`` for ``l >= 1``.  ``beta`` must be
    nonincreasing on ``l >= 1``.  ``g_sup`` is ``sup (g(x) + 1/g(a x))``.
    """

    kappa0: float
    gamma: float
    c1: float
    c2: float
    eta: float
    alpha_plus: Callable[[int], float]
    alpha_minus: Callable[[int], float]
    beta: Callable[[int], float]
    delta: Callable[[int], float]
    alpha_plus_ratio: float
    alpha_minus_ratio: float
    delta_ratio: float
    g_sup: float
    name: str = ""
    meta: dict = field(default_factory=dict)

    def sigma(self, ell: int) -> float:
        """beta_1 ... beta_{ell-1}, with sigma_1 = 1."""
        out = 1.0
        for j in range(1, ell):
            out *= self.beta(j)
        return out

    def gamma_at(self, ell: int) -> float:
        return self.gamma if ell == 1 else 1.0

    def validate(self, tol: float = 1e-10) -> list[str]:
        problems = []
        if self.beta(0) < 1.0:
            problems.append(f"beta(0) = {self.beta(0)} < 1")
        c1 = alpha_plus_sum(self, 1.0, start=0)[0]
        if abs(c1 - self.c1) > tol * max(1.0, c1):
            problems.append(f"c1 mismatch: stored {self.c1}, recomputed {c1}")
        eta = eta_of(self)
        if abs(eta - self.eta) > tol * max(1.0, eta):
            problems.append(f"eta mismatch: stored {self.eta}, recomputed {eta}")
        floor = c2_floor(self)
        if self.c2 < floor:
            problems.append(f"c2 = {self.c2} below its defining sum {floor}")
        betas = [self.beta(j) for j in range(1, 65)]
        if any(b2 > b1 * (1 + 1e-12) for b1, b2 in zip(betas, betas[1:])):
            problems.append("beta not nonincreasing on l >= 1")
        return problems

    def summary(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if not callable(v)}
        d["beta0"] = self.beta(0)
        return d


def _sum_geometric(term: Callable[[int], float], ratio_bound: Callable[[int], float], start: int,
                   tol: float = TAIL_TOL) -> tuple[float, float]:
    """Sum ``term(n)`` for ``n >= start``.

    ``ratio_bound(n)`` must bound ``term(m+1)/term(m)`` for every ``m >= n``;
    summation stops once the resulting geometric tail is below ``tol``
    relative to ``1 + |partial sum|``.  Returns (sum, tail bound).
    """
    total = 0.0
    n = start
    while n - start <= MAX_TERMS:
        t = term(n)
        total += t
        q = ratio_bound(n)
        if q < 1.0:
            tail = t * q / (1.0 - q)
            if tail <= tol * (1.0 + abs(total)):
                return total, tail
        n += 1
    raise DivergenceError(f"no certified geometric tail after {MAX_TERMS} terms")


def alpha_plus_sum(p: BoundProfile, rho: float, start: int = 1) -> tuple[float, float]:
    return _sum_geometric(lambda k: rho**k * p.alpha_plus(k),
                          lambda n: rho * p.alpha_plus_ratio if n >= 2 else math.inf, start)


def alpha_minus_sum(p: BoundProfile, rho: float, start: int = 1) -> tuple[float, float]:
    return _sum_geometric(lambda k: rho**k * p.alpha_minus(k),
                          lambda n: rho * p.alpha_minus_ratio if n >= 2 else math.inf, start)


def sigma_sum(p: BoundProfile, rho: float, with_delta: bool = False, start: int = 1,
              tol: float = TAIL_TOL) -> tuple[float, float]:
    """``sum_{l >= start} rho^l sigma_l`` (times ``delta_l`` if requested)."""
    total = 0.0
    sigma = p.sigma(start)
    dr = p.delta_ratio if with_delta else 1.0
    ell = start
    while ell - start <= MAX_TERMS:
        t = rho**ell * sigma
        if with_delta and t > 0.0:
            t *= p.delta(ell)
        total += t
        b = p.beta(ell)
        q = rho * b * dr
        if q < 1.0:
            tail = t * q / (1.0 - q)
            if tail <= tol * (1.0 + abs(total)):
                return total, tail
        sigma *= b
        ell += 1
    raise DivergenceError("sigma series has no certified geometric tail")


def eta_of(p: BoundProfile) -> float:
    """gamma + sum_{k>=0} alpha_k^- + sum_{l>=2} beta_1 ... beta_{l-1}."""
    return p.gamma + alpha_minus_sum(p, 1.0, start=0)[0] + sigma_sum(p, 1.0, start=2)[0]


def c2_floor(p: BoundProfile) -> float:
    """beta_0 + sum_{l>=1} delta_l sigma_l + sup(g + 1/(g o a))."""
    return p.beta(0) + sigma_sum(p, 1.0, with_delta=True)[0] + p.g_sup


def make_profile(*, kappa0, gamma, alpha_plus, alpha_minus, beta, delta, alpha_plus_ratio,
                 alpha_minus_ratio, delta_ratio, g_sup, name="", meta=None,
                 c2_margin: float = C2_MARGIN) -> BoundProfile:
    """Assemble a profile, deriving c1, eta and c2 (smallest valid c2 times the margin)."""
    p = BoundProfile(kappa0=kappa0, gamma=gamma, c1=0.0, c2=0.0, eta=0.0, alpha_plus=alpha_plus,
                     alpha_minus=alpha_minus, beta=beta, delta=delta,
                     alpha_plus_ratio=alpha_plus_ratio, alpha_minus_ratio=alpha_minus_ratio,
                     delta_ratio=delta_ratio, g_sup=g_sup, name=name, meta=dict(meta or {}))
    c1 = alpha_plus_sum(p, 1.0, start=0)[0]
    return replace(p, c1=c1, eta=eta_of(p), c2=c2_margin * c2_floor(p))


@dataclass(frozen=True)
class SeriesValues:
    rho: float
    s_sigma: float
    s_plus: float
    s_delta: float
    s_minus: float
    s_star: float
    a_plus: float
    s_minus_raw: float
    truncation_bound: float


def _check_rho(rho: float) -> None:
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")


def _geo(rho: float) -> float:
    return rho / (1.0 - rho)


def s_minus_clipped(p: BoundProfile, rho: float, k_max: int | None = None) -> tuple[float, float]:
    """``sum_{1 <= k (<= k_max)} rho^k max(kappa0 - alpha_k^-, 0)``."""
    if p.kappa0 <= 0.0 or rho == 0.0:
        return 0.0, 0.0
    if k_max is not None:
        return sum(rho**k * max(p.kappa0 - p.alpha_minus(k), 0.0) for k in range(1, k_max + 1)), 0.0
    total = 0.0
    k = 1
    while k < 2 or p.alpha_minus(k) >= p.kappa0:
        total += rho**k * max(p.kappa0 - p.alpha_minus(k), 0.0)
        k += 1
        if k > MAX_TERMS:
            raise DivergenceError("alpha^- never drops below kappa0")
    # alpha^- is nonincreasing from here on, so every remaining factor is positive
    rest, tail = alpha_minus_sum(p, rho, start=k)
    return total + p.kappa0 * rho**k / (1.0 - rho) - rest, tail


def s_star(p: BoundProfile, rho: float) -> tuple[float, float]:
    """S_*(rho) = kappa0 rho/(1-rho) S_sigma + A (S_sigma + (gamma - 1) rho), A = sum rho^k alpha_k^+."""
    s_sig, t_sig = sigma_sum(p, rho)
    a, t_a = alpha_plus_sum(p, rho)
    val = p.kappa0 * _geo(rho) * s_sig + a * (s_sig + (p.gamma - 1.0) * rho)
    tail = (p.kappa0 * _geo(rho) + a) * t_sig + t_a * (s_sig + abs(p.gamma - 1.0) * rho + t_sig)
    return val, tail


def eval_series(p: BoundProfile, rho: float) -> SeriesValues:
    _check_rho(rho)
    s_sig, t_sig = sigma_sum(p, rho)
    s_del, t_del = sigma_sum(p, rho, with_delta=True)
    a, t_a = alpha_plus_sum(p, rho)
    am, t_am = alpha_minus_sum(p, rho)
    s_min, t_min = s_minus_clipped(p, rho)
    s_st, t_st = s_star(p, rho)
    geo = p.kappa0 * _geo(rho)
    return SeriesValues(rho=rho, s_sigma=s_sig, s_plus=geo + a, s_delta=s_del, s_minus=s_min,
                        s_star=s_st, a_plus=a, s_minus_raw=geo - am,
                        truncation_bound=max(t_sig, t_del, t_a, t_am, t_min, t_st))


def _head(p: BoundProfile, sv: SeriesValues) -> float:
    return sv.s_delta + p.c2**2 * _geo(sv.rho) * sv.s_sigma


def vr_upper(p: BoundProfile, rho: float, r: int, series: SeriesValues | None = None) -> float:
    """Upper bound for V_r^+ (r counts runs, not letters)."""
    sv = series or eval_series(p, rho)
    beta0 = p.beta(0)
    if r == 0:
        return p.c2**2 / (1.0 - rho)
    head = _head(p, sv)
    if r == 1:
        return beta0 * head
    if r % 2 == 0:
        return head * sv.s_star ** ((r - 2) // 2) * sv.s_plus
    return beta0 * head * sv.s_sigma * sv.s_star ** ((r - 3) // 2) * sv.s_plus


def vr_upper_total(p: BoundProfile, rho: float) -> float:
    """``sum_{r >= 0}`` of :func:`vr_upper`; infinite unless S_*(rho) < 1."""
    sv = eval_series(p, rho)
    if sv.s_star >= 1.0:
        return math.inf
    head = _head(p, sv)
    geo = 1.0 / (1.0 - sv.s_star)
    beta0 = p.beta(0)
    return (p.c2**2 / (1.0 - rho) + beta0 * head + head * sv.s_plus * geo
            + beta0 * head * sv.s_sigma * sv.s_plus * geo)


def vr_lower(p: BoundProfile, rho: float, r: int, gx: float, k_max: int | None = None) -> float:
    """Lower bound ``c2^-1 g(x) (1/(1-rho)) (rho S_-(rho))^r`` for V_r(x).

    With ``k_max`` every run length is truncated at ``k_max``, giving a lower
    bound for the correspondingly truncated V_r(x).
    """
    _check_rho(rho)
    if gx <= 0:
        raise DomainError("g(x) must be positive")
    s_min = s_minus_clipped(p, rho, k_max)[0]
    if k_max is None:
        lead = 1.0 / (1.0 - rho)
    else:
        lead = sum(rho**k for k in range(k_max + 1))
    return gx / p.c2 * lead * (rho * s_min) ** r


@dataclass(frozen=True)
class RadiusBracket:
    rho_lo: float
    rho_hi: float
    kappa0: float
    eta: float
    width_constant: float
    lo_constant: float
    hi_constant: float

    @property
    def growth_interval(self) -> tuple[float, float]:
        """Interval [1/rho_hi, 1/rho_lo] that must contain the growth rate."""
        return 1.0 / self.rho_hi, 1.0 / self.rho_lo

    def contains_radius(self, rho: float) -> bool:
        return self.rho_lo <= rho <= self.rho_hi


def _bisect(pred: Callable[[float], bool], tol: float) -> tuple[float, float]:
    """Return (lo, hi) with pred(lo) False, pred(hi) True, for monotone pred on [0, 1)."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def radius_bracket(p: BoundProfile, tol: float = 1e-12) -> RadiusBracket:
    """Certified bracket [rho_lo, rho_hi] for the radius of convergence.

    rho_lo is the largest rho found with S_*(rho) < 1 (so sum V_r^+ converges);
    rho_hi the smallest with rho S_-(rho) > 1 (so sum V_r(x) diverges).
    """
    diag = {"kappa0": p.kappa0, "eta": p.eta, "c1": p.c1}
    if p.kappa0 <= 0.0:
        raise BracketFailure("kappa0 must be positive for a finite bracket", diag)
    lo, _ = _bisect(lambda r: s_star(p, r)[0] >= 1.0, tol)
    _, hi = _bisect(lambda r: r * s_minus_clipped(p, r)[0] > 1.0, tol)
    if not 0.0 < lo <= hi < 1.0:
        diag.update(rho_lo=lo, rho_hi=hi)
        raise BracketFailure("bounds do not produce an ordered bracket in (0, 1)", diag)
    scale = p.eta * p.kappa0 + p.kappa0**2
    centre = 1.0 - p.kappa0
    return RadiusBracket(rho_lo=lo, rho_hi=hi, kappa0=p.kappa0, eta=p.eta,
                         width_constant=(hi - lo) / scale,
                         lo_constant=abs(lo - centre) / scale,
                         hi_constant=abs(hi - centre) / scale)


# ---------------------------------------------------------------------------
# hypothesis verification


@dataclass(frozen=True)
class ConditionResult:
    condition: str
    worst_slack: float
    witness: dict
    passed: bool
    checked: int
    informational: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HypothesisReport:
    profile: str
    conditions: tuple[ConditionResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions if not c.informational)

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.condition == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"profile": self.profile, "passed": self.passed,
                "conditions": [c.to_dict() for c in self.conditions]}


def _sample_points(sys: CompositionSystem, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    dom = sys.domain
    xs = dom.hi - (dom.hi - dom.lo) * u
    if not dom.hi_closed:
        xs = dom.lo + (dom.hi - dom.lo) * u
    ends = [e for e, closed in ((dom.lo, dom.lo_closed), (dom.hi, dom.hi_closed)) if closed]
    extra = np.array(ends + [sys.fixed_point_x0], dtype=float)
    x = np.concatenate([xs[:, 0], extra])
    y = np.concatenate([xs[:, 1], extra])
    return x, y


def _normalized(rhs, lhs):
    return (rhs - lhs) / np.maximum(1.0, np.abs(rhs))


class _Worst:
    def __init__(self, name, tol, informational=False):
        self.name, self.tol, self.informational = name, tol, informational
        self.slack = math.inf
        self.witness: dict = {}
        self.count = 0

    def update(self, margins, points, **labels):
        margins = np.atleast_1d(margins)
        self.count += margins.size
        i = int(np.argmin(margins))
        if margins[i] < self.slack:
            self.slack = float(margins[i])
            pts = np.atleast_1d(points)
            x = float(pts[min(i, pts.size - 1)])
            # x-free conditions carry no witness point
            self.witness = {"x": None if math.isnan(x) else x, **labels}

    def result(self, passed=None) -> ConditionResult:
        ok = self.slack >= -self.tol if passed is None else passed
        return ConditionResult(self.name, self.slack, self.witness, bool(ok), self.count,
                               self.informational)


def _power(m, n, x):
    for _ in range(n):
        x = m(x)
    return x


def verify_hypotheses(sys: CompositionSystem, p: BoundProfile, n_samples: int = 1024,
                      k_max: int = 30, ell_max: int = 30, seed: int = 0,
                      tol: float = 1e-12) -> HypothesisReport:
    """Check the orbit hypotheses of ``p`` against ``sys`` on quasi-random samples.

    Conditions: kappa(b^l x) <= beta_l; kappa0 - alpha_k^- <= kappa(a^k x) <=
    kappa0 + alpha_k^+; kappa(a^k b a x) <= kappa0 + gamma alpha_k^+;
    g(x)/g(b^l x) <= delta_l and g(x)/g(b^l a y) <= delta_l (each sup checked
    separately, in log space); and the defining inequality of c2.  Slacks are
    normalized by max(1, |bound|); hyp-g slacks are log-ratios.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    x, y = _sample_points(sys, n_samples, seed)
    k0 = p.kappa0
    results = []

    hb = _Worst("hyp-b", tol)
    pts = x.copy()
    for ell in range(ell_max + 1):
        hb.update(_normalized(p.beta(ell), sys.kappa(pts)), pts, ell=ell)
        pts = sys.map_b(pts)
    results.append(hb.result())

    lo, hi = _Worst("hyp-a-lower", tol), _Worst("hyp-a-upper", tol)
    positive = _Worst("hyp-a-positive", 0.0, informational=True)
    nonpos = []
    pts = x.copy()
    for k in range(k_max + 1):
        kap = sys.kappa(pts)
        lower = k0 - p.alpha_minus(k)
        lo.update((kap - lower) / max(1.0, abs(lower)), x, k=k)
        hi.update(_normalized(k0 + p.alpha_plus(k), kap), x, k=k)
        positive.update(np.array([lower]), np.array([math.nan]), k=k)
        if lower <= 0:
            nonpos.append(k)
        pts = sys.map_a(pts)
    results += [lo.result(), hi.result()]
    pos = positive.result(passed=not nonpos)
    results.append(replace(pos, witness={**pos.witness, "nonpositive_k": nonpos}))

    aba = _Worst("hyp-aba", tol)
    pts = sys.map_a(sys.map_b(sys.map_a(x)))
    for k in range(1, k_max + 1):
        pts = sys.map_a(pts)
        aba.update(_normalized(k0 + p.gamma * p.alpha_plus(k), sys.kappa(pts)), x, k=k)
    results.append(aba.result())

    log_g_x = np.log(sys.weight_g(x))
    i_max = int(np.argmax(log_g_x))
    sup_log_g = log_g_x[i_max]
    gb, gba = _Worst("hyp-g-b", tol), _Worst("hyp-g-ba", tol)
    gsum = _Worst("hyp-g-sum", tol, informational=True)
    pts_x = x.copy()
    pts_y = sys.map_a(y)
    for ell in range(1, ell_max + 1):
        pts_x = sys.map_b(pts_x)
        pts_y = sys.map_b(pts_y)
        log_delta = math.log(p.delta(ell))
        r1 = log_g_x - np.log(sys.weight_g(pts_x))
        r2 = sup_log_g - np.log(sys.weight_g(pts_y))
        gb.update(log_delta - r1, x, ell=ell)
        j = int(np.argmax(r2))
        gba.update(log_delta - r2, y, ell=ell, x_sup=float(x[i_max]))
        total = math.exp(np.max(r1)) + math.exp(r2[j])
        gsum.update(np.array([math.log(p.delta(ell)) - math.log(total)]), np.array([math.nan]),
                    ell=ell)
    results += [gb.result(), gba.result(), gsum.result()]

    c2w = _Worst("c2-bound", tol)
    g_term = sys.weight_g(x) + 1.0 / sys.weight_g(sys.map_a(x))
    need = p.beta(0) + sigma_sum(p, 1.0, with_delta=True)[0] + g_term
    c2w.update(_normalized(p.c2, need), x)
    results.append(c2w.result())

    return HypothesisReport(p.name, tuple(results))


def mutate_profile(p: BoundProfile, alpha_plus_scale: float = 0.5) -> BoundProfile:
    """A copy of ``p`` with alpha^+ scaled (used to build failing profiles)."""
    ap = p.alpha_plus
    return replace(p, alpha_plus=lambda k: alpha_plus_scale * ap(k),
                   name=f"{p.name} (alpha+ x{alpha_plus_scale})")


# ---------------------------------------------------------------------------
# single-word bounds


@dataclass(frozen=True)
class WeightBoundReport:
    word: str
    x: float
    u: float
    upper: float | None
    lower: float
    upper_slack: float | None
    lower_slack: float
    passed: bool


def word_upper_bound(p: BoundProfile, w: RunWord) -> float:
    """Upper bound for u(w, .) from the run lengths k0, k1, ..., kr of ``w``."""
    ks = w.exponents()
    r = w.num_runs
    if r == 0:
        return 1.0 if ks[0] == 0 else p.c2**2
    d = p.c2**2 if ks[0] > 0 else p.delta(ks[1])
    beta0 = p.beta(0)
    if r == 1:
        return d * beta0 * p.sigma(ks[1])
    pi = 1.0
    for j in range(1, r + 1, 2):
        pi *= p.sigma(ks[j])
    for j in range(1, r - 2, 2):
        pi *= p.kappa0 + p.gamma_at(ks[j + 2]) * p.alpha_plus(ks[j + 1])
    if r % 2 == 0:
        return d * (p.kappa0 + p.alpha_plus(ks[r])) * pi
    return d * beta0 * (p.kappa0 + p.alpha_plus(ks[r - 1])) * pi


def word_lower_bound(sys: CompositionSystem, p: BoundProfile, w: RunWord, x: float) -> float:
    """``c2^-1 g(x) prod_j max(kappa0 - alpha^-_{k_j}, 0)`` for ``a^k0 b a^k1 ... b a^km``."""
    out = float(sys.weight_g(x)) / p.c2
    for k in w.b_gaps():
        out *= max(p.kappa0 - p.alpha_minus(k), 0.0)
    return out


def check_weight_bounds(sys: CompositionSystem, p: BoundProfile, w, x: float,
                        tol: float = 1e-12) -> WeightBoundReport:
    w = w if isinstance(w, RunWord) else RunWord.from_letters(w)
    if len(w) == 0:
        raise ShapeError("weight bounds need a nonempty word")
    u = word_weight(sys, w, x)
    upper = word_upper_bound(p, w)
    lower = word_lower_bound(sys, p, w, x)
    up_slack = (upper - u) / max(abs(upper), 1e-300)
    low_slack = (u - lower) / max(abs(u), 1e-300)
    ok = up_slack >= -tol and low_slack >= -tol
    return WeightBoundReport(w.letters(), float(x), u, upper, lower, up_slack, low_slack, ok)
