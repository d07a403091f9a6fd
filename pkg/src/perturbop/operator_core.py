"""Composition systems, word weights and iterates of the conjugated operator.

A composition system acts on functions of one real variable by

    T[f](x) = f(a(x)) + kappa(x) * f(b(x)),

and its conjugate by a positive weight ``g`` is ``T_g[f] = g * T[f / g]``.
Words over the alphabet {a, b} act on points right to left: for
``w = w1 w2 ... wn`` the point ``w x`` is ``w1(w2(...wn(x)))``.

All callables stored on a :class:`CompositionSystem` must accept numpy arrays
as well as Python floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterator, Sequence

import numpy as np

from .errors import CapacityError, DomainError, NumericError

WORD_SUM_CAP = 14
DIRECT_CAP = 24


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        lower = x >= self.lo if self.lo_closed else x > self.lo
        upper = x <= self.hi if self.hi_closed else x < self.hi
        res = lower & upper
        return bool(res) if res.ndim == 0 else res

    def require(self, x) -> None:
        if not np.all(self.contains(x)):
            raise DomainError(f"point(s) outside {self}: {x!r}")

    def sample(self, n: int) -> np.ndarray:
        """Midpoint-rule sample of ``n`` interior points plus closed endpoints."""
        pts = self.lo + (self.hi - self.lo) * (np.arange(n) + 0.5) / n
        extra = []
        if self.lo_closed:
            extra.append(self.lo)
        if self.hi_closed:
            extra.append(self.hi)
        return np.sort(np.concatenate([pts, np.asarray(extra, dtype=float)]))

    def __str__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo}, {self.hi}{right}"


@dataclass(frozen=True)
class CompositionSystem:
    """The data (a, b, kappa, g, x0, kappa0) on a real interval.

    ``branch_weight_a`` and ``branch_weight_b`` are the one-step factors
    ``g(x)/g(a x)`` and ``kappa(x) g(x)/g(b x)`` of the conjugated operator.
    When omitted they are computed as literal quotients; applications whose
    weight vanishes at a domain endpoint supply closed forms instead.
    ``point_key`` maps a word to an exact, hashable description of ``w x``.
    """

    map_a: Callable
    map_b: Callable
    kappa: Callable
    weight_g: Callable
    fixed_point_x0: float
    kappa0: float
    domain: Interval
    branch_weight_a: Callable | None = None
    branch_weight_b: Callable | None = None
    point_key: Callable[[str], Hashable] | None = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def weight_a(self, x):
        if self.branch_weight_a is not None:
            return self.branch_weight_a(x)
        return self.weight_g(x) / self.weight_g(self.map_a(x))

    def weight_b(self, x):
        if self.branch_weight_b is not None:
            return self.branch_weight_b(x)
        return self.kappa(x) * self.weight_g(x) / self.weight_g(self.map_b(x))

    def apply_letter(self, letter: str, x):
        if letter == "a":
            return self.map_a(x)
        if letter == "b":
            return self.map_b(x)
        raise ValueError(f"unknown letter {letter!r}")

    def validate(self, n_samples: int = 257, tol: float = 1e-14) -> list[str]:
        """Check the structural invariants on a sample; return a list of problems."""
        problems = []
        x0 = self.fixed_point_x0
        if abs(self.map_a(x0) - x0) > tol:
            problems.append(f"a(x0) != x0: {self.map_a(x0)!r} vs {x0!r}")
        if abs(self.kappa(x0) - self.kappa0) > tol:
            problems.append(f"kappa(x0) != kappa0: {self.kappa(x0)!r} vs {self.kappa0!r}")
        xs = self.domain.sample(n_samples)
        if np.any(self.weight_g(xs) <= 0):
            problems.append("g not positive on sample")
        if np.any(self.weight_g(self.map_a(xs)) <= 0):
            problems.append("g o a not positive on sample")
        if np.any(self.kappa(xs) < 0):
            problems.append("kappa negative on sample")
        for m in (self.map_a, self.map_b):
            if not np.all(self.domain.contains(m(xs))):
                problems.append("a map leaves the domain")
        return problems


@dataclass(frozen=True)
class RunWord:
    """A word ``a^k0 b^k1 a^k2 ...`` stored by its run lengths.

    ``runs[0]`` is a b-run, ``runs[1]`` an a-run, and so on alternately.
    """

    k0: int
    runs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.k0 < 0:
            raise ValueError("k0 must be nonnegative")
        if any(k <= 0 for k in self.runs):
            raise ValueError("inner runs must be positive")
        object.__setattr__(self, "runs", tuple(int(k) for k in self.runs))

    @classmethod
    def from_letters(cls, word: str) -> "RunWord":
        if set(word) - {"a", "b"}:
            raise ValueError(f"not a word over {{a, b}}: {word!r}")
        k0 = len(word) - len(word.lstrip("a"))
        runs = []
        rest = word[k0:]
        letter = "b"
        while rest:
            n = len(rest) - len(rest.lstrip(letter))
            runs.append(n)
            rest = rest[n:]
            letter = "a" if letter == "b" else "b"
        return cls(k0, tuple(runs))

    def letters(self) -> str:
        parts = ["a" * self.k0]
        for i, k in enumerate(self.runs):
            parts.append(("b" if i % 2 == 0 else "a") * k)
        return "".join(parts)

    def __len__(self) -> int:
        return self.k0 + sum(self.runs)

    @property
    def count_b(self) -> int:
        return sum(self.runs[0::2])

    @property
    def num_runs(self) -> int:
        """The index r of the last run ``k_r``."""
        return len(self.runs)

    def exponents(self) -> tuple[int, ...]:
        return (self.k0, *self.runs)

    def b_gaps(self) -> list[int]:
        """Lengths k_1..k_m of the a-blocks after each b in ``a^k0 b a^k1 ... b a^km``."""
        word = self.letters()
        return [len(block) for block in word.split("b")[1:]]


def _compositions(m: int) -> Iterator[tuple[int, ...]]:
    if m == 0:
        yield ()
        return
    for first in range(1, m + 1):
        for rest in _compositions(m - first):
            yield (first, *rest)


def enumerate_words(r: int) -> Iterator[RunWord]:
    """All words of length ``r``, lexicographic in (k0, k1, ...)."""
    for k0 in range(r + 1):
        for runs in _compositions(r - k0):
            yield RunWord(k0, runs)


@dataclass(frozen=True)
class SampledFunction:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise NumericError("non-finite sampled value")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def _finite(value, what: str):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite {what}: {value!r}")
    return value


def apply_T(sys: CompositionSystem, f: Callable, x: float, conjugated: bool = False) -> float:
    """One application of T (or of its g-conjugate) to ``f`` at ``x``."""
    sys.domain.require(x)
    ax, bx = sys.map_a(x), sys.map_b(x)
    if conjugated:
        val = sys.weight_a(x) * f(ax) + sys.weight_b(x) * f(bx)
    else:
        val = f(ax) + sys.kappa(x) * f(bx)
    return float(_finite(val, "operator value"))


def _as_word(w) -> str:
    return w.letters() if isinstance(w, RunWord) else str(w)


def word_weight(sys: CompositionSystem, w, x: float, method: str = "recursive") -> float:
    """The weight u(w, x) collected along the branch word ``w``.

    ``recursive`` peels letters off the right end using the one-step branch
    weights; ``product`` uses ``g(x)/g(wx)`` times kappa at every point
    ``v x`` with ``bv`` a suffix of ``w``.
    """
    word = _as_word(w)
    sys.domain.require(x)
    if method == "recursive":
        u = 1.0
        y = x
        for letter in reversed(word):
            u *= sys.weight_a(y) if letter == "a" else sys.weight_b(y)
            y = sys.apply_letter(letter, y)
        return float(_finite(u, "word weight"))
    if method == "product":
        n = len(word)
        suffix_points = np.empty(n + 1)
        suffix_points[n] = x
        for i in range(n - 1, -1, -1):
            suffix_points[i] = sys.apply_letter(word[i], suffix_points[i + 1])
        sys.domain.require(suffix_points)
        b_pos = [i + 1 for i, c in enumerate(word) if c == "b"]
        kap = np.prod(sys.kappa(suffix_points[b_pos])) if b_pos else 1.0
        u = sys.weight_g(x) / sys.weight_g(suffix_points[0]) * kap
        return float(_finite(u, "word weight"))
    raise ValueError(f"unknown method {method!r}")


def iterate_word_sum(sys: CompositionSystem, r: int, x: float, cap: int = WORD_SUM_CAP) -> float:
    """``T_g^r[1](x)`` as the sum of u(w, x) over all 2^r words, in fixed order."""
    if r > cap:
        raise CapacityError(f"word enumeration with r={r} exceeds cap {cap}")
    total = 0.0
    for w in enumerate_words(r):
        total += word_weight(sys, w, x)
    return total


Branch = tuple[Callable, Callable]


def _levels(branches: Sequence[Branch], xs: np.ndarray, depth: int):
    """Points and branch weights of the depth-``depth`` tree rooted at each x.

    Level j holds an array of shape (len(xs), n^j); column ``i`` is the node
    whose branch digits (base n, most significant first) spell ``i``, which is
    an exact key for the node's point.
    """
    pts = [xs[:, None]]
    weights = []
    for _ in range(depth):
        p = pts[-1]
        weights.append(np.stack([wgt(p) for _, wgt in branches], axis=-1))
        children = np.stack([m(p) for m, _ in branches], axis=-1)
        pts.append(children.reshape(p.shape[0], -1))
    return pts, weights


def tree_apply(branches: Sequence[Branch], leaf: Callable, xs, r: int) -> np.ndarray:
    """``L^r[leaf](xs)`` for ``L[f](x) = sum_i weight_i(x) f(map_i(x))``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    pts, weights = _levels(branches, xs, r)
    vals = np.asarray(leaf(pts[r]), dtype=float) * np.ones_like(pts[r])
    for j in range(r - 1, -1, -1):
        child = vals.reshape(pts[j].shape[0], pts[j].shape[1], len(branches))
        vals = np.sum(weights[j] * child, axis=-1)
    return vals[:, 0]


def tree_iterates(branches: Sequence[Branch], xs, r_max: int) -> np.ndarray:
    """``L^r[1](xs)`` for every ``0 <= r <= r_max``; shape (r_max + 1, len(xs)).

    Accumulates the product of branch weights from the root down, so that the
    level-r sum is the r-th iterate.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.empty((r_max + 1, xs.size))
    pts = xs[:, None]
    cum = np.ones_like(pts)
    out[0] = 1.0
    for r in range(1, r_max + 1):
        w = np.stack([wgt(pts) for _, wgt in branches], axis=-1)
        cum = (cum[..., None] * w).reshape(xs.size, -1)
        pts = np.stack([m(pts) for m, _ in branches], axis=-1).reshape(xs.size, -1)
        out[r] = cum.sum(axis=1)
    return _finite(out, "iterate")


def iterate_direct(sys: CompositionSystem, r: int, x: float, cap: int = DIRECT_CAP) -> float:
    """``T_g^r[1](x) = g(x) T^r[1/g](x)`` by direct functional iteration.

    Uses only a, b, kappa and g (never the branch-weight shortcuts), so it is
    independent of the word-weight route.
    """
    if r > cap:
        raise CapacityError(f"direct iteration with r={r} exceeds cap {cap}")
    sys.domain.require(x)
    branches = [(sys.map_a, lambda y: np.ones_like(y)), (sys.map_b, sys.kappa)]
    inner = tree_apply(branches, lambda y: 1.0 / sys.weight_g(y), [x], r)[0]
    return float(_finite(sys.weight_g(x) * inner, "iterate"))


def conjugated_branches(sys: CompositionSystem) -> list[Branch]:
    return [(sys.map_a, sys.weight_a), (sys.map_b, sys.weight_b)]


def iterate_on_grid(sys: CompositionSystem, r_max: int, grid, cap: int = DIRECT_CAP) -> list[SampledFunction]:
    """Sampled ``T_g^r[1]`` for r = 0..r_max on ``grid``."""
    if r_max > cap:
        raise CapacityError(f"r_max={r_max} exceeds cap {cap}")
    grid = np.asarray(grid, dtype=float)
    sys.domain.require(grid)
    vals = tree_iterates(conjugated_branches(sys), grid, r_max)
    return [SampledFunction(grid, v) for v in vals]


def iterate_norms(sys: CompositionSystem, r_max: int, grid, cap: int = DIRECT_CAP) -> np.ndarray:
    """Grid sup-norms of ``T_g^r[1]`` for r = 0..r_max."""
    return np.array([f.sup_norm() for f in iterate_on_grid(sys, r_max, grid, cap)])


@dataclass(frozen=True)
class GrowthEstimate:
    estimate: float
    error_band: float
    ratios: tuple[float, ...]
    accelerated: tuple[float, ...]


def aitken(seq: Sequence[float]) -> list[float]:
    """Aitken's delta-squared transform; a zero second difference leaves the term as is."""
    out = []
    for i in range(2, len(seq)):
        x0, x1, x2 = seq[i - 2], seq[i - 1], seq[i]
        den = x2 - 2.0 * x1 + x0
        out.append(x2 if den == 0.0 else x2 - (x2 - x1) ** 2 / den)
    return out


def growth_rate(norms: Sequence) -> GrowthEstimate:
    """Growth constant of a positive sequence from its consecutive ratios.

    ``norms`` are the values for r = 1..R (ints are divided exactly before
    rounding). The estimate is the last Aitken-accelerated ratio; the band is
    the spread of the last three accelerated ratios.
    """
    if len(norms) < 8:
        raise ValueError("growth_rate needs at least 8 terms")
    for v in norms:
        if not v > 0:
            raise NumericError(f"non-positive norm {v!r}")
    ratios = [norms[i] / norms[i - 1] for i in range(1, len(norms))]
    ratios = [float(q) for q in ratios]
    if not all(math.isfinite(q) for q in ratios):
        raise NumericError("non-finite ratio")
    acc = aitken(ratios)
    tail = acc[-3:]
    return GrowthEstimate(acc[-1], max(tail) - min(tail), tuple(ratios), tuple(acc))
