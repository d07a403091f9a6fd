"""Moments of the Thue-Morse trigonometric product and their growth constants.

``T_n(x) = prod_{r<n} (1 - e(2^r x)) = sum_{m < 2^n} t(m) e(m x)`` and
``M_k(n) = int_0^1 |T_n(x)|^{2k} dx`` grows like ``rho_k^n``.  The growth
constant is the spectral radius of the operator ``U_tau`` (tau = 2k) up to the
factor 3^k/2, and ``U_tau`` is the g-conjugate of the composition system
below with ``a(x) = 1 - x/2``, ``b(x) = x/2``, ``kappa = xi^tau``, ``g = G^tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable

import mpmath
import numpy as np

from .bounds import BoundProfile, make_profile
from .errors import CapacityError, DomainError
from .operator_core import (CompositionSystem, GrowthEstimate, Interval, growth_rate,
                            tree_apply, tree_iterates)

MOMENT_CAP = 2**22
G_TERMS = 60
ETA_TM = 0.506
SAFETY = 1.05
X0 = 2.0 / 3.0


def tm_sign(m: int) -> int:
    """t(m) = (-1)^(number of ones in the binary expansion of m)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    return -1 if bin(m).count("1") & 1 else 1


@dataclass(frozen=True)
class IntPolynomial:
    """Polynomial with exact integer coefficients, lowest degree first."""

    coeffs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(int(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __mul__(self, other: "IntPolynomial") -> "IntPolynomial":
        a, b = self.coeffs, other.coeffs
        out = [0] * (len(a) + len(b) - 1)
        for i, ca in enumerate(a):
            if ca:
                for j, cb in enumerate(b):
                    out[i + j] += ca * cb
        return IntPolynomial(tuple(out))

    def __pow__(self, k: int) -> "IntPolynomial":
        out = IntPolynomial((1,))
        for _ in range(k):
            out = out * self
        return out

    def mul_sparse(self, terms: dict[int, int]) -> "IntPolynomial":
        """Multiply by ``sum_d c_d z^d`` given as {d: c_d}."""
        src = np.array(self.coeffs, dtype=object)
        out = np.zeros(len(src) + max(terms), dtype=object)
        for shift, c in terms.items():
            if c:
                out[shift:shift + len(src)] += c * src
        return IntPolynomial(tuple(out))

    def l2_mass(self) -> int:
        return sum(c * c for c in self.coeffs)

    def __call__(self, x):
        out = 0
        for c in reversed(self.coeffs):
            out = out * x + c
        return out


def tm_polynomial(n: int) -> IntPolynomial:
    """Coefficients (t(0), ..., t(2^n - 1)) of T_n."""
    return IntPolynomial(tuple(tm_sign(m) for m in range(2**n)))


def tm_moment_exact(k: int, n: int, cap: int = MOMENT_CAP) -> int:
    """M_k(n) as an exact integer: the squared l2-mass of the coefficients of T_n^k.

    T_n^k is built as ``prod_{r<n} (1 - z^{2^r})^k``, one sparse exact
    convolution per factor.
    """
    if k < 1 or n < 0:
        raise ValueError("need k >= 1 and n >= 0")
    if k * 2**n > cap:
        raise CapacityError(f"k*2^n = {k * 2**n} exceeds cap {cap}")
    poly = IntPolynomial((1,))
    factor = {i: (-1) ** i * comb(k, i) for i in range(k + 1)}
    for r in range(n):
        step = 2**r
        poly = poly.mul_sparse({i * step: c for i, c in factor.items()})
    return poly.l2_mass()


def tm_moments(k: int, n_max: int, cap: int = MOMENT_CAP) -> list[int]:
    return [tm_moment_exact(k, n, cap) for n in range(n_max + 1)]


def rho_estimate(k: int, n_max: int, cap: int = MOMENT_CAP) -> GrowthEstimate:
    """Aitken-accelerated ratios M_k(n+1)/M_k(n), n <= n_max."""
    if n_max < 8:
        raise ValueError("n_max must be at least 8")
    return growth_rate(tm_moments(k, n_max, cap)[1:])


# ---------------------------------------------------------------------------
# maps, the product G and the ratio xi

def map_a(x):
    return 1.0 - x / 2.0


def map_b(x):
    return x / 2.0


def a_iter(x, n: int):
    """Closed form of a^n(x)."""
    return X0 + (-0.5) ** n * (x - X0)


def S_eval(x):
    return 2.0 / math.sqrt(3.0) * np.sin(np.pi * np.asarray(x, dtype=float) / 2.0)


def _check_unit(x, allow_zero: bool = True):
    x = np.asarray(x, dtype=float)
    if np.any(x > 1.0) or np.any(x < 0.0) or (not allow_zero and np.any(x == 0.0)):
        raise DomainError(f"point(s) outside {'[0, 1]' if allow_zero else '(0, 1]'}: {x!r}")
    return x


def G_values(x, terms: int = G_TERMS):
    """prod_{n < terms} S(a^n x), vectorized; 60 factors reach double precision."""
    y = np.asarray(x, dtype=float)
    out = np.ones_like(y)
    for _ in range(terms):
        out = out * S_eval(y)
        y = map_a(y)
    return out if out.ndim else float(out)


def G_log_tail(x: float, trunc_n: int) -> float:
    """Bound on |log G(x) - log G_trunc(x)| when factors n >= trunc_n are dropped.

    |a^n x - 2/3| = 2^-n |x - 2/3| and, on the interval these points fill,
    |(log S)'| = (pi/2) cot(pi y / 2) is largest at the left end, so
    the tail is at most 2 L |x - 2/3| 2^-trunc_n.
    """
    e = abs(x - X0) * 2.0**-trunc_n
    lipschitz = math.pi / 2.0 / math.tan(math.pi / 2.0 * (X0 - e))
    return 2.0 * lipschitz * abs(x - X0) * 2.0**-trunc_n


def G_eval(x: float, trunc_n: int = G_TERMS) -> tuple[float, float]:
    """Partial product G over n < trunc_n and a bound on its relative error."""
    if trunc_n < 4:
        raise ValueError("trunc_n must be at least 4")
    _check_unit(x, allow_zero=False)
    value = float(G_values(float(x), trunc_n))
    rel = math.expm1(G_log_tail(float(x), trunc_n)) + 4.0 * trunc_n * 2.0**-53
    return value, rel


def G_interval(x, trunc_n: int, dps: int = 40) -> tuple[mpmath.mpf, mpmath.mpf, mpmath.mpf]:
    """Partial product over n < trunc_n in extended precision, with a certified enclosure of G(x).

    Returns (value, lo, hi).
    """
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        x0 = mpmath.mpf(2) / 3
        c = 2 / mpmath.sqrt(3)
        val = mpmath.mpf(1)
        y = x
        for _ in range(trunc_n):
            val *= c * mpmath.sin(mpmath.pi * y / 2)
            y = 1 - y / 2
        e = abs(x - x0) * mpmath.mpf(2) ** -trunc_n
        lip = mpmath.pi / 2 * mpmath.cot(mpmath.pi / 2 * (x0 - e))
        tail = 2 * lip * e
        return val, val * mpmath.exp(-tail), val * mpmath.exp(tail)


def xi_eval(x, terms: int = G_TERMS):
    """xi(x) = G(x/2) / G(1 - x/2); xi(0) = 0."""
    x = _check_unit(x)
    return G_values(x / 2.0, terms) / G_values(1.0 - x / 2.0, terms)


def kappa_eval(x, tau: float):
    return xi_eval(x) ** tau


def xi_interval(x: float, trunc_n: int = 11, dps: int = 40) -> tuple[float, float]:
    """Certified enclosure of xi(x) from the products truncated at ``trunc_n``."""
    _check_unit(x, allow_zero=False)
    with mpmath.workdps(dps):
        num, num_lo, num_hi = G_interval(mpmath.mpf(x) / 2, trunc_n, dps)
        den, den_lo, den_hi = G_interval(1 - mpmath.mpf(x) / 2, trunc_n, dps)
        return float(num_lo / den_hi), float(num_hi / den_lo)


def delta1_certified(n_terms: int, dps: int = 40) -> tuple[float, float]:
    """prod_{1 <= n <= n_terms} (2/sqrt 3) sin(pi/3 (1 + (-1)^n 2^-n)) and a bound on the
    absolute error of stopping there."""
    with mpmath.workdps(dps):
        c = 2 / mpmath.sqrt(3)
        third = mpmath.pi / 3
        val = mpmath.mpf(1)
        for n in range(1, n_terms + 1):
            val *= c * mpmath.sin(third * (1 + mpmath.mpf(-1) ** n / mpmath.mpf(2) ** n))
        # factor n is S(y_n) with |y_n - 2/3| = (2/3) 2^-n
        e = mpmath.mpf(2) / 3 * mpmath.mpf(2) ** -(n_terms + 1)
        lip = mpmath.pi / 2 * mpmath.cot(mpmath.pi / 2 * (mpmath.mpf(2) / 3 - e))
        log_tail = lip * 2 * e
        return float(val), float(val * mpmath.expm1(log_tail))


def delta1_const(precision: float = 1e-15) -> float:
    n = 4
    while delta1_certified(n)[1] >= precision / 2:
        n += 1
    return delta1_certified(n)[0]


def h_n(n: int, x):
    """The cotangent pair whose alternating sum gives xi'/xi."""
    x = np.asarray(x, dtype=float)
    s = (-0.5) ** n
    third = np.pi / 3.0
    return (1.0 / np.tan(third + np.pi / 2.0 * s * (x / 2.0 - X0))
            + 1.0 / np.tan(third + np.pi / 2.0 * s * (1.0 / 3.0 - x / 2.0)))


def xi_log_derivative_tail(trunc_n: int) -> float:
    h_max = 2.0 / math.tan(math.pi / 3.0 * (1.0 - 2.0**-trunc_n))
    return math.pi / 4.0 * h_max * 2.0 ** (1 - trunc_n)


def xi_log_derivative(x, trunc_n: int = 60):
    """xi'(x)/xi(x) = (pi/4) sum_n (-1/2)^n h_n(x), truncated at ``trunc_n`` terms."""
    x = _check_unit(x, allow_zero=False)
    out = np.zeros_like(x)
    for n in range(trunc_n):
        out = out + (-0.5) ** n * h_n(n, x)
    out = np.pi / 4.0 * out
    return out if out.ndim else float(out)


def xi_derivative(x, trunc_n: int = 60):
    return xi_eval(x) * xi_log_derivative(x, trunc_n)


# ---------------------------------------------------------------------------
# the operators P_k and U_tau

def P_k_branches(k: int):
    return [(lambda x: x / 2.0, lambda x: 0.5 * (2.0 * np.sin(np.pi * x / 2.0)) ** (2 * k)),
            (lambda x: (x + 1.0) / 2.0, lambda x: 0.5 * (2.0 * np.cos(np.pi * x / 2.0)) ** (2 * k))]


def U_tau_branches(tau: float):
    return [(map_a, lambda x: S_eval(x) ** tau), (map_b, lambda x: S_eval(x) ** tau)]


def apply_P_k(k: int, f: Callable, x):
    (m1, w1), (m2, w2) = P_k_branches(k)
    return w1(x) * f(m1(x)) + w2(x) * f(m2(x))


def apply_U_tau(tau: float, f: Callable, x):
    return S_eval(x) ** tau * (f(map_a(x)) + f(map_b(x)))


def P_k_iterate(k: int, f: Callable, xs, r: int) -> np.ndarray:
    return tree_apply(P_k_branches(k), f, xs, r)


def U_tau_iterate(tau: float, f: Callable, xs, r: int) -> np.ndarray:
    return tree_apply(U_tau_branches(tau), f, xs, r)


def symmetric_grid(n: int) -> np.ndarray:
    """n + 1 equispaced points of [0, 1], closed under x -> 1 - x."""
    return np.arange(n + 1) / n


def P_k_norms(k: int, r_max: int, grid=None) -> np.ndarray:
    grid = symmetric_grid(16) if grid is None else np.asarray(grid, dtype=float)
    return np.max(tree_iterates(P_k_branches(k), grid, r_max), axis=1)


def U_tau_norms(tau: float, r_max: int, grid=None) -> np.ndarray:
    grid = symmetric_grid(16) if grid is None else np.asarray(grid, dtype=float)
    return np.max(tree_iterates(U_tau_branches(tau), grid, r_max), axis=1)


def rho_from_operator(k: int, r_max: int = 20, grid=None) -> GrowthEstimate:
    """Growth of ||P_k^r[1]|| (grid sup), a second route to rho_k."""
    return growth_rate(P_k_norms(k, r_max, grid)[1:])


def tm_point_key(word: str) -> tuple[int, int, int]:
    """Exact form (j, m, s) of ``w x = (m + s x) / 2^j``."""
    j, m, s = 0, 0, 1
    for letter in reversed(word):
        if letter == "a":
            j, m, s = j + 1, 2 ** (j + 1) - m, -s
        elif letter == "b":
            j += 1
        else:
            raise ValueError(f"unknown letter {letter!r}")
    return j, m, s


# ---------------------------------------------------------------------------
# the composition system and its bound profile

def tm_system(tau: float) -> CompositionSystem:
    def kappa(x):
        return xi_eval(x) ** tau

    def weight_g(x):
        return G_values(x) ** tau

    def step(x):
        return S_eval(x) ** tau

    kappa0 = float(kappa(X0))
    return CompositionSystem(map_a=map_a, map_b=map_b, kappa=kappa, weight_g=weight_g,
                             fixed_point_x0=X0, kappa0=kappa0,
                             domain=Interval(0.0, 1.0, lo_closed=False),
                             branch_weight_a=step, branch_weight_b=step,
                             point_key=tm_point_key, name=f"thue-morse tau={tau}",
                             params={"tau": tau})


@lru_cache(maxsize=None)
def _profile_grid_constants(grid_exp: int) -> dict:
    """Grid estimates of ||xi'||, the order-one constant c and sup G, inf G o a."""
    xs = np.arange(1, 2**grid_exp + 1) / 2.0**grid_exp
    xi_prime = xi_derivative(xs)
    g = G_values(xs)
    ratio = g / xs
    return {"xi_prime_sup": float(np.max(xi_prime)) * SAFETY,
            "c": float(min(np.min(ratio), np.min(1.0 / ratio))) / SAFETY,
            "G_sup": float(np.max(g)),
            "G_a_inf": float(np.min(G_values(map_a(xs)))),
            "grid_exp": grid_exp}


def build_tm_profile(tau: float, grid_exp: int = 14) -> tuple[CompositionSystem, BoundProfile]:
    """The Thue-Morse system with kappa = xi^tau, g = G^tau and its bound profile.

    ||xi'|| and c are grid estimates (2^grid_exp points) with a 1.05 safety
    factor; they are recorded in ``profile.meta``.
    """
    if tau < 2:
        raise ValueError("tau must be at least 2")
    sys = tm_system(tau)
    const = _profile_grid_constants(grid_exp)
    xp, c = const["xi_prime_sup"], const["c"]
    xi = lambda t: float(xi_eval(t))  # noqa: E731
    lip_minus = 2.0 / 3.0 * xp * tau * xi(5.0 / 6.0) ** (tau - 1)
    lip_plus = max(1.0, 2.0 / 3.0 * xp * tau * xi(0.75) ** (tau - 1))
    gamma = 2.0 / 3.0 * xp * tau * xi(7.0 / 8.0) ** (tau - 1)

    @lru_cache(maxsize=None)
    def beta(ell: int) -> float:
        return xi(2.0**-ell) ** tau

    def alpha_plus(k: int) -> float:
        return 1.0 if k < 2 else 2.0**-k * lip_plus

    def alpha_minus(k: int) -> float:
        return 2.0**-k * lip_minus

    def delta(ell: int) -> float:
        return c ** (-2 * tau) * 2.0 ** (1 + (ell + 1) * tau)

    g_sup = const["G_sup"] ** tau + const["G_a_inf"] ** -tau
    profile = make_profile(kappa0=sys.kappa0, gamma=gamma, alpha_plus=alpha_plus,
                           alpha_minus=alpha_minus, beta=beta, delta=delta,
                           alpha_plus_ratio=0.5, alpha_minus_ratio=0.5, delta_ratio=2.0**tau,
                           g_sup=g_sup, name=f"thue-morse tau={tau}",
                           meta={"tau": tau, **const})
    return sys, profile


@dataclass(frozen=True)
class TMConstants:
    delta1: float
    eta_tm: float = ETA_TM

    @staticmethod
    def prior_upper(k: int) -> float:
        """Earlier upper bound (3^k + 4^(2k/3)) / 2 for rho_k."""
        return 0.5 * (3.0**k + 4.0 ** (2.0 * k / 3.0))


def tm_constants() -> TMConstants:
    return TMConstants(delta1_const())


def rho_predicted(k: int) -> tuple[float, float]:
    """(3^k/2)(1 + delta1^(2k)) and the size (3^k/2) eta^(2k) of the error term."""
    if k < 1:
        raise ValueError("k must be positive")
    d1 = delta1_const()
    return 0.5 * 3.0**k * (1.0 + d1 ** (2 * k)), 0.5 * 3.0**k * ETA_TM ** (2 * k)
