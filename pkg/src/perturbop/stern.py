"""Moments of the Stern diatomic sequence and the transfer operator P_tau.

``M_tau(N) = sum_{2^N < n <= 2^(N+1)} s(n)^tau`` grows like ``sigma_tau^N``,
where ``sigma_tau`` is the Perron eigenvalue of

    P_tau[f](x) = (1 + x)^tau (f(1/(1+x)) + f(x/(1+x)))

acting on polynomials of degree <= tau.  On monomials
``P_tau[x^j] = (1+x)^(tau-j) (1 + x^j)``, which gives an exact integer matrix.
Up to the factor phi^tau, P_tau is the g-conjugate of the composition system
with ``a(x) = 1/(1+x)``, ``b(x) = x/(1+x)``, ``kappa = xi^tau`` and
``g(x) = (phi + x)^tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import comb

import numpy as np

from .bounds import BoundProfile, make_profile
from .errors import CapacityError, NumericError
from .operator_core import CompositionSystem, Interval

PHI = (1.0 + math.sqrt(5.0)) / 2.0
DELTA2 = 2.0 / math.sqrt(5.0)
ETA_STERN = 0.837
TABLE_CAP = 2**24
SIGMA_CAP = 64

Matrix2 = tuple[tuple[int, int], tuple[int, int]]

A0: Matrix2 = ((1, 1), (0, 1))
A1: Matrix2 = ((1, 0), (1, 1))
B0: Matrix2 = ((0, 1), (1, 1))
B1: Matrix2 = ((1, 0), (1, 1))
T_SWAP: Matrix2 = ((0, 1), (1, 0))
IDENTITY: Matrix2 = ((1, 0), (0, 1))


def mat_mul(m: Matrix2, n: Matrix2) -> Matrix2:
    return ((m[0][0] * n[0][0] + m[0][1] * n[1][0], m[0][0] * n[0][1] + m[0][1] * n[1][1]),
            (m[1][0] * n[0][0] + m[1][1] * n[1][0], m[1][0] * n[0][1] + m[1][1] * n[1][1]))


def mat_prod(mats) -> Matrix2:
    out = IDENTITY
    for m in mats:
        out = mat_mul(out, m)
    return out


def det2(m: Matrix2) -> int:
    return m[0][0] * m[1][1] - m[0][1] * m[1][0]


@dataclass(frozen=True)
class SternTable:
    """s(0..2^(N+1)) with s(0) = 0, stored as int64 (s(n) <= F_(N+2) stays far below 2^63)."""

    N: int
    values: np.ndarray

    def __getitem__(self, n: int) -> int:
        return int(self.values[n])

    def block(self, N: int) -> np.ndarray:
        """s(n) for 2^N < n <= 2^(N+1)."""
        if N > self.N:
            raise CapacityError(f"table only covers N <= {self.N}")
        return self.values[2**N + 1:2 ** (N + 1) + 1]


def stern_values(N: int, cap: int = TABLE_CAP) -> SternTable:
    size = 2 ** (N + 1)
    if size > cap:
        raise CapacityError(f"2^(N+1) = {size} exceeds cap {cap}")
    s = np.zeros(2 * size + 1, dtype=np.int64)
    s[1] = 1
    # level [2^j, 2^(j+1)] from level [2^(j-1), 2^j]: s(2n) = s(n), s(2n+1) = s(n) + s(n+1)
    for j in range(1, N + 2):
        prev = s[2 ** (j - 1):2**j + 1]
        s[2**j:2 ** (j + 1) + 1:2] = prev
        s[2**j + 1:2 ** (j + 1):2] = prev[:-1] + prev[1:]
    return SternTable(N, s[:size + 1].copy())


def stern_moment_exact(tau: int, N: int, table: SternTable | None = None) -> int:
    table = table or stern_values(N)
    vals, counts = np.unique(table.block(N), return_counts=True)
    return sum(int(c) * int(v) ** tau for v, c in zip(vals, counts))


def stern_moments(tau: int, N_max: int, table: SternTable | None = None) -> list[int]:
    table = table or stern_values(N_max)
    return [stern_moment_exact(tau, N, table) for N in range(N_max + 1)]


@dataclass(frozen=True)
class TransferMatrix:
    """Exact matrix of P_tau on the monomial basis; entry [i][j] is the x^i coefficient
    of P_tau[x^j]."""

    tau: int
    entries: tuple[tuple[int, ...], ...]

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float)

    def apply(self, vec) -> list[int]:
        return [sum(c * v for c, v in zip(row, vec)) for row in self.entries]

    def power_apply(self, N: int, vec) -> list[int]:
        for _ in range(N):
            vec = self.apply(vec)
        return list(vec)


@lru_cache(maxsize=None)
def transfer_matrix(tau: int) -> TransferMatrix:
    if tau < 1:
        raise ValueError("tau must be positive")

    def entry(i: int, j: int) -> int:
        out = comb(tau - j, i)
        if i >= j:
            out += comb(tau - j, i - j)
        return out

    return TransferMatrix(tau, tuple(tuple(entry(i, j) for j in range(tau + 1))
                                     for i in range(tau + 1)))


def charpoly_exact(entries) -> list[int]:
    """Characteristic polynomial det(lambda I - M), highest degree first (Faddeev-LeVerrier)."""
    n = len(entries)
    m = [[Fraction(v) for v in row] for row in entries]
    coeffs = [Fraction(1)]
    acc = [[Fraction(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        # acc <- M (acc + c_{k-1} I)
        shifted = [[acc[i][j] + (coeffs[-1] if i == j else 0) for j in range(n)] for i in range(n)]
        acc = [[sum(m[i][t] * shifted[t][j] for t in range(n)) for j in range(n)] for i in range(n)]
        coeffs.append(-sum(acc[i][i] for i in range(n)) / k)
    if any(c.denominator != 1 for c in coeffs):
        raise NumericError("characteristic polynomial is not integral")
    return [int(c) for c in coeffs]


def poly_eval(coeffs, x):
    out = 0
    for c in coeffs:
        out = out * x + c
    return out


def sigma_from_charpoly(tau: int) -> float:
    """Largest real root of the exact characteristic polynomial, Newton-polished."""
    cp = charpoly_exact(transfer_matrix(tau).entries)
    roots = np.roots(np.array(cp, dtype=float))
    x = float(max(r.real for r in roots if abs(r.imag) < 1e-6 * max(1.0, abs(r))))
    dcp = [c * (len(cp) - 1 - i) for i, c in enumerate(cp[:-1])]
    for _ in range(50):
        step = poly_eval(cp, x) / poly_eval(dcp, x)
        x -= step
        if abs(step) <= 1e-16 * abs(x):
            break
    return x


def sigma_eigen(tau: int, tol: float = 1e-13, max_iter: int = 100_000,
                cap: int = SIGMA_CAP) -> tuple[float, float]:
    """Perron eigenvalue of P_tau by power iteration from the all-ones vector.

    Returns (sigma, relative residual ||M v - sigma v|| / ||M v||).
    """
    if tau > cap:
        raise CapacityError(f"tau={tau} exceeds cap {cap}")
    m = transfer_matrix(tau).as_array()
    v = np.ones(tau + 1)
    for _ in range(max_iter):
        w = m @ v
        sigma = float(w @ v) / float(v @ v)
        resid = float(np.max(np.abs(w - sigma * v)) / np.max(np.abs(w)))
        if resid < tol:
            return sigma, resid
        v = w / np.max(np.abs(w))
    raise NumericError(f"power iteration did not converge for tau={tau}")


@dataclass(frozen=True)
class IdentityCheck:
    tau: int
    N: int
    moment_difference: int
    half_iterate_at_one: int
    passed: bool


def recurrence_identity_check(tau: int, N: int, table: SternTable | None = None) -> IdentityCheck:
    """Exact test of M_tau(N) - M_tau(N-1) = P_tau^N[1](1) / 2 for N >= 1."""
    if N < 1:
        raise ValueError("the identity is stated for N >= 1")
    table = table or stern_values(N)
    lhs = stern_moment_exact(tau, N, table) - stern_moment_exact(tau, N - 1, table)
    vec = [1] + [0] * tau
    at_one = sum(transfer_matrix(tau).power_apply(N, vec))
    ok = at_one % 2 == 0 and lhs == at_one // 2
    return IdentityCheck(tau, N, lhs, at_one // 2, ok)


@dataclass(frozen=True)
class MatrixWord:
    bits: tuple[int, ...]
    matrix: Matrix2
    rewrite: tuple[int, ...]

    @property
    def j_at_one(self) -> int:
        """j_M(1) = c + d for M = [[a, b], [c, d]]."""
        return self.matrix[1][0] + self.matrix[1][1]

    @property
    def n_prime(self) -> int:
        N = len(self.bits)
        return 2**N + sum(self.rewrite[j] * 2**j for j in range(1, N)) + 1


def b_to_a_rewrite(bits) -> MatrixWord:
    """Rewrite B_e0 ... B_e(N-1) as A_e'0 ... A_e'(N-1) T^e'N.

    Substitutes B1 = A1 and B0 = T A0, then moves every T to the right with
    T A0 = A1 T, T A1 = A0 T and T^2 = 1.
    """
    bits = tuple(int(b) for b in bits)
    if not bits:
        raise ValueError("need at least one bit")
    # T^p B1 = A_(1 xor p) T^p and T^p B0 = T^(p+1) A0 = A_(1 xor p) T^(p+1)
    out = []
    pending = 0
    for e in bits:
        out.append(1 ^ pending)
        if e == 0:
            pending ^= 1
    rewrite = tuple(out) + (pending,)
    matrix = mat_prod(B0 if e == 0 else B1 for e in bits)
    return MatrixWord(bits, matrix, rewrite)


def rewrite_matrix(word: MatrixWord) -> Matrix2:
    """A_e'0 ... A_e'(N-1) T^e'N for the rewritten bits."""
    mats = [A0 if e == 0 else A1 for e in word.rewrite[:-1]]
    if word.rewrite[-1]:
        mats.append(T_SWAP)
    return mat_prod(mats)


def rewrite_is_bijective(N: int) -> bool:
    images = {b_to_a_rewrite(bits).rewrite[1:] for bits in product((0, 1), repeat=N)}
    return len(images) == 2**N


# ---------------------------------------------------------------------------
# composition system and bound profile

def map_a(x):
    return 1.0 / (1.0 + x)


def map_b(x):
    return x / (1.0 + x)


def xi_eval(x):
    return (1.0 + PHI * x) / (PHI + x)


def xi_prime_sup() -> float:
    """sup over [0, 1] of xi'(x) = phi / (phi + x)^2, attained at x = 0."""
    return 1.0 / PHI


def fibonacci(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def a_iter(x, n: int):
    """Closed form (F_{n-1} x + F_n) / (F_n x + F_{n+1}) of a^n(x), n >= 1."""
    f0, f1, f2 = fibonacci(n - 1), fibonacci(n), fibonacci(n + 1)
    return (f0 * x + f1) / (f1 * x + f2)


def stern_point_key(word: str) -> Matrix2:
    """The integer matrix of the Moebius map ``w`` (a ~ [[0,1],[1,1]], b ~ [[1,0],[1,1]])."""
    return mat_prod(B0 if c == "a" else B1 for c in word)


def stern_system(tau: int) -> CompositionSystem:
    def kappa(x):
        return xi_eval(x) ** tau

    def weight_g(x):
        return (PHI + x) ** tau

    def step(x):
        # both one-step weights reduce to ((1 + x)/phi)^tau
        return ((1.0 + x) / PHI) ** tau

    x0 = 1.0 / PHI
    return CompositionSystem(map_a=map_a, map_b=map_b, kappa=kappa, weight_g=weight_g,
                             fixed_point_x0=x0, kappa0=DELTA2**tau, domain=Interval(0.0, 1.0),
                             branch_weight_a=step, branch_weight_b=step,
                             point_key=stern_point_key, name=f"stern tau={tau}",
                             params={"tau": tau})


def build_stern_profile(tau: int) -> tuple[CompositionSystem, BoundProfile]:
    if tau < 1:
        raise ValueError("tau must be positive")
    sys = stern_system(tau)
    xp = xi_prime_sup()
    lip_minus = xp * tau * xi_eval(1.0 / PHI) ** (tau - 1)
    lip_plus = max(1.0, xp * tau * xi_eval(2.0 / 3.0) ** (tau - 1))
    gamma = xp * tau * xi_eval(0.75) ** (tau - 1)

    def beta(ell: int) -> float:
        return xi_eval(1.0 / (ell + 1)) ** tau

    def alpha_plus(k: int) -> float:
        return 1.0 if k < 2 else 2.0 ** (1 - k / 2) * lip_plus

    def alpha_minus(k: int) -> float:
        return 2.0 ** (1 - k / 2) * lip_minus

    def delta(ell: int) -> float:
        return PHI**tau

    # g ranges over [phi^tau, (phi+1)^tau]; a maps [0, 1] onto [1/2, 1]
    g_sup = (PHI + 1.0) ** tau + (PHI + 0.5) ** -tau
    profile = make_profile(kappa0=sys.kappa0, gamma=gamma, alpha_plus=alpha_plus,
                           alpha_minus=alpha_minus, beta=beta, delta=delta,
                           alpha_plus_ratio=2.0**-0.5, alpha_minus_ratio=2.0**-0.5,
                           delta_ratio=1.0, g_sup=g_sup, name=f"stern tau={tau}",
                           meta={"tau": tau, "xi_prime_sup": xp})
    return sys, profile


def conjugated_iterate_exact(tau: int, r: int) -> list[int]:
    """Coefficients of P_tau^r[1]; T_g^r[1] equals this polynomial times phi^(-tau r)."""
    return transfer_matrix(tau).power_apply(r, [1] + [0] * tau)


def sigma_predicted(tau: int) -> tuple[float, float]:
    """phi^tau (1 + (2/sqrt 5)^tau) and the size phi^tau 0.837^tau of the error term."""
    if tau < 1:
        raise ValueError("tau must be positive")
    return PHI**tau * (1.0 + DELTA2**tau), PHI**tau * ETA_STERN**tau


def prior_bounds(tau: int) -> tuple[float, float]:
    """Earlier bounds phi^tau <= sigma_tau <= phi^tau (1 + (1 - phi^-6)^tau)."""
    return PHI**tau, PHI**tau * (1.0 + (1.0 - PHI**-6) ** tau)


def secondary_residual(tau: int) -> float:
    """e_tau = sigma_tau / phi^tau - 1 - (2/sqrt 5)^tau."""
    sigma = sigma_eigen(tau)[0]
    return sigma / PHI**tau - 1.0 - DELTA2**tau
