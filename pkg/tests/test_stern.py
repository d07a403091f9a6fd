import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from perturbop import operator_core as oc
from perturbop import stern as st
from perturbop.errors import CapacityError


def stern_direct(n: int) -> int:
    """Plain recursion, independent of the table's level-by-level fill."""
    if n < 2:
        return n
    if n % 2 == 0:
        return stern_direct(n // 2)
    return stern_direct(n // 2) + stern_direct(n // 2 + 1)


def poly_mul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def binom_poly(m):
    out = [1]
    for _ in range(m):
        out = poly_mul(out, [1, 1])
    return out


# ---------------------------------------------------------------------------
# sequence and moments

def test_table_values():
    tab = st.stern_values(10)
    assert tab[1] == 1 and tab[2] == 1 and tab[5] == 3
    assert all(tab[n] == stern_direct(n) for n in range(2**11 + 1))
    with pytest.raises(CapacityError):
        st.stern_values(30)


def test_block_maximum_is_fibonacci():
    tab = st.stern_values(20)
    for N in range(21):
        assert int(tab.block(N).max()) == st.fibonacci(N + 2)


def test_recursion_invariants():
    tab = st.stern_values(14)
    n = np.arange(1, 2**14)
    assert np.array_equal(tab.values[2 * n], tab.values[n])
    assert np.array_equal(tab.values[2 * n + 1], tab.values[n] + tab.values[n + 1])


def test_moment_anchors():
    tab = st.stern_values(20)
    for N in range(21):
        assert st.stern_moment_exact(1, N, tab) == 3**N
    assert all(st.stern_moment_exact(tau, 0) == 1 for tau in range(1, 8))
    assert st.stern_moment_exact(2, 2) == 3**2 + 2**2 + 3**2 + 1**2 == 23


@given(tau=hs.integers(1, 12), N=hs.integers(0, 9))
def test_moments_match_direct_sum(tau, N):
    direct = sum(stern_direct(n) ** tau for n in range(2**N + 1, 2 ** (N + 1) + 1))
    assert st.stern_moment_exact(tau, N) == direct


def test_large_moments_are_exact():
    # values exceed 2^63 long before this: must stay Python integers
    m = st.stern_moment_exact(30, 16)
    assert isinstance(m, int) and m > 2**200


# ---------------------------------------------------------------------------
# transfer matrix and eigenvalue

def test_transfer_matrix_small():
    assert st.transfer_matrix(1).entries == ((2, 1), (2, 1))
    assert st.transfer_matrix(2).entries == ((2, 1, 1), (4, 2, 0), (2, 1, 1))


@pytest.mark.parametrize("tau", [1, 3, 6, 11])
def test_transfer_matrix_columns(tau):
    m = st.transfer_matrix(tau).entries
    for j in range(tau + 1):
        one_plus = [0] * (j + 1)
        one_plus[0] += 1
        one_plus[j] += 1
        col = poly_mul(binom_poly(tau - j), one_plus)
        col += [0] * (tau + 1 - len(col))
        assert [m[i][j] for i in range(tau + 1)] == col
    assert sum(m[i][0] for i in range(tau + 1)) == 2 ** (tau + 1)
    assert min(min(row) for row in m) >= 0


@given(tau=hs.integers(1, 8), coeffs=hs.lists(hs.integers(-5, 5), min_size=1, max_size=9),
       x=hs.fractions(0, 1, max_denominator=50))
def test_transfer_matrix_is_the_operator(tau, coeffs, x):
    coeffs = (coeffs + [0] * (tau + 1))[: tau + 1]

    def f(y):
        return sum(c * y**i for i, c in enumerate(coeffs))

    image = st.transfer_matrix(tau).apply(coeffs)
    direct = (1 + x) ** tau * (f(1 / (1 + x)) + f(x / (1 + x)))
    assert sum(c * x**i for i, c in enumerate(image)) == direct


def test_charpoly_tau2():
    assert st.charpoly_exact(st.transfer_matrix(2).entries) == [1, -5, 2, 0]


def test_sigma_anchors():
    sigma, resid = st.sigma_eigen(1)
    assert resid < 1e-13
    cp = st.charpoly_exact(st.transfer_matrix(1).entries)
    assert Fraction(round(sigma)) == 3 and st.poly_eval(cp, Fraction(3)) == 0
    assert st.sigma_eigen(2)[0] == pytest.approx((5 + math.sqrt(17)) / 2, rel=1e-13)


@pytest.mark.parametrize("tau", range(1, 7))
def test_sigma_matches_charpoly(tau):
    assert abs(st.sigma_eigen(tau)[0] - st.sigma_from_charpoly(tau)) <= 1e-10


def test_sigma_against_numpy():
    for tau in (10, 25, 40):
        ev = np.linalg.eigvals(st.transfer_matrix(tau).as_array())
        assert st.sigma_eigen(tau)[0] == pytest.approx(max(ev.real), rel=1e-11)


def test_sigma_cap():
    with pytest.raises(CapacityError):
        st.sigma_eigen(65)


@pytest.mark.parametrize("tau", range(1, 31))
def test_prior_bounds(tau):
    lo, hi = st.prior_bounds(tau)
    assert lo <= st.sigma_eigen(tau)[0] <= hi


@pytest.mark.parametrize("tau", range(1, 9))
def test_moment_ratios_converge_to_sigma(tau):
    tab = st.stern_values(18)
    ge = oc.growth_rate(st.stern_moments(tau, 18, tab)[1:])
    assert ge.estimate == pytest.approx(st.sigma_eigen(tau)[0], rel=1e-3)


def test_secondary_term_envelope():
    ratios = [abs(st.secondary_residual(tau)) / 0.837**tau for tau in range(5, 41)]
    assert max(ratios) <= 10.0
    # the consecutive ratio of the residual settles near 0.84 (sign change near tau = 21)
    tail = [st.secondary_residual(t + 1) / st.secondary_residual(t) for t in range(40, 60)]
    assert all(0.83 < q < 0.87 for q in tail)


def test_sigma_predicted():
    pred, slack = st.sigma_predicted(1)
    assert pred == pytest.approx(3.0652, abs=1e-4)
    assert abs(pred - 3.0) < st.PHI * 0.837
    assert slack == pytest.approx(st.PHI * 0.837)
    for tau in range(1, 31):
        lo, hi = st.prior_bounds(tau)
        assert lo <= st.sigma_predicted(tau)[0] <= hi


# ---------------------------------------------------------------------------
# identity and rewriting

def test_identity_example():
    chk = st.recurrence_identity_check(1, 2)
    assert chk.moment_difference == 9 - 3 == 6 == chk.half_iterate_at_one and chk.passed


@pytest.mark.parametrize("tau", range(1, 6))
def test_identity_suite(tau):
    tab = st.stern_values(14)
    for N in range(1, 15):
        assert st.recurrence_identity_check(tau, N, tab).passed


def test_identity_rejects_N0():
    with pytest.raises(ValueError):
        st.recurrence_identity_check(2, 0)


def test_rewrite_examples():
    w = st.b_to_a_rewrite([1] * 6)
    assert w.matrix == st.mat_prod([st.A1] * 6)
    assert w.rewrite == (1,) * 6 + (0,)
    w = st.b_to_a_rewrite([0])
    assert st.B0 == st.mat_mul(st.A1, st.T_SWAP) == st.mat_mul(st.T_SWAP, st.A0)
    assert w.rewrite == (1, 1)


@pytest.mark.parametrize("N", range(1, 11))
def test_rewrite_exhaustive(N):
    tab = st.stern_values(N + 1)
    for bits in product((0, 1), repeat=N):
        w = st.b_to_a_rewrite(bits)
        assert st.rewrite_matrix(w) == w.matrix
        assert w.rewrite[0] == 1
        assert w.rewrite[-1] == (1 - (1 if st.det2(w.matrix) > 0 else -1)) // 2
        assert w.n_prime % 2 == 1
        assert w.j_at_one == tab[w.n_prime]


@pytest.mark.parametrize("N", [12, 14, 16])
def test_rewrite_bijective(N):
    assert st.rewrite_is_bijective(N)


def test_rewrite_needs_bits():
    with pytest.raises(ValueError):
        st.b_to_a_rewrite([])


# ---------------------------------------------------------------------------
# system and profile

def test_profile_values():
    sys, p = st.build_stern_profile(7)
    assert p.beta(0) == pytest.approx(1.0)
    assert sys.kappa0 == pytest.approx((2 / math.sqrt(5)) ** 7, rel=1e-14)
    assert st.xi_eval(1 / st.PHI) == pytest.approx(2 / math.sqrt(5), rel=1e-15)
    assert st.xi_eval(0.0) == pytest.approx(1 / st.PHI) and st.xi_eval(1.0) == pytest.approx(1.0)
    assert sys.validate() == []
    with pytest.raises(ValueError):
        st.build_stern_profile(0)


def test_xi_prime_sup():
    xs = np.linspace(0, 1, 10_001)
    h = 1e-7
    fd = (st.xi_eval(xs + h) - st.xi_eval(xs - h)) / (2 * h)
    assert st.xi_prime_sup() == pytest.approx(np.max(fd), rel=1e-6)
    assert st.xi_prime_sup() == pytest.approx(1 / st.PHI)


def test_g_bounds():
    tau = 6
    sys, _ = st.build_stern_profile(tau)
    g = sys.weight_g(np.linspace(0, 1, 1001))
    assert np.all(st.PHI**tau <= g) and np.all(g <= st.PHI ** (2 * tau) * (1 + 1e-14))


@given(x=hs.floats(0, 1), n=hs.integers(1, 25))
def test_fibonacci_iterates(x, n):
    y = x
    for _ in range(n):
        y = st.map_a(y)
    assert st.a_iter(x, n) == pytest.approx(y, rel=1e-13)


def test_contraction_bound():
    xs = np.linspace(0, 1, 1001)
    for k in range(1, 30):
        assert np.max(np.abs(st.a_iter(xs, k) - 1 / st.PHI)) <= 2 ** (1 - k / 2)
