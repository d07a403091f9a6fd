import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from perturbop import bounds as bd
from perturbop import operator_core as oc
from perturbop import stern as st
from perturbop import thue_morse as tm
from perturbop.errors import BracketFailure, DomainError, ShapeError


def degenerate(kappa0=0.05, alpha_plus=lambda k: 0.0):
    """alpha^- = 0, beta_l = 0 for l >= 1, gamma = 0: every eta contribution vanishes."""
    return bd.make_profile(kappa0=kappa0, gamma=0.0, alpha_plus=alpha_plus,
                           alpha_minus=lambda k: 0.0, beta=lambda l: 1.0 if l == 0 else 0.0,
                           delta=lambda l: 1.0, alpha_plus_ratio=0.5, alpha_minus_ratio=0.5,
                           delta_ratio=1.0, g_sup=2.0, name="degenerate")


def quadratic_root(k0):
    return (-1.0 + math.sqrt(1.0 + 4.0 * k0)) / (2.0 * k0)


# ---------------------------------------------------------------------------
# profiles

def test_degenerate_profile_constants():
    p = degenerate()
    assert p.eta == 0.0 and p.c1 == 0.0
    assert p.c2 == pytest.approx(1.1 * (1.0 + 1.0 + 2.0))
    assert p.validate() == []


@pytest.mark.parametrize("tau", [2, 6, 12])
def test_tm_profile_invariants(tau):
    _, p = tm.build_tm_profile(tau)
    assert p.validate() == []
    assert p.beta(0) == pytest.approx(1.0)
    assert p.c2 >= bd.c2_floor(p)
    # eta is dominated by gamma ~ tau xi(7/8)^tau
    assert p.eta <= 40.0 * tau * 0.835**tau


@pytest.mark.parametrize("tau", [1, 5, 20])
def test_stern_profile_invariants(tau):
    _, p = st.build_stern_profile(tau)
    assert p.validate() == []
    assert p.beta(0) == pytest.approx(1.0)
    assert p.eta <= 40.0 * tau * st.xi_eval(0.75) ** tau


def test_validate_catches_bad_profile():
    p = degenerate()
    bad = bd.replace(p, eta=1.0, c2=0.1, beta=lambda l: 0.5)
    problems = bad.validate()
    assert any("beta(0)" in s for s in problems)
    assert any("eta" in s for s in problems)
    assert any("c2" in s for s in problems)


# ---------------------------------------------------------------------------
# series

@pytest.mark.parametrize("rho", [0.0, 0.3, 0.9])
def test_trivial_series(rho):
    p = degenerate()
    sv = bd.eval_series(p, rho)
    geo = p.kappa0 * rho / (1.0 - rho)
    assert sv.s_plus == pytest.approx(geo, abs=1e-15)
    assert sv.s_minus == pytest.approx(geo, abs=1e-15)
    assert min(sv.s_sigma, sv.s_plus, sv.s_delta, sv.s_minus, sv.s_star) >= 0.0
    assert sv.truncation_bound <= 1e-12


@pytest.mark.parametrize("A,q,rho", [(0.3, 0.5, 0.6), (1.0, 0.2, 0.95), (0.01, 0.9, 0.5)])
def test_geometric_alpha_plus(A, q, rho):
    p = degenerate(alpha_plus=lambda k: A * q**k)
    p = bd.replace(p, alpha_plus_ratio=q)
    sv = bd.eval_series(p, rho)
    expect = p.kappa0 * rho / (1 - rho) + A * q * rho / (1 - q * rho)
    assert sv.s_plus == pytest.approx(expect, rel=1e-12)


def test_series_domain_errors():
    p = degenerate()
    with pytest.raises(DomainError):
        bd.eval_series(p, 1.0)
    with pytest.raises(DomainError):
        bd.eval_series(p, -0.1)


@pytest.fixture(scope="module")
def families():
    return ([tm.build_tm_profile(t)[1] for t in range(2, 21)]
            + [st.build_stern_profile(t)[1] for t in range(1, 31)])


def test_s_star_majorant(families):
    rng = np.random.default_rng(7)
    for _ in range(1000):
        p = families[int(rng.integers(len(families)))]
        rho = float(rng.uniform(0.0, 0.999))
        lhs = bd.s_star(p, rho)[0]
        assert lhs <= p.kappa0 * (1 + p.eta) / (1 - rho) + p.c1 * p.eta


# ---------------------------------------------------------------------------
# envelopes

def test_vr_upper_cases(tm8):
    _, p = tm8
    rho = 0.4
    sv = bd.eval_series(p, rho)
    assert bd.vr_upper(p, rho, 0) == pytest.approx(p.c2**2 / (1 - rho))
    r2 = (sv.s_delta + p.c2**2 * rho * sv.s_sigma / (1 - rho)) * sv.s_plus
    assert bd.vr_upper(p, rho, 2) == pytest.approx(r2, rel=1e-14)
    assert bd.vr_upper(p, rho, 4) / bd.vr_upper(p, rho, 2) == pytest.approx(sv.s_star, rel=1e-13)
    assert bd.vr_upper(p, rho, 5) / bd.vr_upper(p, rho, 3) == pytest.approx(sv.s_star, rel=1e-13)


def test_vr_upper_total_sums_terms(stern8):
    _, p = stern8
    rho = 0.2
    total = sum(bd.vr_upper(p, rho, r) for r in range(400))
    assert bd.vr_upper_total(p, rho) == pytest.approx(total, rel=1e-12)
    br = bd.radius_bracket(p)
    assert math.isinf(bd.vr_upper_total(p, 0.5 * (br.rho_lo + br.rho_hi)))


def test_vr_lower(stern8):
    _, p = stern8
    rho, gx = 0.5, 3.0
    assert bd.vr_lower(p, rho, 0, gx) == pytest.approx(gx / p.c2 / (1 - rho))
    s_min = bd.eval_series(p, rho).s_minus
    assert bd.vr_lower(p, rho, 3, gx) / bd.vr_lower(p, rho, 2, gx) == pytest.approx(rho * s_min)
    with pytest.raises(DomainError):
        bd.vr_lower(p, rho, 1, 0.0)


def test_vr_lower_degenerate():
    p = degenerate()
    rho, gx, r = 0.7, 2.0, 3
    expect = gx / p.c2 * (p.kappa0 * rho**2 / (1 - rho)) ** r / (1 - rho)
    assert bd.vr_lower(p, rho, r, gx) == pytest.approx(expect, rel=1e-13)


# ---------------------------------------------------------------------------
# brackets

@pytest.mark.parametrize("k0", [0.2, 0.05, 0.01])
def test_bracket_degenerate_root(k0):
    br = bd.radius_bracket(degenerate(k0))
    root = quadratic_root(k0)
    assert br.rho_hi == pytest.approx(root, abs=1e-11)
    # with eta = 0 the two conditions coincide
    assert br.rho_lo == pytest.approx(root, abs=1e-11)
    assert abs(root - (1 - k0)) <= 2 * k0**2


def test_bracket_small_kappa0_tends_to_one():
    assert bd.radius_bracket(degenerate(1e-8)).rho_lo > 1 - 2e-8


def test_bracket_failure():
    with pytest.raises(BracketFailure) as exc:
        bd.radius_bracket(degenerate(0.0))
    assert "kappa0" in exc.value.diagnostics


def test_tm_tau12_width_constant():
    _, p = tm.build_tm_profile(12)
    br = bd.radius_bracket(p)
    assert 0.0 < br.rho_lo <= br.rho_hi < 1.0
    assert br.width_constant <= 50.0


def test_bracket_is_reproducible(stern8):
    _, p = stern8
    assert bd.radius_bracket(p) == bd.radius_bracket(p)


@pytest.mark.parametrize("tau", [8, 12])
def test_bracket_contains_measured_radius(tau):
    for build, grid in ((tm.build_tm_profile, np.linspace(0.125, 1, 8)),
                        (st.build_stern_profile, np.linspace(0, 1, 9))):
        sys, p = build(tau)
        br = bd.radius_bracket(p)
        growth = oc.growth_rate(oc.iterate_norms(sys, 18, grid)[1:])
        lo, hi = br.growth_interval
        assert lo <= growth.estimate <= hi


def test_stern_bracket_against_exact_eigenvalue():
    for tau in (8, 12):
        _, p = st.build_stern_profile(tau)
        br = bd.radius_bracket(p)
        assert br.contains_radius(st.PHI**tau / st.sigma_eigen(tau)[0])


# ---------------------------------------------------------------------------
# hypotheses

@pytest.mark.parametrize("tau", [2, 6, 12])
def test_tm_hypotheses(tau):
    sys, p = tm.build_tm_profile(tau)
    rep = bd.verify_hypotheses(sys, p)
    assert rep.passed
    for c in rep.conditions:
        assert c.checked > 0
        if not c.informational:
            assert c.worst_slack >= -1e-12


@pytest.mark.parametrize("tau", [1, 5, 20])
def test_stern_hypotheses(tau):
    sys, p = st.build_stern_profile(tau)
    assert bd.verify_hypotheses(sys, p).passed


def test_positivity_condition_is_informational():
    sys, p = tm.build_tm_profile(6)
    c = bd.verify_hypotheses(sys, p).condition("hyp-a-positive")
    assert c.informational and not c.passed


def test_mutated_profile_fails():
    sys, p = tm.build_tm_profile(6)
    rep = bd.verify_hypotheses(sys, bd.mutate_profile(p))
    assert not rep.passed
    assert not rep.condition("hyp-a-upper").passed


def test_hypothesis_report_serialises():
    sys, p = st.build_stern_profile(3)
    d = bd.verify_hypotheses(sys, p).to_dict()
    assert {c["condition"] for c in d["conditions"]} >= {"hyp-b", "hyp-a-lower", "hyp-a-upper",
                                                         "hyp-aba", "hyp-g-b", "hyp-g-ba"}


def test_hypotheses_need_enough_samples():
    sys, p = st.build_stern_profile(3)
    with pytest.raises(ValueError):
        bd.verify_hypotheses(sys, p, n_samples=100)


# ---------------------------------------------------------------------------
# single-word bounds

def test_empty_word_rejected(stern8):
    sys, p = stern8
    with pytest.raises(ShapeError):
        bd.check_weight_bounds(sys, p, "", 0.5)


def test_single_b(app_systems):
    for sys, p in app_systems.values():
        for x in (0.1, 0.5, 1.0):
            rep = bd.check_weight_bounds(sys, p, "b", x)
            assert rep.passed
            assert rep.upper == pytest.approx(p.delta(1) * p.beta(0))


@settings(max_examples=300, deadline=None)
@given(w=hs.text(alphabet="ab", min_size=1, max_size=20), x=hs.floats(0.001, 1.0))
def test_weight_bounds_property(tm8, stern8, w, x):
    for sys, p in (tm8, stern8):
        assert bd.check_weight_bounds(sys, p, w, x).passed


def test_lower_bound_nontrivial_for_long_gaps(stern8):
    sys, p = stern8
    w = oc.RunWord.from_letters("a" * 3 + ("b" + "a" * 12) * 3)
    rep = bd.check_weight_bounds(sys, p, w, 0.6)
    assert rep.lower > 0 and rep.passed


def test_weight_bounds_many_random_words(app_systems):
    rng = np.random.default_rng(3)
    for sys, p in app_systems.values():
        xs = sys.domain.sample(5000)
        for x in xs:
            bits = rng.integers(0, 2, int(rng.integers(1, 21)))
            assert bd.check_weight_bounds(sys, p, "".join("ab"[b] for b in bits), float(x)).passed
