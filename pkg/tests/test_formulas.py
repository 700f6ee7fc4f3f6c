import itertools
import math

import pytest

from asepquad.combinatorics import enumerate_subsets, enumerate_tuples, sgn_tuple
from asepquad.core import (
    BudgetExceededError,
    ParticleConfig,
    ValidationError,
    validate_params,
)
from asepquad.formulas import (
    TruncationPolicy,
    coeff_thm1,
    coeff_thm2,
    coeff_thm3,
    coeff_thm4,
    prob_consecutive,
    prob_first_m_large,
    prob_first_m_small,
    prob_single,
    prob_single_step_ic,
    transition_probability,
)
from asepquad.oracles import free_walk_series
from asepquad.quadrature import QuadConfig

PARAMS = validate_params(0.7)
TIGHT = QuadConfig(tol=1e-12)


def test_coeff_thm1_values():
    params = validate_params(0.6)
    assert coeff_thm1((), 3, 1, params) == pytest.approx(params.p**3)
    assert coeff_thm1((1,), 2, 2, params) == 1.0
    assert coeff_thm1((3,), 3, 2, params) == pytest.approx(params.p)


def test_coeff_thm2_values():
    params = validate_params(0.6)
    assert coeff_thm2((), (1,), 1, params) == 1.0
    # S empty: bare sign, tau exponent sum(lam_i - i) = 0 here
    # (these terms are killed by the integrand's (1 - empty product) factor)
    assert coeff_thm2((2, 1), (), 3, params) == -1.0
    assert coeff_thm2((3, 1), (), 3, params) == pytest.approx(-params.tau)


def test_coeff_thm2_tau_exponent_nonnegative_everywhere():
    params = validate_params(0.3)
    for n in (2, 3, 4):
        for m in range(1, n + 1):
            for lam in enumerate_tuples(range(1, n + 1), m - 1):
                rest = [v for v in range(1, n + 1) if v not in lam]
                for s in enumerate_subsets(rest, 0):
                    coeff_thm2(lam, s, m, params)  # raises if the exponent dips below 0


def test_coeff_thm3_reductions_and_sign():
    params = validate_params(0.35)
    n_particles = 4
    # n = 1 collapses to the first-m coefficient with the same tuple
    for m in (2, 3):
        for lam in enumerate_tuples(range(1, n_particles + 1), m - 1):
            rest = [v for v in range(1, n_particles + 1) if v not in lam]
            for s in enumerate_subsets(rest, 1):
                assert coeff_thm3(s, (), lam, 1, m, params) == pytest.approx(
                    coeff_thm2(lam, s, m, params))
    # n = m: sign collapses to (-1)^(m-1) with the set-sum tau exponent
    for m in (2, 3):
        for s1 in itertools.combinations(range(1, 6), m - 1):
            rest = [v for v in range(1, 6) if v not in s1]
            for s in itertools.combinations(rest, 2):
                k = len(s)
                got = coeff_thm3(s, s1, (), m, m, params)
                e_tau = sum(s) + sum(s1) - m * (m - 1) // 2 - m * k
                expect = ((-1) ** (m - 1) * params.tau**e_tau
                          * params.q ** (k * (k - 1) // 2 + (m - 1) * (m - 2) // 2))
                assert got == pytest.approx(expect)

    # sign audit by independent pair enumeration
    from asepquad.combinatorics import sigma

    def brute_sign(s, s1, lam2, n, m):
        k = len(s)
        exp = sigma(tuple(sorted(set(s) | set(s1))), lam2) + (n - 1) + (m - n) * k
        return (-1) ** (exp % 2) * sgn_tuple(lam2)

    for (n, m) in ((1, 2), (2, 3), (1, 3)):
        for s1 in itertools.combinations(range(1, 5), n - 1):
            rest1 = [v for v in range(1, 5) if v not in s1]
            for s in itertools.combinations(rest1, 1):
                rest2 = [v for v in rest1 if v not in s]
                for lam2 in itertools.permutations(rest2, m - n):
                    c = coeff_thm3(s, s1, lam2, n, m, params)
                    if c != 0.0:
                        assert math.copysign(1.0, c) == brute_sign(s, s1, lam2, n, m)


def test_coeff_thm4_values():
    params = validate_params(0.6)
    assert coeff_thm4((1,), 1, params) == 1.0
    assert coeff_thm4((2,), 2, params) == 0.0  # |S3| < m
    for j in (1, 2, 3, 5):
        assert coeff_thm4((j,), 1, params) == pytest.approx(params.tau ** (j - 1))


def test_transition_probability_t0():
    assert transition_probability([0, 2], (0, 2), 0.0, PARAMS).probability == pytest.approx(1.0, abs=1e-10)
    assert transition_probability([0, 2], (1, 2), 0.0, PARAMS).probability == pytest.approx(0.0, abs=1e-10)


def test_single_particle_free_walk():
    for p in (0.5, 0.85):
        params = validate_params(p)
        for x in range(-4, 5):
            direct = transition_probability([0], (x,), 1.3, params, TIGHT).probability
            series = free_walk_series(x, 1.3, params)
            assert direct == pytest.approx(series, abs=1e-10)
            single = prob_single([0], 1, x, 1.3, params, TIGHT).probability
            assert single == pytest.approx(series, abs=1e-10)


def test_first_m_equals_full_event_at_m_n():
    Y = [0, 3]
    X = (1, 3)
    full = transition_probability(Y, X, 0.9, PARAMS, TIGHT)
    first = prob_first_m_small(Y, 2, X, 0.9, PARAMS, TIGHT)
    assert first.probability == pytest.approx(full.probability, abs=1e-10)
    assert first.n_terms == 2  # one per ordered 1-tuple


def test_small_large_equality_n2():
    Y = [0, 3]
    for m in (1, 2):
        xs = tuple(Y[:m])
        small = prob_first_m_small(Y, m, xs, 0.9, PARAMS, TIGHT)
        large = prob_first_m_large(Y, m, xs, 0.9, PARAMS, TIGHT)
        assert small.probability == pytest.approx(large.probability, abs=1e-10)


def test_consecutive_reductions_n2():
    Y = [0, 3]
    block = prob_consecutive(Y, 1, 2, (1, 3), 0.9, PARAMS, TIGHT)
    joint = transition_probability(Y, (1, 3), 0.9, PARAMS, TIGHT)
    assert block.probability == pytest.approx(joint.probability, abs=1e-10)
    single = prob_single(Y, 2, 4, 0.9, PARAMS, TIGHT)
    block1 = prob_consecutive(Y, 2, 2, (4,), 0.9, PARAMS, TIGHT)
    assert single.probability == pytest.approx(block1.probability, abs=1e-11)


def test_marginalization_consistency():
    # summing the block event over its first coordinate drops that particle
    Y = [0, 2, 4]
    params = validate_params(0.45)
    t = 0.7
    target = prob_consecutive(Y, 3, 3, (5,), t, params, TIGHT).probability
    left = sum(
        prob_consecutive(Y, 2, 3, (x2, 5), t, params, TIGHT).probability
        for x2 in range(-12, 5)
    )
    assert left == pytest.approx(target, abs=1e-8)


def test_translation_invariance():
    params = validate_params(0.62)
    base = transition_probability([0, 2], (1, 2), 0.8, params, TIGHT).probability
    for c in (-7, 3, 40):
        shifted = transition_probability(
            [0 + c, 2 + c], (1 + c, 2 + c), 0.8, params, TIGHT).probability
        assert shifted == pytest.approx(base, abs=1e-10)
    single = prob_single([0, 2], 1, -1, 0.8, params, TIGHT).probability
    for c in (-5, 11):
        shifted = prob_single([c, 2 + c], 1, -1 + c, 0.8, params, TIGHT).probability
        assert shifted == pytest.approx(single, abs=1e-10)


def test_parameter_validity_routing():
    tasep_left = validate_params(0.0)
    with pytest.raises(ValidationError):
        transition_probability([0, 1], (0, 1), 0.5, tasep_left)
    with pytest.raises(ValidationError):
        prob_first_m_small([0, 1], 1, (0,), 0.5, tasep_left)
    assert prob_first_m_large([0, 1], 1, (0,), 0.5, tasep_left).converged

    tasep_right = validate_params(1.0)
    with pytest.raises(ValidationError):
        prob_first_m_large([0, 1], 1, (0,), 0.5, tasep_right)
    with pytest.raises(ValidationError):
        prob_single([0, 1], 1, 0, 0.5, tasep_right)
    with pytest.raises(ValidationError):
        prob_consecutive([0, 1], 1, 1, (0,), 0.5, tasep_right)
    assert transition_probability([0, 1], (0, 1), 0.5, tasep_right).converged


def test_event_shape_validation():
    with pytest.raises(ValidationError):
        transition_probability([0, 1], (1, 1), 0.5, PARAMS)
    with pytest.raises(ValidationError):
        prob_first_m_small([0, 1], 3, (0, 1, 2), 0.5, PARAMS)
    with pytest.raises(ValidationError):
        prob_consecutive([0, 1, 3], 2, 1, (0,), 0.5, PARAMS)
    with pytest.raises(ValidationError):
        prob_single([0, 1], 0, 0, 0.5, PARAMS)


def test_budget_rejection_up_front():
    small_budget = QuadConfig(budget=1000)
    with pytest.raises(BudgetExceededError):
        transition_probability([0, 2, 5], (1, 3, 6), 0.5, PARAMS, small_budget)


def test_policy_matches_exact_enumeration():
    params = validate_params(0.4)
    Y = list(range(1, 7))
    exact = prob_single(Y, 1, 1, 0.8, params, TIGHT)
    grouped = prob_single(Y, 1, 1, 0.8, params, TIGHT, policy=TruncationPolicy(tol=1e-11))
    assert grouped.probability == pytest.approx(exact.probability, abs=1e-9)
    assert grouped.converged


def test_step_series_basics():
    params = validate_params(0.5)
    r = prob_single_step_ic(1, 1, 0.0, params)
    assert r.probability == pytest.approx(1.0, abs=1e-10)
    assert r.details["radius"] >= 8.0

    r = prob_single_step_ic(1, 0, 0.75, params)
    assert r.converged
    assert r.est_truncation_error < 1e-8
    tail = [h[2] for h in r.details["tail_history"]]
    assert all(b <= a for a, b in zip(tail, tail[1:]))
    assert 0.0 <= r.probability <= 1.0


def test_step_series_flags_when_capped():
    params = validate_params(0.5)
    tight_policy = TruncationPolicy(tol=1e-12, max_set_extent=3, max_set_size=2)
    r = prob_single_step_ic(1, 0, 1.0, params, policy=tight_policy)
    assert not r.converged


def test_step_first_m_large_m1_matches_single():
    params = validate_params(0.45)
    step = ParticleConfig.step()
    a = prob_first_m_large(step, 1, (0,), 0.8, params)
    b = prob_single_step_ic(1, 0, 0.8, params)
    assert a.probability == pytest.approx(b.probability, abs=1e-9)


def test_engine_workers_bit_identical():
    raws = [
        prob_first_m_large([0, 2, 5], 2, (1, 3), 0.8, PARAMS, QuadConfig(workers=w)).raw
        for w in (1, 2, 8)
    ]
    assert raws[0] == raws[1] == raws[2]


def test_result_diagnostics_populated():
    r = prob_first_m_large([0, 2], 1, (1,), 0.8, PARAMS)
    assert r.n_terms == 3  # S = {1}, {2}, {1,2}; empty S skipped
    assert r.n_nodes > 0
    assert r.elapsed > 0
    assert r.imag_residual <= 1e-10
    assert r.est_quadrature_error >= 0
