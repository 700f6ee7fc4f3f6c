import math

import numpy as np
import pytest

from asepquad.core import BudgetExceededError, PoleError, ValidationError, validate_params
from asepquad.quadrature import (
    ContourSpec,
    NodeBudget,
    QuadConfig,
    QuadGrid,
    adaptive_contour_integral,
    build_level_cache,
    choose_large_radius,
    choose_small_radius,
    circle_nodes,
    contour_integral,
    kahan_sum,
)


def quadratic_root(a, b, c):
    # positive root oracle for the radius rules
    roots = np.roots([a, b, c])
    real = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
    return min(real)


def test_small_radius_symmetric():
    params = validate_params(0.5)
    r = choose_small_radius(params)
    r_max = quadratic_root(params.q, 1.0, -params.p)
    assert math.isclose(r_max, math.sqrt(2) - 1, rel_tol=1e-12)
    assert math.isclose(r, 0.5 * r_max, rel_tol=1e-12)


def test_small_radius_degenerate_and_limits():
    assert choose_small_radius(validate_params(1.0)) == 0.5
    with pytest.raises(ValidationError):
        choose_small_radius(validate_params(0.0))
    for p in (1e-3, 1e-2):
        params = validate_params(p)
        r = choose_small_radius(params)
        assert 0 < r < p  # scales like p as p -> 0
        # with both variables inside the circle the kernel cannot vanish
        assert params.q * r * r + r - params.p < 0


def test_large_radius_rules():
    params = validate_params(0.5)
    big = choose_large_radius(params)
    r_min = quadratic_root(params.q, -1.0, -params.p)
    assert math.isclose(r_min, 1 + math.sqrt(2), rel_tol=1e-12)
    assert math.isclose(big, 2 * r_min, rel_tol=1e-12)
    assert choose_large_radius(params, step_ic=True) >= 8.0
    asym = validate_params(0.9)
    # the coefficient-domination term only binds on the series path
    assert choose_large_radius(asym, step_ic=True) == 2 * asym.tau**2
    assert choose_large_radius(asym) == pytest.approx(
        2 * quadratic_root(asym.q, -1.0, -asym.p))
    with pytest.raises(ValidationError):
        choose_large_radius(validate_params(1.0))


def test_grid_validation():
    with pytest.raises(ValidationError):
        QuadGrid(2, (0.5, 0.6), 16)  # mixed radii rejected
    with pytest.raises(ValidationError):
        QuadGrid.uniform(1, 0.5, 12)  # not a power of two
    with pytest.raises(ValidationError):
        ContourSpec(1.5, "small")
    with pytest.raises(ValidationError):
        ContourSpec(0.5, "large")


def test_residue_exactness_1d():
    for radius in (0.3, 0.9, 2.5):
        for m in (4, 16, 64):
            grid = QuadGrid.uniform(1, radius, m)
            assert abs(contour_integral(grid, lambda c: 1.0 / c[0]) - 1.0) < 1e-14
    grid = QuadGrid.uniform(1, 0.8, 32)
    for k in (-9, -3, 0, 2, 7):
        val = contour_integral(grid, lambda c, k=k: c[0] ** k)
        assert abs(val) < 1e-14 * max(1.0, 0.8 ** (k + 1))
    # a constant has no 1/xi part
    assert abs(contour_integral(grid, lambda c: 3.7 + 0j)) < 1e-14


def test_laurent_exactness():
    rng = np.random.default_rng(5)
    m = 32
    radius = 0.9
    grid = QuadGrid.uniform(1, radius, m)
    coeffs = {k: complex(*rng.standard_normal(2)) for k in range(-(m - 2), m - 1)}

    def g(c):
        return sum(a * c[0] ** k for k, a in coeffs.items())

    val = contour_integral(grid, g)
    # roundoff scales with the numerical mass of the terms on the contour
    mass = sum(abs(a) * radius ** (k + 1) for k, a in coeffs.items())
    assert abs(val - coeffs[-1]) < 1e-13 * m * mass


def test_geometric_residue_2d():
    grid = QuadGrid.uniform(2, 0.6, 64)
    val = contour_integral(grid, lambda c: 1.0 / (c[0] * c[1] * (1.0 - c[0] * c[1])))
    assert abs(val - 1.0) < 1e-13


def test_tensor_rule_equals_iterated_1d():
    rng = np.random.default_rng(11)
    radius, m = 0.8, 8
    z = circle_nodes(radius, m)

    def g(xi1, xi2, xi3):
        return np.exp(xi1) / (xi2 * (2.0 - xi1 * xi3)) + xi3**2 * xi1

    grid = QuadGrid.uniform(3, radius, m)
    tensor = contour_integral(grid, lambda c: g(c[0], c[1], c[2]))
    nested = 0.0 + 0.0j
    for a in z:
        for b in z:
            for c in z:
                nested += g(a, b, c) * a * b * c
    nested /= m**3
    assert abs(tensor - nested) < 1e-13 * max(1.0, abs(nested))


def test_blocking_invariance():
    # block decomposition changes rounding order only, never the value beyond it
    grid = QuadGrid.uniform(3, 0.5, 16)

    def g(c):
        return np.exp(c[0] * c[1]) / (c[2] - 2.0) + 1.0 / (c[0] * c[1] * c[2])

    full = contour_integral(grid, g, block_limit=1 << 20)
    tight = contour_integral(grid, g, block_limit=64)
    assert abs(full - tight) < 1e-14 * max(1.0, abs(full))


def test_worker_determinism_bitwise():
    grid = QuadGrid.uniform(3, 0.5, 16)

    def g(c):
        return np.exp(c[0] * c[1] * c[2]) / (1.5 - c[0])

    vals = [contour_integral(grid, g, workers=w, block_limit=256) for w in (1, 2, 8)]
    assert vals[0] == vals[1] == vals[2]


def test_adaptive_ladder_entire_integrand():
    params = validate_params(0.5)
    cont = ContourSpec(0.2, "small")

    def g(c):
        return np.exp((params.p / c[0] + params.q * c[0] - 1.0) * 2.0) * c[0] ** -3

    out = adaptive_contour_integral(cont, 1, g, 1e-12)
    assert out.converged
    assert out.final_m <= 128  # geometric convergence: a few doublings suffice
    # independent series value: coefficient of xi^2 in exp(eps(xi) t)
    t = 2.0
    series = math.exp(-t) * sum(
        (params.p * t) ** b * (params.q * t) ** (b + 2) / (math.factorial(b) * math.factorial(b + 2))
        for b in range(0, 60)
    )
    assert abs(out.value - series) < 1e-12


def test_adaptive_flags_nonconvergence_near_pole():
    # pole just outside the contour slows convergence; tiny m_max trips the flag
    cont = ContourSpec(0.95, "small")
    cfg = QuadConfig(tol=1e-14, m_start=4, m_max=8)
    out = adaptive_contour_integral(cont, 1, lambda c: 1.0 / (c[0] - 1.0001), 1e-14, cfg=cfg)
    assert not out.converged


def test_budget_tracking():
    budget = NodeBudget(100)
    budget.charge(60)
    assert budget.can(40) and not budget.can(41)
    with pytest.raises(BudgetExceededError):
        budget.charge(41)


def test_level_cache_pole_detection():
    params = validate_params(0.5)
    with pytest.raises(PoleError):
        build_level_cache(1.0, 16, 0.5, params)  # circle through the point 1
    cache = build_level_cache(0.2, 16, 0.5, params)
    assert cache.f_mat.shape == (16, 16)
    assert np.all(np.isfinite(cache.f_inv))


def test_kahan_sum_compensates():
    values = [0.1] * 10**5
    exact = math.fsum(values)
    naive = 0.0
    for v in values:
        naive += v
    compensated = kahan_sum(values).real
    assert abs(compensated - exact) <= 1e-11
    assert abs(compensated - exact) < abs(naive - exact)
