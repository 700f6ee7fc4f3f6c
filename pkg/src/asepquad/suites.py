"""Verification suites driven by the CLI and reused by the test suite.

Each suite returns CheckResult rows; a suite passes when every row does.
The chain suite exercises the derivation links between the engines as
numerical equalities, the oracle suite pits them against Monte Carlo, and
the marginal helpers here are the brute-force summation oracles with
certified cutoffs.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .core import ParticleConfig, PositionEvent, ValidationError, as_config, validate_params
from .formulas import (
    TruncationPolicy,
    prob_consecutive,
    prob_first_m_large,
    prob_first_m_small,
    prob_single,
    prob_single_step_ic,
    transition_probability,
)
from .oracles import (
    SimConfig,
    TestFunctionSpec,
    check_identity_16,
    check_identity_17,
    check_identity_19,
    check_lemma31,
    ctmc_distribution,
    displacement_bound,
    monte_carlo_estimate,
    sample_circle_points,
)
from .quadrature import ContourSpec, QuadConfig, QuadGrid, contour_integral


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    residual: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return (f"[{status}] {self.suite}/{self.name}: residual {self.residual:.3e}"
                f" (threshold {self.threshold:.1e}){extra}")


def _result(suite, name, residual, threshold, detail="") -> CheckResult:
    return CheckResult(suite, name, residual <= threshold, float(residual),
                       threshold, detail)


def right_marginal_first_m(Y, m, x_values, t, params, quad=None, tol=1e-12):
    """First-m probability by brute force: sum the full transition probability
    over all x_(m+1) < ... < x_N above x_m, cut off where the chance that any
    particle travelled that far is below tol (a Poisson race bound)."""
    config = as_config(Y)
    n = config.n_particles
    xs = tuple(x_values)
    if m == n:
        return transition_probability(config, xs, t, params, quad).probability
    d = displacement_bound(t, tol / max(1, n))
    hi = config.positions[-1] + d
    total = 0.0
    for rest in itertools.combinations(range(xs[-1] + 1, hi + 1), n - m):
        total += transition_probability(config, xs + rest, t, params, quad).probability
    return total


def left_marginal_consecutive(Y, n, m, x_values, t, params, quad=None, tol=1e-12):
    """Block probability for particles n..m by brute force: sum the first-m
    large-contour probability over all x_1 < ... < x_(n-1) below x_n, with the
    same certified displacement cutoff."""
    config = as_config(Y)
    xs = tuple(x_values)
    if n == 1:
        return prob_first_m_large(config, m, xs, t, params, quad).probability
    d = displacement_bound(t, tol / max(1, config.n_particles))
    lo = config.positions[0] - d
    total = 0.0
    for head in itertools.combinations(range(lo, xs[0]), n - 1):
        total += prob_first_m_large(config, m, head + xs, t, params, quad).probability
    return total


def identity_suite(points: int = 100, seed: int = 20260810,
                   p_values=(0.12, 0.3, 0.5, 0.77)) -> list[CheckResult]:
    """Residuals of the three combinatorial identities on random points."""
    rng = np.random.default_rng(seed)
    out = []
    for label, check, kwargs in (
        ("identity-16", check_identity_16, {}),
        ("identity-17", check_identity_17, {"base": 2.0, "step": 0.5}),
    ):
        worst = 0.0
        for p in p_values:
            params = validate_params(p)
            for _ in range(points):
                for size in range(1, 6):
                    pts = sample_circle_points(size, rng, **kwargs)
                    worst = max(worst, check(pts, params))
        out.append(_result("identities", label, worst, 1e-9,
                           f"{points} draws x sizes 1..5 x {len(p_values)} p-values"))
    worst = 0.0
    for p in p_values:
        params = validate_params(p)
        for _ in range(points):
            for m in (1, 2, 3):
                pts = sample_circle_points(m + 2, rng, base=2.0, step=0.5)
                worst = max(worst, check_identity_19(pts, m, params))
    out.append(_result("identities", "identity-19", worst, 1e-9,
                       f"{points} draws x m in 1..3 x {len(p_values)} p-values"))
    return out


def lemma31_suite(n_specs: int = 20, seed: int = 20260810) -> list[CheckResult]:
    """Residuals of the small-to-large contour deformation identity."""
    rng = np.random.default_rng(seed)
    out = []
    for t_size in (1, 2, 3):
        worst = 0.0
        for _ in range(n_specs):
            p = float(rng.uniform(0.15, 0.85))
            params = validate_params(p)
            y0 = int(rng.integers(-2, 2))
            gaps = rng.integers(1, 3, size=t_size - 1) if t_size > 1 else []
            y = [y0]
            for g in gaps:
                y.append(y[-1] + int(g))
            c = int(rng.integers(-1, 3))
            spec = TestFunctionSpec(c=c, y=tuple(y), t=float(rng.uniform(0.2, 1.0)))
            worst = max(worst, check_lemma31(t_size, spec, params))
        out.append(_result("lemma31", f"T-size-{t_size}", worst, 1e-9,
                           f"{n_specs} random specs"))
    return out


def _raw_bits(value: complex) -> bytes:
    return struct.pack("<dd", value.real, value.imag)


def contour_suite(seed: int = 20260810) -> list[CheckResult]:
    """Quadrature contracts: exact residues, contour-radius invariance of the
    large-contour engines, and bit-identical results across worker counts."""
    out = []

    grid = QuadGrid.uniform(1, 0.37, 32)
    res = abs(contour_integral(grid, lambda c: 1.0 / c[0]) - 1.0)
    out.append(_result("contours", "residue-1/xi", res, 1e-14))
    worst = 0.0
    for k in (-7, -2, 0, 1, 5):
        val = abs(contour_integral(grid, lambda c, k=k: c[0] ** k))
        # relative to the summand magnitude; negative powers amplify roundoff
        worst = max(worst, val / grid.radius ** (k + 1))
    out.append(_result("contours", "roots-of-unity-orthogonality", worst, 1e-14))
    grid2 = QuadGrid.uniform(2, 0.6, 64)
    res = abs(contour_integral(
        grid2, lambda c: 1.0 / (c[0] * c[1] * (1.0 - c[0] * c[1]))) - 1.0)
    out.append(_result("contours", "geometric-residue-2d", res, 1e-13))

    params = validate_params(0.4)
    quad = QuadConfig(tol=1e-12)
    base = prob_first_m_large([0, 2], 1, (1,), 0.7, params, quad)
    scaled = prob_first_m_large([0, 2], 1, (1,), 0.7, params, quad, radius_scale=1.5)
    out.append(_result("contours", "radius-invariance-first-m",
                       abs(base.probability - scaled.probability), 1e-9,
                       f"R={base.details['radius']:.2f} vs x1.5"))
    base = prob_single([0, 2], 2, 3, 0.7, params, quad)
    scaled = prob_single([0, 2], 2, 3, 0.7, params, quad, radius_scale=1.5)
    out.append(_result("contours", "radius-invariance-single",
                       abs(base.probability - scaled.probability), 1e-9))

    raws = [
        transition_probability([0, 2, 5], (1, 3, 6), 0.8, validate_params(0.6),
                               QuadConfig(workers=w)).raw
        for w in (1, 2, 8)
    ]
    identical = all(_raw_bits(r) == _raw_bits(raws[0]) for r in raws)
    out.append(_result("contours", "worker-determinism",
                       0.0 if identical else 1.0, 0.5,
                       "bit-identical raw across 1/2/8 workers"))
    return out


def _jittered_positions(y_slice, rng):
    """Random admissible (strictly increasing) event positions near y_slice."""
    xs = []
    floor = None
    for yv in y_slice:
        v = yv + int(rng.integers(-1, 2))
        if floor is not None and v <= floor:
            v = floor + 1
        xs.append(v)
        floor = v
    return tuple(xs)


def chain_suite(n_particles: int = 3, p: float = 0.5, t: float = 0.5,
                seed: int = 20260810) -> list[CheckResult]:
    """The derivation links between the engines, tested as equalities."""
    rng = np.random.default_rng(seed)
    params = validate_params(p)
    start = int(rng.integers(-2, 1))
    gaps = [int(g) for g in rng.integers(1, 4, size=n_particles - 1)]
    y = [start]
    for g in gaps:
        y.append(y[-1] + g)
    quad = QuadConfig(tol=1e-12)
    out = []

    m = int(rng.integers(1, n_particles + 1))
    xs = _jittered_positions(y[:m], rng)
    small = prob_first_m_small(y, m, xs, t, params, quad)
    marg = right_marginal_first_m(y, m, xs, t, params, quad)
    out.append(_result("chain", f"first-m-vs-marginal (m={m})",
                       abs(small.probability - marg), 1e-8,
                       f"Y={y} x={xs}"))
    large = prob_first_m_large(y, m, xs, t, params, quad)
    out.append(_result("chain", "small-vs-large-contour",
                       abs(small.probability - large.probability), 1e-9))
    if n_particles >= 2:
        n_lo = max(2, n_particles - 1)
        m_hi = n_particles
        xs2 = tuple(y[i] for i in range(n_lo - 1, m_hi))
        cons = prob_consecutive(y, n_lo, m_hi, xs2, t, params, quad)
        marg2 = left_marginal_consecutive(y, n_lo, m_hi, xs2, t, params, quad)
        out.append(_result("chain", f"consecutive-vs-left-marginal (n={n_lo},m={m_hi})",
                           abs(cons.probability - marg2), 1e-8))
    m_single = int(rng.integers(1, n_particles + 1))
    x_single = y[m_single - 1] + int(rng.integers(-1, 2))
    single = prob_single(y, m_single, x_single, t, params, quad)
    cons1 = prob_consecutive(y, m_single, m_single, (x_single,), t, params, quad)
    out.append(_result("chain", f"single-vs-consecutive (m={m_single})",
                       abs(single.probability - cons1.probability), 1e-10))
    return out


# fixed regression battery: (label, p, t, Y or "step", event)
_ORACLE_BATTERY = (
    ("joint-N2", 0.7, 0.8, (0, 1), (1, (1, 2))),
    ("first-1-N2", 0.7, 0.8, (0, 1), (1, (0,))),
    ("single-2-N2", 0.3, 0.5, (0, 1), (2, (2,))),
    ("joint-N3", 0.5, 0.6, (0, 2, 5), (1, (1, 3, 6))),
    ("single-2-N3", 0.5, 0.6, (0, 2, 5), (2, (2,))),
    ("block-23-N3", 0.3, 1.0, (0, 2, 5), (2, (2, 5))),
    ("first-1-asym", 0.8, 0.5, (-2, 0, 1), (1, (-2,))),
    ("tasep-left", 0.0, 1.0, (0, 1), (1, (-1, 1))),
    ("tasep-right", 1.0, 1.0, (0, 1), (1, (1, 2))),
    ("single-3-N3", 0.6, 0.7, (0, 1, 2), (3, (3,))),
    ("step-single-1", 0.5, 1.0, "step", (1, (0,))),
    ("step-single-2", 0.4, 0.8, "step", (2, (1,))),
)


def engine_probability(config: ParticleConfig, event: PositionEvent, t, params,
                       quad=None):
    """Route an event to the matching engine by its shape and the parameter
    validity flags."""
    n, m = event.first_index, event.last_index
    if config.kind == "step":
        if n == m:
            return prob_single(config, m, event.values[0], t, params, quad)
        return prob_first_m_large(config, m, event.values, t, params, quad)
    size = config.n_particles
    if n == 1 and m == size:
        if params.eq3_valid:
            return transition_probability(config, event.values, t, params, quad)
        return prob_first_m_large(config, m, event.values, t, params, quad)
    if not params.thm234_valid:
        raise ValidationError("marginal events need q != 0 or a full joint event")
    if n == 1:
        return prob_first_m_large(config, m, event.values, t, params, quad)
    if n == m:
        return prob_single(config, m, event.values[0], t, params, quad)
    return prob_consecutive(config, n, m, event.values, t, params, quad)


def oracle_suite(seed: int = 20260810, trials: int = 20000) -> list[CheckResult]:
    """Monte Carlo vs the formula engines over the fixed regression battery;
    each case must agree within 4 standard errors."""
    out = []
    for i, (label, p, t, y_desc, (first, values)) in enumerate(_ORACLE_BATTERY):
        params = validate_params(p)
        config = ParticleConfig.step() if y_desc == "step" else ParticleConfig.finite(y_desc)
        event = PositionEvent.of(first, values)
        exact = engine_probability(config, event, t, params).probability
        est, se = monte_carlo_estimate(event, config, t, params,
                                       SimConfig(seed=seed + i, trials=trials))
        spread = max(se, math.sqrt(0.25 / trials) * 1e-2)
        out.append(_result("oracles", label, abs(est - exact), 4.0 * spread,
                           f"mc {est:.5f}+-{se:.5f} exact {exact:.5f}"))
    return out


def ctmc_suite(seed: int = 20260810) -> list[CheckResult]:
    """Exact CTMC (uniformization) agreement for every in-window N=2 event and
    a sample of N=3 events."""
    rng = np.random.default_rng(seed)
    out = []

    params = validate_params(0.7)
    y2 = (0, 1)
    t = 0.8
    d = displacement_bound(t, 1e-11)
    dist, leak = ctmc_distribution(y2, t, params, (y2[0] - d, y2[-1] + d))
    worst = 0.0
    for state, pv in dist.items():
        if pv < 1e-11:
            continue
        r = transition_probability(y2, state, t, params)
        worst = max(worst, abs(r.probability - pv))
    out.append(_result("ctmc", "N2-window", worst, 1e-8 + leak,
                       f"{len(dist)} states, leakage {leak:.1e}"))

    params = validate_params(0.45)
    y3 = (0, 2, 3)
    t = 0.6
    d = displacement_bound(t, 1e-11)
    dist, leak = ctmc_distribution(y3, t, params, (y3[0] - d, y3[-1] + d))
    states = [s for s, pv in sorted(dist.items()) if pv > 1e-6]
    picks = rng.choice(len(states), size=min(10, len(states)), replace=False)
    worst = 0.0
    for idx in picks:
        state = states[int(idx)]
        r = transition_probability(y3, state, t, params)
        worst = max(worst, abs(r.probability - dist[state]))
    out.append(_result("ctmc", "N3-sample", worst, 1e-8 + leak,
                       f"10 events, leakage {leak:.1e}"))
    return out


SUITES = {
    "identities": identity_suite,
    "lemma31": lemma31_suite,
    "contours": contour_suite,
    "chain": chain_suite,
    "oracles": oracle_suite,
    "ctmc": ctmc_suite,
}


def run_suites(names, **overrides) -> list[CheckResult]:
    results = []
    for name in names:
        if name not in SUITES:
            raise ValidationError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        fn = SUITES[name]
        kwargs = {k: v for k, v in overrides.items()
                  if k in fn.__code__.co_varnames[: fn.__code__.co_argcount]}
        results.extend(fn(**kwargs))
    return results
