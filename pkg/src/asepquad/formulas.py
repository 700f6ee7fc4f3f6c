"""Probability engines: term enumeration, scalar coefficients, and contour
quadrature assembled into the transition-probability and marginal formulas.

Each engine materializes its term list in a deterministic order, evaluates
every term's contour integral with an adaptive node ladder, and combines the
results with compensated summation; the sums are alternating with heavy
cancellation, so the fixed order is part of the reproducibility contract.
"""

from __future__ import annotations

import itertools
import math
import time
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .combinatorics import (
    distinct_sets_with_sum,
    enumerate_subsets,
    enumerate_tuples,
    parity_sign,
    permutations,
    sgn_tuple,
    sigma,
    tau_binomial,
)
from .core import (
    AsepParams,
    BudgetExceededError,
    ParticleConfig,
    ProbResult,
    ValidationError,
    as_config,
)
from .integrands import (
    IntegrandSpec,
    eq3_spec,
    integrate_on_level,
    thm1_spec,
    thm2_spec,
    thm3_spec,
    thm4_spec,
)
from .quadrature import (
    NodeBudget,
    QuadConfig,
    adaptive_levels,
    build_level_cache,
    choose_large_radius,
    choose_small_radius,
    kahan_sum,
)


@dataclass(frozen=True)
class TermDescriptor:
    """One summand of a formula: a scalar coefficient times one contour
    integral of the given dimension."""

    kind: str
    indices: tuple
    coefficient: float
    dimension: int


@dataclass(frozen=True)
class TruncationPolicy:
    """Stopping rule for the semi-infinite (and large finite) series.

    Index sets are enumerated in groups of equal element sum s; the remaining
    tail after group s is bounded by an empirically calibrated constant times
    the counting-times-decay envelope 2^s s^(m-1) R^(-s/2), summed over s' > s.
    """

    tol: float = 1e-9
    max_set_extent: int = 48
    max_set_size: int = 8
    tail_bound_constant: float = 4.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValidationError("truncation tol must be positive")
        if self.max_set_extent < 1 or self.max_set_size < 1:
            raise ValidationError("truncation extents must be positive")


def coeff_thm1(lam, n_particles: int, m: int, params: AsepParams) -> float:
    """Scalar in front of each first-m small-contour integral."""
    lam = tuple(lam)
    if len(lam) != m - 1:
        raise ValidationError(f"tuple length {len(lam)} does not match m-1 = {m - 1}")
    if params.p == 0.0:
        raise ValidationError("small-contour coefficients require p != 0")
    shift = sum(lam) - m * (m - 1) // 2  # sum of (lam_i - i)
    p_exp = (n_particles - m + 1) * (n_particles - m) // 2
    return parity_sign(shift) * sgn_tuple(lam) * params.p**p_exp


def coeff_thm2(lam, s_set, m: int, params: AsepParams) -> float:
    """Scalar in front of each first-m large-contour integral."""
    lam = tuple(lam)
    s = tuple(sorted(s_set))
    if len(lam) != m - 1:
        raise ValidationError(f"tuple length {len(lam)} does not match m-1 = {m - 1}")
    if set(lam) & set(s):
        raise ValidationError("S must be disjoint from the tuple")
    k = len(s)
    e_tau = (sum(lam) - m * (m - 1) // 2) + sum(s) - m * k
    if e_tau < 0:
        raise ArithmeticError(f"tau exponent must be nonnegative, got {e_tau}")
    sign = parity_sign(sigma(s, lam) - (m - 1) * k) * sgn_tuple(lam)
    return sign * params.tau**e_tau * params.q ** (k * (k - 1) // 2)


def coeff_thm3(s_set, s1_set, lam2, n: int, m: int, params: AsepParams) -> float:
    """Scalar in front of each consecutive-block integral.

    The sign carries an extra (m - n) k parity on top of
    sigma(S u S1, Lambda2) + n - 1: it is forced by requiring the n = 1 case
    to coincide term-by-term with coeff_thm2 and the n = m case with
    coeff_thm4, and is pinned by the marginalization cross-checks.
    """
    s = tuple(sorted(s_set))
    s1 = tuple(sorted(s1_set))
    lam2 = tuple(lam2)
    if len(s1) != n - 1 or len(lam2) != m - n:
        raise ValidationError("set sizes must satisfy |S1| = n-1, |Lambda2| = m-n")
    k = len(s)
    ss1 = tuple(sorted(s + s1))
    sign_exp = sigma(ss1, lam2) + (n - 1) + (m - n) * k
    e_tau = sum(s) + sum(s1) + sum(lam2) - m * (m - 1) // 2 - m * k
    if e_tau < 0:
        raise ArithmeticError(f"tau exponent must be nonnegative, got {e_tau}")
    q_exp = k * (k - 1) // 2 + (n - 1) * (n - 2) // 2
    return parity_sign(sign_exp) * sgn_tuple(lam2) * params.tau**e_tau * params.q**q_exp


def coeff_thm4(s3_set, m: int, params: AsepParams) -> float:
    """Scalar in front of each single-particle integral; vanishes (through the
    Gaussian binomial) when |S3| < m."""
    s3 = tuple(sorted(s3_set))
    j = len(s3)
    tau = params.tau
    binom = tau_binomial(j - 1, m - 1, tau) if j >= 1 else 0.0
    if binom == 0.0:
        return 0.0
    e_tau = m * (m - 1) // 2 + sum(s3) - m * j
    return parity_sign(m - 1) * tau**e_tau * params.q ** (j * (j - 1) // 2) * binom


@contextmanager
def _maybe_pool(workers: int):
    if workers <= 1:
        yield None
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield pool


class _TermRunner:
    """Evaluates term integrals with shared per-level node caches."""

    def __init__(self, radius: float, t: float, params: AsepParams, cfg: QuadConfig,
                 executor=None):
        self.radius = radius
        self.t = t
        self.params = params
        self.cfg = cfg
        self.executor = executor
        self.budget = NodeBudget(cfg.budget)
        self._caches = {}

    def _cache(self, m: int):
        cache = self._caches.get(m)
        if cache is None:
            cache = build_level_cache(self.radius, m, self.t, self.params)
            self._caches[m] = cache
        return cache

    def integral(self, spec: IntegrandSpec, tol: float):
        def eval_level(m):
            return integrate_on_level(
                spec,
                self._cache(m),
                block_limit=self.cfg.block_limit,
                workers=self.cfg.workers,
                executor=self.executor,
            )

        return adaptive_levels(eval_level, spec.dimension, tol, self.cfg, self.budget)


def _check_upfront_budget(terms, cfg: QuadConfig):
    start_cost = sum(cfg.m_start**td.dimension for td in terms)
    if start_cost > cfg.budget:
        raise BudgetExceededError(
            f"{len(terms)} terms need {start_cost:g} evaluations at the starting "
            f"node count, over the budget {cfg.budget:g}"
        )


def _evaluate_terms(terms, specs, runner: _TermRunner, cfg: QuadConfig):
    tol_term = cfg.tol / max(1, len(terms))
    partials = []
    qerr = 0.0
    nodes = 0
    converged = True
    for td, spec in zip(terms, specs):
        out = runner.integral(spec, tol_term)
        partials.append(td.coefficient * out.value)
        if math.isfinite(out.est_error):
            qerr += abs(td.coefficient) * out.est_error
        else:
            converged = False
        nodes += out.n_nodes
        converged = converged and out.converged
    return kahan_sum(partials), qerr, nodes, converged


def _finite_result(terms, specs, radius, t, params, cfg, t0, *, details=None,
                   extra_truncation=0.0):
    _check_upfront_budget(terms, cfg)
    with _maybe_pool(cfg.workers) as pool:
        runner = _TermRunner(radius, t, params, cfg, executor=pool)
        raw, qerr, nodes, converged = _evaluate_terms(terms, specs, runner, cfg)
    return ProbResult.from_raw(
        raw,
        est_quadrature_error=qerr,
        est_truncation_error=extra_truncation,
        n_terms=len(terms),
        n_nodes=nodes,
        elapsed=time.perf_counter() - t0,
        converged=converged,
        details=dict(details or {}),
    )


def _validate_event_positions(values, what="event positions"):
    values = tuple(int(v) for v in values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError(f"{what} must be strictly increasing, got {values}")
    return values


def _y_map(config: ParticleConfig, indices):
    return {i: config.site(i) for i in indices}


def transition_probability(Y, X, t: float, params: AsepParams,
                           quad: QuadConfig | None = None) -> ProbResult:
    """Joint probability that particle i sits at X[i-1] for every i, via the
    N-fold small-contour permutation sum. Needs p != 0."""
    t0 = time.perf_counter()
    cfg = quad or QuadConfig()
    config = as_config(Y)
    if config.kind != "finite":
        raise ValidationError("the full transition probability needs a finite configuration")
    n = config.n_particles
    X = _validate_event_positions(X, "destination positions")
    if len(X) != n:
        raise ValidationError(f"need {n} destination positions, got {len(X)}")
    if not params.eq3_valid:
        raise ValidationError("the permutation-sum formula is not valid when p = 0")
    y_sites = _y_map(config, range(1, n + 1))
    radius = choose_small_radius(params)
    terms, specs = [], []
    for perm in permutations(n):
        terms.append(TermDescriptor("eq3_perm", perm.mapping, 1.0, n))
        specs.append(eq3_spec(perm, X, y_sites))
    return _finite_result(terms, specs, radius, t, params, cfg, t0,
                          details={"radius": radius, "contour": "small"})


def prob_first_m_small(Y, m: int, x_values, t: float, params: AsepParams,
                       quad: QuadConfig | None = None) -> ProbResult:
    """Joint probability for the first m particles as a sum of N-dimensional
    small-contour integrals over ordered (m-1)-tuples. Needs p != 0."""
    t0 = time.perf_counter()
    cfg = quad or QuadConfig()
    config = as_config(Y)
    if config.kind != "finite":
        raise ValidationError("the small-contour formula needs a finite configuration")
    n = config.n_particles
    if not 1 <= m <= n:
        raise ValidationError(f"m must lie in [1, {n}], got {m}")
    xs = _validate_event_positions(x_values)
    if len(xs) != m:
        raise ValidationError(f"need {m} event positions, got {len(xs)}")
    if not params.eq3_valid:
        raise ValidationError("small-contour formulas are not valid when p = 0")
    y_sites = _y_map(config, range(1, n + 1))
    radius = choose_small_radius(params)
    terms, specs = [], []
    for lam in enumerate_tuples(range(1, n + 1), m - 1):
        terms.append(TermDescriptor("thm1_lambda", lam, coeff_thm1(lam, n, m, params), n))
        specs.append(thm1_spec(lam, xs, n, y_sites))
    return _finite_result(terms, specs, radius, t, params, cfg, t0,
                          details={"radius": radius, "contour": "small"})


def prob_first_m_large(Y, m: int, x_values, t: float, params: AsepParams,
                       quad: QuadConfig | None = None,
                       policy: TruncationPolicy | None = None,
                       radius_scale: float = 1.0) -> ProbResult:
    """Joint probability for the first m particles as large-contour integrals
    of dimension |S| + m - 1, summed over disjoint (tuple, set) pairs.
    Needs q != 0; accepts finite and step configurations."""
    t0 = time.perf_counter()
    cfg = quad or QuadConfig()
    config = as_config(Y)
    if not params.thm234_valid:
        raise ValidationError("large-contour formulas are not valid when q = 0")
    xs = _validate_event_positions(x_values)
    if len(xs) != m:
        raise ValidationError(f"need {m} event positions, got {len(xs)}")

    if config.kind == "step":
        policy = policy or TruncationPolicy()
        radius = choose_large_radius(params, step_ic=True) * radius_scale

        def group_terms(s):
            terms, specs = [], []
            for u in distinct_sets_with_sum(
                s, min_size=m, max_size=policy.max_set_size,
                max_element=policy.max_set_extent,
            ):
                y_sites = {a: config.site(a) for a in u}
                for chi in itertools.combinations(u, m - 1):
                    s_set = tuple(v for v in u if v not in chi)
                    for lam in itertools.permutations(chi):
                        terms.append(TermDescriptor(
                            "thm2_lambda_S", (lam, s_set),
                            coeff_thm2(lam, s_set, m, params), len(u)))
                        specs.append(thm2_spec(lam, s_set, xs, y_sites))
            return terms, specs

        return _grouped_series(group_terms, s_min=m * (m + 1) // 2, m=m,
                               radius=radius, t=t, params=params, cfg=cfg,
                               policy=policy, exhaust_sum=None, t0=t0)

    n = config.n_particles
    if not 1 <= m <= n:
        raise ValidationError(f"m must lie in [1, {n}], got {m}")
    y_sites = _y_map(config, range(1, n + 1))
    radius = choose_large_radius(params) * radius_scale
    terms, specs = [], []
    for lam in enumerate_tuples(range(1, n + 1), m - 1):
        rest = [v for v in range(1, n + 1) if v not in lam]
        for s_set in enumerate_subsets(rest, 1):
            # empty S terms vanish identically through the (1 - prod) factor
            terms.append(TermDescriptor("thm2_lambda_S", (lam, s_set),
                                        coeff_thm2(lam, s_set, m, params),
                                        len(s_set) + m - 1))
            specs.append(thm2_spec(lam, s_set, xs, y_sites))
    return _finite_result(terms, specs, radius, t, params, cfg, t0,
                          details={"radius": radius, "contour": "large"})


def prob_consecutive(Y, n: int, m: int, x_values, t: float, params: AsepParams,
                     quad: QuadConfig | None = None,
                     radius_scale: float = 1.0) -> ProbResult:
    """Joint probability for the consecutive particles n..m over large
    contours. Needs q != 0."""
    t0 = time.perf_counter()
    cfg = quad or QuadConfig()
    config = as_config(Y)
    if config.kind != "finite":
        raise ValidationError("the consecutive-block engine needs a finite configuration")
    n_particles = config.n_particles
    if not 1 <= n <= m <= n_particles:
        raise ValidationError(
            f"need 1 <= n <= m <= {n_particles}, got n={n}, m={m}")
    if not params.thm234_valid:
        raise ValidationError("large-contour formulas are not valid when q = 0")
    xs = _validate_event_positions(x_values)
    if len(xs) != m - n + 1:
        raise ValidationError(f"need {m - n + 1} event positions, got {len(xs)}")
    y_sites = _y_map(config, range(1, n_particles + 1))
    radius = choose_large_radius(params) * radius_scale
    all_idx = range(1, n_particles + 1)
    terms, specs = [], []
    for s1 in itertools.combinations(all_idx, n - 1):
        rest1 = [v for v in all_idx if v not in s1]
        for s_set in enumerate_subsets(rest1, 1):
            rest2 = [v for v in rest1 if v not in s_set]
            if len(rest2) < m - n:
                continue
            for lam2 in enumerate_tuples(rest2, m - n):
                terms.append(TermDescriptor(
                    "thm3_S_S1_lambda2", (s_set, s1, lam2),
                    coeff_thm3(s_set, s1, lam2, n, m, params),
                    len(s_set) + m - 1))
                specs.append(thm3_spec(s_set, s1, lam2, n, m, xs, y_sites))
    return _finite_result(terms, specs, radius, t, params, cfg, t0,
                          details={"radius": radius, "contour": "large"})


def prob_single(Y, m: int, x_m: int, t: float, params: AsepParams,
                quad: QuadConfig | None = None,
                policy: TruncationPolicy | None = None,
                radius_scale: float = 1.0) -> ProbResult:
    """Probability that particle m sits at x_m, summed over index sets of size
    at least m. Needs q != 0. A policy switches to sum-grouped enumeration
    with a certified tail, which large finite configurations need to stay
    inside the evaluation budget; step configurations always use it."""
    t0 = time.perf_counter()
    cfg = quad or QuadConfig()
    config = as_config(Y)
    if not params.thm234_valid:
        raise ValidationError("large-contour formulas are not valid when q = 0")
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    x_m = int(x_m)

    if config.kind == "step" or policy is not None:
        policy = policy or TruncationPolicy()
        step = config.kind == "step"
        # the grouped series needs the enlarged radius for its tail envelope
        # to contract, step configuration or not
        radius = choose_large_radius(params, step_ic=True) * radius_scale
        if not step:
            n_particles = config.n_particles
            if m > n_particles:
                raise ValidationError(f"m must lie in [1, {n_particles}], got {m}")
            extent = min(policy.max_set_extent, n_particles)
            exhaust = (
                sum(range(max(1, extent - policy.max_set_size + 1), extent + 1))
                if policy.max_set_size >= n_particles and extent >= n_particles
                else None
            )
        else:
            extent = policy.max_set_extent
            exhaust = None

        def group_terms(s):
            terms, specs = [], []
            for s3 in distinct_sets_with_sum(
                s, min_size=m, max_size=policy.max_set_size, max_element=extent,
            ):
                y_sites = {a: config.site(a) for a in s3}
                terms.append(TermDescriptor("thm4_S3", s3,
                                            coeff_thm4(s3, m, params), len(s3)))
                specs.append(thm4_spec(s3, x_m, y_sites))
            return terms, specs

        return _grouped_series(group_terms, s_min=m * (m + 1) // 2, m=m,
                               radius=radius, t=t, params=params, cfg=cfg,
                               policy=policy, exhaust_sum=exhaust, t0=t0)

    n_particles = config.n_particles
    if m > n_particles:
        raise ValidationError(f"m must lie in [1, {n_particles}], got {m}")
    y_all = _y_map(config, range(1, n_particles + 1))
    radius = choose_large_radius(params) * radius_scale
    terms, specs = [], []
    for s3 in enumerate_subsets(range(1, n_particles + 1), m):
        terms.append(TermDescriptor("thm4_S3", s3, coeff_thm4(s3, m, params), len(s3)))
        specs.append(thm4_spec(s3, x_m, {a: y_all[a] for a in s3}))
    return _finite_result(terms, specs, radius, t, params, cfg, t0,
                          details={"radius": radius, "contour": "large"})


def prob_single_step_ic(m: int, x_m: int, t: float, params: AsepParams,
                        quad: QuadConfig | None = None,
                        policy: TruncationPolicy | None = None,
                        origin: int = 1) -> ProbResult:
    """Single-particle probability under the step initial condition (every
    site origin, origin+1, ... occupied)."""
    return prob_single(ParticleConfig.step(origin), m, x_m, t, params,
                       quad=quad, policy=policy)


def _tail_envelope(s: int, m: int, radius: float) -> float:
    # counting bound (2^s sets, s^(m-1) tuple choices) times R^(-s/2) decay
    return 2.0**s * float(s) ** (m - 1) * radius ** (-s / 2.0)


def _envelope_tail_sum(s0: int, m: int, radius: float) -> float:
    ratio = 2.0 / math.sqrt(radius)
    if ratio >= 1.0:
        return math.inf
    total = 0.0
    for s in range(s0 + 1, s0 + 400):
        term = _tail_envelope(s, m, radius)
        total += term
        if term < 1e-300 or term < 1e-18 * total:
            break
    return total


def _grouped_series(group_terms, *, s_min: int, m: int, radius: float, t: float,
                    params: AsepParams, cfg: QuadConfig,
                    policy: TruncationPolicy, exhaust_sum: int | None,
                    t0: float) -> ProbResult:
    """Sum index-set groups of equal element sum s in ascending order, with an
    empirically calibrated geometric tail bound deciding when to stop."""
    if radius <= 4.0:
        raise ValidationError(
            f"series truncation needs a contour radius above 4, got {radius}")
    max_reachable = sum(
        range(max(1, policy.max_set_extent - policy.max_set_size + 1),
              policy.max_set_extent + 1))
    if exhaust_sum is not None:
        max_reachable = min(max_reachable, exhaust_sum)

    history = []
    partials = []
    recent_c = []
    qerr = 0.0
    nodes = 0
    n_terms = 0
    tail = math.inf
    quad_converged = True
    exhausted = False
    stopped = False
    budget_hit = False

    with _maybe_pool(cfg.workers) as pool:
        runner = _TermRunner(radius, t, params, cfg, executor=pool)
        s = s_min - 1
        while True:
            s += 1
            if s > max_reachable:
                exhausted = True
                break
            terms, specs = group_terms(s)
            group_abs = 0.0
            try:
                for td, spec in zip(terms, specs):
                    out = runner.integral(spec, cfg.tol)
                    value = td.coefficient * out.value
                    partials.append(value)
                    group_abs += abs(value)
                    if math.isfinite(out.est_error):
                        qerr += abs(td.coefficient) * out.est_error
                    quad_converged = quad_converged and out.converged
                    nodes += out.n_nodes
                    n_terms += 1
            except BudgetExceededError:
                budget_hit = True
                break
            recent_c.append(group_abs / _tail_envelope(s, m, radius))
            recent_c = recent_c[-2:]
            tail = (policy.tail_bound_constant * max(recent_c)
                    * _envelope_tail_sum(s, m, radius))
            history.append((s, group_abs, tail))
            if len(history) >= 3 and tail < policy.tol:
                stopped = True
                break

    if exhausted and exhaust_sum is not None:
        # the whole finite universe was enumerated; nothing was left out
        tail = 0.0
    converged = quad_converged and not budget_hit and (stopped or tail <= policy.tol)
    raw = kahan_sum(partials)
    return ProbResult.from_raw(
        raw,
        est_quadrature_error=qerr,
        est_truncation_error=tail,
        n_terms=n_terms,
        n_nodes=nodes,
        elapsed=time.perf_counter() - t0,
        converged=converged,
        details={
            "radius": radius,
            "contour": "large",
            "tail_history": history,
            "series_exhausted": exhausted,
            "budget_hit": budget_hit,
        },
    )
