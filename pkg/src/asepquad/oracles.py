"""Independent ground-truth engines used to cross-validate the contour
formulas: exact stochastic simulation, a uniformization CTMC solver, the
single-walker series, and numeric checks of the combinatorial identities and
contour-deformation lemma the formulas rest on.

Nothing here shares code with the formula engines beyond the kernel f and
the symbol eps; that independence is the point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .combinatorics import inversion_count, parity_sign, tau_binomial
from .core import AsepParams, ParticleConfig, PositionEvent, ValidationError, as_config
from .integrands import eps, f
from .quadrature import (
    ContourSpec,
    QuadConfig,
    adaptive_contour_integral,
    choose_large_radius,
    choose_small_radius,
)


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run description; trial i draws from a counter-based stream
    keyed by (seed, i), so results are independent of trial scheduling."""

    seed: int
    trials: int
    window: tuple[int, int] | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")


def trial_stream(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), trial]))


def poisson_tail(rate: float, k: int) -> float:
    """P(Poisson(rate) >= k), an exact tail used to certify windows."""
    if k <= 0:
        return 1.0
    term = math.exp(-rate)
    cdf = term
    for j in range(1, k):
        term *= rate / j
        cdf += term
    return max(0.0, 1.0 - cdf)


def displacement_bound(t: float, tol: float) -> int:
    """Smallest D with P(a rate-1 walker takes >= D steps by time t) < tol."""
    d = 1
    while poisson_tail(t, d) >= tol:
        d += 1
    return d


def gillespie_run(Y, t: float, params: AsepParams, rng: np.random.Generator):
    """One exact-in-law sample of the particle positions at time t.

    Each particle carries an independent rate-1 exponential clock; at a ring
    the particle tries a right step with probability p, left with q, and a
    jump onto an occupied site is suppressed.
    """
    config = as_config(Y)
    if config.kind != "finite":
        raise ValidationError("simulate a truncated configuration for step initial data")
    pos = list(config.positions)
    n = len(pos)
    occupied = set(pos)
    clock = 0.0
    chunk = 64
    while True:
        waits = rng.exponential(1.0 / n, size=chunk)
        who = rng.integers(0, n, size=chunk)
        direction = rng.random(size=chunk)
        for w, i, u in zip(waits, who, direction):
            clock += w
            if clock >= t:
                return tuple(pos)
            target = pos[i] + (1 if u < params.p else -1)
            if target not in occupied:
                occupied.discard(pos[i])
                pos[i] = target
                occupied.add(target)


def _step_truncation_count(event: PositionEvent, t: float) -> int:
    # influence of the cut must chain through this many extra particles;
    # an ordered chain of k rings inside [0, t] has probability <= t^k / k!
    extra = 20 + int(math.ceil(4.0 * t))
    return event.last_index + extra


def monte_carlo_estimate(event: PositionEvent, Y, t: float, params: AsepParams,
                         sim: SimConfig):
    """Empirical frequency of the event and its binomial standard error."""
    config = as_config(Y)
    if config.kind == "step":
        config = config.truncated(_step_truncation_count(event, t))
    n = config.n_particles
    if event.last_index > n:
        raise ValidationError(
            f"event touches particle {event.last_index}, configuration has {n}")
    lo = event.first_index - 1
    hi = event.last_index
    hits = 0
    for trial in range(sim.trials):
        rng = trial_stream(sim.seed, trial)
        final = gillespie_run(config, t, params, rng)
        if final[lo:hi] == event.values:
            hits += 1
    est = hits / sim.trials
    return est, math.sqrt(est * (1.0 - est) / sim.trials)


def ctmc_distribution(Y, t: float, params: AsepParams, window: tuple[int, int]):
    """Exact distribution at time t on a finite site window by uniformization.

    Jumps leaving the window are absorbed; the absorbed mass is returned as
    `leakage` and upper-bounds the truncation error of every in-window
    probability. The Poisson mixture is truncated so its own tail is below
    1e-13.
    """
    config = as_config(Y)
    if config.kind != "finite":
        raise ValidationError("the CTMC solver needs a finite configuration")
    lo, hi = int(window[0]), int(window[1])
    if not all(lo <= y <= hi for y in config.positions):
        raise ValidationError("window must contain all initial positions")
    n = config.n_particles
    sites = hi - lo + 1
    n_states = math.comb(sites, n)
    if n_states > 10**6:
        raise ValidationError(f"window implies {n_states} states, over the 1e6 cap")

    states = list(itertools.combinations(range(lo, hi + 1), n))
    index = {s: i for i, s in enumerate(states)}
    leak = len(states)

    rows, cols, vals = [], [], []
    for i, state in enumerate(states):
        occupied = set(state)
        stay = float(n)
        for pos_idx, site in enumerate(state):
            for rate, shift in ((params.p, 1), (params.q, -1)):
                if rate == 0.0:
                    continue
                target = site + shift
                if target in occupied:
                    continue  # suppressed jump
                stay -= rate
                if target < lo or target > hi:
                    rows.append(i)
                    cols.append(leak)
                    vals.append(rate)
                else:
                    new = list(state)
                    new[pos_idx] = target
                    new.sort()
                    rows.append(i)
                    cols.append(index[tuple(new)])
                    vals.append(rate)
        rows.append(i)
        cols.append(i)
        vals.append(stay)
    rows.append(leak)
    cols.append(leak)
    vals.append(float(n))

    # uniformization at rate Lambda = n: kernel P = I + Q / n
    kernel = sparse.csr_matrix(
        (np.array(vals) / n, (rows, cols)), shape=(leak + 1, leak + 1))

    rate = n * t
    v = np.zeros(leak + 1)
    v[index[config.positions]] = 1.0
    out = np.zeros_like(v)
    weight = math.exp(-rate)
    cum = weight
    k = 0
    while True:
        out += weight * v
        if cum >= 1.0 - 1e-13 and k >= rate:
            break
        k += 1
        if k > 1000 + 10 * rate:
            break
        v = v @ kernel
        weight *= rate / k
        cum += weight

    dist = {state: float(out[i]) for i, state in enumerate(states)}
    return dist, float(out[leak])


def free_walk_series(displacement: int, t: float, params: AsepParams) -> float:
    """Single-walker law: P(position moved by d in time t) as the absolutely
    convergent series e^-t sum_b (pt)^(b+d) (qt)^b / ((b+d)! b!)."""
    d = int(displacement)
    total = 0.0
    b = max(0, -d)
    # iterative term updates; factorials never materialized
    term = math.exp(-t)
    for j in range(1, b + d + 1):
        term *= params.p * t / j
    for j in range(1, b + 1):
        term *= params.q * t / j
    while True:
        total += term
        if term < 1e-18 and b > t:
            return total
        b += 1
        term *= (params.p * t) * (params.q * t) / ((b + d) * b)
        if term == 0.0:
            return total


def sample_circle_points(count: int, rng: np.random.Generator, *,
                         base: float = 0.3, step: float = 0.06) -> list[complex]:
    """Random complex points, one per circle of a distinct radius, with angles
    stratified into disjoint sectors.

    Distinct radii and sector separation keep difference factors and the
    telescoping (1 - product) denominators away from zero, which is what keeps
    the alternating permutation sums in the identity checks well conditioned.
    Small-contour identities want base below 1, large-contour ones above.
    """
    pts = []
    for j in range(count):
        radius = base + step * j
        angle = 2.0 * math.pi * (j + 0.25 + 0.5 * rng.random()) / count
        pts.append(radius * complex(math.cos(angle), math.sin(angle)))
    return pts


def _residual(lhs: complex, rhs: complex, floor: float = 1e-12) -> float:
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), floor)


def check_identity_16(points, params: AsepParams) -> float:
    """Residual of the permutation-sum identity that collapses the summed-out
    variables of the first-m reduction into a closed product.

    LHS: sum over permutations w of the points of
         sgn(w) prod_{i<j} f(w_i, w_j) prod_{j>=2} w_j^(j-1)
         / prod_{j>=2} (1 - w_j w_{j+1} ... w_K);
    RHS: p^(K(K-1)/2) (1 - prod points) prod_{i<j}(pt_j - pt_i) / prod (1 - pt_j).
    """
    pts = list(points)
    k = len(pts)
    lhs = 0.0 + 0.0j
    for order in itertools.permutations(range(k)):
        w = [pts[i] for i in order]
        term = complex(parity_sign(inversion_count(order)))
        for i, j in itertools.combinations(range(k), 2):
            term *= f(w[i], w[j], params)
        for j in range(1, k):
            term *= w[j] ** j
        for j in range(1, k):
            suffix = 1.0 + 0.0j
            for v in w[j:]:
                suffix *= v
            term /= 1.0 - suffix
        lhs += term
    rhs = params.p ** (k * (k - 1) // 2)
    prod_all = 1.0 + 0.0j
    for v in pts:
        prod_all *= v
    rhs *= 1.0 - prod_all
    for i, j in itertools.combinations(range(k), 2):
        rhs *= pts[j] - pts[i]
    for v in pts:
        rhs /= 1.0 - v
    return _residual(lhs, rhs)


def check_identity_17(points, params: AsepParams) -> float:
    """Residual of the ordered-tuple identity behind the left-marginal sum:
    telescoping prefix-product denominators against a closed Vandermonde form.

    LHS: sum over orderings w of sgn(w) prod_{i<j} f(w_i, w_j)
         / prod_j (w_1 ... w_j - 1);
    RHS: q^(K(K-1)/2) prod_{i<j}(pt_j - pt_i) / prod (pt_j - 1).
    """
    pts = list(points)
    k = len(pts)
    lhs = 0.0 + 0.0j
    for order in itertools.permutations(range(k)):
        w = [pts[i] for i in order]
        term = complex(parity_sign(inversion_count(order)))
        for i, j in itertools.combinations(range(k), 2):
            term *= f(w[i], w[j], params)
        prefix = 1.0 + 0.0j
        for v in w:
            prefix *= v
            term /= prefix - 1.0
        lhs += term
    rhs = params.q ** (k * (k - 1) // 2) + 0.0j
    for i, j in itertools.combinations(range(k), 2):
        rhs *= pts[j] - pts[i]
    for v in pts:
        rhs /= v - 1.0
    return _residual(lhs, rhs)


def check_identity_19(points, m: int, params: AsepParams) -> float:
    """Residual of the partition identity producing the Gaussian binomial:
    summing over splits of the index set into (S1 of size m-1, S) against the
    closed tau-binomial form."""
    pts = list(points)
    total = len(pts)
    k = total - m + 1
    if k < 1:
        raise ValidationError(f"need at least m = {m} points, got {total}")
    lhs = 0.0 + 0.0j
    for s1 in itertools.combinations(range(total), m - 1):
        s_rest = [i for i in range(total) if i not in s1]
        term = 1.0 + 0.0j
        for i in s1:
            for j in s_rest:
                term *= f(pts[i], pts[j], params) / (pts[j] - pts[i])
        prod_s = 1.0 + 0.0j
        for j in s_rest:
            prod_s *= pts[j]
        lhs += term * (1.0 - prod_s)
    prod_all = 1.0 + 0.0j
    for v in pts:
        prod_all *= v
    rhs = (params.q ** ((m - 1) * k) * tau_binomial(m + k - 2, m - 1, params.tau)
           * (1.0 - prod_all))
    return _residual(lhs, rhs)


@dataclass(frozen=True)
class TestFunctionSpec:
    """Test function g(xi_i) = prod xi_i^(c - y_i - 1) e^(eps(xi_i) t) for the
    contour-deformation check; strictly increasing y keeps g within the
    lemma's hypothesis by construction."""

    c: int
    y: tuple[int, ...]
    t: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.y, self.y[1:])):
            raise ValidationError(f"y must be strictly increasing, got {self.y}")

    def exponent(self, i: int) -> int:
        return self.c - self.y[i] - 1


def check_lemma31(t_size: int, spec: TestFunctionSpec, params: AsepParams,
                  quad: QuadConfig | None = None) -> float:
    """Residual of the small-to-large contour deformation identity.

    LHS integrates I_T over the small contours; RHS sums coefficient-weighted
    integrals of I_S over large contours for every subset S, with the empty
    set contributing g(1, ..., 1).
    """
    if params.p == 0.0 or params.q == 0.0:
        raise ValidationError("the deformation identity requires p, q != 0")
    if len(spec.y) < t_size:
        raise ValidationError(f"spec carries {len(spec.y)} exponents, need {t_size}")
    cfg = quad or QuadConfig(tol=1e-12)
    indices = tuple(range(1, t_size + 1))

    def integrand_for(subset):
        exps = [spec.exponent(i - 1) for i in subset]

        def g(coords):
            val = 1.0 + 0.0j
            for a, (idx, e) in enumerate(zip(subset, exps)):
                xi = coords[a]
                val = val * xi**e * np.exp(eps(xi, params) * spec.t)
                val = val / (1.0 - xi)
            for a, b in itertools.combinations(range(len(subset)), 2):
                val = val * (coords[b] - coords[a]) / f(coords[a], coords[b], params)
            return val

        return g

    small = ContourSpec(choose_small_radius(params), "small")
    lhs = adaptive_contour_integral(small, t_size, integrand_for(indices),
                                    cfg.tol, cfg=cfg).value

    large = ContourSpec(choose_large_radius(params), "large")
    tau = params.tau
    p_norm = params.p ** (t_size * (t_size - 1) // 2)
    rhs = 0.0 + 0.0j
    for size in range(0, t_size + 1):
        for subset in itertools.combinations(indices, size):
            sig = sum(1 for i in subset for j in indices if i >= j)
            coeff = tau ** (sig - size) * params.q ** (size * (size - 1) // 2) / p_norm
            if size == 0:
                rhs += coeff  # g(1, ..., 1) = 1 since eps(1) = 0
                continue
            val = adaptive_contour_integral(large, size, integrand_for(subset),
                                            cfg.tol, cfg=cfg).value
            rhs += coeff * val
    return _residual(lhs, rhs, floor=1e-10)
