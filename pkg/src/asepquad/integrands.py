"""Pointwise integrands of the transition-probability and marginal formulas.

Every integrand is a product of four ingredient families built from the
kernel f(xi, xi') = p + q xi xi' - xi and the symbol
eps(xi) = p/xi + q xi - 1:

  * quotients of f-factors carrying the interaction amplitudes,
  * Vandermonde-type numerators (xi_j - xi_i) and (1 - xi) denominators,
  * a single (1 - prod xi_j) factor over a designated index subset,
  * integer powers xi^e and the time factor exp(eps(xi) t) per variable.

The builders below emit the factored form: f-factors that cancel between
numerator and denominator are never materialized, and the cross-Vandermonde
denominator of the consecutive-block formula is folded into a sign and
per-set Vandermondes (the two forms agree identically off the diagonal, and
only the folded form is finite on tensor grids where node values coincide).
A literal-product reference implementation lives in the test suite and is
compared against these paths at random points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .combinatorics import Perm, sigma
from .core import AsepParams, PoleError, ValidationError
from .quadrature import POLE_RTOL, LevelCache, _lead_count, _map_blocks, kahan_sum


def f(xi, xi_prime, params: AsepParams):
    """Interaction kernel p + q xi xi' - xi; accepts scalars or arrays."""
    return params.p + params.q * xi * xi_prime - xi


def eps(xi, params: AsepParams):
    """Single-particle symbol p/xi + q xi - 1; singular at the origin."""
    if not isinstance(xi, np.ndarray) and complex(xi) == 0:
        raise PoleError("eps(xi) is singular at xi = 0")
    return params.p / xi + params.q * xi - 1.0


def _check_denominator(value, scale: float, what: str):
    if abs(value) < POLE_RTOL * scale:
        raise PoleError(f"{what} vanishes at the evaluation point")


def a_sigma(perm: Perm, pt: Mapping[int, complex], params: AsepParams) -> complex:
    """Amplitude sgn(sigma) * prod_{i<j} f(xi_sigma(i), xi_sigma(j)) / f(xi_i, xi_j).

    Evaluated in the factored form: only pairs inverted by the permutation
    contribute a ratio f(xi_b, xi_a)/f(xi_a, xi_b).
    """
    n = perm.size
    scale = params.p + sum(abs(pt[i]) for i in range(1, n + 1))
    out = complex(perm.sign)
    for i, j in itertools.combinations(range(1, n + 1), 2):
        a, b = perm(i), perm(j)
        if a > b:
            den = f(pt[b], pt[a], params)
            _check_denominator(den, scale, f"f(xi_{b}, xi_{a})")
            out *= f(pt[a], pt[b], params) / den
    return out


@dataclass(frozen=True)
class IntegrandSpec:
    """Factored description of one integrand term.

    active        sorted particle indices carrying integration variables
    f_num / f_den pairs (a, b) meaning a factor f(xi_a, xi_b)
    diff_num      pairs (a, b) meaning a factor (xi_b - xi_a)
    inv_one_minus indices a contributing 1/(1 - xi_a)
    one_minus_prod indices of the single (1 - prod xi) factor, or None
    powers        integer exponent per index (already merged)
    sign          +-1 folded into the integrand itself
    """

    active: tuple[int, ...]
    f_num: tuple[tuple[int, int], ...] = ()
    f_den: tuple[tuple[int, int], ...] = ()
    diff_num: tuple[tuple[int, int], ...] = ()
    inv_one_minus: tuple[int, ...] = ()
    one_minus_prod: tuple[int, ...] | None = None
    powers: tuple[tuple[int, int], ...] = ()
    sign: int = 1

    @property
    def dimension(self) -> int:
        return len(self.active)


def evaluate(spec: IntegrandSpec, pt: Mapping[int, complex], t: float,
             params: AsepParams) -> complex:
    """Scalar evaluation of a factored integrand at one point assignment."""
    for a in spec.active:
        v = pt[a]
        if v == 0 or not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise ValidationError(f"index {a} carries a non-finite or zero value")
    scale = params.p + params.q + sum(abs(pt[a]) for a in spec.active)
    out = complex(spec.sign)
    for a, b in spec.f_num:
        out *= f(pt[a], pt[b], params)
    for a, b in spec.f_den:
        den = f(pt[a], pt[b], params)
        _check_denominator(den, scale, f"f(xi_{a}, xi_{b})")
        out /= den
    for a, b in spec.diff_num:
        out *= pt[b] - pt[a]
    for a in spec.inv_one_minus:
        den = 1.0 - pt[a]
        _check_denominator(den, scale, f"(1 - xi_{a})")
        out /= den
    if spec.one_minus_prod is not None:
        prod = 1.0 + 0.0j
        for a in spec.one_minus_prod:
            prod *= pt[a]
        out *= 1.0 - prod
    for a, e in spec.powers:
        out *= pt[a] ** e
    out *= np.exp(t * sum(eps(pt[a], params) for a in spec.active))
    return complex(out)


def _merge_powers(entries) -> tuple[tuple[int, int], ...]:
    merged: dict[int, int] = {}
    for idx, e in entries:
        merged[idx] = merged.get(idx, 0) + e
    return tuple(sorted(merged.items()))


def _tuple_pair_factors(lam: Sequence[int]):
    """Factors left from prod_{i<j} f(xi_lam_i, xi_lam_j) over the sorted-pair
    denominator: ascending tuple pairs cancel, inverted ones leave a ratio."""
    f_num, f_den = [], []
    for i, j in itertools.combinations(range(len(lam)), 2):
        a, b = lam[i], lam[j]
        if a > b:
            f_num.append((a, b))
            f_den.append((b, a))
    return f_num, f_den


def eq3_spec(perm: Perm, x_values: Sequence[int], y_sites: Mapping[int, int]) -> IntegrandSpec:
    """One permutation term of the N-fold transition-probability integrand."""
    n = perm.size
    if len(x_values) != n:
        raise ValidationError("need one destination site per particle")
    f_num, f_den = [], []
    for i, j in itertools.combinations(range(1, n + 1), 2):
        a, b = perm(i), perm(j)
        if a > b:
            f_num.append((a, b))
            f_den.append((b, a))
    powers = [(perm(i), x_values[i - 1]) for i in range(1, n + 1)]
    powers += [(a, -y_sites[a] - 1) for a in range(1, n + 1)]
    return IntegrandSpec(
        active=tuple(range(1, n + 1)),
        f_num=tuple(f_num),
        f_den=tuple(f_den),
        powers=_merge_powers(powers),
        sign=perm.sign,
    )


def thm1_spec(lam: Sequence[int], x_values: Sequence[int], n_particles: int,
              y_sites: Mapping[int, int]) -> IntegrandSpec:
    """First-m small-contour integrand for one ordered tuple, all N variables
    active. x_values = (x_1, ..., x_m)."""
    lam = tuple(lam)
    m = len(lam) + 1
    if len(x_values) != m:
        raise ValidationError(f"need {m} event positions, got {len(x_values)}")
    lam_set = set(lam)
    if not lam_set <= set(range(1, n_particles + 1)):
        raise ValidationError(f"tuple {lam} outside [1, {n_particles}]")
    complement = [a for a in range(1, n_particles + 1) if a not in lam_set]

    f_num, f_den = _tuple_pair_factors(lam)
    diff = []
    for a, b in itertools.combinations(range(1, n_particles + 1), 2):
        a_in, b_in = a in lam_set, b in lam_set
        if not a_in and not b_in:
            f_den.append((a, b))
            diff.append((a, b))
        elif not a_in and b_in:
            f_num.append((b, a))
            f_den.append((a, b))
        # a in tuple, b outside: numerator factor cancels the denominator

    powers = [(lam[i], x_values[i]) for i in range(m - 1)]
    powers += [(a, x_values[m - 1]) for a in complement]
    powers += [(a, -y_sites[a] - 1) for a in range(1, n_particles + 1)]
    return IntegrandSpec(
        active=tuple(range(1, n_particles + 1)),
        f_num=tuple(f_num),
        f_den=tuple(f_den),
        diff_num=tuple(diff),
        inv_one_minus=tuple(complement),
        one_minus_prod=tuple(complement),
        powers=_merge_powers(powers),
    )


def thm2_spec(lam: Sequence[int], s_set: Sequence[int], x_values: Sequence[int],
              y_sites: Mapping[int, int]) -> IntegrandSpec:
    """First-m large-contour integrand; only indices in S union Lambda are
    active, so the dimension is |S| + m - 1."""
    lam = tuple(lam)
    s_sorted = tuple(sorted(s_set))
    m = len(lam) + 1
    if len(x_values) != m:
        raise ValidationError(f"need {m} event positions, got {len(x_values)}")
    lam_set = set(lam)
    if lam_set & set(s_sorted):
        raise ValidationError(f"S {s_sorted} and tuple {lam} must be disjoint")
    active = tuple(sorted(lam_set | set(s_sorted)))

    f_num, f_den = _tuple_pair_factors(lam)
    diff = []
    for a, b in itertools.combinations(active, 2):
        a_in_s, b_in_s = a in s_sorted, b in s_sorted
        if a_in_s and b_in_s:
            f_den.append((a, b))
            diff.append((a, b))
        elif a_in_s and not b_in_s:
            f_num.append((b, a))
            f_den.append((a, b))
        # a in tuple, b in S: cancels

    powers = [(lam[i], x_values[i]) for i in range(m - 1)]
    powers += [(a, x_values[m - 1]) for a in s_sorted]
    powers += [(a, -y_sites[a] - 1) for a in active]
    return IntegrandSpec(
        active=active,
        f_num=tuple(f_num),
        f_den=tuple(f_den),
        diff_num=tuple(diff),
        inv_one_minus=s_sorted,
        one_minus_prod=s_sorted,
        powers=_merge_powers(powers),
    )


def thm3_spec(s_set: Sequence[int], s1_set: Sequence[int], lam2: Sequence[int],
              n: int, m: int, x_values: Sequence[int],
              y_sites: Mapping[int, int]) -> IntegrandSpec:
    """Consecutive-block integrand for particles n..m over one
    (S, S1, Lambda2) choice; x_values = (x_n, ..., x_m).

    The cross-Vandermonde quotient over (S1, S) pairs is folded into the sign
    (-1)^sigma(S1, S) and per-set Vandermondes, which is the same function
    wherever the literal form is defined.
    """
    s_sorted = tuple(sorted(s_set))
    s1_sorted = tuple(sorted(s1_set))
    lam2 = tuple(lam2)
    if len(s1_sorted) != n - 1:
        raise ValidationError(f"|S1| must be n-1 = {n - 1}, got {len(s1_sorted)}")
    if len(lam2) != m - n:
        raise ValidationError(f"|Lambda2| must be m-n = {m - n}, got {len(lam2)}")
    if len(x_values) != m - n + 1:
        raise ValidationError(f"need {m - n + 1} event positions, got {len(x_values)}")
    groups = (set(s_sorted), set(s1_sorted), set(lam2))
    if (groups[0] & groups[1]) or (groups[0] & groups[2]) or (groups[1] & groups[2]):
        raise ValidationError("S, S1, and Lambda2 must be pairwise disjoint")
    active = tuple(sorted(groups[0] | groups[1] | groups[2]))

    in_s = groups[0]
    in_s1 = groups[1]
    in_lam = groups[2]
    f_num, f_den = _tuple_pair_factors(lam2)
    diff = []
    for a, b in itertools.combinations(active, 2):
        if a in in_s and b in in_s:
            f_den.append((a, b))
            diff.append((a, b))
        elif a in in_s1 and b in in_s1:
            f_den.append((a, b))
            diff.append((a, b))
        elif (a in in_s and b in in_s1) or (a in in_s and b in in_lam) or (a in in_lam and b in in_s1):
            # S1 elements lead every mixed numerator f, and Lambda2 leads S,
            # so for these orders the numerator carries f(b, a) and the sorted
            # denominator pair survives
            f_num.append((b, a))
            f_den.append((a, b))
        # remaining mixed orders cancel against the numerator products

    powers = [(a, x_values[0]) for a in s1_sorted]
    powers += [(lam2[i], x_values[i]) for i in range(m - n)]
    powers += [(a, x_values[-1]) for a in s_sorted]
    powers += [(a, -y_sites[a] - 1) for a in active]
    return IntegrandSpec(
        active=active,
        f_num=tuple(f_num),
        f_den=tuple(f_den),
        diff_num=tuple(diff),
        inv_one_minus=tuple(sorted(in_s | in_s1)),
        one_minus_prod=s_sorted,
        powers=_merge_powers(powers),
        sign=(-1) ** (sigma(s1_sorted, s_sorted) % 2),
    )


def thm4_spec(s3_set: Sequence[int], x_m: int, y_sites: Mapping[int, int]) -> IntegrandSpec:
    """Single-particle integrand over one index set S3."""
    s3 = tuple(sorted(s3_set))
    if not s3:
        raise ValidationError("S3 must be nonempty")
    f_den = []
    diff = []
    for a, b in itertools.combinations(s3, 2):
        f_den.append((a, b))
        diff.append((a, b))
    powers = [(a, x_m - y_sites[a] - 1) for a in s3]
    return IntegrandSpec(
        active=s3,
        f_den=tuple(f_den),
        diff_num=tuple(diff),
        inv_one_minus=s3,
        one_minus_prod=s3,
        powers=_merge_powers(powers),
    )


# spec-shaped convenience wrappers used by tests and the verification suites

def integrand_eq3(perm, x_values, y_sites, t, pt, params) -> complex:
    return evaluate(eq3_spec(perm, x_values, y_sites), pt, t, params)


def integrand_thm1(lam, x_values, n_particles, y_sites, t, pt, params) -> complex:
    return evaluate(thm1_spec(lam, x_values, n_particles, y_sites), pt, t, params)


def integrand_thm2(lam, s_set, x_values, y_sites, t, pt, params) -> complex:
    return evaluate(thm2_spec(lam, s_set, x_values, y_sites), pt, t, params)


def integrand_thm3(s_set, s1_set, lam2, n, m, x_values, y_sites, t, pt, params) -> complex:
    return evaluate(thm3_spec(s_set, s1_set, lam2, n, m, x_values, y_sites), pt, t, params)


def integrand_thm4(s3_set, x_m, y_sites, t, pt, params) -> complex:
    return evaluate(thm4_spec(s3_set, x_m, y_sites), pt, t, params)


def integrate_on_level(spec: IntegrandSpec, cache: LevelCache, *,
                       block_limit: int = 1 << 19, workers: int = 1,
                       executor=None) -> complex:
    """Tensor-grid 1/(2 pi i)^d integral of a factored integrand at one node
    count, blocked over leading axes with compensated block reduction.

    All variables share one node set, so the pairwise factor matrices from the
    level cache cover every block; per-term work is only the broadcast product.
    """
    d = spec.dimension
    m = cache.m
    axis_of = {idx: k for k, idx in enumerate(spec.active)}
    z = cache.z

    # per-axis vectors: powers, time factor, optional 1/(1-xi), node measure
    inv_om = set(spec.inv_one_minus)
    axis_vec = []
    power_of = dict(spec.powers)
    for idx in spec.active:
        v = cache.eps_exp * z
        e = power_of.get(idx, 0)
        if e:
            v = v * z**e
        if idx in inv_om:
            v = v * cache.inv_one_minus
        axis_vec.append(v)

    # pair factor matrices, merged per (low axis, high axis) slot
    slots: dict[tuple[int, int], np.ndarray] = {}

    def fold(a, b, mat):
        ia, ib = axis_of[a], axis_of[b]
        if ia > ib:
            ia, ib = ib, ia
            mat = mat.T
        key = (ia, ib)
        slots[key] = mat if key not in slots else slots[key] * mat

    for a, b in spec.f_num:
        fold(a, b, cache.f_mat)
    for a, b in spec.f_den:
        fold(a, b, cache.f_inv)
    for a, b in spec.diff_num:
        fold(a, b, cache.diff_mat)

    subset_axes = (
        tuple(axis_of[a] for a in spec.one_minus_prod)
        if spec.one_minus_prod is not None
        else None
    )

    lead = _lead_count(d, m, block_limit)
    trail = d - lead

    def trail_shape(axis):
        return (1,) * (axis - lead) + (m,) + (1,) * (d - 1 - axis)

    # block-independent part: trailing axis vectors, trailing-only pair mats
    base = np.ones((1,) * trail, dtype=complex)
    for axis in range(lead, d):
        base = base * axis_vec[axis].reshape(trail_shape(axis))
    cross_slots = []
    for (ia, ib), mat in sorted(slots.items()):
        if ia >= lead:
            shape = ((1,) * (ia - lead) + (m,) + (1,) * (ib - ia - 1) + (m,)
                     + (1,) * (d - 1 - ib))
            base = base * mat.reshape(shape)
        else:
            cross_slots.append((ia, ib, mat))
    trail_subset = None
    if subset_axes is not None:
        trail_subset = np.ones((1,) * trail, dtype=complex)
        for axis in subset_axes:
            if axis >= lead:
                trail_subset = trail_subset * z.reshape(trail_shape(axis))

    def one_block(idx):
        acc = complex(spec.sign)
        for axis in range(lead):
            acc *= complex(axis_vec[axis][idx[axis]])
        block = base
        for ia, ib, mat in cross_slots:
            if ib < lead:
                acc *= complex(mat[idx[ia], idx[ib]])
            else:
                block = block * mat[idx[ia]].reshape(trail_shape(ib))
        if subset_axes is not None:
            u = trail_subset
            for axis in subset_axes:
                if axis < lead:
                    u = u * z[idx[axis]]
            block = block * (1.0 - u)
        return acc * complex(np.sum(block))

    blocks = list(itertools.product(range(m), repeat=lead))
    partials = _map_blocks(one_block, blocks, workers, executor)
    return kahan_sum(partials) / m**d
