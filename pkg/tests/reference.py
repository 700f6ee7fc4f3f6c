"""Literal-product reference evaluation of every integrand.

Each function multiplies out the full displayed products with no cancellation
or factoring, as an independent check on the factored fast paths in the
package. Kept out of the package on purpose: production code never calls it.
"""

import itertools
from math import prod


def ref_f(a, b, params):
    return params.p + params.q * a * b - a


def ref_eps(xi, params):
    return params.p / xi + params.q * xi - 1.0


def ref_a_sigma(perm, pt, params):
    n = perm.size
    num = prod(ref_f(pt[perm(i)], pt[perm(j)], params)
               for i, j in itertools.combinations(range(1, n + 1), 2))
    den = prod(ref_f(pt[i], pt[j], params)
               for i, j in itertools.combinations(range(1, n + 1), 2))
    return perm.sign * num / den


def _time_factor(indices, pt, t, params):
    import cmath

    return cmath.exp(t * sum(ref_eps(pt[i], params) for i in indices))


def ref_integrand_eq3(perm, x_values, y_sites, t, pt, params):
    n = perm.size
    val = ref_a_sigma(perm, pt, params)
    val *= prod(pt[perm(i)] ** x_values[i - 1] for i in range(1, n + 1))
    val *= prod(pt[i] ** (-y_sites[i] - 1) for i in range(1, n + 1))
    return val * _time_factor(range(1, n + 1), pt, t, params)


def ref_integrand_thm1(lam, x_values, n_particles, y_sites, t, pt, params):
    lam = tuple(lam)
    m = len(lam) + 1
    everyone = range(1, n_particles + 1)
    outside = [j for j in everyone if j not in lam]
    num = prod(ref_f(pt[i], pt[j], params) for i in lam for j in everyone if j != i and j not in lam)
    num *= prod(ref_f(pt[lam[i]], pt[lam[j]], params)
                for i, j in itertools.combinations(range(m - 1), 2))
    den = prod(ref_f(pt[i], pt[j], params)
               for i, j in itertools.combinations(everyone, 2))
    val = num / den
    val *= 1.0 - prod(pt[j] for j in outside)
    val *= prod(pt[j] - pt[i] for i, j in itertools.combinations(outside, 2))
    val /= prod(1.0 - pt[j] for j in outside)
    val *= prod(pt[lam[i]] ** x_values[i] for i in range(m - 1))
    val *= prod(pt[j] ** x_values[m - 1] for j in outside)
    val *= prod(pt[i] ** (-y_sites[i] - 1) for i in everyone)
    return val * _time_factor(everyone, pt, t, params)


def ref_integrand_thm2(lam, s_set, x_values, y_sites, t, pt, params):
    lam = tuple(lam)
    s = tuple(sorted(s_set))
    m = len(lam) + 1
    active = sorted(set(lam) | set(s))
    num = prod(ref_f(pt[i], pt[j], params) for i in lam for j in s)
    num *= prod(ref_f(pt[lam[i]], pt[lam[j]], params)
                for i, j in itertools.combinations(range(m - 1), 2))
    den = prod(ref_f(pt[i], pt[j], params)
               for i, j in itertools.combinations(active, 2))
    val = num / den
    val *= 1.0 - prod(pt[j] for j in s)
    val *= prod(pt[j] - pt[i] for i, j in itertools.combinations(s, 2))
    val /= prod(1.0 - pt[j] for j in s)
    val *= prod(pt[lam[i]] ** x_values[i] for i in range(m - 1))
    val *= prod(pt[j] ** x_values[m - 1] for j in s)
    val *= prod(pt[i] ** (-y_sites[i] - 1) for i in active)
    return val * _time_factor(active, pt, t, params)


def ref_integrand_thm3(s_set, s1_set, lam2, n, m, x_values, y_sites, t, pt, params):
    """Literal form, including the cross-Vandermonde denominator over
    (S1, S) pairs; only defined away from coinciding point values."""
    s = tuple(sorted(s_set))
    s1 = tuple(sorted(s1_set))
    lam2 = tuple(lam2)
    active = sorted(set(s) | set(s1) | set(lam2))
    num = prod(ref_f(pt[i], pt[j], params) for i in s1 for j in list(s) + list(lam2))
    num *= prod(ref_f(pt[i], pt[j], params) for i in lam2 for j in s)
    num *= prod(ref_f(pt[lam2[i]], pt[lam2[j]], params)
                for i, j in itertools.combinations(range(m - n), 2))
    den = prod(ref_f(pt[i], pt[j], params)
               for i, j in itertools.combinations(active, 2))
    val = num / den
    val *= 1.0 - prod(pt[j] for j in s)
    both = sorted(set(s) | set(s1))
    val *= prod(pt[j] - pt[i] for i, j in itertools.combinations(both, 2))
    val /= prod(1.0 - pt[j] for j in both)
    val /= prod(pt[j] - pt[i] for i in s1 for j in s)
    val *= prod(pt[i] ** x_values[0] for i in s1)
    val *= prod(pt[lam2[i]] ** x_values[i] for i in range(m - n))
    val *= prod(pt[j] ** x_values[-1] for j in s)
    val *= prod(pt[i] ** (-y_sites[i] - 1) for i in active)
    return val * _time_factor(active, pt, t, params)


def ref_integrand_thm4(s3_set, x_m, y_sites, t, pt, params):
    s3 = tuple(sorted(s3_set))
    val = prod((pt[j] - pt[i]) / ref_f(pt[i], pt[j], params)
               for i, j in itertools.combinations(s3, 2))
    val *= (1.0 - prod(pt[i] for i in s3)) / prod(1.0 - pt[i] for i in s3)
    val *= prod(pt[i] ** (x_m - y_sites[i] - 1) for i in s3)
    return val * _time_factor(s3, pt, t, params)
