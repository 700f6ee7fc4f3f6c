"""Index combinatorics for the probability formulas.

Signed permutations, ordered index tuples, index sets, the inversion-type
statistic sigma(S, T) = #{(i, j): i in S, j in T, i >= j}, and Gaussian
(tau-deformed) binomial coefficients.

Enumeration order is deterministic everywhere; downstream compensated
summation relies on it for reproducibility.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

from .core import ValidationError


def inversion_count(seq) -> int:
    """Number of pairs (i < j) with seq[i] > seq[j]."""
    return sum(
        1 for i, j in itertools.combinations(range(len(seq)), 2) if seq[i] > seq[j]
    )


def parity_sign(k: int) -> int:
    return 1 if k % 2 == 0 else -1


@dataclass(frozen=True)
class Perm:
    """A permutation of {1..N} in one-line notation, with its parity sign."""

    mapping: tuple[int, ...]
    sign: int

    def __post_init__(self):
        n = len(self.mapping)
        if sorted(self.mapping) != list(range(1, n + 1)):
            raise ValidationError(f"not a permutation of 1..{n}: {self.mapping}")
        if self.sign != parity_sign(inversion_count(self.mapping)):
            raise ValidationError("sign inconsistent with inversion parity")

    def __call__(self, i: int) -> int:
        """Image of position i (1-indexed)."""
        return self.mapping[i - 1]

    @property
    def size(self) -> int:
        return len(self.mapping)


@dataclass(frozen=True)
class IndexTuple:
    """Ordered tuple of distinct particle indices (a Lambda-style tuple)."""

    entries: tuple[int, ...]
    universe_size: int | None = None

    def __post_init__(self):
        if len(set(self.entries)) != len(self.entries):
            raise ValidationError(f"tuple entries must be distinct: {self.entries}")
        if any(e < 1 for e in self.entries):
            raise ValidationError(f"tuple entries must be >= 1: {self.entries}")
        if self.universe_size is not None and any(
            e > self.universe_size for e in self.entries
        ):
            raise ValidationError(
                f"entries {self.entries} exceed universe size {self.universe_size}"
            )

    def as_set(self) -> frozenset[int]:
        """The unordered set behind the tuple."""
        return frozenset(self.entries)


@dataclass(frozen=True)
class IndexSet:
    """Set of particle indices kept as a strictly increasing tuple."""

    members: tuple[int, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.members, self.members[1:])):
            raise ValidationError(
                f"members must be strictly increasing, got {self.members}"
            )
        if self.members and self.members[0] < 1:
            raise ValidationError(f"members must be >= 1: {self.members}")

    @classmethod
    def of(cls, items) -> "IndexSet":
        return cls(tuple(sorted(set(int(v) for v in items))))


def _entries(x) -> tuple[int, ...]:
    if isinstance(x, IndexTuple):
        return x.entries
    if isinstance(x, IndexSet):
        return x.members
    return tuple(x)


def permutations(n: int) -> Iterator[Perm]:
    """All n! permutations of {1..n} with signs, in lexicographic order."""
    if n < 1:
        raise ValidationError(f"permutation size must be >= 1, got {n}")
    for mapping in itertools.permutations(range(1, n + 1)):
        yield Perm(mapping, parity_sign(inversion_count(mapping)))


def inversions(t) -> int:
    """Inversion count of an ordered index tuple."""
    return inversion_count(_entries(t))


def sgn_tuple(t) -> int:
    """Sign of the permutation sorting the tuple: (-1)^inversions."""
    return parity_sign(inversion_count(_entries(t)))


def sigma(s, t) -> int:
    """sigma(S, T) = #{(i, j): i in S, j in T, i >= j}; equality counts."""
    sv, tv = _entries(s), _entries(t)
    return sum(1 for i in sv for j in tv if i >= j)


def sigma_full(s, n: int) -> int:
    """sigma(S, [1, N]), which works out to the element sum of S."""
    sv = _entries(s)
    if any(not 1 <= v <= n for v in sv):
        raise ValidationError(f"members of {sv} fall outside [1, {n}]")
    return sigma(sv, range(1, n + 1))


def tau_binomial(ncap: int, n: int, tau: float) -> float:
    """Gaussian binomial coefficient [ncap over n] in the parameter tau.

    Product form (1 - tau^ncap)...(1 - tau^(ncap-n+1)) / (1 - tau)...(1 - tau^n).
    At tau = 1 each factor's removable singularity is evaluated analytically as
    (ncap - j + 1)/j, recovering the ordinary binomial exactly. Returns 0 when
    0 <= ncap < n (a numerator factor is 1 - tau^0 = 0).
    """
    if n < 0:
        raise ValidationError(f"lower index must be >= 0, got {n}")
    if ncap < 0:
        raise ValidationError(f"upper index must be >= 0, got {ncap}")
    if tau < 0:
        raise ValidationError(f"tau must be >= 0, got {tau}")
    if n == 0:
        return 1.0
    if ncap < n:
        return 0.0
    if tau == 1.0:
        out = 1.0
        for j in range(1, n + 1):
            out *= (ncap - j + 1) / j
        return out
    if tau == 0.0:
        # all exponents ncap-j+1 >= 1, so every factor is (1-0)/(1-0) = 1
        return 1.0
    lt = math.log(tau)
    out = 1.0
    for j in range(1, n + 1):
        num = -math.expm1((ncap - j + 1) * lt)
        den = -math.expm1(j * lt)
        out *= num / den
    return out


def enumerate_tuples(universe, length: int, disjoint_from=()) -> Iterator[tuple[int, ...]]:
    """All ordered tuples of distinct elements of universe minus disjoint_from.

    Deterministic order (lexicographic over the sorted available elements);
    yields k!/(k-length)! tuples with k available elements.
    """
    if length < 0:
        raise ValidationError(f"tuple length must be >= 0, got {length}")
    banned = set(_entries(disjoint_from))
    available = sorted(v for v in set(_entries(universe)) if v not in banned)
    if length > len(available):
        raise ValidationError(
            f"cannot draw {length}-tuples from {len(available)} available elements"
        )
    yield from itertools.permutations(available, length)


def enumerate_subsets(universe, min_size: int = 0, max_size: int | None = None) -> Iterator[tuple[int, ...]]:
    """All subsets of universe with size in [min_size, max_size], ordered by
    size then lexicographically."""
    if min_size < 0:
        raise ValidationError(f"min_size must be >= 0, got {min_size}")
    items = sorted(set(_entries(universe)))
    if max_size is None:
        max_size = len(items)
    if max_size < min_size:
        raise ValidationError(f"max_size {max_size} below min_size {min_size}")
    for size in range(min_size, min(max_size, len(items)) + 1):
        yield from itertools.combinations(items, size)


def distinct_sets_with_sum(total: int, *, min_size: int = 1, max_size: int,
                           max_element: int) -> list[tuple[int, ...]]:
    """All sets of distinct positive integers with the given element sum.

    Used to enumerate index sets grouped by their sigma statistic when the
    configuration is semi-infinite. Ascending lexicographic order.
    """
    out: list[tuple[int, ...]] = []

    def extend(prefix, start, remaining):
        k = len(prefix)
        if remaining == 0:
            if k >= min_size:
                out.append(tuple(prefix))
            return
        if k == max_size:
            return
        # smallest completion from `start` upward with the sizes still allowed
        for v in range(start, min(remaining, max_element) + 1):
            rest = remaining - v
            if rest and rest <= v:
                continue
            extend(prefix + [v], v + 1, rest)

    extend([], 1, total)
    return out
