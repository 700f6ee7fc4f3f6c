"""Shared domain types: process parameters, particle configurations,
position events, and the result container returned by every engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class PoleError(ArithmeticError):
    """An integrand denominator factor vanishes on (or too near) the contour.

    Signals a bad contour radius; silent near-pole evaluation would destroy
    quadrature accuracy invisibly, so it is an error instead.
    """


class BudgetExceededError(RuntimeError):
    """A computation would exceed the configured evaluation budget."""


@dataclass(frozen=True)
class AsepParams:
    """Jump probabilities: right with probability p, left with q = 1 - p."""

    p: float
    q: float

    @property
    def tau(self) -> float:
        # asymmetry p/q, undefined in the q = 0 limit
        if self.q == 0.0:
            raise ValidationError("tau = p/q is undefined when q = 0")
        return self.p / self.q

    @property
    def eq3_valid(self) -> bool:
        """Whether the small-contour permutation-sum formula applies (p != 0)."""
        return self.p != 0.0

    @property
    def thm234_valid(self) -> bool:
        """Whether the large-contour formulas apply (q != 0)."""
        return self.q != 0.0


def validate_params(p) -> AsepParams:
    """Build AsepParams from the right-jump probability, q derived as 1 - p."""
    if not isinstance(p, (int, float)) or isinstance(p, bool) or not math.isfinite(p):
        raise ValidationError(f"p must be a finite number, got {p!r}")
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"p must lie in [0, 1], got {p}")
    p = float(p)
    return AsepParams(p=p, q=1.0 - p)


@dataclass(frozen=True)
class ParticleConfig:
    """Initial configuration: a finite increasing list of sites, or a
    configuration semi-infinite on the right (sites origin, origin+1, ...)."""

    kind: str
    positions: tuple[int, ...] = ()
    origin: int = 1

    def __post_init__(self):
        if self.kind not in ("finite", "step"):
            raise ValidationError(f"unknown configuration kind {self.kind!r}")
        if self.kind == "finite":
            if not self.positions:
                raise ValidationError("finite configuration needs at least one particle")
            if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
                raise ValidationError(
                    f"positions must be strictly increasing, got {self.positions}"
                )

    @classmethod
    def finite(cls, positions) -> "ParticleConfig":
        return cls(kind="finite", positions=tuple(int(v) for v in positions))

    @classmethod
    def step(cls, origin: int = 1) -> "ParticleConfig":
        return cls(kind="step", origin=int(origin))

    @property
    def n_particles(self):
        """Particle count for finite configurations, None for step."""
        return len(self.positions) if self.kind == "finite" else None

    def site(self, i: int) -> int:
        """Initial site of particle i (particles are 1-indexed, left to right)."""
        if i < 1:
            raise ValidationError(f"particle index must be >= 1, got {i}")
        if self.kind == "finite":
            if i > len(self.positions):
                raise ValidationError(
                    f"particle index {i} exceeds configuration size {len(self.positions)}"
                )
            return self.positions[i - 1]
        return self.origin + i - 1

    def truncated(self, count: int) -> "ParticleConfig":
        """First `count` particles of a step configuration as a finite one."""
        if self.kind != "step":
            raise ValidationError("truncated() applies to step configurations only")
        if count < 1:
            raise ValidationError("truncation count must be >= 1")
        return ParticleConfig.finite(range(self.origin, self.origin + count))


def as_config(y) -> ParticleConfig:
    """Coerce a raw position list into a finite ParticleConfig."""
    if isinstance(y, ParticleConfig):
        return y
    return ParticleConfig.finite(y)


@dataclass(frozen=True)
class PositionEvent:
    """The event {x_i(t) = values[i - first_index], i = first_index..last_index}
    for a consecutive block of particles."""

    first_index: int
    values: tuple[int, ...]

    def __post_init__(self):
        if self.first_index < 1:
            raise ValidationError("first particle index must be >= 1")
        if not self.values:
            raise ValidationError("event needs at least one position")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            # exclusion: two particles never share a site
            raise ValidationError(
                f"event positions must be strictly increasing, got {self.values}"
            )

    @classmethod
    def of(cls, first_index, values) -> "PositionEvent":
        return cls(first_index=int(first_index), values=tuple(int(v) for v in values))

    @property
    def last_index(self) -> int:
        return self.first_index + len(self.values) - 1


@dataclass(frozen=True)
class ProbResult:
    """Outcome of one probability computation.

    `raw` keeps the complex value before taking the real part; the imaginary
    residual is retained as a self-diagnostic of quadrature quality (the
    formulas are real only after exact cancellation).
    """

    raw: complex
    probability: float
    imag_residual: float
    est_quadrature_error: float
    est_truncation_error: float
    n_terms: int
    n_nodes: int
    elapsed: float
    converged: bool = True
    details: dict = field(default_factory=dict)

    @classmethod
    def from_raw(cls, raw, *, est_quadrature_error=0.0, est_truncation_error=0.0,
                 n_terms=0, n_nodes=0, elapsed=0.0, converged=True, details=None):
        raw = complex(raw)
        return cls(
            raw=raw,
            probability=raw.real,
            imag_residual=abs(raw.imag),
            est_quadrature_error=float(est_quadrature_error),
            est_truncation_error=float(est_truncation_error),
            n_terms=int(n_terms),
            n_nodes=int(n_nodes),
            elapsed=float(elapsed),
            converged=bool(converged),
            details=details or {},
        )
