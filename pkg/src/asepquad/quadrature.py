"""Tensor-product contour integration over circles centered at the origin.

Every 1/(2 pi i) contour integral is realized by the trapezoidal rule on the
circle, which is spectrally accurate for integrands analytic in an annulus
around it: the mean over the scaled M-th roots of unity of xi * g(xi).
Radius selection keeps all denominator zeros strictly off the contours.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import AsepParams, BudgetExceededError, PoleError, ValidationError

# relative threshold below which a denominator factor counts as a pole hit
POLE_RTOL = 1e-12


@dataclass(frozen=True)
class ContourSpec:
    """An origin-centered circle; small contours sit below radius 1 with all
    nonzero integrand poles outside, large ones above 1 with all denominator
    zeros inside."""

    radius: float
    kind: str

    def __post_init__(self):
        if self.kind not in ("small", "large"):
            raise ValidationError(f"contour kind must be small|large, got {self.kind!r}")
        if not self.radius > 0:
            raise ValidationError(f"radius must be positive, got {self.radius}")
        if self.kind == "small" and not self.radius < 1:
            raise ValidationError(f"small contour needs radius < 1, got {self.radius}")
        if self.kind == "large" and not self.radius > 1:
            raise ValidationError(f"large contour needs radius > 1, got {self.radius}")


@dataclass(frozen=True)
class QuadGrid:
    """Discretization of a d-fold product of equal circles.

    Node set per variable: radius * exp(2 pi i k / M), k = 0..M-1.
    """

    dimension: int
    radii: tuple[float, ...]
    nodes_per_dim: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValidationError(f"dimension must be >= 1, got {self.dimension}")
        if len(self.radii) != self.dimension:
            raise ValidationError("need one radius per dimension")
        if len(set(self.radii)) != 1:
            # the formulas are stated with common contours; mixed radii rejected
            raise ValidationError(f"mixed radii are not supported: {self.radii}")
        m = self.nodes_per_dim
        if m < 4 or (m & (m - 1)) != 0:
            raise ValidationError(f"nodes_per_dim must be a power of two >= 4, got {m}")

    @classmethod
    def uniform(cls, dimension: int, radius: float, nodes_per_dim: int) -> "QuadGrid":
        return cls(dimension, (float(radius),) * dimension, nodes_per_dim)

    @property
    def radius(self) -> float:
        return self.radii[0]


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances, ladder limits, and evaluation budget for the engines."""

    tol: float = 1e-10
    m_start: int = 16
    m_max: int = 1024
    budget: float = 1e9
    workers: int = 1
    floor: float = 1.0
    block_limit: int = 1 << 19

    def __post_init__(self):
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if self.m_start < 4 or (self.m_start & (self.m_start - 1)) != 0:
            raise ValidationError("m_start must be a power of two >= 4")
        if self.m_max < self.m_start:
            raise ValidationError("m_max must be >= m_start")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


class NodeBudget:
    """Running count of integrand evaluations against a hard cap."""

    def __init__(self, cap: float):
        self.cap = float(cap)
        self.used = 0

    def can(self, n: int) -> bool:
        return self.used + n <= self.cap

    def charge(self, n: int) -> None:
        if not self.can(n):
            raise BudgetExceededError(
                f"evaluation budget exhausted: {self.used} used, {n} more requested, cap {self.cap:g}"
            )
        self.used += n


def choose_small_radius(params: AsepParams, safety: float = 0.5) -> float:
    """Radius for small contours: below the largest r with q r^2 + r - p < 0,
    so no f-kernel zero can occur with both variables on the circle, and
    capped below 1. The safety factor guards strongly asymmetric parameters."""
    if params.p == 0.0:
        raise ValidationError("no valid small contour when p = 0")
    if params.q == 0.0:
        r_max = 1.0
    else:
        r_max = (-1.0 + math.sqrt(1.0 + 4.0 * params.p * params.q)) / (2.0 * params.q)
    return safety * min(r_max, 1.0)


def choose_large_radius(params: AsepParams, step_ic: bool = False, margin: float = 1.0) -> float:
    """Radius for large contours: all f-kernel zeros and the point 1 strictly
    inside.

    The truncated-series path (step_ic) additionally needs room for its tail
    envelope to contract, hence the floor of 8 and the 2 tau^2 term keeping
    the coefficient growth dominated. Finite sums skip both: the roundoff
    floor of the node sums grows like R^(x-y) e^(qRt), so the radius stays as
    small as the pole structure allows.
    """
    if params.q == 0.0:
        raise ValidationError("no valid large contour when q = 0")
    r_min = (1.0 + math.sqrt(1.0 + 4.0 * params.p * params.q)) / (2.0 * params.q)
    bound = max(2.0 * r_min, 1.0 + margin, 2.0)
    if step_ic:
        tau = params.p / params.q
        bound = max(bound, 8.0, 2.0 * tau * tau)
    return bound


def circle_nodes(radius: float, m: int) -> np.ndarray:
    return radius * np.exp(2j * np.pi * np.arange(m) / m)


def kahan_sum(values) -> complex:
    """Compensated summation in the order given; the order is part of the
    reproducibility contract."""
    s = 0.0 + 0.0j
    c = 0.0 + 0.0j
    for v in values:
        y = v - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def _lead_count(d: int, m: int, block_limit: int) -> int:
    """How many leading axes to iterate over so trailing blocks fit in memory.

    Always keeps at least one trailing axis so blocks stay vectorized.
    """
    lead = 0
    while m ** (d - lead) > block_limit and lead < d - 1:
        lead += 1
    return lead


def _map_blocks(fn, blocks, workers: int, executor=None):
    if executor is not None:
        return list(executor.map(fn, blocks))
    if workers <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def contour_integral(grid: QuadGrid, g, *, workers: int = 1,
                     block_limit: int = 1 << 19, executor=None) -> complex:
    """Tensor-product trapezoidal value of the d-fold 1/(2 pi i) integral of g.

    g receives a list of d broadcastable coordinate arrays (scalar complex for
    blocked leading axes, shaped numpy arrays for trailing axes) and must be
    pure; blocks may be evaluated concurrently but are reduced in fixed order.
    """
    d, m = grid.dimension, grid.nodes_per_dim
    z = circle_nodes(grid.radius, m)
    lead = _lead_count(d, m, block_limit)
    trail = d - lead

    trail_views = [
        z.reshape((1,) * k + (m,) + (1,) * (trail - 1 - k)) for k in range(trail)
    ]
    # node measure of the trailing axes, shared by every block
    trail_measure = trail_views[0]
    for v in trail_views[1:]:
        trail_measure = trail_measure * v

    def one_block(idx):
        coords = [complex(z[i]) for i in idx] + trail_views
        vals = g(coords)
        pref = 1.0 + 0.0j
        for i in idx:
            pref *= complex(z[i])
        return complex(np.sum(vals * trail_measure)) * pref

    blocks = list(itertools.product(range(m), repeat=lead))
    partials = _map_blocks(one_block, blocks, workers, executor)
    return kahan_sum(partials) / m**d


@dataclass
class QuadOutcome:
    value: complex
    est_error: float
    converged: bool
    n_nodes: int
    final_m: int


def adaptive_levels(eval_level, dimension: int, tol: float, cfg: QuadConfig,
                    budget: NodeBudget | None = None, floor: float | None = None) -> QuadOutcome:
    """Doubling ladder over node counts: M, 2M, ... until two successive
    levels agree to tol relative to max(|value|, floor), or the ladder hits
    m_max / the budget (flagged, not raised)."""
    if floor is None:
        floor = cfg.floor
    m = cfg.m_start
    prev = None
    nodes = 0
    err = math.inf
    while True:
        cost = m**dimension
        if budget is not None and not budget.can(cost):
            return QuadOutcome(prev if prev is not None else 0.0 + 0.0j,
                               err, False, nodes, m // 2)
        if budget is not None:
            budget.charge(cost)
        val = eval_level(m)
        nodes += cost
        if prev is not None:
            err = abs(val - prev)
            if err <= tol * max(abs(val), floor):
                return QuadOutcome(val, err, True, nodes, m)
        if m >= cfg.m_max:
            return QuadOutcome(val, err, False, nodes, m)
        prev = val
        m *= 2


def adaptive_contour_integral(contour: ContourSpec, dimension: int, g, tol: float,
                              *, cfg: QuadConfig | None = None,
                              budget: NodeBudget | None = None,
                              executor=None) -> QuadOutcome:
    """Adaptive wrapper around contour_integral for callback integrands."""
    cfg = cfg or QuadConfig()

    def eval_level(m):
        grid = QuadGrid.uniform(dimension, contour.radius, m)
        return contour_integral(grid, g, workers=cfg.workers,
                                block_limit=cfg.block_limit, executor=executor)

    return adaptive_levels(eval_level, dimension, tol, cfg, budget)


@dataclass
class LevelCache:
    """Shared node-level arrays for one (radius, M, t, params) combination.

    f_mat[i, j] = f(z_i, z_j) with the first index being f's first argument;
    diff_mat[i, j] = z_j - z_i. Reused by every term of an engine call, which
    is where the f-value sharing across permutation/tuple terms happens.
    """

    m: int
    radius: float
    z: np.ndarray
    f_mat: np.ndarray
    f_inv: np.ndarray
    diff_mat: np.ndarray
    inv_one_minus: np.ndarray
    eps_exp: np.ndarray


def build_level_cache(radius: float, m: int, t: float, params: AsepParams) -> LevelCache:
    z = circle_nodes(radius, m)
    zc = z[:, None]
    zr = z[None, :]
    f_mat = params.p + params.q * zc * zr - zc
    f_scale = params.p + params.q * radius * radius + radius
    if np.min(np.abs(f_mat)) < POLE_RTOL * f_scale:
        raise PoleError(
            f"f-kernel zero on the contour lattice at radius {radius}; adjust the radius"
        )
    one_minus = 1.0 - z
    if np.min(np.abs(one_minus)) < POLE_RTOL * (1.0 + radius):
        raise PoleError(f"contour of radius {radius} passes through 1")
    eps_z = params.p / z + params.q * z - 1.0
    return LevelCache(
        m=m,
        radius=radius,
        z=z,
        f_mat=f_mat,
        f_inv=1.0 / f_mat,
        diff_mat=zr - zc,
        inv_one_minus=1.0 / one_minus,
        eps_exp=np.exp(eps_z * t),
    )
