"""Brute-force ground truth and the bound comparisons built on it.

The oracle enumerates privatization kernels P_{U|Y} on a uniform simplex
grid (each column a composition of `resolution`), evaluates exact I(U;Y)
and exact LIP leakage for every candidate, and keeps the best feasible
one. A sequential-quadratic polish then refines the best grid point along
the active leakage constraints; the polished candidate is accepted only if
its recomputed exact leakage still meets the budget, so the result never
trades feasibility for utility. Enumeration is chunked and threaded
(``LIPGEO_THREADS`` caps the workers) and the reduction is deterministic:
ties prefer the earliest candidate in lexicographic grid order.

On top of the oracle sit the closed-form comparisons: the chi-squared
ceiling 0.5*eps^2*sigma_max^2 that any eps-LIP mechanism obeys, rows of
exact-vs-approximate utility for convergence studies, and the full per-eps
bounds report consumed by sweeps.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import (
    EpsilonOutOfRange,
    InvalidInducedDistribution,
    NoFeasiblePoint,
    TooManyParameters,
)
from .geometry import GeometryContext, approx_mi_third_order
from .mechanisms import (
    ConstraintFamily,
    Mechanism,
    UtilityBounds,
    build_mechanism,
    scaling_factors,
    utility_bounds,
)
from .probability import ProblemInstance, StochasticKernel

__all__ = [
    "OracleResult",
    "ApproximationErrorRow",
    "BoundsReport",
    "thread_cap",
    "exhaustive_search",
    "chi2_baseline",
    "approximation_error_report",
    "bounds_report",
]

LIP_FEASIBILITY_TOL = 1e-12
MAX_FREE_PARAMETERS = 6
_CHUNK = 200_000


def thread_cap() -> int:
    """Worker count for grid enumeration; LIPGEO_THREADS overrides."""
    raw = os.environ.get("LIPGEO_THREADS", "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            cap = 0
        if cap > 0:
            return cap
    return os.cpu_count() or 1


@dataclass(frozen=True, eq=False)
class OracleResult:
    """Best feasible privatization kernel found by exhaustive search.

    best_kernel maps Y to U (columns indexed by y); best_utility and
    best_leakage are its exact I(U;Y) and exact LIP leakage.
    """

    best_kernel: StochasticKernel
    best_utility: float
    best_leakage: float
    grid_resolution: int
    u_cardinality: int


@dataclass(frozen=True)
class ApproximationErrorRow:
    """Exact utility vs the quadratic and cubic estimates at one budget."""

    epsilon: float
    approach: str
    exact: float
    second_order: float
    third_order: float
    err_second: float
    err_third: float


@dataclass(frozen=True, eq=False)
class BoundsReport:
    """Everything comparable at one epsilon: bounds, mechanisms, oracle.

    Mechanism fields are None when construction fails outside the validity
    range; oracle is None unless requested. in_validity_range uses the
    conservative threshold max(c1', c2') under which every family is
    guaranteed valid.
    """

    epsilon: float
    p1: UtilityBounds
    p2: UtilityBounds
    p1_prime: UtilityBounds
    p2_prime: UtilityBounds
    chi2: float
    mechanism_first: Optional[Mechanism]
    mechanism_second: Optional[Mechanism]
    oracle: Optional[OracleResult]
    in_validity_range: bool


def _simplex_grid(parts: int, resolution: int) -> np.ndarray:
    """Compositions of `resolution` into `parts`, lex order, as pmfs."""
    if parts == 1:
        return np.ones((1, 1))
    rows: list[tuple[int, ...]] = []

    def extend(prefix: tuple[int, ...], remaining: int, slots: int) -> None:
        if slots == 1:
            rows.append(prefix + (remaining,))
            return
        for first in range(remaining + 1):
            extend(prefix + (first,), remaining - first, slots - 1)

    extend((), resolution, parts)
    return np.array(rows, dtype=np.float64) / resolution


def _chunk_scores(
    grid: np.ndarray,
    strides: np.ndarray,
    start: int,
    stop: int,
    kernel: np.ndarray,
    px: np.ndarray,
    py: np.ndarray,
    epsilon: float,
) -> tuple[float, int]:
    """Best (utility, global index) among candidates [start, stop)."""
    idx = np.arange(start, stop, dtype=np.int64)
    digits = (idx[:, None] // strides[None, :]) % grid.shape[0]
    # cols[c, y, :] is the U-distribution attached to input symbol y
    cols = grid[digits]
    puy = cols.transpose(0, 2, 1) * py[None, None, :]
    pu = puy.sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = puy / (pu[:, :, None] * py[None, None, :])
        mi = np.sum(
            np.where(puy > 0, puy * np.log(np.where(puy > 0, ratio, 1.0)), 0.0),
            axis=(1, 2),
        )
        pxu = np.einsum("xy,cuy->cxu", kernel, puy)
        lift = np.abs(np.log(pxu / (pu[:, None, :] * px[None, :, None])))
    lift = np.where(pu[:, None, :] > 0, lift, 0.0)
    worst = lift.max(axis=(1, 2))
    scored = np.where(worst <= epsilon + LIP_FEASIBILITY_TOL, mi, -np.inf)
    best = int(np.argmax(scored))
    return float(scored[best]), start + best


def _evaluate_kernel(
    candidate: np.ndarray, kernel: np.ndarray, px: np.ndarray, py: np.ndarray
) -> tuple[float, float]:
    """Exact (I(U;Y), LIP leakage) of one privatization kernel."""
    puy = candidate * py[None, :]
    pu = puy.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = puy / (pu[:, None] * py[None, :])
        mi = float(
            np.sum(np.where(puy > 0, puy * np.log(np.where(puy > 0, ratio, 1.0)), 0.0))
        )
        pxu = kernel @ puy.T
        lift = np.abs(np.log(pxu / (pu[None, :] * px[:, None])))
    lift = np.where(pu[None, :] > 0, lift, 0.0)
    return mi, float(lift.max())


def _polish(
    incumbent: np.ndarray,
    kernel: np.ndarray,
    px: np.ndarray,
    py: np.ndarray,
    epsilon: float,
) -> Optional[np.ndarray]:
    """Refine a grid incumbent with SLSQP along the leakage boundary.

    The optimum typically sits on a ridge where several lift constraints
    are active, which a uniform grid straddles; the smooth local step
    recovers it. Returns the refined kernel, or None if the step did not
    both stay exactly feasible and improve.
    """
    m, k = incumbent.shape
    budget = epsilon - 1e-9
    if budget <= 0:
        return None

    def full(theta: np.ndarray) -> np.ndarray:
        top = theta.reshape(m - 1, k)
        return np.vstack([top, 1.0 - top.sum(axis=0)])

    def lifts(theta: np.ndarray) -> np.ndarray:
        cand = full(theta)
        puy = cand * py[None, :]
        pu = puy.sum(axis=1)
        pxu = kernel @ puy.T
        ratio = pxu / np.maximum(pu[None, :] * px[:, None], 1e-300)
        return np.log(np.maximum(ratio, 1e-300)).ravel()

    def neg_mi(theta: np.ndarray) -> float:
        cand = np.clip(full(theta), 0.0, None)
        puy = cand * py[None, :]
        pu = puy.sum(axis=1)
        ratio = puy / np.maximum(pu[:, None] * py[None, :], 1e-300)
        return -float(np.sum(np.where(puy > 0, puy * np.log(np.maximum(ratio, 1e-300)), 0.0)))

    constraints = [
        {"type": "ineq", "fun": lambda t: budget - lifts(t)},
        {"type": "ineq", "fun": lambda t: budget + lifts(t)},
        {"type": "ineq", "fun": lambda t: 1.0 - t.reshape(m - 1, k).sum(axis=0)},
    ]
    result = minimize(
        neg_mi,
        incumbent[: m - 1].ravel(),
        method="SLSQP",
        bounds=[(0.0, 1.0)] * ((m - 1) * k),
        constraints=constraints,
        options={"maxiter": 200, "ftol": 1e-14},
    )
    refined = np.clip(full(result.x), 0.0, None)
    sums = refined.sum(axis=0)
    if np.any(sums <= 0):
        return None
    return refined / sums[None, :]


def exhaustive_search(
    inst: ProblemInstance,
    u_cardinality: int = 2,
    resolution: int = 1000,
    *,
    epsilon: Optional[float] = None,
    polish: bool = True,
) -> OracleResult:
    """Best eps-LIP privatization kernel over the uniform simplex grid.

    Enumerates every column-stochastic P_{U|Y} whose columns lie on the
    grid with the given resolution, rejects candidates whose exact LIP
    leakage exceeds the budget (slack 1e-12), and maximizes exact I(U;Y).
    With polish=True the grid winner is refined locally; the refinement is
    kept only if it remains exactly feasible.

    Parameters
    ----------
    inst : ProblemInstance
        Instance under study; supplies the budget unless overridden.
    u_cardinality : int, optional
        Output alphabet size of the mechanism.
    resolution : int, optional
        Grid denominator, at least 10.
    epsilon : float, optional
        Budget override (here a budget of exactly 0 is meaningful: the
        oracle then confirms only independent mechanisms survive).
    polish : bool, optional
        Disable to get the raw grid optimum.

    Raises
    ------
    TooManyParameters
        If K * (u_cardinality - 1) exceeds 6; the grid is hopeless there.
    NoFeasiblePoint
        If no candidate meets the budget (cannot occur for eps >= 0 since
        constant kernels leak nothing, so this guards corrupted inputs).
    """
    eps = inst.epsilon if epsilon is None else float(epsilon)
    if eps is None:
        raise ValueError("no epsilon: instance carries none and no override given")
    if eps < 0:
        raise ValueError(f"epsilon must be nonnegative, got {eps}")
    if resolution < 10:
        raise ValueError(f"resolution must be at least 10, got {resolution}")
    if u_cardinality < 1:
        raise ValueError(f"u_cardinality must be positive, got {u_cardinality}")
    free = inst.k * (u_cardinality - 1)
    if free > MAX_FREE_PARAMETERS:
        raise TooManyParameters(
            f"{free} free parameters (K={inst.k}, |U|={u_cardinality}) "
            f"exceed the exhaustive-search limit of {MAX_FREE_PARAMETERS}"
        )

    grid = _simplex_grid(u_cardinality, resolution)
    n = grid.shape[0]
    k = inst.k
    strides = n ** np.arange(k - 1, -1, -1, dtype=np.int64)
    total = n**k
    kernel = inst.p_x_given_y.matrix
    px = inst.p_x.values
    py = inst.p_y.values

    spans = [(s, min(s + _CHUNK, total)) for s in range(0, total, _CHUNK)]
    if len(spans) == 1:
        results = [_chunk_scores(grid, strides, *spans[0], kernel, px, py, eps)]
    else:
        with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
            results = list(
                pool.map(
                    lambda span: _chunk_scores(grid, strides, *span, kernel, px, py, eps),
                    spans,
                )
            )
    best_mi, best_idx = -math.inf, -1
    for mi, gidx in results:
        if mi > best_mi or (mi == best_mi and 0 <= gidx < best_idx):
            best_mi, best_idx = mi, gidx
    if not math.isfinite(best_mi):
        raise NoFeasiblePoint(f"no grid candidate meets epsilon={eps}")

    digits = (best_idx // strides) % n
    candidate = grid[digits].T.copy()
    best_mi, best_leak = _evaluate_kernel(candidate, kernel, px, py)

    if polish:
        refined = _polish(candidate, kernel, px, py, eps)
        if refined is not None:
            mi, leak = _evaluate_kernel(refined, kernel, px, py)
            if leak <= eps + LIP_FEASIBILITY_TOL and mi > best_mi:
                candidate, best_mi, best_leak = refined, mi, leak

    return OracleResult(
        best_kernel=StochasticKernel(candidate),
        best_utility=best_mi,
        best_leakage=best_leak,
        grid_resolution=resolution,
        u_cardinality=u_cardinality,
    )


def chi2_baseline(ctx: GeometryContext, epsilon: float) -> float:
    """Ceiling 0.5*eps^2*sigma_max^2 no eps-LIP mechanism can beat."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    return 0.5 * epsilon * epsilon * ctx.sigma_max**2


def approximation_error_report(
    inst: ProblemInstance,
    ctx: GeometryContext,
    epsilons: Sequence[float],
) -> tuple[ApproximationErrorRow, ...]:
    """Exact vs second- and third-order utility across budgets.

    Two rows per epsilon, one per LIP box construction ("first" and
    "second" approach). A zero budget yields all-zero rows.
    """
    rows = []
    for eps in epsilons:
        eps = float(eps)
        if eps == 0.0:
            for approach in ("first", "second"):
                rows.append(
                    ApproximationErrorRow(eps, approach, 0.0, 0.0, 0.0, 0.0, 0.0)
                )
            continue
        for approach, family in (
            ("first", ConstraintFamily.LIP_FIRST),
            ("second", ConstraintFamily.LIP_SECOND),
        ):
            factors = scaling_factors(ctx, family, eps)
            mech = build_mechanism(inst, ctx, factors, eps)
            third = approx_mi_third_order(ctx, inst, mech.p_u, mech.directions, eps)
            rows.append(
                ApproximationErrorRow(
                    epsilon=eps,
                    approach=approach,
                    exact=mech.exact_utility,
                    second_order=mech.approx_utility,
                    third_order=third,
                    err_second=abs(mech.exact_utility - mech.approx_utility),
                    err_third=abs(mech.exact_utility - third),
                )
            )
    return tuple(rows)


def bounds_report(
    inst: ProblemInstance,
    ctx: GeometryContext,
    epsilon: float,
    *,
    include_oracle: bool = False,
    oracle_resolution: int = 1000,
    oracle_u_cardinality: int = 2,
) -> BoundsReport:
    """All closed-form bounds, both LIP mechanisms, and (optionally) the oracle.

    Out-of-range budgets degrade gracefully: the EpsilonOutOfRange warning
    is suppressed (the in_validity_range flag already records it) and a
    mechanism whose conditionals go negative is reported as None.
    """
    per_family = {}
    for family in ConstraintFamily:
        factors = scaling_factors(ctx, family, epsilon)
        per_family[family] = utility_bounds(ctx, factors, epsilon, inst.k)

    def try_build(family: ConstraintFamily) -> Optional[Mechanism]:
        factors = scaling_factors(ctx, family, epsilon)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EpsilonOutOfRange)
            try:
                return build_mechanism(inst, ctx, factors, epsilon)
            except InvalidInducedDistribution:
                return None

    oracle = None
    if include_oracle:
        oracle = exhaustive_search(
            inst, oracle_u_cardinality, oracle_resolution, epsilon=epsilon
        )
    return BoundsReport(
        epsilon=float(epsilon),
        p1=per_family[ConstraintFamily.LIP_FIRST],
        p2=per_family[ConstraintFamily.LIP_SECOND],
        p1_prime=per_family[ConstraintFamily.MAXLIFT_FIRST],
        p2_prime=per_family[ConstraintFamily.MAXLIFT_SECOND],
        chi2=chi2_baseline(ctx, epsilon),
        mechanism_first=try_build(ConstraintFamily.LIP_FIRST),
        mechanism_second=try_build(ConstraintFamily.LIP_SECOND),
        oracle=oracle,
        in_validity_range=epsilon <= max(ctx.c1_prime, ctx.c2_prime),
    )
