"""Mechanism synthesis under bounded-LIP and max-lift constraint boxes.

Each privacy definition and each handling of the constraint nonlinearity
yields a box on the rescaled direction L (entrywise bounds proportional to
sqrt(P_X)):

- LIP, first approach: linearize the lift; -sqrt(P_X)/(1+eps) <= L <= sqrt(P_X).
- LIP, second approach: keep the lift exact and rewrite;
  ((e^-eps - 1)/eps) sqrt(P_X) <= L <= ((e^eps - 1)/eps) sqrt(P_X).
- Max-lift variants: same boxes with the lower bound dropped (the
  constraint is one-sided).

The synthesized mechanism is binary: directions +-L* scaled to touch their
box. First-approach scaling divides by factors gamma >= 1, second-approach
scaling multiplies by the largest admissible lambda > 0; the output
weights P_U then make the scaled directions average to zero. For K = 2 the
box has no residual freedom and the construction is exactly optimal within
its family; for larger alphabets it is the optimal lower bound of this
binary form.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EpsilonOutOfRange, InvalidInducedDistribution
from .geometry import (
    Direction,
    GeometryContext,
    approx_mi_second_order,
    induced_y_conditionals,
)
from .probability import (
    Distribution,
    ProblemInstance,
    kl_divergence,
    lip_leakage,
    max_lift_leakage,
)

__all__ = [
    "ConstraintFamily",
    "ScalingFactors",
    "UtilityBounds",
    "Mechanism",
    "MechanismAudit",
    "scaling_factors",
    "utility_bounds",
    "build_mechanism",
    "audit_mechanism",
]

# coordinates of l_star below this are treated as unconstrained
ZERO_COORD_TOL = 1e-12
AUDIT_TOL = 1e-9
LEAKAGE_SLACK = 1e-9
# a scaling factor this close to 1 counts as "direction already fits the box"
UNSCALED_TOL = 1e-12


class ConstraintFamily(enum.Enum):
    """Privacy functional crossed with constraint-box construction."""

    LIP_FIRST = "lip_first"
    LIP_SECOND = "lip_second"
    MAXLIFT_FIRST = "maxlift_first"
    MAXLIFT_SECOND = "maxlift_second"

    @property
    def is_first_approach(self) -> bool:
        return self in (ConstraintFamily.LIP_FIRST, ConstraintFamily.MAXLIFT_FIRST)

    @property
    def is_two_sided(self) -> bool:
        """Whether the privacy functional bounds the lift from below too."""
        return self in (ConstraintFamily.LIP_FIRST, ConstraintFamily.LIP_SECOND)

    def upper_bound_vector(self, sqrt_px: np.ndarray, epsilon: float) -> np.ndarray:
        if self.is_first_approach:
            return sqrt_px.copy()
        return (math.expm1(epsilon) / epsilon) * sqrt_px

    def lower_bound_vector(
        self, sqrt_px: np.ndarray, epsilon: float
    ) -> Optional[np.ndarray]:
        if not self.is_two_sided:
            return None
        if self.is_first_approach:
            return -sqrt_px / (1.0 + epsilon)
        return (math.expm1(-epsilon) / epsilon) * sqrt_px

    def validity_threshold(self, ctx: GeometryContext) -> float:
        """Largest eps with guaranteed-valid induced conditionals."""
        if self.is_first_approach:
            return max(ctx.c1, ctx.c2)
        return max(ctx.c1_prime, ctx.c2_prime)


@dataclass(frozen=True)
class ScalingFactors:
    """How far +-L* must shrink (first) or may stretch (second) to fit.

    plus_factor applies to +L*, minus_factor to -L*. First-approach
    factors are divisors gamma >= 1 (1 means already inside the box);
    second-approach factors are multipliers lambda > 0 placing the
    direction on the box boundary. symmetric_factor is the single factor
    usable for both signs: max of the two gammas, or min of the two
    lambdas.
    """

    family: ConstraintFamily
    plus_factor: float
    minus_factor: float
    symmetric_factor: float


@dataclass(frozen=True)
class UtilityBounds:
    """Lower/upper bounds on achievable I(U;Y), and the K=2 exact point.

    point is the utility of the synthesized binary mechanism when the
    family admits a closed form (always for K = 2, and for the one-sided
    linearized box whenever both signed directions fit unscaled); None
    otherwise. exact_for_k2 records whether lower is known to be tight.
    """

    lower: float
    upper: float
    point: Optional[float]
    exact_for_k2: bool


@dataclass(frozen=True, eq=False)
class Mechanism:
    """A synthesized binary privacy mechanism and its exact evaluation.

    p_x_given_u / p_y_given_u list one conditional per output symbol u.
    p_xyu is the joint array indexed [x, y, u], consistent with the
    instance joint after summing over u. exact_* fields are evaluated on
    the conditionals with no approximation; approx_utility is the
    quadratic estimate for comparison. in_validity_range is False when
    epsilon exceeds the family threshold, in which case the construction
    is best-effort (max-lift directions are clamped to keep conditionals
    valid; LIP construction may have raised instead).
    """

    epsilon: float
    family: ConstraintFamily
    p_u: Distribution
    directions: tuple[Direction, ...]
    p_x_given_u: tuple[Distribution, ...]
    p_y_given_u: tuple[Distribution, ...]
    p_xyu: np.ndarray
    exact_utility: float
    exact_lip: float
    exact_maxlift: float
    approx_utility: float
    in_validity_range: bool


@dataclass(frozen=True, eq=False)
class MechanismAudit:
    """Recomputed-from-scratch consistency report; never raises.

    residuals holds max absolute defects keyed by invariant name;
    violations lists the keys exceeding 1e-9. leakage_within_budget
    compares the family functional against epsilon + 1e-9.
    """

    exact_utility: float
    exact_lip: float
    exact_maxlift: float
    residuals: dict[str, float]
    violations: tuple[str, ...]
    leakage_within_budget: bool
    in_validity_range: bool
    passed: bool


def scaling_factors(
    ctx: GeometryContext, family: ConstraintFamily, epsilon: float
) -> ScalingFactors:
    """Fit +-L* to the family box at budget epsilon.

    For each coordinate with |L*(x)| above float noise the box gives a
    requirement; first-approach factors are the max requirement floored
    at 1, second-approach factors the min allowance.

    Raises
    ------
    ValueError
        If epsilon is not in (0, 1).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    upper = family.upper_bound_vector(ctx.sqrt_px, epsilon)
    lower = family.lower_bound_vector(ctx.sqrt_px, epsilon)

    def fit(direction: np.ndarray) -> float:
        ratios = []
        for i, coord in enumerate(direction):
            if coord > ZERO_COORD_TOL:
                ratios.append(coord / upper[i])
            elif coord < -ZERO_COORD_TOL and lower is not None:
                ratios.append(coord / lower[i])
        if family.is_first_approach:
            # gamma: divisor, floored at 1 so small directions stay put
            return max(1.0, max(ratios, default=1.0))
        # lambda: largest multiplier keeping every coordinate inside
        allowances = [1.0 / r for r in ratios]
        return min(allowances, default=math.inf)

    plus = fit(ctx.l_star)
    minus = fit(-ctx.l_star)
    if not (math.isfinite(plus) and math.isfinite(minus)):
        raise ValueError("direction never meets the constraint box")
    symmetric = max(plus, minus) if family.is_first_approach else min(plus, minus)
    return ScalingFactors(
        family=family,
        plus_factor=float(plus),
        minus_factor=float(minus),
        symmetric_factor=float(symmetric),
    )


def utility_bounds(
    ctx: GeometryContext,
    factors: ScalingFactors,
    epsilon: float,
    k: int,
) -> UtilityBounds:
    """Closed-form utility bounds for the binary +-L* construction.

    lower is what the scaled construction achieves (to second order);
    upper is the unconstrained-box ceiling 0.5*eps^2*sigma_max^2 for
    first-approach boxes and 0.5*sigma_max^2*(e^eps - 1)^2 for
    second-approach ones.
    """
    s2 = ctx.sigma_max**2
    if factors.family.is_first_approach:
        upper = 0.5 * epsilon * epsilon * s2
        lower = upper / (factors.plus_factor * factors.minus_factor)
    else:
        upper = 0.5 * s2 * math.expm1(epsilon) ** 2
        lower = (
            0.5 * epsilon * epsilon * s2 * factors.plus_factor * factors.minus_factor
        )
    point: Optional[float] = None
    if (
        factors.family is ConstraintFamily.MAXLIFT_FIRST
        and factors.plus_factor <= 1.0 + UNSCALED_TOL
        and factors.minus_factor <= 1.0 + UNSCALED_TOL
    ):
        # both signed directions fit unscaled: uniform P_U attains the top
        point = upper
    elif k == 2:
        point = lower
    return UtilityBounds(
        lower=float(lower), upper=float(upper), point=point, exact_for_k2=(k == 2)
    )


def _structural_ceiling(
    inst: ProblemInstance, ctx: GeometryContext, vec: np.ndarray, epsilon: float
) -> float:
    """Largest scale s with P_Y + eps*s*P_{X|Y}^-1(sqrt(P_X)*vec) >= 0.

    P_{X|U} inherits validity through the column-stochastic kernel, so the
    output side is the only structural constraint.
    """
    shift = ctx.kernel_inverse @ (ctx.sqrt_px * vec)
    py = inst.p_y.values
    ceiling = math.inf
    for y in range(py.size):
        if shift[y] < -ZERO_COORD_TOL:
            ceiling = min(ceiling, py[y] / (epsilon * -shift[y]))
    return ceiling


def build_mechanism(
    inst: ProblemInstance,
    ctx: GeometryContext,
    factors: ScalingFactors,
    epsilon: float,
) -> Mechanism:
    """Assemble the binary mechanism for the given scaling factors.

    Directions are +-L* scaled per the factors; P_U is proportional to the
    opposite direction's scale so the mixture returns the marginals
    exactly. One-sided (max-lift) boxes do not by themselves keep the
    induced conditionals nonnegative, so for those families the scales are
    additionally clamped at the structural ceiling; with two-sided boxes
    the box already implies validity inside the validity range, and beyond
    it construction raises.

    Raises
    ------
    InvalidInducedDistribution
        If an induced conditional would have an entry below -1e-12.

    Warns
    -----
    EpsilonOutOfRange
        If epsilon exceeds the family validity threshold.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    family = factors.family
    in_range = epsilon <= family.validity_threshold(ctx)
    if not in_range:
        warnings.warn(
            f"epsilon={epsilon} exceeds the {family.value} validity threshold "
            f"{family.validity_threshold(ctx):.6g}; construction is best-effort",
            EpsilonOutOfRange,
            stacklevel=2,
        )

    if family.is_first_approach:
        scale_plus = 1.0 / factors.plus_factor
        scale_minus = 1.0 / factors.minus_factor
    else:
        scale_plus = factors.plus_factor
        scale_minus = factors.minus_factor
    if not family.is_two_sided:
        scale_plus = min(scale_plus, _structural_ceiling(inst, ctx, ctx.l_star, epsilon))
        scale_minus = min(scale_minus, _structural_ceiling(inst, ctx, -ctx.l_star, epsilon))

    total = scale_plus + scale_minus
    if total <= ZERO_COORD_TOL:
        p_u = Distribution(np.full(2, 0.5))
        dirs = (Direction(np.zeros(inst.k)), Direction(np.zeros(inst.k)))
    else:
        # weights swap so that P_U(0)*s_plus = P_U(1)*s_minus (zero mean)
        p_u = Distribution(np.array([scale_minus, scale_plus]) / total)
        dirs = (
            Direction(scale_plus * ctx.l_star),
            Direction(-scale_minus * ctx.l_star),
        )

    p_y_given_u = tuple(induced_y_conditionals(inst, dirs, epsilon))
    px = inst.p_x.values
    p_x_given_u = []
    for direction in dirs:
        cond = px + epsilon * ctx.sqrt_px * direction.l
        if float(cond.min()) < -1e-12:
            raise InvalidInducedDistribution(
                f"P_X|U has entry {cond.min():.3e}; epsilon={epsilon} is too large"
            )
        p_x_given_u.append(Distribution(np.clip(cond, 0.0, None)))
    p_x_given_u = tuple(p_x_given_u)

    kernel = inst.p_x_given_y.matrix
    p_xyu = np.empty((inst.k, inst.k, 2))
    for u in range(2):
        p_xyu[:, :, u] = kernel * p_y_given_u[u].values[None, :] * p_u.values[u]
    p_xyu.setflags(write=False)

    exact_utility = sum(
        float(wt) * kl_divergence(cond, inst.p_y)
        for wt, cond in zip(p_u.values, p_y_given_u)
    )
    return Mechanism(
        epsilon=float(epsilon),
        family=family,
        p_u=p_u,
        directions=dirs,
        p_x_given_u=p_x_given_u,
        p_y_given_u=p_y_given_u,
        p_xyu=p_xyu,
        exact_utility=exact_utility,
        exact_lip=lip_leakage(p_x_given_u, inst.p_x),
        exact_maxlift=max_lift_leakage(p_x_given_u, inst.p_x),
        approx_utility=approx_mi_second_order(ctx, p_u, dirs, epsilon),
        in_validity_range=in_range,
    )


def audit_mechanism(inst: ProblemInstance, mech: Mechanism) -> MechanismAudit:
    """Recompute every mechanism invariant from scratch and report defects.

    Checks direction balance and orthogonality, both mixture identities,
    the Markov factorization P_{X|U} = P_{X|Y} P_{Y|U}, conditional
    normalization, and joint consistency against the instance. Reports,
    never raises: a broken mechanism yields violations, not an exception.
    """
    px = inst.p_x.values
    py = inst.p_y.values
    sqrt_px = np.sqrt(px)
    kernel = inst.p_x_given_y.matrix
    weights = mech.p_u.values
    dir_mat = np.stack([d.l for d in mech.directions])
    x_conds = np.stack([c.values for c in mech.p_x_given_u])
    y_conds = np.stack([c.values for c in mech.p_y_given_u])

    residuals = {
        "direction_balance": float(np.abs(weights @ dir_mat).max()),
        "direction_orthogonality": float(np.abs(dir_mat @ sqrt_px).max()),
        "mixture_x": float(np.abs(weights @ x_conds - px).max()),
        "mixture_y": float(np.abs(weights @ y_conds - py).max()),
        "markov": float(np.abs(x_conds - y_conds @ kernel.T).max()),
        "conditional_normalization": float(
            max(np.abs(x_conds.sum(1) - 1.0).max(), np.abs(y_conds.sum(1) - 1.0).max())
        ),
        "joint_consistency": float(
            np.abs(mech.p_xyu.sum(axis=2) - inst.p_xy).max()
        ),
    }
    violations = tuple(name for name, value in residuals.items() if value > AUDIT_TOL)

    exact_utility = sum(
        float(wt) * kl_divergence(cond, inst.p_y)
        for wt, cond in zip(weights, mech.p_y_given_u)
    )
    exact_lip = lip_leakage(mech.p_x_given_u, inst.p_x)
    exact_maxlift = max_lift_leakage(mech.p_x_given_u, inst.p_x)
    measured = exact_lip if mech.family.is_two_sided else exact_maxlift
    leakage_ok = measured <= mech.epsilon + LEAKAGE_SLACK
    return MechanismAudit(
        exact_utility=exact_utility,
        exact_lip=exact_lip,
        exact_maxlift=exact_maxlift,
        residuals=residuals,
        violations=violations,
        leakage_within_budget=leakage_ok,
        in_validity_range=mech.in_validity_range,
        passed=leakage_ok and not violations,
    )
