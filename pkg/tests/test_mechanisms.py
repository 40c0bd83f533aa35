"""Scaling factors, closed-form bounds, mechanism construction, audits."""

import math

import numpy as np
import pytest

from lipgeo import (
    ConstraintFamily,
    Direction,
    EpsilonOutOfRange,
    InvalidInducedDistribution,
    Mechanism,
    ScalingFactors,
    audit_mechanism,
    build_geometry,
    build_mechanism,
    instance_from_conditional,
    scaling_factors,
    utility_bounds,
)
from lipgeo.probability import Distribution

GAMMA1 = 1.3261299671054765
SIGMA2 = 54.77777777777777  # sigma_max^2 on the running example

ALL_FAMILIES = list(ConstraintFamily)
LIP_FAMILIES = [ConstraintFamily.LIP_FIRST, ConstraintFamily.LIP_SECOND]


def leakage_of(mech):
    return mech.exact_lip if mech.family.is_two_sided else mech.exact_maxlift


@pytest.fixture(scope="module")
def uniform_px_instance():
    # P_X uniform makes +-l_star fit the one-sided box unscaled
    inst = instance_from_conditional(
        np.array([[0.8, 0.3], [0.2, 0.7]]), np.array([0.4, 0.6])
    )
    return inst, build_geometry(inst)


class TestScalingFactors:
    def test_first_approach_frozen_gammas(self, example1_ctx):
        for eps in (0.01, 0.02, 0.04):
            f = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, eps)
            assert f.plus_factor == pytest.approx(GAMMA1, rel=1e-12)
            assert f.minus_factor / (1.0 + eps) == pytest.approx(GAMMA1, rel=1e-12)
            assert f.symmetric_factor == pytest.approx(f.minus_factor, rel=1e-15)

    def test_second_approach_lambda_identities(self, example1_ctx):
        for eps in (0.01, 0.02, 0.04):
            f = scaling_factors(example1_ctx, ConstraintFamily.LIP_SECOND, eps)
            assert f.plus_factor * GAMMA1 * eps / math.expm1(eps) == pytest.approx(
                1.0, abs=1e-12
            )
            assert f.minus_factor * GAMMA1 * eps / (
                -math.expm1(-eps)
            ) == pytest.approx(1.0, abs=1e-12)
            assert f.symmetric_factor == min(f.plus_factor, f.minus_factor)

    def test_maxlift_drops_the_lower_bound(self, example1_ctx):
        lip = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, 0.01)
        ml = scaling_factors(example1_ctx, ConstraintFamily.MAXLIFT_FIRST, 0.01)
        # +l_star is constrained by its positive coordinate either way
        assert ml.plus_factor == pytest.approx(lip.plus_factor, rel=1e-12)
        # -l_star only hits the (dropped) lower bound, so no scaling is left
        assert ml.minus_factor == 1.0
        assert ml.minus_factor < lip.minus_factor

    def test_rejects_epsilon_outside_unit_interval(self, example1_ctx):
        for eps in (0.0, -0.1, 1.0):
            with pytest.raises(ValueError):
                scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, eps)

    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_box_feasibility_certificate(self, example1_ctx, family):
        """Scaled directions sit inside the box; one coordinate on its edge."""
        eps = 0.02
        f = scaling_factors(example1_ctx, family, eps)
        upper = family.upper_bound_vector(example1_ctx.sqrt_px, eps)
        lower = family.lower_bound_vector(example1_ctx.sqrt_px, eps)
        if family.is_first_approach:
            scaled = [example1_ctx.l_star / f.plus_factor,
                      -example1_ctx.l_star / f.minus_factor]
        else:
            scaled = [f.plus_factor * example1_ctx.l_star,
                      -f.minus_factor * example1_ctx.l_star]
        boundary_gap = math.inf
        for vec in scaled:
            assert np.all(vec <= upper + 1e-12)
            boundary_gap = min(boundary_gap, np.min(np.abs(upper - vec)))
            if lower is not None:
                assert np.all(vec >= lower - 1e-12)
                boundary_gap = min(boundary_gap, np.min(np.abs(vec - lower)))
        assert boundary_gap <= 1e-9  # extremal factors attain the box

    def test_gamma_above_one_lambda_below_one(self, random_mixed):
        # both signed directions never fit simultaneously
        for _, ctx in random_mixed:
            first = scaling_factors(ctx, ConstraintFamily.LIP_FIRST, 0.01)
            second = scaling_factors(ctx, ConstraintFamily.LIP_SECOND, 0.01)
            assert max(first.plus_factor, first.minus_factor) > 1.0 + 1e-12
            assert min(second.plus_factor, second.minus_factor) < 1.0 - 1e-12


class TestUtilityBounds:
    def test_frozen_p1_p2(self, example1_ctx):
        f1 = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, 0.01)
        b1 = utility_bounds(example1_ctx, f1, 0.01, k=2)
        assert b1.lower == pytest.approx(1.541987532087e-03, rel=1e-9)
        assert b1.point == b1.lower and b1.exact_for_k2
        f2 = scaling_factors(example1_ctx, ConstraintFamily.LIP_SECOND, 0.01)
        b2 = utility_bounds(example1_ctx, f2, 0.01, k=2)
        assert b2.lower == pytest.approx(1.557420385846e-03, rel=1e-9)

    def test_ordering_chain(self, example1_ctx):
        # 0.5*eps^2*s2/gamma_max^2 <= P1 <= P2 <= 0.5*s2*(e^eps - 1)^2
        for eps in (0.01, 0.03):
            f1 = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, eps)
            f2 = scaling_factors(example1_ctx, ConstraintFamily.LIP_SECOND, eps)
            p1 = utility_bounds(example1_ctx, f1, eps, 2).lower
            p2 = utility_bounds(example1_ctx, f2, eps, 2).lower
            floor = 0.5 * eps**2 * SIGMA2 / f1.symmetric_factor**2
            ceiling = 0.5 * SIGMA2 * math.expm1(eps) ** 2
            assert floor <= p1 + 1e-12
            assert p1 <= p2 + 1e-12
            assert p2 <= ceiling + 1e-12

    def test_maxlift_dominates_lip(self, example1_ctx, random_mixed):
        # dropping the lower bound can only enlarge the feasible box
        contexts = [example1_ctx] + [ctx for _, ctx in random_mixed[:20]]
        for ctx in contexts:
            for eps in (0.01, 0.02):
                bounds = {
                    fam: utility_bounds(ctx, scaling_factors(ctx, fam, eps), eps, 2)
                    for fam in ALL_FAMILIES
                }
                assert (
                    bounds[ConstraintFamily.MAXLIFT_FIRST].lower
                    >= bounds[ConstraintFamily.LIP_FIRST].lower - 1e-15
                )
                assert (
                    bounds[ConstraintFamily.MAXLIFT_SECOND].lower
                    >= bounds[ConstraintFamily.LIP_SECOND].lower - 1e-15
                )

    def test_maxlift_first_both_feasible_point(self, uniform_px_instance):
        inst, ctx = uniform_px_instance
        eps = 0.01
        f = scaling_factors(ctx, ConstraintFamily.MAXLIFT_FIRST, eps)
        # uniform p_x puts l_star exactly on the box boundary; up to
        # roundoff both factors sit at the floor
        assert f.plus_factor == pytest.approx(1.0, rel=1e-12)
        assert f.minus_factor == 1.0
        b = utility_bounds(ctx, f, eps, k=2)
        assert b.point == pytest.approx(0.5 * eps**2 * ctx.sigma_max**2, rel=1e-12)
        assert b.point == pytest.approx(b.upper, rel=1e-15)
        mech = build_mechanism(inst, ctx, f, eps)
        np.testing.assert_allclose(mech.p_u.values, [0.5, 0.5], atol=1e-15)

    def test_no_point_above_k2(self, example1_ctx):
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, 0.01)
        b = utility_bounds(example1_ctx, f, 0.01, k=3)
        assert b.point is None and not b.exact_for_k2


class TestBuildMechanism:
    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_leakage_within_budget_on_example(self, example1, example1_ctx, family):
        eps = 0.01
        mech = build_mechanism(
            example1, example1_ctx, scaling_factors(example1_ctx, family, eps), eps
        )
        assert leakage_of(mech) <= eps + 1e-9

    def test_second_approach_attains_the_budget(self, example1, example1_ctx):
        eps = 0.02
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_SECOND, eps)
        mech = build_mechanism(example1, example1_ctx, f, eps)
        assert mech.exact_lip == pytest.approx(eps, abs=1e-9)

    def test_first_approach_output_shift(self, example1, example1_ctx):
        # P_{Y|U=0} = [0.25 - 2.4167*eps, 0.75 + 2.4167*eps]
        for eps in (0.01, 0.04):
            f = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, eps)
            mech = build_mechanism(example1, example1_ctx, f, eps)
            shift = 3.204814087172 / GAMMA1  # ||P^-1 J|| per unit eps
            np.testing.assert_allclose(
                mech.p_y_given_u[0].values,
                [0.25 - shift * eps, 0.75 + shift * eps],
                atol=1e-12,
            )

    def test_mixture_recovers_marginals(self, example1, example1_ctx):
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_SECOND, 0.01)
        mech = build_mechanism(example1, example1_ctx, f, 0.01)
        w = mech.p_u.values
        mixed_y = sum(wt * c.values for wt, c in zip(w, mech.p_y_given_u))
        mixed_x = sum(wt * c.values for wt, c in zip(w, mech.p_x_given_u))
        np.testing.assert_allclose(mixed_y, example1.p_y.values, atol=1e-9)
        np.testing.assert_allclose(mixed_x, example1.p_x.values, atol=1e-9)

    def test_frozen_maxlift_weights(self, example1, example1_ctx):
        f = scaling_factors(example1_ctx, ConstraintFamily.MAXLIFT_FIRST, 0.01)
        mech = build_mechanism(example1, example1_ctx, f, 0.01)
        np.testing.assert_allclose(
            mech.p_u.values, [0.570101407, 0.429898593], atol=1e-8
        )
        assert mech.exact_utility == pytest.approx(2.054333718367e-03, rel=1e-9)

    def test_joint_sums_back_to_instance(self, example1, example1_ctx):
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, 0.01)
        mech = build_mechanism(example1, example1_ctx, f, 0.01)
        np.testing.assert_allclose(
            mech.p_xyu.sum(axis=2), example1.p_xy, atol=1e-12
        )
        assert mech.p_xyu.sum() == pytest.approx(1.0, abs=1e-12)

    def test_zero_factors_yield_independence(self, example1, example1_ctx):
        f = ScalingFactors(ConstraintFamily.LIP_SECOND, 0.0, 0.0, 0.0)
        mech = build_mechanism(example1, example1_ctx, f, 0.01)
        np.testing.assert_allclose(mech.p_u.values, [0.5, 0.5])
        assert mech.exact_utility == pytest.approx(0.0, abs=1e-15)
        assert mech.exact_lip == pytest.approx(0.0, abs=1e-12)

    def test_warns_beyond_validity_threshold(self, example1, example1_ctx):
        eps = 0.09  # beyond max(c1, c2) = 0.0794
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, eps)
        with pytest.warns(EpsilonOutOfRange):
            mech = build_mechanism(example1, example1_ctx, f, eps)
        assert not mech.in_validity_range

    def test_raises_when_conditionals_go_negative(self, example1, example1_ctx):
        eps = 0.2
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_SECOND, eps)
        with pytest.warns(EpsilonOutOfRange), pytest.raises(
            InvalidInducedDistribution
        ):
            build_mechanism(example1, example1_ctx, f, eps)

    def test_maxlift_clamps_at_structural_ceiling(self, random_2x2):
        # the one-sided box alone does not keep P_{Y|U} nonnegative; find
        # seeded instances where the clamp engages and check it suffices
        clamped = 0
        for inst, ctx in random_2x2:
            eps = min(0.5 * max(ctx.c1_prime, ctx.c2_prime), 0.02)
            f = scaling_factors(ctx, ConstraintFamily.MAXLIFT_SECOND, eps)
            mech = build_mechanism(inst, ctx, f, eps)
            scales = [np.linalg.norm(d.l) for d in mech.directions]
            if (scales[0] < f.plus_factor - 1e-9) or (
                scales[1] < f.minus_factor - 1e-9
            ):
                clamped += 1
            assert min(c.values.min() for c in mech.p_y_given_u) >= 0.0
            assert mech.exact_maxlift <= eps + 1e-9
        assert clamped >= 1  # the guard is exercised, not dead code


class TestAuditMechanism:
    def test_constructed_mechanism_passes(self, example1, example1_ctx):
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, 0.01)
        mech = build_mechanism(example1, example1_ctx, f, 0.01)
        audit = audit_mechanism(example1, mech)
        assert audit.passed and not audit.violations
        assert audit.exact_lip <= 0.01
        assert max(audit.residuals.values()) < 1e-9
        assert audit.exact_utility == pytest.approx(mech.exact_utility, rel=1e-12)

    def test_trivial_mechanism_all_zero(self, example1, example1_ctx):
        f = ScalingFactors(ConstraintFamily.LIP_FIRST, math.inf, math.inf, math.inf)
        # infinite divisors collapse the directions to zero
        mech = build_mechanism(example1, example1_ctx, f, 0.01)
        audit = audit_mechanism(example1, mech)
        assert audit.exact_lip == pytest.approx(0.0, abs=1e-12)
        assert audit.exact_maxlift == pytest.approx(0.0, abs=1e-12)
        assert audit.exact_utility == pytest.approx(0.0, abs=1e-15)
        assert audit.passed

    def test_broken_mixture_is_flagged(self, example1, example1_ctx):
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_FIRST, 0.01)
        good = build_mechanism(example1, example1_ctx, f, 0.01)
        bad = Mechanism(
            epsilon=good.epsilon,
            family=good.family,
            p_u=Distribution(np.array([0.9, 0.1])),  # wrong weights
            directions=good.directions,
            p_x_given_u=good.p_x_given_u,
            p_y_given_u=good.p_y_given_u,
            p_xyu=good.p_xyu,
            exact_utility=good.exact_utility,
            exact_lip=good.exact_lip,
            exact_maxlift=good.exact_maxlift,
            approx_utility=good.approx_utility,
            in_validity_range=good.in_validity_range,
        )
        audit = audit_mechanism(example1, bad)
        assert not audit.passed
        assert "mixture_y" in audit.violations
        assert "direction_balance" in audit.violations

    def test_leakage_over_budget_fails(self, example1, example1_ctx):
        f = scaling_factors(example1_ctx, ConstraintFamily.LIP_SECOND, 0.02)
        mech = build_mechanism(example1, example1_ctx, f, 0.02)
        shrunk = Mechanism(
            epsilon=0.01,  # understate the budget: exact LIP is 0.02
            family=mech.family,
            p_u=mech.p_u,
            directions=mech.directions,
            p_x_given_u=mech.p_x_given_u,
            p_y_given_u=mech.p_y_given_u,
            p_xyu=mech.p_xyu,
            exact_utility=mech.exact_utility,
            exact_lip=mech.exact_lip,
            exact_maxlift=mech.exact_maxlift,
            approx_utility=mech.approx_utility,
            in_validity_range=mech.in_validity_range,
        )
        audit = audit_mechanism(example1, shrunk)
        assert not audit.leakage_within_budget and not audit.passed
        assert not audit.violations  # structure itself is fine

    def test_maxlift_family_audits_its_own_functional(self, example1, example1_ctx):
        # exact LIP of this design is ~0.036 > eps, but max-lift is the
        # declared constraint and it sits exactly at the budget
        eps = 0.02
        f = scaling_factors(example1_ctx, ConstraintFamily.MAXLIFT_SECOND, eps)
        mech = build_mechanism(example1, example1_ctx, f, eps)
        audit = audit_mechanism(example1, mech)
        assert audit.exact_lip > eps + 1e-9
        assert audit.exact_maxlift <= eps + 1e-9
        assert audit.leakage_within_budget and audit.passed

    def test_o_eps2_gap_halves_with_epsilon(self, example1, example1_ctx):
        gaps = {}
        for eps in (0.01, 0.02):
            f = scaling_factors(example1_ctx, ConstraintFamily.LIP_SECOND, eps)
            mech = build_mechanism(example1, example1_ctx, f, eps)
            p2 = utility_bounds(example1_ctx, f, eps, 2).lower
            gaps[eps] = abs(mech.exact_utility - p2) / eps**2
        assert gaps[0.01] <= 0.5 * gaps[0.02]
