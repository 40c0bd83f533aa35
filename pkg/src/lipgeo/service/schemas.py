"""Wire formats for the service and the CLI artifacts.

Structural validation (shapes, required fields, ranges) lives here;
numeric validation (normalization, invertibility, leakage budgets) stays
in the core constructors so both entry points report identical errors.
All quantities are in nats.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import LengthMismatch
from ..geometry import Direction
from ..mechanisms import ConstraintFamily, Mechanism, MechanismAudit, UtilityBounds
from ..oracle import BoundsReport
from ..probability import (
    Distribution,
    ProblemInstance,
    instance_from_conditional,
    instance_from_joint,
)

__all__ = [
    "InstanceDocument",
    "AnalyzeRequest",
    "GeometryReport",
    "DesignRequest",
    "DesignResponse",
    "MechanismDocument",
    "BoundsSummary",
    "AuditReport",
    "SweepRequest",
    "SweepRow",
    "SweepResponse",
    "VerifyRequest",
    "ErrorBody",
]

FamilyName = Literal["lip_first", "lip_second", "maxlift_first", "maxlift_second"]


class InstanceDocument(BaseModel):
    """A problem instance: joint matrix, or conditional kernel plus prior.

    Exactly one of the two parameterizations must be present. epsilon is
    the default privacy budget carried with the instance; endpoints that
    need one accept an override.
    """

    model_config = ConfigDict(extra="forbid")

    p_xy: Optional[list[list[float]]] = None
    p_x_given_y: Optional[list[list[float]]] = None
    p_y: Optional[list[float]] = None
    epsilon: Optional[float] = Field(default=None, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _exactly_one_form(self) -> "InstanceDocument":
        joint = self.p_xy is not None
        conditional = self.p_x_given_y is not None or self.p_y is not None
        if joint and conditional:
            raise ValueError("give either p_xy or (p_x_given_y, p_y), not both")
        if not joint and not conditional:
            raise ValueError("instance needs p_xy or (p_x_given_y, p_y)")
        if conditional and (self.p_x_given_y is None or self.p_y is None):
            raise ValueError("p_x_given_y and p_y must be given together")
        return self

    def to_instance(self) -> ProblemInstance:
        if self.p_xy is not None:
            return instance_from_joint(np.array(self.p_xy), epsilon=self.epsilon)
        return instance_from_conditional(
            np.array(self.p_x_given_y), np.array(self.p_y), epsilon=self.epsilon
        )


class AnalyzeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    instance: InstanceDocument


class GeometryReport(BaseModel):
    """Spectral analysis of one instance.

    A degenerate instance (sigma_max within 1e-9 of 1, no utility
    direction) still reports the operator, spectrum and thresholds, with
    degenerate=true, l_star omitted and detail explaining why.
    """

    k: int
    w: list[list[float]]
    sigma_max: float
    sigma_min: float
    singular_values: list[float]
    l_star: Optional[list[float]] = None
    sqrt_px: list[float]
    c1: float
    c2: float
    c1_prime: float
    c2_prime: float
    degenerate: bool = False
    detail: Optional[str] = None


class BoundsSummary(BaseModel):
    """Closed-form utility bounds for one constraint family."""

    lower: float
    upper: float
    point: Optional[float] = None
    exact_for_k2: bool

    @classmethod
    def from_bounds(cls, bounds: UtilityBounds) -> "BoundsSummary":
        return cls(
            lower=bounds.lower,
            upper=bounds.upper,
            point=bounds.point,
            exact_for_k2=bounds.exact_for_k2,
        )


class MechanismDocument(BaseModel):
    """Serialized mechanism; the design artifact and the verify input.

    Conditional lists are indexed by the output symbol u; p_xyu is indexed
    [x][y][u]. Utilities and leakages are in nats.
    """

    model_config = ConfigDict(extra="forbid")

    epsilon: float = Field(gt=0.0)
    approach: Literal["first", "second"]
    constraint: Literal["lip", "maxlift"]
    in_validity_range: bool
    p_u: list[float]
    directions: list[list[float]]
    p_x_given_u: list[list[float]]
    p_y_given_u: list[list[float]]
    p_xyu: list[list[list[float]]]
    plus_factor: float
    minus_factor: float
    symmetric_factor: float
    exact_utility: float
    exact_lip: float
    exact_maxlift: float
    approx_utility: float

    @property
    def family(self) -> ConstraintFamily:
        return ConstraintFamily(f"{self.constraint}_{self.approach}")

    @classmethod
    def from_mechanism(
        cls, mech: Mechanism, plus: float, minus: float, symmetric: float
    ) -> "MechanismDocument":
        constraint, approach = mech.family.value.split("_")
        return cls(
            epsilon=mech.epsilon,
            approach=approach,
            constraint=constraint,
            in_validity_range=mech.in_validity_range,
            p_u=mech.p_u.values.tolist(),
            directions=[d.l.tolist() for d in mech.directions],
            p_x_given_u=[c.values.tolist() for c in mech.p_x_given_u],
            p_y_given_u=[c.values.tolist() for c in mech.p_y_given_u],
            p_xyu=mech.p_xyu.tolist(),
            plus_factor=plus,
            minus_factor=minus,
            symmetric_factor=symmetric,
            exact_utility=mech.exact_utility,
            exact_lip=mech.exact_lip,
            exact_maxlift=mech.exact_maxlift,
            approx_utility=mech.approx_utility,
        )

    def to_mechanism(self, inst: ProblemInstance) -> Mechanism:
        """Rebuild the core object against an instance, checking shapes."""
        m = len(self.p_u)
        if not (len(self.directions) == len(self.p_x_given_u) == len(self.p_y_given_u) == m):
            raise LengthMismatch("per-symbol lists disagree on the output alphabet size")
        p_xyu = np.array(self.p_xyu, dtype=np.float64)
        if p_xyu.shape != (inst.k, inst.k, m):
            raise LengthMismatch(
                f"p_xyu has shape {p_xyu.shape}, expected {(inst.k, inst.k, m)}"
            )
        for row in self.directions:
            if len(row) != inst.k:
                raise LengthMismatch("direction length does not match the alphabet")
        p_xyu.setflags(write=False)
        return Mechanism(
            epsilon=self.epsilon,
            family=self.family,
            p_u=Distribution(np.array(self.p_u)),
            directions=tuple(Direction(np.array(r)) for r in self.directions),
            p_x_given_u=tuple(Distribution(np.array(r)) for r in self.p_x_given_u),
            p_y_given_u=tuple(Distribution(np.array(r)) for r in self.p_y_given_u),
            p_xyu=p_xyu,
            exact_utility=self.exact_utility,
            exact_lip=self.exact_lip,
            exact_maxlift=self.exact_maxlift,
            approx_utility=self.approx_utility,
            in_validity_range=self.in_validity_range,
        )


class AuditReport(BaseModel):
    """Recomputed mechanism invariants and the leakage-vs-budget verdict."""

    family: FamilyName
    budget: float
    exact_utility: float
    exact_lip: float
    exact_maxlift: float
    residuals: dict[str, float]
    violations: list[str]
    leakage_within_budget: bool
    in_validity_range: bool
    passed: bool

    @classmethod
    def from_audit(cls, mech: Mechanism, audit: MechanismAudit) -> "AuditReport":
        return cls(
            family=mech.family.value,
            budget=mech.epsilon,
            exact_utility=audit.exact_utility,
            exact_lip=audit.exact_lip,
            exact_maxlift=audit.exact_maxlift,
            residuals=audit.residuals,
            violations=list(audit.violations),
            leakage_within_budget=audit.leakage_within_budget,
            in_validity_range=audit.in_validity_range,
            passed=audit.passed,
        )


class DesignRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    instance: InstanceDocument
    family: FamilyName
    epsilon: Optional[float] = Field(default=None, gt=0.0, lt=1.0)


class DesignResponse(BaseModel):
    mechanism: MechanismDocument
    bounds: BoundsSummary
    audit: AuditReport


class SweepRequest(BaseModel):
    """Uniform epsilon grid, inclusive endpoints, `steps` rows."""

    model_config = ConfigDict(extra="forbid")

    instance: InstanceDocument
    epsilon_start: float = Field(gt=0.0, lt=1.0)
    epsilon_end: float = Field(gt=0.0, lt=1.0)
    steps: int = Field(ge=1, le=10_000)
    include_oracle: bool = False
    oracle_resolution: int = Field(default=1000, ge=10)
    oracle_u_cardinality: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def _ordered(self) -> "SweepRequest":
        if self.epsilon_end < self.epsilon_start:
            raise ValueError("epsilon_end must not be below epsilon_start")
        return self


class SweepRow(BaseModel):
    """One epsilon of a sweep; column order is the CSV column order.

    Nullable cells render empty in CSV: mechanism columns when the
    construction failed, oracle_mi when the oracle was not requested.
    p1_prime/p2_prime carry the best closed-form value of the max-lift
    families (the point when one exists, else the lower bound).
    """

    epsilon: float
    p1_lower: float
    p1_upper: float
    p1_point: Optional[float] = None
    p2_lower: float
    p2_upper: float
    p2_point: Optional[float] = None
    p1_prime: float
    p2_prime: float
    chi2: float
    mech1_exact_mi: Optional[float] = None
    mech1_exact_lip: Optional[float] = None
    mech2_exact_mi: Optional[float] = None
    mech2_exact_lip: Optional[float] = None
    oracle_mi: Optional[float] = None
    in_validity_range: bool

    @classmethod
    def from_report(cls, report: BoundsReport) -> "SweepRow":
        def best(bounds: UtilityBounds) -> float:
            return bounds.lower if bounds.point is None else bounds.point

        mech1, mech2 = report.mechanism_first, report.mechanism_second
        return cls(
            epsilon=report.epsilon,
            p1_lower=report.p1.lower,
            p1_upper=report.p1.upper,
            p1_point=report.p1.point,
            p2_lower=report.p2.lower,
            p2_upper=report.p2.upper,
            p2_point=report.p2.point,
            p1_prime=best(report.p1_prime),
            p2_prime=best(report.p2_prime),
            chi2=report.chi2,
            mech1_exact_mi=None if mech1 is None else mech1.exact_utility,
            mech1_exact_lip=None if mech1 is None else mech1.exact_lip,
            mech2_exact_mi=None if mech2 is None else mech2.exact_utility,
            mech2_exact_lip=None if mech2 is None else mech2.exact_lip,
            oracle_mi=None if report.oracle is None else report.oracle.best_utility,
            in_validity_range=report.in_validity_range,
        )


class SweepResponse(BaseModel):
    rows: list[SweepRow]


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    instance: InstanceDocument
    mechanism: MechanismDocument


class ErrorBody(BaseModel):
    error: str
    detail: str
