"""The information-geometric operator W and the MI approximations it yields.

For an invertible leakage kernel the posterior perturbations
P_{X|U=u} = P_X + eps*J_u, rescaled as L_u = [sqrt(P_X)^-1] J_u, map to
output perturbations through

    W = [sqrt(P_Y)^-1] P_{X|Y}^-1 [sqrt(P_X)],

and for small eps the utility expands as
I(U;Y) = 0.5*eps^2 * sum_u P_U(u) ||W L_u||^2 + o(eps^2). The smallest
singular value of W is always 1 with right singular vector sqrt(P_X)
(equivalently W sqrt(P_X) = sqrt(P_Y)), so the utility-maximizing direction
is the principal right singular vector L*, which is automatically
orthogonal to sqrt(P_X).

The quality of the quadratic approximation is governed by instance
thresholds: c1, c2 for the linearized (first-approach) constraint set and
c1' = log(c1+1), c2' = log(c2+1) for the exact rewrite (second approach).
Within eps <= max(c, c') the perturbed conditionals are guaranteed valid
distributions.

:func:`exact_mi_of_directions` evaluates the induced mechanism with no
approximation and is the ground truth that the second- and third-order
estimates are tested against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSpectrum,
    InvalidInducedDistribution,
    LengthMismatch,
    SpectrumTie,
)
from .probability import Distribution, ProblemInstance, mutual_information

__all__ = [
    "ORTHOGONALITY_TOL",
    "SPECTRUM_TOL",
    "Direction",
    "GeometryContext",
    "build_geometry",
    "approx_mi_second_order",
    "approx_mi_third_order",
    "exact_mi_of_directions",
    "induced_y_conditionals",
]

ORTHOGONALITY_TOL = 1e-9
SPECTRUM_TOL = 1e-9
# negative induced-probability entries larger than this are float noise
NEGATIVITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Direction:
    """A rescaled perturbation vector L_u (the unit of mechanism design).

    The perturbation it encodes is J_u = sqrt(P_X) * l entrywise, i.e.
    P_{X|U=u} = P_X + eps * sqrt(P_X) * l. Must be orthogonal to sqrt(P_X)
    for the induced conditionals to normalize; operations consuming
    directions enforce that against their context.
    """

    l: np.ndarray

    def __post_init__(self):
        arr = np.array(self.l, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise LengthMismatch(f"direction must be a 1-d vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("direction entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "l", arr)


@dataclass(frozen=True, eq=False)
class GeometryContext:
    """W, its singular system, and the epsilon-validity thresholds.

    Attributes
    ----------
    w : numpy.ndarray
        The K x K operator.
    sigma_max : float
        Largest singular value; > 1 for a non-degenerate instance.
    l_star : numpy.ndarray
        Unit-norm principal right singular vector, sign-canonicalized so
        its largest-magnitude entry is positive. Orthogonal to sqrt_px.
    sqrt_px : numpy.ndarray
        Entrywise square root of P_X; the right singular vector of the
        guaranteed unit singular value.
    singular_values : numpy.ndarray
        All K values, descending; the last is 1 up to float error.
    c1, c2, c1_prime, c2_prime : float
        Validity thresholds; first-approach guarantees hold for
        eps <= max(c1, c2), second-approach for eps <= max(c1', c2').
    kernel_inverse : numpy.ndarray
        P_{X|Y}^-1, kept for the perturbation algebra.
    """

    w: np.ndarray
    sigma_max: float
    l_star: np.ndarray
    sqrt_px: np.ndarray
    singular_values: np.ndarray
    c1: float
    c2: float
    c1_prime: float
    c2_prime: float
    kernel_inverse: np.ndarray


def _canonicalize(vector: np.ndarray) -> np.ndarray:
    pivot = int(np.argmax(np.abs(vector)))
    return -vector if vector[pivot] < 0 else vector


def build_geometry(inst: ProblemInstance) -> GeometryContext:
    """Form W, take its SVD, and evaluate the validity thresholds.

    Parameters
    ----------
    inst : ProblemInstance
        Valid instance (invertible kernel, positive marginals).

    Returns
    -------
    GeometryContext

    Raises
    ------
    DegenerateSpectrum
        If sigma_max - 1 < 1e-9, i.e. W is an isometry and no utility
        direction exists (for example an identity channel). The exception
        carries the partial report (w, singular values, thresholds).

    Warns
    -----
    SpectrumTie
        If several singular values tie for the maximum within 1e-9; the
        lexicographically largest canonicalized vector is chosen.
    """
    kernel = inst.p_x_given_y.matrix
    px = inst.p_x.values
    py = inst.p_y.values
    sqrt_px = np.sqrt(px)
    kernel_inverse = np.linalg.inv(kernel)
    w = (1.0 / np.sqrt(py))[:, None] * kernel_inverse * sqrt_px[None, :]

    _, sing, vt = np.linalg.svd(w)
    sigma_max = float(sing[0])

    # thresholds (alpha = kernel inverse, row-wise absolute sums)
    c1 = float(py.min() / np.max(np.abs(kernel_inverse) @ px))
    c2 = float(np.linalg.svd(kernel, compute_uv=False)[-1] * py.min())
    thresholds = dict(
        c1=c1, c2=c2, c1_prime=float(np.log1p(c1)), c2_prime=float(np.log1p(c2))
    )

    if sigma_max - 1.0 < SPECTRUM_TOL:
        raise DegenerateSpectrum(
            f"sigma_max = {sigma_max!r}; W has no utility direction",
            w=w, singular_values=sing, sqrt_px=sqrt_px, **thresholds,
        )

    tied = np.flatnonzero(sing[0] - sing < SPECTRUM_TOL)
    if tied.size > 1:
        warnings.warn(
            f"{tied.size} singular values tie for the maximum; picking the "
            "lexicographically largest canonicalized vector",
            SpectrumTie,
            stacklevel=2,
        )
        l_star = max((_canonicalize(vt[i]) for i in tied), key=tuple)
    else:
        l_star = _canonicalize(vt[0])

    arrays = {}
    for name, value in (("w", w), ("l_star", l_star), ("sqrt_px", sqrt_px),
                        ("singular_values", sing), ("kernel_inverse", kernel_inverse)):
        value = np.array(value, copy=True)
        value.setflags(write=False)
        arrays[name] = value
    return GeometryContext(sigma_max=sigma_max, **arrays, **thresholds)


def _checked_directions(
    sqrt_px: np.ndarray,
    p_u: Distribution,
    dirs: Sequence[Direction],
) -> list[np.ndarray]:
    if len(dirs) != len(p_u):
        raise LengthMismatch(f"{len(dirs)} directions for {len(p_u)} weights")
    vectors = []
    for direction in dirs:
        vec = direction.l
        if vec.size != sqrt_px.size:
            raise LengthMismatch("direction length does not match the alphabet")
        if abs(float(vec @ sqrt_px)) > ORTHOGONALITY_TOL:
            raise ValueError("direction is not orthogonal to sqrt(P_X)")
        vectors.append(vec)
    return vectors


def approx_mi_second_order(
    ctx: GeometryContext,
    p_u: Distribution,
    dirs: Sequence[Direction],
    epsilon: float,
) -> float:
    """Quadratic utility estimate 0.5*eps^2 * sum_u P_U(u) ||W l_u||^2.

    Sign-invariant in each direction. Exact up to o(eps^2) for directions
    satisfying the orthogonality and zero-mean constraints.
    """
    vectors = _checked_directions(ctx.sqrt_px, p_u, dirs)
    total = sum(
        float(weight) * float(np.dot(ctx.w @ vec, ctx.w @ vec))
        for weight, vec in zip(p_u.values, vectors)
    )
    return 0.5 * epsilon * epsilon * total


def approx_mi_third_order(
    ctx: GeometryContext,
    inst: ProblemInstance,
    p_u: Distribution,
    dirs: Sequence[Direction],
    epsilon: float,
) -> float:
    """Cubic refinement of :func:`approx_mi_second_order`.

    Expanding (1+d)log(1+d) = d + d^2/2 - d^3/6 + O(d^4) inside
    D(P_{Y|U=u}||P_Y) with d = eps*(P_{X|Y}^-1 J_u)/P_Y gives the
    correction

        -(eps^3/6) * sum_u P_U(u) * sum_y (P_{X|Y}^-1 J_u)(y)^3 / P_Y(y)^2,

    where J_u = sqrt(P_X) * l_u. Can undershoot or overshoot the exact
    value; it tightens the quadratic estimate once eps is large enough for
    the cubic term to matter.
    """
    vectors = _checked_directions(ctx.sqrt_px, p_u, dirs)
    py = inst.p_y.values
    quadratic = approx_mi_second_order(ctx, p_u, dirs, epsilon)
    cubic = sum(
        float(weight) * float(np.sum((ctx.kernel_inverse @ (ctx.sqrt_px * vec)) ** 3 / py**2))
        for weight, vec in zip(p_u.values, vectors)
    )
    return quadratic - epsilon**3 / 6.0 * cubic


def induced_y_conditionals(
    inst: ProblemInstance,
    dirs: Sequence[Direction],
    epsilon: float,
) -> list[Distribution]:
    """The exact output conditionals P_{Y|U=u} = P_Y + eps*P_{X|Y}^-1 J_u.

    Raises
    ------
    InvalidInducedDistribution
        If any entry falls below -1e-12 (epsilon too large for these
        directions). Entries within float noise of zero are clamped to 0.
    """
    kernel = inst.p_x_given_y.matrix
    py = inst.p_y.values
    sqrt_px = np.sqrt(inst.p_x.values)
    conditionals = []
    for u, direction in enumerate(dirs):
        vec = direction.l
        if vec.size != sqrt_px.size:
            raise LengthMismatch("direction length does not match the alphabet")
        cond = py + epsilon * np.linalg.solve(kernel, sqrt_px * vec)
        low = float(cond.min())
        if low < -NEGATIVITY_TOL:
            raise InvalidInducedDistribution(
                f"P_Y|U={u} has entry {low:.3e}; epsilon={epsilon} is too large"
            )
        conditionals.append(Distribution(np.clip(cond, 0.0, None)))
    return conditionals


def exact_mi_of_directions(
    inst: ProblemInstance,
    p_u: Distribution,
    dirs: Sequence[Direction],
    epsilon: float,
) -> float:
    """Exact I(U;Y) of the mechanism induced by the given directions.

    The ground truth targeted by the second- and third-order estimates:
    builds each P_{Y|U=u} exactly and evaluates the mutual information by
    direct KL summation.

    Raises
    ------
    InvalidInducedDistribution
        If epsilon pushes some induced conditional negative.
    MixtureInconsistent
        If the weighted directions do not satisfy the zero-mean constraint,
        so the conditionals cannot mix back to P_Y.
    """
    _checked_directions(np.sqrt(inst.p_x.values), p_u, dirs)
    conditionals = induced_y_conditionals(inst, dirs, epsilon)
    return mutual_information(p_u, conditionals, inst.p_y)
