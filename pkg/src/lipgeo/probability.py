"""Exact probability primitives: distributions, kernels, leakage functionals.

This module owns the ground truth. Everything in it is computed by direct
summation with no series expansion, so the geometric approximations elsewhere
in the package can be validated against it:

* :func:`kl_divergence` and :func:`mutual_information` evaluate
  D(p||q) = sum_i p(i) log(p(i)/q(i)) and I(U;Y) = sum_u P_U(u) D(P_{Y|U=u}||P_Y)
  exactly, in nats, with the 0*log(0) := 0 convention.
* :func:`lip_leakage` is the two-sided local information privacy functional
  max_{x,u} |log(P_{X|U}(x|u)/P_X(x))|; :func:`max_lift_leakage` is its
  one-sided variant. A mechanism meets a budget eps iff the functional is
  <= eps.
* :class:`ProblemInstance` packages the joint P_XY (equivalently the
  column-stochastic leakage kernel P_{X|Y} plus P_Y) with an optional budget.

Tolerances: user-supplied vectors must normalize within 1e-9; mixtures of
synthesized conditionals within 1e-6 (they accumulate float error); strict
positivity means >= 1e-12; the kernel must keep its smallest singular value
above 1e-9 to count as invertible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    LengthMismatch,
    MixtureInconsistent,
    NotNormalized,
    NotSquare,
    SingularKernel,
    ZeroMarginal,
    ZeroReference,
)

__all__ = [
    "NORMALIZATION_TOL",
    "MIXTURE_TOL",
    "POSITIVITY_FLOOR",
    "INVERTIBILITY_FLOOR",
    "Distribution",
    "StochasticKernel",
    "ProblemInstance",
    "instance_from_joint",
    "instance_from_conditional",
    "kl_divergence",
    "mutual_information",
    "lip_leakage",
    "max_lift_leakage",
]

# Strict tolerance for user input, looser one for synthesized mixtures.
NORMALIZATION_TOL = 1e-9
MIXTURE_TOL = 1e-6
POSITIVITY_FLOOR = 1e-12
INVERTIBILITY_FLOOR = 1e-9


def _as_readonly(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise NotNormalized(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NotNormalized("entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Distribution:
    """A probability vector over a finite alphabet.

    Parameters
    ----------
    values : array_like
        Nonnegative entries summing to 1 within 1e-9. Stored as a read-only
        float64 array.

    Raises
    ------
    NotNormalized
        If any entry is negative, non-finite, or the sum is off by more
        than the normalization tolerance.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _as_readonly(self.values, ndim=1)
        if arr.size == 0:
            raise NotNormalized("empty probability vector")
        if np.any(arr < 0):
            raise NotNormalized(f"negative entry {arr.min():.3e}")
        total = float(arr.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NotNormalized(f"entries sum to {total!r}, not 1")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def is_strictly_positive(self, floor: float = POSITIVITY_FLOOR) -> bool:
        """True when every entry is at least `floor`."""
        return bool(np.all(self.values >= floor))


@dataclass(frozen=True, eq=False)
class StochasticKernel:
    """A column-stochastic matrix; entry (i, j) is P(output=i | input=j).

    Every column must be a valid :class:`Distribution`.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = _as_readonly(self.matrix, ndim=2)
        if mat.size == 0:
            raise NotNormalized("empty kernel")
        if np.any(mat < 0):
            raise NotNormalized(f"negative entry {mat.min():.3e}")
        sums = mat.sum(axis=0)
        off = np.abs(sums - 1.0)
        if np.any(off > NORMALIZATION_TOL):
            j = int(np.argmax(off))
            raise NotNormalized(f"column {j} sums to {sums[j]!r}, not 1")
        object.__setattr__(self, "matrix", mat)

    @property
    def output_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def input_size(self) -> int:
        return self.matrix.shape[1]

    def column(self, j: int) -> Distribution:
        """Column j as a Distribution."""
        return Distribution(self.matrix[:, j])


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A privacy mechanism design problem: P_XY plus an optional budget.

    X is the private value, Y the useful data; the mechanism to be designed
    releases U from Y (Markov chain X - Y - U). Built via
    :func:`instance_from_joint` or :func:`instance_from_conditional`.

    Attributes
    ----------
    p_x_given_y : StochasticKernel
        The square leakage kernel, invertible within the floor.
    p_y, p_x : Distribution
        Strictly positive marginals; p_x = p_x_given_y @ p_y.
    p_xy : numpy.ndarray
        The joint, entry (x, y).
    epsilon : float or None
        Leakage budget in nats; must be > 0 when present.
    """

    p_x_given_y: StochasticKernel
    p_y: Distribution
    p_x: Distribution = field(repr=False)
    p_xy: np.ndarray = field(repr=False)
    epsilon: float | None = None

    def __post_init__(self):
        kernel = self.p_x_given_y.matrix
        if kernel.shape[0] != kernel.shape[1]:
            raise NotSquare(f"leakage kernel has shape {kernel.shape}")
        k = kernel.shape[0]
        if len(self.p_y) != k or len(self.p_x) != k:
            raise LengthMismatch("marginals do not match the kernel size")
        if not self.p_y.is_strictly_positive() or not self.p_x.is_strictly_positive():
            raise ZeroMarginal("marginals must be strictly positive")
        smallest = float(np.linalg.svd(kernel, compute_uv=False)[-1])
        if smallest <= INVERTIBILITY_FLOOR:
            raise SingularKernel(
                f"smallest singular value of P_X|Y is {smallest:.3e}"
            )
        if np.max(np.abs(kernel @ self.p_y.values - self.p_x.values)) > NORMALIZATION_TOL:
            raise MixtureInconsistent("p_x does not equal P_X|Y @ p_y")
        p_xy = _as_readonly(self.p_xy, ndim=2)
        if np.max(np.abs(p_xy - kernel * self.p_y.values[None, :])) > NORMALIZATION_TOL:
            raise MixtureInconsistent("joint does not factor as P_X|Y diag(P_Y)")
        object.__setattr__(self, "p_xy", p_xy)
        if self.epsilon is not None:
            eps = float(self.epsilon)
            if not np.isfinite(eps) or eps <= 0:
                raise ValueError(f"epsilon must be > 0 when given, got {eps!r}")
            object.__setattr__(self, "epsilon", eps)

    @property
    def k(self) -> int:
        """Common alphabet size of X and Y."""
        return len(self.p_y)


def instance_from_joint(p_xy, epsilon: float | None = None) -> ProblemInstance:
    """Build a ProblemInstance from a joint distribution matrix.

    Parameters
    ----------
    p_xy : array_like
        Square matrix of probabilities, entry (x, y), summing to 1 within
        1e-9. Marginals are row sums (P_X) and column sums (P_Y); the kernel
        column j is P_XY(., j) / P_Y(j).
    epsilon : float, optional
        Leakage budget in nats, > 0.

    Raises
    ------
    NotSquare, NotNormalized, ZeroMarginal, SingularKernel
    """
    joint = _as_readonly(p_xy, ndim=2)
    if joint.shape[0] != joint.shape[1]:
        raise NotSquare(f"joint has shape {joint.shape}")
    if np.any(joint < 0):
        raise NotNormalized(f"negative joint entry {joint.min():.3e}")
    total = float(joint.sum())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"joint sums to {total!r}, not 1")
    p_x = joint.sum(axis=1)
    p_y = joint.sum(axis=0)
    if p_x.min() < POSITIVITY_FLOOR or p_y.min() < POSITIVITY_FLOOR:
        raise ZeroMarginal(
            f"marginal entry below {POSITIVITY_FLOOR} "
            f"(min P_X={p_x.min():.3e}, min P_Y={p_y.min():.3e})"
        )
    kernel = joint / p_y[None, :]
    return ProblemInstance(
        p_x_given_y=StochasticKernel(kernel),
        p_y=Distribution(p_y),
        p_x=Distribution(p_x),
        p_xy=joint,
        epsilon=epsilon,
    )


def instance_from_conditional(p_x_given_y, p_y, epsilon: float | None = None) -> ProblemInstance:
    """Build a ProblemInstance from the leakage kernel and P_Y.

    Equivalent to :func:`instance_from_joint` on P_X|Y diag(P_Y); both input
    forms of the instance file format land here or there.
    """
    kernel = StochasticKernel(p_x_given_y)
    marginal = Distribution(p_y)
    if kernel.input_size != len(marginal):
        raise LengthMismatch(
            f"kernel expects {kernel.input_size} inputs, p_y has {len(marginal)}"
        )
    joint = kernel.matrix * marginal.values[None, :]
    return instance_from_joint(joint, epsilon=epsilon)


def kl_divergence(p: Distribution, q: Distribution) -> float:
    """Kullback-Leibler divergence D(p||q) in nats.

    Parameters
    ----------
    p, q : Distribution
        Equal-length distributions; q must be positive wherever p is.

    Returns
    -------
    float
        sum_i p(i) log(p(i)/q(i)) with 0*log(0) := 0. Always >= 0; values
        within float noise of zero are clamped to exactly 0.

    Raises
    ------
    LengthMismatch
    ZeroReference
        If q has a zero where p does not.
    """
    if len(p) != len(q):
        raise LengthMismatch(f"lengths {len(p)} and {len(q)} differ")
    pv, qv = p.values, q.values
    support = pv > 0
    if np.any(qv[support] <= 0):
        raise ZeroReference("q has a zero inside the support of p")
    value = float(np.sum(pv[support] * np.log(pv[support] / qv[support])))
    # direct summation can land a hair below zero for p ~ q
    return max(value, 0.0)


def mutual_information(
    p_u: Distribution,
    p_y_given_u: Sequence[Distribution],
    p_y: Distribution,
) -> float:
    """Exact I(U;Y) = sum_u P_U(u) D(P_{Y|U=u} || P_Y), in nats.

    Parameters
    ----------
    p_u : Distribution
        Weights over U.
    p_y_given_u : sequence of Distribution
        One conditional per u, each the length of `p_y`.
    p_y : Distribution
        The Y marginal; the weighted conditionals must mix back to it
        within 1e-6.

    Raises
    ------
    LengthMismatch
    MixtureInconsistent
        If sum_u P_U(u) P_{Y|U=u} strays from p_y by more than 1e-6.
    """
    if len(p_y_given_u) != len(p_u):
        raise LengthMismatch(
            f"{len(p_y_given_u)} conditionals for {len(p_u)} weights"
        )
    for cond in p_y_given_u:
        if len(cond) != len(p_y):
            raise LengthMismatch("conditional length does not match p_y")
    mixture = sum(
        w * cond.values for w, cond in zip(p_u.values, p_y_given_u)
    )
    drift = float(np.max(np.abs(mixture - p_y.values)))
    if drift > MIXTURE_TOL:
        raise MixtureInconsistent(f"mixture misses p_y by {drift:.3e}")
    return sum(
        float(w) * kl_divergence(cond, p_y)
        for w, cond in zip(p_u.values, p_y_given_u)
        if w > 0
    )


def _log_lifts(p_x_given_u: Sequence[Distribution], p_x: Distribution) -> np.ndarray:
    if not p_x.is_strictly_positive():
        raise ZeroReference("p_x must be strictly positive")
    rows = []
    for cond in p_x_given_u:
        if len(cond) != len(p_x):
            raise LengthMismatch("conditional length does not match p_x")
        with np.errstate(divide="ignore"):
            rows.append(np.log(cond.values / p_x.values))
    return np.array(rows)


def lip_leakage(p_x_given_u: Sequence[Distribution], p_x: Distribution) -> float:
    """Exact two-sided LIP leakage max_{x,u} |log(P_{X|U}(x|u)/P_X(x))|.

    Infinite when some posterior entry is exactly zero. A mechanism
    satisfies the LIP budget eps iff this value is <= eps.
    """
    return float(np.max(np.abs(_log_lifts(p_x_given_u, p_x))))


def max_lift_leakage(p_x_given_u: Sequence[Distribution], p_x: Distribution) -> float:
    """Exact one-sided max-lift leakage max_{x,u} log(P_{X|U}(x|u)/P_X(x)).

    Nonnegative for any family of valid posteriors (each sums to 1, so
    some coordinate meets or exceeds the prior) and never exceeds
    :func:`lip_leakage` on the same mechanism.
    """
    return float(np.max(_log_lifts(p_x_given_u, p_x)))
