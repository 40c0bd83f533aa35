"""Shared fixtures: the running example and seeded random instances."""

import json
from pathlib import Path

import numpy as np
import pytest

from lipgeo import (
    DegenerateSpectrum,
    build_geometry,
    instance_from_conditional,
    instance_from_joint,
)

DATA = Path(__file__).parent / "data"


def load_example1():
    doc = json.loads((DATA / "example1.json").read_text())
    return instance_from_conditional(
        np.array(doc["p_x_given_y"]), np.array(doc["p_y"]), epsilon=doc["epsilon"]
    )


@pytest.fixture(scope="session")
def example1():
    return load_example1()


@pytest.fixture(scope="session")
def example1_ctx(example1):
    return build_geometry(example1)


def sample_instances(k, count, seed):
    """Random well-conditioned instances, deterministic per seed.

    Joints are Dirichlet-uniform on the k*k simplex. Rejected: marginals
    below 0.05 (leakage functionals blow up near the boundary), kernels
    with sigma_min below 1e-2 (W becomes ill-conditioned), and instances
    within 1e-3 of a degenerate spectrum (no meaningful utility
    direction). Returns (instance, geometry) pairs.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        joint = rng.dirichlet(np.ones(k * k)).reshape(k, k)
        px = joint.sum(axis=1)
        py = joint.sum(axis=0)
        if min(px.min(), py.min()) < 0.05:
            continue
        if np.linalg.svd(joint / py[None, :], compute_uv=False)[-1] < 1e-2:
            continue
        inst = instance_from_joint(joint)
        try:
            ctx = build_geometry(inst)
        except DegenerateSpectrum:
            continue
        if ctx.sigma_max < 1.0 + 1e-3:
            continue
        out.append((inst, ctx))
    return out


@pytest.fixture(scope="session")
def random_2x2():
    return sample_instances(2, 100, seed=20260817)


@pytest.fixture(scope="session")
def random_3x3():
    return sample_instances(3, 50, seed=20260818)


@pytest.fixture(scope="session")
def random_mixed(random_2x2, random_3x3):
    # 50 + 50: both alphabet sizes, 100 instances total
    return random_2x2[:50] + random_3x3
