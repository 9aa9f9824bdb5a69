import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from vll import taskgen
from vll.errors import DegenerateTaskError, InvalidDimensionError
from vll.seeding import derive_seed, rng_from_seed


def test_derive_seed_deterministic_and_label_sensitive():
    a = derive_seed(42, "train", 3)
    assert a == derive_seed(42, "train", 3)
    assert a != derive_seed(42, "train", 4)
    assert a != derive_seed(43, "train", 3)
    assert 0 <= a < 2**64


def test_rng_from_seed_reproducible():
    x = rng_from_seed(9).standard_normal(5)
    y = rng_from_seed(9).standard_normal(5)
    assert np.array_equal(x, y)


def test_sample_sphere_unit_norm():
    x = taskgen.sample_sphere(200, 10, seed=0)
    assert x.shape == (200, 10)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_sample_sphere_rejects_bad_dim():
    with pytest.raises(InvalidDimensionError):
        taskgen.sample_sphere(5, 0, seed=0)


@pytest.mark.parametrize("k", range(7))
def test_gegenbauer_matches_scipy(k):
    lam = 4.0  # (D-2)/2 for D=10
    t = np.linspace(-1, 1, 101)
    ref = special.eval_gegenbauer(k, lam, t)
    assert np.allclose(taskgen.gegenbauer(k, lam, t), ref, rtol=1e-10, atol=1e-10)


def test_gegenbauer_orthogonality_under_sphere_weight():
    # weight (1-t^2)^{lam - 1/2} on [-1, 1] is the projected sphere measure
    d = 10
    lam = (d - 2) / 2.0
    nodes, weights = np.polynomial.legendre.leggauss(120)
    w_sphere = (1.0 - nodes**2) ** (lam - 0.5)
    for j in range(7):
        for k in range(j + 1, 7):
            integral = np.sum(
                weights * w_sphere
                * taskgen.gegenbauer(j, lam, nodes)
                * taskgen.gegenbauer(k, lam, nodes)
            )
            assert abs(integral) < 1e-8


def test_make_task_unit_second_moment():
    train, test = taskgen.make_task(10, 2, p_train=64, p_test=50_000, seed=1)
    assert len(train) == 64 and len(test) == 50_000
    # normalizer shared; large-sample target second moment close to 1
    assert train.norm_const == test.norm_const
    assert abs(np.mean(test.targets**2) - 1.0) < 0.05


def test_make_task_deterministic():
    a, _ = taskgen.make_task(10, 3, p_train=16, p_test=16, seed=5)
    b, _ = taskgen.make_task(10, 3, p_train=16, p_test=16, seed=5)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)


def test_fresh_split_shares_task():
    train, _ = taskgen.make_task(10, 2, p_train=8, p_test=8, seed=2)
    split = taskgen.fresh_split(train, 32, seed=77)
    assert len(split) == 32
    assert np.array_equal(split.beta, train.beta)
    assert split.norm_const == train.norm_const
    assert not np.array_equal(split.inputs[:8], train.inputs)


def test_degenerate_task_raises():
    # beta_norm = 0 makes the degree-1 target identically zero
    with pytest.raises(DegenerateTaskError):
        taskgen.make_task(10, 1, p_train=4, p_test=4, beta_norm=0.0, seed=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(3, 12), st.integers(0, 2**32 - 1))
def test_gegenbauer_recurrence_endpoint(k, d, seed):
    # C_k^{(lam)}(1) = binom(k + 2 lam - 1, k)
    lam = (d - 2) / 2.0
    expected = special.binom(k + 2 * lam - 1, k)
    assert np.isclose(taskgen.gegenbauer(k, lam, 1.0), expected, rtol=1e-9)
    x = taskgen.sample_sphere(3, d, seed)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)
