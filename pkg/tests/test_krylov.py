import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gllsem.krylov import KrylovConfig, KrylovError, dot, norm, solve


def spd(n, seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, n))
    return q @ q.T + n * np.eye(n)


@pytest.mark.parametrize("method", ["bicgstab", "gmres"])
def test_spd_against_lapack(method):
    A = spd(40, 0)
    b = np.random.default_rng(1).normal(size=40)
    hist = []
    x = solve(lambda v: A @ v, b, cfg=KrylovConfig(method), diag=np.diag(A), history=hist)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-9)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 1.01
    assert len(hist) > 1


@pytest.mark.parametrize("method", ["bicgstab", "gmres"])
def test_nonsymmetric(method):
    rng = np.random.default_rng(3)
    A = 6 * np.eye(30) + rng.normal(size=(30, 30))
    b = rng.normal(size=30)
    x = solve(lambda v: A @ v, b, cfg=KrylovConfig(method, restart=10), diag=np.diag(A))
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("method", ["bicgstab", "gmres"])
def test_complex_shifted(method):
    A = spd(25, 5) + 3j * np.eye(25)
    b = np.random.default_rng(2).normal(size=25) + 1j
    x = solve(lambda v: A @ v, b, cfg=KrylovConfig(method))
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-9)


def test_zero_rhs():
    x = solve(lambda v: 2 * v, np.zeros(5), x0=np.ones(5))
    assert np.all(x == 0)


def test_iteration_budget():
    A = spd(50, 9) + np.diag(np.arange(50.0) ** 3)
    with pytest.raises(KrylovError) as info:
        solve(lambda v: A @ v, np.ones(50), cfg=KrylovConfig(max_iter=2, preconditioner="none"))
    assert info.value.history
    with pytest.raises(KrylovError):
        solve(lambda v: A @ v, np.ones(50), cfg=KrylovConfig("gmres", max_iter=2, preconditioner="none"))


def test_divergence_reported():
    with pytest.raises(KrylovError):
        solve(lambda v: np.full_like(v, np.nan), np.ones(4))


def test_config_validation():
    with pytest.raises(ValueError):
        KrylovConfig(method="cg")
    with pytest.raises(ValueError):
        KrylovConfig(rel_tol=0)
    with pytest.raises(ValueError):
        KrylovConfig(preconditioner="ilu")


def test_compensated_dot():
    a = np.array([1e16, 1.0, -1e16, 1.0])
    assert dot(a, np.ones(4)) == 2.0
    z = np.array([1 + 2j, 3 - 1j])
    assert dot(z, z) == pytest.approx(np.vdot(z, z))
    assert norm(np.array([3.0, 4.0])) == 5.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=64))
def test_dot_matches_exact_sum(vals):
    import math
    a = np.array(vals)
    exact = math.fsum(v * v for v in vals)
    assert abs(dot(a, a) - exact) <= 1e-15 * max(exact, 1.0) * len(vals)
