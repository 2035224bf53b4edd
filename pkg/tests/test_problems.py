import logging

import mpmath
import numpy as np
import pytest
from scipy import special

from gllsem.problems import (DIRICHLET_RADII, NEUMANN_RADII, REGISTRY, ProblemConsistencyError,
                             _check_radii, bessel_j, bessel_j_prime, get_problem,
                             parabolic_b_max, parabolic_f_max, schrodinger_harmonic)

mpmath.mp.dps = 40


@pytest.mark.parametrize("n", [0, 1, 4, 7])
def test_bessel_against_mpmath(n):
    xs = np.linspace(0, 30, 301)
    ours = bessel_j(n, xs)
    ref = np.array([float(mpmath.besselj(n, x)) for x in xs])
    assert np.max(np.abs(ours - ref)) < 2e-15
    assert np.max(np.abs(ours - special.jv(n, xs))) < 1e-13


def test_bessel_scalar_and_domain():
    assert isinstance(bessel_j(4, 3.0), float)
    assert bessel_j(4, 0.0) == 0.0 and bessel_j(0, 0.0) == 1.0
    for bad in (-1.0, 30.5, np.nan):
        with pytest.raises(ValueError):
            bessel_j(4, bad)
    with pytest.raises(ValueError):
        bessel_j(1.5, 1.0)


def test_bessel_prime():
    xs = np.linspace(0.5, 29, 50)
    ref = np.array([float(mpmath.besselj(4, x, derivative=1)) for x in xs])
    assert np.max(np.abs(bessel_j_prime(4, xs) - ref)) < 2e-15
    assert abs(bessel_j_prime(0, 2.0) + special.j1(2.0)) < 1e-15


def test_radii_are_zeros():
    # inner radius is the first positive zero of J_4, outer the third
    zi, zo = (float(mpmath.besseljzero(4, m)) for m in (1, 3))
    assert abs(DIRICHLET_RADII[0] - zi) < 1e-14 and abs(DIRICHLET_RADII[1] - zo) < 1e-14
    for r in DIRICHLET_RADII:
        assert abs(bessel_j(4, r)) < 1e-11
    dzi, dzo = (float(mpmath.besseljzero(4, m, derivative=1)) for m in (1, 2))
    assert abs(NEUMANN_RADII[0] - dzi) < 1e-12 and abs(NEUMANN_RADII[1] - dzo) < 1e-12


def test_wrong_radii_rejected():
    with pytest.raises(ProblemConsistencyError):
        _check_radii("dirichlet", (7.5, 14.37), 1e-11)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_registry_problems_are_consistent(name):
    p = get_problem(name)
    assert p.pde in ("wave", "parabolic", "schrodinger")
    tol = 1e-7 if p.pde == "parabolic" else 1e-8
    assert p.check(tol=tol) <= tol


def test_exact_solutions_satisfy_boundary_conditions():
    p = get_problem("square-dirichlet")
    s = np.linspace(-np.pi, np.pi, 9)
    assert np.max(np.abs(p.exact(s, np.full_like(s, np.pi), 0.3))) < 1e-15
    q = get_problem("annulus-neumann")
    th = np.linspace(0.01, 1.5, 7)
    for r in q.radii:
        # radial derivative vanishes
        h = 1e-6
        d = (q.exact((r + h) * np.cos(th), (r + h) * np.sin(th), 0.2)
             - q.exact((r - h) * np.cos(th), (r - h) * np.sin(th), 0.2)) / (2 * h)
        assert np.max(np.abs(d)) < 1e-8


def test_unknown_problem():
    with pytest.raises(ValueError):
        get_problem("heat")


def test_inconsistent_forcing_detected():
    import dataclasses
    p = get_problem("square-dirichlet")
    bad = dataclasses.replace(p, forcing=((lambda x, y: np.sin(x), lambda t: 1.0 + 0 * t),))
    with pytest.raises(ProblemConsistencyError):
        bad.check()


def test_schrodinger_unforced_residual_is_reported(caplog):
    with caplog.at_level(logging.WARNING):
        p = schrodinger_harmonic()
    assert p.notes["manufactured_forcing"] is True
    assert p.notes["unforced_residual"] > 1e-3
    assert "manufactured" in caplog.text
    # the forcing equals (r^2/2 - 1) u
    x, y = np.array([0.3, 1.7]), np.array([1.1, 0.2])
    t = 0.25
    expect = (0.5 * (x * x + y * y) - 1.0) * p.exact(x, y, t)
    np.testing.assert_allclose(p.f(x, y, t), expect, atol=1e-15)


def test_schrodinger_half_laplacian_needs_no_forcing():
    p = schrodinger_harmonic(kinetic=0.5)
    assert p.forcing == ()
    assert "manufactured_forcing" not in p.notes


def test_parabolic_step_constants():
    p = get_problem("parabolic-table1")
    assert abs(parabolic_b_max(p) - 0.75 * (0.2 + np.pi)) < 1e-12
    assert parabolic_f_max(p) == pytest.approx(250.58, rel=1e-3)


def test_parabolic_diffusion_is_indefinite():
    """The prescribed diffusion tensor loses definiteness on most of the domain."""
    p = get_problem("parabolic-table1")
    g = np.linspace(0, np.pi, 201)[1:-1]
    x, y = np.meshgrid(g, g)
    a11, a12, a22 = p.coeffs.eval_a(x, y, 0.0)
    frac = np.mean(a11 * a22 - a12 * a12 <= 0)
    assert 0.5 < frac < 0.9


def test_sample_points_deterministic_and_inside():
    p = get_problem("annulus-dirichlet")
    x, y, t = p.sample_points()
    x2, y2, t2 = p.sample_points()
    np.testing.assert_array_equal(x, x2)
    r = np.hypot(x, y)
    assert r.min() >= p.radii[0] and r.max() <= p.radii[1]
    assert t.min() >= 0 and t.max() <= p.T
