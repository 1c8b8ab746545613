import json

import numpy as np
import pytest

from qcgeom import green as gr
from qcgeom import heisenberg as hg
from qcgeom import numdiff
from qcgeom import quaternion as qt
from qcgeom import sphere as sp
from qcgeom import verify
from qcgeom.errors import (
    BoundaryPoint,
    CoincidentPoints,
    NonSymplectic,
    ProjectiveDenominatorUnderflow,
    SouthPole,
)


def real_point(n, *coords):
    z = np.zeros((n + 1, 4))
    for i, c in enumerate(coords):
        z[i, 0] = c
    return z


# ---------------------------------------------------------------------------
# group membership and factories
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2])
def test_sp_check_examples(rng, n):
    ok, r = sp.sp_check(sp.identity_elem(n))
    assert ok and r == 0
    assert sp.sp_check(sp.rotation_elem(qt.random_symplectic(rng, n + 1)))[0]
    bad = sp.identity_elem(n)
    bad[0, 0, 0] = 2.0
    assert not sp.sp_check(bad)[0]
    with pytest.raises(ValueError):
        sp.sp_check(np.zeros((3, 2, 4)))


def test_factories_produce_group_elements(rng):
    for T in (0.5, 3.0, 6.0):
        assert sp.sp_check(sp.boost(T, 2), relative=True)[0]
    g = sp.random_element(rng, 2)
    assert sp.sp_check(g, relative=True)[0]
    assert np.allclose(sp.sp_mul(g, sp.sp_inverse(g)), sp.identity_elem(2), atol=1e-10)
    assert np.array_equal(sp.boost(0.0), sp.identity_elem(1))


def test_rotation_elem_rejects_non_symplectic():
    with pytest.raises(NonSymplectic):
        sp.rotation_elem(2 * qt.identity(2))


# ---------------------------------------------------------------------------
# action
# ---------------------------------------------------------------------------

def test_identity_action(rng):
    z = sp.random_sphere_points(rng, 1, 10)
    assert np.allclose(sp.act(sp.identity_elem(1), z), z)


@pytest.mark.parametrize("T", [1.0, 3.0, 6.0])
def test_boost_moves_origin_along_axis(T):
    out = sp.act(sp.boost(T), np.zeros((2, 4)))
    assert np.allclose(out, real_point(1, np.tanh(T / 2)), atol=1e-15)
    assert abs(sp.hyp_distance(np.zeros((2, 4)), out) - T) < 1e-10


def test_action_composition(rng):
    for _ in range(50):
        g1, g2 = sp.random_element(rng, 1), sp.random_element(rng, 1)
        z = sp.random_sphere_points(rng, 1, 3)
        assert np.allclose(sp.act(g2, sp.act(g1, z)), sp.act(sp.sp_mul(g1, g2), z), atol=1e-10)


@pytest.mark.parametrize("n", [1, 2])
def test_action_preserves_sphere_and_ball(rng, n):
    for _ in range(20):
        g = sp.random_element(rng, n)
        z = sp.act(g, sp.random_sphere_points(rng, n, 5))
        assert np.allclose(qt.vnorm2(z), 1, atol=1e-10)
        b = sp.act(g, sp.random_ball_points(rng, n, 5))
        assert np.all(qt.vnorm2(b) < 1)


def test_denominator_underflow():
    T = 2.0
    z = real_point(1, -1 / np.tanh(T / 2))
    with pytest.raises(ProjectiveDenominatorUnderflow):
        sp.act(sp.boost(T), z)
    with pytest.raises(ProjectiveDenominatorUnderflow):
        sp.conformal_factor(sp.boost(T), z)


def test_conformal_factor_identity_and_boost():
    z = sp.north_pole(1)
    assert sp.conformal_factor(sp.identity_elem(1), z) == 1
    # (0, 1) boost = (sinh, cosh): factor 1 / cosh(T/2)
    assert np.isclose(sp.conformal_factor(sp.boost(2.0), z), 1 / np.cosh(1.0))


@pytest.mark.parametrize("n", [1, 2])
def test_conformal_factor_cocycle_and_fd(rng, n):
    assert verify.cocycle_residual(rng, n, 100) < 1e-12
    assert verify.sphere_metric_residual(rng, n, 10) < 1e-6


def test_horizontality_preserved(rng):
    for _ in range(10):
        g = sp.random_element(rng, 1)
        z = sp.random_sphere_points(rng, 1, 1)[0]
        gz = sp.act(g, z)
        for v in sp.horizontal_basis(z):
            assert np.abs(qt.hform(v, z)).max() < 1e-12
            w = numdiff.directional(lambda x: sp.act(g, x), z, v)
            assert np.abs(qt.hform(w, gz)).max() < 1e-7 * max(1.0, np.linalg.norm(w))


def test_act_without_renormalization_stays_on_sphere(rng):
    z = sp.random_sphere_points(rng, 1, 1)[0]
    g = sp.random_element(rng, 1, max_T=1.0)
    for _ in range(200):
        z = sp.act(g, z)
    assert abs(qt.vnorm2(z) - 1) < 1e-10


@pytest.mark.parametrize("n", [1, 2])
def test_q_form_identity(rng, n):
    assert verify.q_form_residual(rng, n, 100) < 1e-10


# ---------------------------------------------------------------------------
# hyperbolic distance and Buseman functions
# ---------------------------------------------------------------------------

def test_distance_examples():
    o = np.zeros((2, 4))
    assert sp.hyp_distance(o, o) == 0
    for r in (0.1, 0.5, 0.9, 0.999):
        assert np.isclose(sp.hyp_distance(o, real_point(1, r)), 2 * np.arctanh(r), rtol=1e-12)


def test_distance_symmetric_and_invariant(rng):
    p, q = sp.random_ball_points(rng, 2, 2)
    assert np.isclose(sp.hyp_distance(p, q), sp.hyp_distance(q, p), rtol=1e-13)
    assert verify.distance_invariance_residual(rng, 1, 100) < 1e-9


def test_boundary_point_rejected():
    with pytest.raises(BoundaryPoint):
        sp.hyp_distance(np.zeros((2, 4)), real_point(1, 1.0))


def test_buseman_examples(rng):
    xi = real_point(1, 1.0)
    p = sp.random_ball_points(rng, 1, 1)[0]
    assert abs(sp.buseman(p, xi, p)) < 1e-14
    for r in (0.2, 0.7):
        q = real_point(1, r)
        assert np.isclose(sp.buseman(np.zeros((2, 4)), xi, q), -2 * np.arctanh(r), rtol=1e-12)


def test_buseman_cocycle(rng):
    for _ in range(20):
        p, q, m = sp.random_ball_points(rng, 2, 3)
        xi = sp.random_sphere_points(rng, 2, 1)[0]
        lhs = sp.buseman(p, xi, q)
        assert np.isclose(lhs, sp.buseman(p, xi, m) + sp.buseman(m, xi, q), atol=1e-12)


def test_buseman_along_ray_is_minus_distance(rng):
    xi = sp.random_sphere_points(rng, 1, 1)[0]
    o = np.zeros((2, 4))
    for r in (0.3, 0.9, 0.99):
        q = r * xi
        assert abs(sp.buseman(o, xi, q) + sp.hyp_distance(o, q)) < 1e-6


def test_buseman_limit_of_distance_differences(rng):
    xi = sp.random_sphere_points(rng, 1, 1)[0]
    p, q = sp.random_ball_points(rng, 1, 2, 0.5)
    far = (1 - 1e-7) * xi
    limit = sp.hyp_distance(q, far) - sp.hyp_distance(p, far)
    assert abs(sp.buseman(p, xi, q) - limit) < 1e-5


# ---------------------------------------------------------------------------
# Cayley transform
# ---------------------------------------------------------------------------

def test_cayley_examples(rng):
    assert np.allclose(sp.cayley(sp.north_pole(2)), 0)
    z = sp.random_sphere_points(rng, 1, 1)[0]
    z[1] = 0
    z = sp.sphere_point(z)
    p = sp.cayley(z)
    assert np.allclose(p[:4], z[0]) and np.allclose(p[4:], 0)


def test_cayley_round_trip(rng):
    z = sp.random_sphere_points(rng, 2, 500)
    assert np.abs(sp.cayley_inv(sp.cayley(z)) - z).max() < 1e-12
    p = hg.random_points(rng, 2, 200)
    assert np.allclose(sp.cayley(sp.cayley_inv(p)), p, atol=1e-12)
    assert np.allclose(qt.vnorm2(sp.cayley_inv(p)), 1, atol=1e-13)


def test_cayley_south_pole():
    z = -sp.north_pole(1)
    with pytest.raises(SouthPole):
        sp.cayley(z)


@pytest.mark.parametrize("n", [1, 2])
def test_cayley_metric_factor(rng, n):
    assert verify.cayley_metric_residual(rng, n, 20) < 1e-6


def test_boost_translation_length_and_conjugation(rng):
    o = np.zeros((3, 4))
    for T in (1.0, 3.0, 6.0):
        assert abs(sp.hyp_distance(o, sp.act(sp.boost(T, 2), o)) - T) < 1e-10
        g = sp.conjugate(sp.rotation_elem(qt.random_symplectic(rng, 3)), sp.boost(T, 2))
        # a rotation fixes the origin, so the conjugate still moves it by T
        assert abs(sp.hyp_distance(o, sp.act(g, o)) - T) < 1e-9


# ---------------------------------------------------------------------------
# sphere Green function
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2])
def test_sphere_green_antipodal(rng, n):
    Q = hg.homogeneous_dim(n)
    p = sp.random_sphere_points(rng, n, 1)[0]
    assert np.isclose(sp.sphere_green(p, -p), gr.C_Q(n) * 8.0 ** (-(Q - 2) / 2), rtol=1e-14)


def test_sphere_green_symmetric_positive(rng):
    p, pp = sp.random_sphere_points(rng, 1, 2)
    assert sp.sphere_green(p, pp) > 0
    assert np.isclose(sp.sphere_green(p, pp), sp.sphere_green(pp, p), rtol=1e-14)
    with pytest.raises(CoincidentPoints):
        sp.sphere_green(p, p)


@pytest.mark.parametrize("n", [1, 2])
def test_sphere_green_covariance_and_cayley(rng, n):
    assert verify.green_covariance_residual(rng, n, 200) < 1e-9
    assert verify.cayley_green_residual(rng, n, 200) < 1e-9


def test_sphere_green_cayley_brute_force(rng):
    # written out directly: gauge norm of F(p)^{-1} F(p') and the two transport weights
    n, Q = 1, 10
    for _ in range(20):
        p, pp = sp.random_sphere_points(rng, n, 2)
        a, b = sp.cayley(p), sp.cayley(pp)
        y = b[:4] - a[:4]
        t = b[4:] - a[4:] - 2 * qt.im_bilinear(a[:4], b[:4])
        rho4 = np.dot(y, y) ** 2 + np.dot(t, t)
        g0 = gr.C_Q(n) * rho4 ** (-(Q - 2) / 4)
        w = (2 * qt.qnorm2(p[-1] + qt.ONE)) * (2 * qt.qnorm2(pp[-1] + qt.ONE))
        assert np.isclose(sp.sphere_green(p, pp), w ** (-(Q - 2) / 4) * g0, rtol=1e-9)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_element_json_round_trip(rng):
    g = sp.random_element(rng, 2)
    obj = json.loads(json.dumps(sp.element_to_json(g)))
    assert obj["sp_residual"] < 1e-10
    assert np.array_equal(sp.element_from_json(obj), g)
