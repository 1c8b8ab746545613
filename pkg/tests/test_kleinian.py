import itertools
import json
import math

import numpy as np
import pytest

from qcgeom import kleinian as kl
from qcgeom import quaternion as qt
from qcgeom import sphere as sp
from qcgeom.errors import AxisCollision, BudgetExceeded, InsufficientData


def reduced_words(k, L):
    """Brute-force reduced words of length exactly L."""
    out = []
    for w in itertools.product(range(2 * k), repeat=L):
        if all(w[i + 1] != (w[i] ^ 1) for i in range(L - 1)):
            out.append(w)
    return out


def off_axis_point(d):
    q = np.zeros((2, 4))
    q[1, 2] = np.tanh(d / 2)
    return q


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def test_cyclic_group(cyclic_group):
    g = cyclic_group
    assert g.rank == 1 and g.verified
    assert sp.sp_check(g.generators[0])[0]
    attract, repel = g.fixed_points()[0]
    assert np.allclose(sp.act(g.generators[0], attract), attract, atol=1e-12)
    assert np.allclose(attract, -repel)


def test_rank_two_witness_passes(rank2_group):
    assert rank2_group.verified
    assert rank2_group.witness["max_image_ratio"] < 1
    for g in rank2_group.generators:
        assert sp.sp_check(g, relative=True)[0]


def test_small_translation_fails_witness():
    g = kl.build_schottky(2, 0.1)
    assert not g.verified and not g.witness["passed"]


def test_axis_collision():
    U = qt.identity(2)
    with pytest.raises(AxisCollision):
        kl.build_schottky(2, 6.0, axis_rotations=[U, U])
    with pytest.raises(ValueError):
        kl.build_schottky(0, 6.0)
    with pytest.raises(ValueError):
        kl.build_schottky(2, -1.0)


def test_ping_pong_images_land_in_attracting_balls(rank2_group, rng):
    fp = rank2_group.fixed_points()
    radius = rank2_group.witness["radius"]
    pts = sp.random_sphere_points(rng, 1, 2000)
    for a, g in enumerate(rank2_group.letters()):
        attract, repel = fp[a]
        outside = sp.spherical_distance(pts, repel) >= radius
        assert np.all(sp.spherical_distance(sp.act(g, pts[outside]), attract) < radius)


def test_meta_is_json_serializable(rank2_group):
    meta = json.loads(json.dumps(rank2_group.meta()))
    assert meta["rank"] == 2 and meta["verified"]


# ---------------------------------------------------------------------------
# orbits
# ---------------------------------------------------------------------------

def test_word_counts(rank2_group):
    o1 = kl.enumerate_orbit(rank2_group, 1)
    assert len(o1) == 5 and sorted(o1.words[1:]) == reduced_words(2, 1)
    o5 = kl.enumerate_orbit(rank2_group, 5)
    assert int(np.sum(o5.lengths == 5)) == 324 == len(reduced_words(2, 5))
    assert sorted(w for w in o5.words if len(w) == 5) == reduced_words(2, 5)
    assert kl.word_count(2, 9) == 4 * (3 ** 9 - 1) // 2


def test_words_are_evaluated_as_matrix_products(rank2_group):
    o = kl.enumerate_orbit(rank2_group, 4)
    letters = rank2_group.letters()
    for i in (7, 40, 150):
        g = sp.identity_elem(1)
        for a in o.words[i]:
            g = sp.sp_mul(g, letters[a])
        assert np.allclose(o.points()[i], sp.act(g, np.zeros((2, 4))), atol=1e-12)


def test_cyclic_distances_are_additive(cyclic_group):
    o = kl.enumerate_orbit(cyclic_group, 12)
    assert np.allclose(o.distances, o.lengths * 6.0, atol=1e-9)


def test_budget_exceeded(rank2_group):
    with pytest.raises(BudgetExceeded):
        kl.enumerate_orbit(rank2_group, 9, budget=1000)


def test_sp_residual_through_long_words(rank2_orbit):
    assert rank2_orbit.max_sp_residual < 1e-10


def test_distance_symmetry_under_inversion(rank2_orbit):
    index = {w: i for i, w in enumerate(rank2_orbit.words)}
    d = rank2_orbit.distances
    worst = 0.0
    for i, w in enumerate(rank2_orbit.words[:2000]):
        inv = tuple(kl.inverse_letter(a) for a in reversed(w))
        worst = max(worst, abs(d[i] - d[index[inv]]))
    assert worst < 1e-9


def test_subadditivity(rank2_orbit):
    T = 6.0
    assert np.all(rank2_orbit.distances <= rank2_orbit.lengths * T + 1e-9)


def test_distance_helpers_agree(rng, rank2_group):
    q = sp.random_ball_points(rng, 1, 1, 0.5)[0]
    o = kl.enumerate_orbit(rank2_group, 3, q)
    direct = sp.hyp_distance(np.broadcast_to(q, o.points().shape), o.points())
    assert np.allclose(o.distances, direct, atol=1e-9)
    assert np.allclose(o.distances_from_origin(), sp.hyp_distance(np.zeros_like(o.points()), o.points()), atol=1e-9)


# ---------------------------------------------------------------------------
# critical exponent
# ---------------------------------------------------------------------------

def test_cyclic_delta_vanishes(cyclic_group):
    o = kl.enumerate_orbit(cyclic_group, 40)
    fit = kl.estimate_delta(o)
    assert fit.delta < 0.05
    assert kl.shell_exponent(o) == 0.0


def test_rank_two_delta(rank2_orbit):
    fit = kl.estimate_delta(rank2_orbit)
    target = 2 * math.log(3) / 6.0
    assert abs(fit.delta - target) / target < 0.2
    assert fit.r2 > 0.98
    assert len(fit.radii) >= 3 and fit.radii[0] == 6.0


def test_counting_oracle(rank2_orbit):
    # 4 * 3^(m-1) words of length m, each moving the origin by nearly m T
    d = rank2_orbit.distances
    for m in (4, 6, 8):
        sel = rank2_orbit.lengths == m
        assert sel.sum() == 4 * 3 ** (m - 1)
        assert np.all(d[sel] > m * (6.0 - 1.0))


def test_basepoint_independence(rank2_group):
    a = kl.estimate_delta(kl.enumerate_orbit(rank2_group, 9, off_axis_point(0.5)))
    b = kl.estimate_delta(kl.enumerate_orbit(rank2_group, 9, off_axis_point(1.0)))
    assert abs(a.delta - b.delta) < max(a.stderr, b.stderr)


def test_insufficient_data(rank2_group):
    with pytest.raises(InsufficientData):
        kl.estimate_delta(kl.enumerate_orbit(rank2_group, 1))
    with pytest.raises(InsufficientData):
        kl.shell_exponent(kl.enumerate_orbit(rank2_group, 1))


# ---------------------------------------------------------------------------
# Patterson-Sullivan measures
# ---------------------------------------------------------------------------

def test_single_atom_at_level_zero(rank2_group):
    q = off_axis_point(0.7)
    mu = kl.ps_measure(rank2_group, 0.4, 0, q)
    assert mu.weights.tolist() == [1.0]
    assert np.allclose(mu.atoms[0], q / np.sqrt(qt.vnorm2(q)))
    with pytest.raises(InsufficientData):
        kl.ps_measure(rank2_group, 0.4, 0)


def test_cyclic_measure_clusters_at_fixed_points(cyclic_group):
    s, T = 0.5, 6.0
    o = kl.enumerate_orbit(cyclic_group, 10)
    mu = kl.ps_measure(cyclic_group, s, 10, orbit=o)
    fp = cyclic_group.fixed_points()[0]
    far = mu.atoms[o.lengths[1:] >= 2]
    near = np.minimum(sp.spherical_distance(far, fp[0]), sp.spherical_distance(far, fp[1]))
    assert np.all(near < 1e-3)
    # one cluster per fixed point
    hits = [np.sum(sp.spherical_distance(far, p) < 1e-3) for p in fp]
    assert min(hits) > 0 and sum(hits) == len(far)
    # successive powers lose e^{-sT/2} of weight
    w = mu.weights
    d = o.distances_from_origin()[1:]
    order = np.argsort(d)
    ratios = w[order][2::2] / w[order][:-2:2]
    assert np.allclose(ratios, math.exp(-s * T / 2), rtol=1e-9)


def test_measure_is_normalized_and_deterministic(rank2_group):
    a = kl.ps_measure(rank2_group, 0.4, 5)
    b = kl.ps_measure(rank2_group, 0.4, 5)
    assert math.isclose(a.weights.sum(), 1.0, rel_tol=1e-14)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.atoms, b.atoms)
    assert a.flags["a_gamma"] == 1 and a.flags["dropped_origin_atom"]
    assert np.allclose(qt.vnorm2(a.atoms), 1)


def test_quasi_invariance_identity_is_exact(cyclic_group):
    mu = kl.ps_measure(cyclic_group, 0.3, 6)
    assert kl.quasi_invariance_residual(mu, sp.identity_elem(1), 0.3) == 0


def test_quasi_invariance_improves_with_length(rank2_group, rank2_orbit):
    s = kl.estimate_delta(rank2_orbit).delta
    res = []
    for L in (6, 7, 8, 9):
        mu = kl.ps_measure(rank2_group, s, L, orbit=rank2_orbit)
        res.append(max(kl.quasi_invariance_residual(mu, g, s) for g in rank2_group.generators))
    assert res[-1] < 0.05
    assert all(b <= a for a, b in zip(res, res[1:]))


def test_measure_json_round_trip(rank2_group, tmp_path):
    mu = kl.ps_measure(rank2_group, 0.4, 3)
    path = tmp_path / "mu.json"
    kl.measure_to_json(mu, path)
    back = kl.AtomicMeasure.from_json(json.loads(path.read_text()))
    assert np.array_equal(back.atoms, mu.atoms) and np.array_equal(back.weights, mu.weights)
    assert back.flags == mu.flags and back.s == mu.s and back.L == 3


def test_orbit_csv(rank2_group, tmp_path):
    o = kl.enumerate_orbit(rank2_group, 2)
    path = tmp_path / "orbit.csv"
    kl.orbit_to_csv(o, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("word,length,distance,zeta0_0")
    assert len(lines) == len(o) + 1
    assert lines[1].split(",")[0] == "e"
    assert float(lines[2].split(",")[2]) == o.distances[1]


def test_fundamental_domain_samples(rank2_group):
    pts = kl.fundamental_domain_samples(rank2_group, 50, seed=1)
    assert pts.shape == (50, 2, 4)
    centers = rank2_group.fixed_points()[:, 0]
    assert np.all(sp.spherical_distance(pts[:, None], centers[None]) > rank2_group.witness["radius"])
    assert np.array_equal(pts, kl.fundamental_domain_samples(rank2_group, 50, seed=1))
