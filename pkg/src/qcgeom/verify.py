"""Named verification suites shared by the CLI and the acceptance tests.

Every check returns a record ``{suite, check, n, samples, residual,
tolerance, passed}``.  Residuals are maxima over the sample; a check passes
when the residual is strictly below its tolerance.
"""

import numpy as np

from . import calculus as cc
from . import green as gr
from . import heisenberg as hg
from . import numdiff
from . import quaternion as qt
from . import sphere as sp


def record(suite, check, n, samples, residual, tolerance):
    residual = float(residual)
    return {
        "suite": suite,
        "check": check,
        "n": int(n),
        "samples": int(samples),
        "residual": residual,
        "tolerance": float(tolerance),
        "passed": bool(residual < tolerance),
    }


# ---------------------------------------------------------------------------
# algebra
# ---------------------------------------------------------------------------

def structure_residual(structure=None):
    """Largest entry of the integer identities for the b-matrices.

    Checks antisymmetry, ``(b^s)^2 = -id`` and ``b^1 b^2 b^3 = -id``.
    """
    b = qt.STRUCTURE if structure is None else np.asarray(structure, dtype=float)
    eye = np.eye(4)
    parts = [np.abs(bs + bs.T).max() for bs in b]
    parts += [np.abs(bs @ bs + eye).max() for bs in b]
    parts.append(np.abs(b[0] @ b[1] @ b[2] + eye).max())
    return float(max(parts))


def im_bilinear_residual(rng, samples=100, structure=None):
    """``Im(x conj(x'))`` from the Hamilton product versus the b-matrix contraction."""
    b = qt.STRUCTURE if structure is None else np.asarray(structure, dtype=float)
    x = rng.standard_normal((samples, 4))
    xp = rng.standard_normal((samples, 4))
    direct = qt.qmul(x, qt.qconj(xp))[:, 1:]
    via_b = np.einsum("skj,ak,aj->as", b, x, xp)
    return float(np.abs(direct - via_b).max())


def algebra_suite(n=1, samples=1000, seed=0, structure=None):
    rng = np.random.default_rng(seed)
    out = [
        record("algebra", "b-matrix identities", n, 1, structure_residual(structure), 1e-15),
        record("algebra", "Im bilinear via b", n, 100, im_bilinear_residual(rng, 100, structure), 1e-13),
    ]
    a = rng.standard_normal((samples, 4))
    b = rng.standard_normal((samples, 4))
    c = rng.standard_normal((samples, 4))
    mult = np.abs(qt.qnorm(qt.qmul(a, b)) - qt.qnorm(a) * qt.qnorm(b)) / (qt.qnorm(a) * qt.qnorm(b))
    out.append(record("algebra", "norm multiplicative", n, samples, mult.max(), 1e-14))
    assoc = np.abs(qt.qmul(qt.qmul(a, b), c) - qt.qmul(a, qt.qmul(b, c))).max()
    out.append(record("algebra", "associativity", n, samples, assoc, 1e-13))
    m = n + 2
    worst = 0.0
    for _ in range(20):
        v = rng.standard_normal((m, 4))
        g1 = rng.standard_normal((m, m, 4))
        g2 = rng.standard_normal((m, m, 4))
        lhs = qt.vecmat(qt.vecmat(v, g1), g2)
        rhs = qt.vecmat(v, qt.matmul(g1, g2))
        worst = max(worst, np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()))
    out.append(record("algebra", "right action associativity", n, 20, worst, 1e-13))
    return out


# ---------------------------------------------------------------------------
# Heisenberg group
# ---------------------------------------------------------------------------

def pushforward_factor_residual(auto, p):
    """Max over frame pairs of ``|g0(a_* Y_j, a_* Y_k) - lam 2 delta_jk| / (2 lam)`` by FD."""
    p = np.asarray(p, dtype=float)
    m = 4 * hg.dim_n(p)
    frame = hg.frame_at(p)
    lam = auto.conformal_factor(p)
    worst = 0.0
    for i in range(len(p)):
        jac = numdiff.jacobian(auto, p[i])
        w = frame[i] @ jac.T  # pushed-forward frame, rows
        gram = 2 * w[:, :m] @ w[:, :m].T
        err = np.abs(gram - 2 * lam[i] * np.eye(m)).max() / (2 * lam[i])
        worst = max(worst, err)
    return worst


def heisenberg_suite(n=1, samples=1000, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    a, b, c = (hg.random_points(rng, n, 10_000) for _ in range(3))
    lhs = hg.h_mul(hg.h_mul(a, b), c)
    rhs = hg.h_mul(a, hg.h_mul(b, c))
    out.append(record("heisenberg", "associativity", n, 10_000,
                      np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()), 1e-12))
    p = hg.random_points(rng, n, samples)
    R = hg.Inversion()
    out.append(record("heisenberg", "inversion involution", n, samples,
                      (np.abs(R(R(p)) - p).max(axis=1) / np.abs(p).max(axis=1)).max(), 1e-12))
    out.append(record("heisenberg", "inversion norm", n, samples,
                      np.abs(hg.h_norm(R(p)) * hg.h_norm(p) - 1).max(), 1e-12))
    frame = hg.frame_at(p)
    theta = hg.contact_form(p[:, None, :], frame)
    out.append(record("heisenberg", "contact form kills frame", n, samples, np.abs(theta).max(), 1e-13))
    worst = 0.0
    for _ in range(20):
        auto = hg.random_auto(rng, n, int(rng.integers(1, 5)))
        q = hg.random_points(rng, n, 3)
        worst = max(worst, pushforward_factor_residual(auto, q))
    out.append(record("heisenberg", "conformal factor (FD pushforward)", n, 60, worst, 1e-6))
    return out


# ---------------------------------------------------------------------------
# sub-Riemannian calculus
# ---------------------------------------------------------------------------

def calculus_suite(n=1, samples=1000, seed=0):
    out = []
    for mode in (cc.CLOSED_FORM, cc.FINITE_DIFFERENCE):
        tol = cc.IDENTITY_TOLERANCE[mode]
        for rec in cc.identity_suite(n, samples, seed, mode):
            out.append(record("calculus", f"{rec['identity']} [{mode}]", n, rec["samples"],
                              rec["max_rel"], tol))
    return out


# ---------------------------------------------------------------------------
# Green function
# ---------------------------------------------------------------------------

def harmonicity_residual(n=1, samples=100, seed=0, lo=1e-2, hi=10.0):
    """``max |Delta_0 G0(0, eta)| ||eta||^{Q+2} / C_Q`` over ``lo <= ||eta|| <= hi``."""
    rng = np.random.default_rng(seed)
    Q = hg.homogeneous_dim(n)
    eta = hg.random_points(rng, n, samples)
    target = np.exp(rng.uniform(np.log(lo), np.log(hi), samples))
    r = hg.h_norm(eta)
    eta[:, :4 * n] *= (target / r)[:, None]
    eta[:, 4 * n:] *= ((target / r) ** 2)[:, None]
    G = gr.green_field(hg.origin(n))
    lap = cc.sublaplacian(G, eta)
    return float(np.max(np.abs(lap) * hg.h_norm(eta) ** (Q + 2) / gr.C_Q(n)))


def transform_residual(n=1, samples=200, seed=0, max_length=4):
    """Green transformation law over random composite automorphisms."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        auto = hg.random_auto(rng, n, int(rng.integers(1, max_length + 1)))
        xi, eta = hg.random_points(rng, n, 2)
        worst = max(worst, float(gr.green_transform_check(auto, xi, eta)))
    return worst


def green_suite(n=1, samples=1000, seed=0):
    out = [
        record("green", "harmonicity", n, 100, harmonicity_residual(n, 100, seed), 1e-8),
        record("green", "transformation law", n, 200, transform_residual(n, 200, seed), 1e-9),
    ]
    est = gr.compute_CQ(n, gr.PRODUCT_RADIAL)
    out.append(record("green", "C_Q product-radial vs closed form", n, est.samples,
                      abs(est.value - gr.C_Q(n)) / gr.C_Q(n), 1e-8))
    return out


# ---------------------------------------------------------------------------
# sphere model
# ---------------------------------------------------------------------------

def _elements(rng, n, count, max_T=3.0):
    return [sp.random_element(rng, n, max_T) for _ in range(count)]


def distance_invariance_residual(rng, n, count=100):
    worst = 0.0
    for g in _elements(rng, n, count):
        p, q = sp.random_ball_points(rng, n, 2, 0.9)
        d0 = sp.hyp_distance(p, q)
        d1 = sp.hyp_distance(sp.act(g, p), sp.act(g, q))
        worst = max(worst, abs(d1 - d0))
    return worst


def cocycle_residual(rng, n, count=100):
    worst = 0.0
    for _ in range(count):
        g1, g2 = _elements(rng, n, 2)
        z = sp.random_sphere_points(rng, n, 1)[0]
        whole = sp.conformal_factor(sp.sp_mul(g1, g2), z)
        split = sp.conformal_factor(g1, z) * sp.conformal_factor(g2, sp.act(g1, z))
        worst = max(worst, abs(whole - split) / whole)
    return worst


def q_form_residual(rng, n, count=100):
    worst = 0.0
    for g in _elements(rng, n, count):
        z, w = sp.random_sphere_points(rng, n, 2)
        lhs = sp.q_form(sp.image_row(g, z), sp.image_row(g, w))
        rhs = qt.ONE - qt.hform(z, w)
        worst = max(worst, np.abs(lhs - rhs).max() / max(1.0, np.abs(sp.image_row(g, z)).max() ** 2))
    return worst


def sphere_metric_residual(rng, n, count=20):
    """FD ratio of pushed-forward horizontal vectors against the conformal factor."""
    worst = 0.0
    for g in _elements(rng, n, count):
        z = sp.random_sphere_points(rng, n, 1)[0]
        lam = sp.conformal_factor(g, z)
        for v in sp.horizontal_basis(z):
            w = numdiff.directional(lambda x: sp.act(g, x), z, v)
            worst = max(worst, abs(np.linalg.norm(w) / np.linalg.norm(v) - lam) / lam)
    return worst


def cayley_metric_residual(rng, n, count=20):
    """FD check of ``F^* g0 = g_S / (2 |1 + zeta_{n+1}|^2)`` with ``g_S = 4 |.|^2`` on horizontals."""
    worst = 0.0
    for z in sp.random_sphere_points(rng, n, count):
        if sp.cayley_factor(z) < 0.2:
            continue
        target = 4.0 / sp.cayley_factor(z)
        for v in sp.horizontal_basis(z):
            w = numdiff.directional(sp.cayley, z, v)
            theta = hg.contact_form(sp.cayley(z), w)
            worst = max(worst, abs(hg.horizontal_norm2(w) - target) / target,
                        float(np.abs(theta).max()) / np.linalg.norm(w))
    return worst


def green_covariance_residual(rng, n, count=200):
    Q = hg.homogeneous_dim(n)
    worst = 0.0
    for g in _elements(rng, n, count):
        p, pp = sp.random_sphere_points(rng, n, 2)
        lhs = sp.sphere_green(sp.act(g, p), sp.act(g, pp))
        rhs = ((sp.conformal_factor(g, p) * sp.conformal_factor(g, pp)) ** (-(Q - 2) / 2)
               * sp.sphere_green(p, pp))
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst


def cayley_green_residual(rng, n, count=200):
    Q = hg.homogeneous_dim(n)
    pts = sp.random_sphere_points(rng, n, 2 * count)
    pts[..., -1, 0] = np.abs(pts[..., -1, 0])
    pts = sp.sphere_point(pts)
    p, pp = pts[:count], pts[count:]
    lhs = sp.sphere_green(p, pp)
    rhs = ((sp.cayley_factor(p) * sp.cayley_factor(pp)) ** (-(Q - 2) / 4)
           * gr.heis_green(sp.cayley(p), sp.cayley(pp)))
    return float(np.max(np.abs(lhs - rhs) / rhs))


def sphere_suite(n=1, samples=1000, seed=0):
    rng = np.random.default_rng(seed)
    return [
        record("sphere", "distance invariance", n, 100, distance_invariance_residual(rng, n), 1e-9),
        record("sphere", "conformal factor cocycle", n, 100, cocycle_residual(rng, n), 1e-12),
        record("sphere", "Q-form identity", n, 100, q_form_residual(rng, n), 1e-10),
        record("sphere", "metric factor (FD)", n, 20, sphere_metric_residual(rng, n), 1e-6),
        record("sphere", "Cayley conformality (FD)", n, 20, cayley_metric_residual(rng, n), 1e-6),
        record("sphere", "sphere Green covariance", n, 200, green_covariance_residual(rng, n), 1e-9),
        record("sphere", "Cayley consistency", n, 200, cayley_green_residual(rng, n), 1e-9),
    ]


SUITES = {
    "algebra": algebra_suite,
    "heisenberg": heisenberg_suite,
    "calculus": calculus_suite,
    "green": green_suite,
    "sphere": sphere_suite,
}


def run(suites=None, n=1, samples=1000, seed=0, structure=None):
    """Run the named suites (all by default) and return their records in order."""
    names = list(SUITES) if not suites else list(suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    out = []
    for name in names:
        if name == "algebra":
            out.extend(algebra_suite(n, samples, seed, structure))
        else:
            out.extend(SUITES[name](n, samples, seed))
    return out
