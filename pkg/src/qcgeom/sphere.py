"""Ball model, the sphere ``S^{4n+3}`` and the conformal action of Sp(n+1,1).

Points of ``H^{n+1}`` are arrays ``(..., n+1, 4)``.  A group element is an
``(n+2, n+2, 4)`` quaternionic matrix acting on homogeneous row vectors
``(zeta, 1)`` from the right, followed by left division by the last entry.
"""

import numpy as np

from . import heisenberg as hg
from . import quaternion as qt
from .errors import (
    BoundaryPoint,
    CoincidentPoints,
    NonSymplectic,
    ProjectiveDenominatorUnderflow,
    SouthPole,
)

SP_TOL = 1e-10
DENOMINATOR_TOL = 1e-12
BOUNDARY_TOL = 1e-14
SOUTH_POLE_TOL = 1e-12
COINCIDENCE_TOL = 1e-14


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------

def sphere_point(zeta):
    """Snap onto the unit sphere."""
    zeta = np.asarray(zeta, dtype=float)
    return zeta / np.sqrt(qt.vnorm2(zeta))[..., None, None]


def random_sphere_points(rng, n, size):
    return sphere_point(rng.standard_normal((size, n + 1, 4)))


def random_ball_points(rng, n, size, max_radius=0.95):
    z = random_sphere_points(rng, n, size)
    r = max_radius * rng.uniform(0, 1, size) ** (1.0 / (4 * n + 4))
    return r[:, None, None] * z


def north_pole(n):
    z = np.zeros((n + 1, 4))
    z[n, 0] = 1.0
    return z


def homogeneous(zeta):
    """``(zeta, 1)`` as an ``(..., n+2, 4)`` row."""
    zeta = np.asarray(zeta, dtype=float)
    one = np.zeros(zeta.shape[:-2] + (1, 4))
    one[..., 0, 0] = 1.0
    return np.concatenate([zeta, one], axis=-2)


def dehomogenize(v):
    d = v[..., -1, :]
    if np.any(qt.qnorm(d) < DENOMINATOR_TOL):
        raise ProjectiveDenominatorUnderflow("last homogeneous coordinate vanishes")
    return qt.qmul(qt.qinv(d)[..., None, :], v[..., :-1, :])


def spherical_distance(a, b):
    """Euclidean chord length on ``S^{4n+3}``."""
    return np.sqrt(np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=(-2, -1)))


# ---------------------------------------------------------------------------
# the group
# ---------------------------------------------------------------------------

def form_matrix(n):
    """``J = diag(-1, ..., -1, +1)`` of size ``n+2``."""
    J = -qt.identity(n + 2)
    J[n + 1, n + 1, 0] = 1.0
    return J


def q_form(v, w):
    """``-sum_{l<=n+1} v_l conj(w_l) + v_{n+2} conj(w_{n+2})`` on homogeneous rows."""
    prod = qt.qmul(v, qt.qconj(w))
    return prod[..., -1, :] - np.sum(prod[..., :-1, :], axis=-2)


def sp_residual(g, relative=False):
    """``max |g J g^* - J|``; with ``relative`` divided by ``max(1, max|g_ij|^2)``."""
    g = np.asarray(g, dtype=float)
    J = form_matrix(g.shape[0] - 2)
    r = float(np.max(np.abs(qt.matmul(qt.matmul(g, J), qt.conj_transpose(g)) - J)))
    if relative:
        r /= max(1.0, float(np.max(qt.qnorm2(g))))
    return r


def sp_check(g, tol=SP_TOL, relative=False):
    """Membership test in Sp(n+1,1); returns ``(ok, residual)``."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 3 or g.shape[0] != g.shape[1] or g.shape[2] != 4:
        raise ValueError("expected a square quaternionic matrix")
    r = sp_residual(g, relative)
    return r < tol, r


def sp_inverse(g):
    """``g^{-1} = J g^* J``."""
    J = form_matrix(np.shape(g)[0] - 2)
    return qt.matmul(qt.matmul(J, qt.conj_transpose(g)), J)


def sp_mul(*gs):
    out = gs[0]
    for g in gs[1:]:
        out = qt.matmul(out, g)
    return out


def identity_elem(n):
    return qt.identity(n + 2)


def boost(T, n=1):
    """Loxodromic with translation length ``T`` along the real axis of coordinates 1 and n+2."""
    g = qt.identity(n + 2)
    c, s = np.cosh(T / 2), np.sinh(T / 2)
    g[0, 0, 0] = c
    g[n + 1, n + 1, 0] = c
    g[0, n + 1, 0] = s
    g[n + 1, 0, 0] = s
    return g


def rotation_elem(U, tol=1e-12):
    """``diag(U, 1)`` for ``U`` in Sp(n+1)."""
    U = np.asarray(U, dtype=float)
    m = U.shape[0]
    resid = np.max(np.abs(qt.matmul(U, qt.conj_transpose(U)) - qt.identity(m)))
    if resid > tol:
        raise NonSymplectic(f"rotation block is not in Sp({m}) (residual {resid:.3e})")
    g = qt.identity(m + 1)
    g[:m, :m] = U
    return g


def conjugate(g, h):
    """``g h g^{-1}``."""
    return sp_mul(g, h, sp_inverse(g))


def random_element(rng, n, max_T=3.0):
    """``R1 boost(T) R2`` with Haar-random rotations."""
    T = rng.uniform(0, max_T)
    R1 = rotation_elem(qt.random_symplectic(rng, n + 1))
    R2 = rotation_elem(qt.random_symplectic(rng, n + 1))
    return sp_mul(R1, boost(T, n), R2)


def orthogonalize(g):
    """One Newton-Schulz step toward ``g J g^* = J``.

    Useful only for moderately sized entries: for long loxodromic words the
    correction is below working precision and ``g`` is returned unchanged.
    """
    J = form_matrix(g.shape[0] - 2)
    E = qt.matmul(qt.matmul(qt.matmul(J, qt.conj_transpose(g)), J), g)
    scale = np.max(qt.qnorm2(g))
    if scale > 1e6:
        return g
    corr = 3 * qt.identity(g.shape[0]) - E
    return 0.5 * qt.matmul(g, corr)


# ---------------------------------------------------------------------------
# action
# ---------------------------------------------------------------------------

def image_row(g, zeta):
    return qt.vecmat(homogeneous(zeta), np.asarray(g, dtype=float))


def act(g, zeta):
    """``[(zeta,1) g]_{n+2}^{-1} [(zeta,1) g]_l`` for ``l <= n+1``."""
    return dehomogenize(image_row(g, zeta))


def conformal_factor(g, zeta):
    """``|g'(zeta)| = 1 / |[(zeta,1) g]_{n+2}|``; ``g^* g_S = |g'|^2 g_S`` on horizontals."""
    d = qt.qnorm(image_row(g, zeta)[..., -1, :])
    if np.any(d < DENOMINATOR_TOL):
        raise ProjectiveDenominatorUnderflow("last homogeneous coordinate vanishes")
    return 1.0 / d


def horizontal_basis(zeta):
    """Orthonormal basis of ``H_zeta = {v : <v, zeta> = 0}`` as ``(..., 4n, n+1, 4)``."""
    zeta = np.asarray(zeta, dtype=float)
    m = zeta.shape[-2]
    flat = zeta.reshape(zeta.shape[:-2] + (4 * m,))
    # the quaternionic line through zeta is spanned by u zeta, u = 1, i, j, k
    units = np.eye(4)
    line = np.stack([qt.scale_left(u, zeta).reshape(flat.shape) for u in units], axis=-2)
    proj = np.eye(4 * m) - np.swapaxes(line, -1, -2) @ line
    w, v = np.linalg.eigh(proj)
    basis = v[..., :, -4 * (m - 1):]
    return np.swapaxes(basis, -1, -2).reshape(zeta.shape[:-2] + (4 * (m - 1), m, 4))


# ---------------------------------------------------------------------------
# hyperbolic geometry of the ball
# ---------------------------------------------------------------------------

def _check_ball(q):
    r = 1 - qt.vnorm2(q)
    if np.any(r < BOUNDARY_TOL):
        raise BoundaryPoint("point is not strictly inside the ball")
    return r


def hyp_distance(p, q):
    """``2 arccosh |(q, p)|`` evaluated stably through ``sinh^2(d/2)``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    rp = _check_ball(p)
    rq = _check_ball(q)
    a = qt.hform(q, p)
    gram = qt.vnorm2(q) * qt.vnorm2(p) - qt.qnorm2(a)
    num = qt.vnorm2(q - p) - gram
    return 2 * np.arcsinh(np.sqrt(np.maximum(num, 0.0) / (rp * rq)))


def distance_from_origin_row(v, base_r=1.0):
    """``d(0, g q)`` from the image row ``v = (q,1) g`` with ``base_r = 1 - |q|^2``.

    ``cosh(d/2) = |v_{n+2}| / sqrt(1 - |q|^2)`` needs no division by ``1 - |gq|^2``.
    """
    c = qt.qnorm(v[..., -1, :]) / np.sqrt(base_r)
    return 2 * np.arccosh(np.maximum(c, 1.0))


def buseman(p, xi, q):
    """``ln(|1-<p,p>| |1-<q,xi>|^2 / (|1-<q,q>| |1-<p,xi>|^2))``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    xi = np.asarray(xi, dtype=float)
    rp = _check_ball(p)
    rq = _check_ball(q)
    one = qt.ONE
    a = qt.qnorm2(one - qt.hform(q, xi))
    b = qt.qnorm2(one - qt.hform(p, xi))
    return np.log(rp * a / (rq * b))


# ---------------------------------------------------------------------------
# Cayley transform
# ---------------------------------------------------------------------------

def cayley(zeta):
    """Stereographic projection ``S^{4n+3}`` minus the south pole onto ``H^n``.

    ``y = (1 + zeta_{n+1})^{-1} zeta'`` and ``t = 2 Im zeta_{n+1} / |1 + zeta_{n+1}|^2``.
    """
    zeta = np.asarray(zeta, dtype=float)
    a = zeta[..., -1, :] + qt.ONE
    na = qt.qnorm2(a)
    if np.any(np.sqrt(na) < SOUTH_POLE_TOL):
        raise SouthPole("the south pole has no Cayley image")
    y = qt.qmul(qt.qinv(a)[..., None, :], zeta[..., :-1, :])
    t = 2 * zeta[..., -1, 1:] / na[..., None]
    return hg.make_point(y, t)


def cayley_inv(p):
    """Inverse of :func:`cayley`."""
    y, t = hg.split(p)
    qn1 = qt.im_compose(hg.y_norm2(p), -t)
    b = qn1 + qt.ONE
    binv = qt.qinv(b)
    last = qt.qmul(qt.ONE - qn1, binv)
    head = 2 * qt.qmul(binv[..., None, :], y)
    return np.concatenate([head, last[..., None, :]], axis=-2)


def cayley_factor(zeta):
    """``2 |1 + zeta_{n+1}|^2``: ``F^* g0 = g_S / cayley_factor``."""
    zeta = np.asarray(zeta, dtype=float)
    return 2 * qt.qnorm2(zeta[..., -1, :] + qt.ONE)


# ---------------------------------------------------------------------------
# Green function on the sphere
# ---------------------------------------------------------------------------

def sphere_green(p, pp, cq=None):
    """``C_Q (4 |1 - <p, p'>|)^{-(Q-2)/2}``."""
    from .green import C_Q

    p = np.asarray(p, dtype=float)
    pp = np.asarray(pp, dtype=float)
    n = p.shape[-2] - 1
    Q = hg.homogeneous_dim(n)
    if cq is None:
        cq = C_Q(n)
    gap = qt.qnorm(qt.ONE - qt.hform(p, pp))
    if np.any(gap < COINCIDENCE_TOL):
        raise CoincidentPoints("sphere Green function is singular on the diagonal")
    return cq * (4 * gap) ** (-(Q - 2) / 2)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def element_to_json(g):
    g = np.asarray(g, dtype=float)
    return {"rows": g.tolist(), "sp_residual": sp_residual(g, relative=True)}


def element_from_json(obj):
    return np.asarray(obj["rows"], dtype=float)
