"""The quaternionic Heisenberg group ``H^n = H^n (+) Im H``.

Points are real arrays of shape ``(..., 4n + 3)``: the first ``4n`` entries
are ``y`` (quaternion blocks ``y_{4l+1..4l+4}``), the last three are ``t``.
All functions broadcast over leading axes.

Normalizations fixed here and relied on elsewhere:

* ``g0(Y_j, Y_k) = 2 delta_jk`` for the left-invariant frame ``Y_j``;
* ``2 theta_{0;s} = dt_s - 2 sum b^s_{kj} y_{4l+k} dy_{4l+j}``.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import quaternion as qt
from .errors import DimensionMismatch, InversionAtOrigin, NonSymplectic, OutOfAnnulus


def dim_n(p):
    d = np.shape(p)[-1]
    if d < 7 or (d - 3) % 4:
        raise DimensionMismatch(f"coordinate length {d} is not 4n+3")
    return (d - 3) // 4


def homogeneous_dim(n):
    return 4 * n + 6


def make_point(y, t):
    """Assemble coordinates from ``y`` (flat ``4n`` or ``(n, 4)``) and ``t`` (3,)."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if y.ndim >= 2 and y.shape[-1] == 4 and t.ndim == y.ndim - 1:
        y = y.reshape(y.shape[:-2] + (-1,))
    return np.concatenate([y, t], axis=-1)


def split(p):
    """Return ``(y, t)`` with ``y`` shaped ``(..., n, 4)``."""
    p = np.asarray(p, dtype=float)
    n = dim_n(p)
    return p[..., :4 * n].reshape(p.shape[:-1] + (n, 4)), p[..., 4 * n:]


def origin(n):
    return np.zeros(4 * n + 3)


def random_points(rng, n, size, scale=1.0):
    return scale * rng.standard_normal((size, 4 * n + 3))


def h_mul(p, q):
    """Group law ``(y, t)(y', t') = (y + y', t + t' + 2 Im(y conj(y')))``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.shape(p)[-1] != np.shape(q)[-1]:
        raise DimensionMismatch("points live in different groups")
    y, t = split(p)
    yp, tp = split(q)
    twist = 2 * np.sum(qt.im_bilinear(y, yp), axis=-2)
    return make_point(y + yp, t + tp + twist)


def h_inv(p):
    return -np.asarray(p, dtype=float)


def h_norm4(p):
    """``|y|^4 + |t|^2``, the fourth power of the gauge norm."""
    p = np.asarray(p, dtype=float)
    n = dim_n(p)
    y2 = np.sum(p[..., :4 * n] ** 2, axis=-1)
    t2 = np.sum(p[..., 4 * n:] ** 2, axis=-1)
    return y2 * y2 + t2


def h_norm(p):
    return h_norm4(p) ** 0.25


def h_distance(p, q):
    """Left-invariant gauge distance ``||p^{-1} q||``."""
    return h_norm(h_mul(h_inv(p), q))


def y_norm2(p):
    p = np.asarray(p, dtype=float)
    n = dim_n(p)
    return np.sum(p[..., :4 * n] ** 2, axis=-1)


# ---------------------------------------------------------------------------
# frame and contact form
# ---------------------------------------------------------------------------

def frame_at(p):
    """Coordinate coefficients of ``Y_1..Y_4n`` at ``p``; shape ``(..., 4n, 4n+3)``.

    ``Y_{4l+j} = d/dy_{4l+j} + 2 sum_{s,k} b^s_{kj} y_{4l+k} d/dt_s``.
    """
    p = np.asarray(p, dtype=float)
    n = dim_n(p)
    y, _ = split(p)
    out = np.zeros(p.shape[:-1] + (4 * n, 4 * n + 3))
    out[..., :, :4 * n] = np.eye(4 * n)
    # tcoef[..., l, j, s] = 2 sum_k b^s_{kj} y_{l,k}
    tcoef = 2 * np.einsum("skj,...lk->...ljs", qt.STRUCTURE, y)
    out[..., :, 4 * n:] = tcoef.reshape(p.shape[:-1] + (4 * n, 3))
    return out


def contact_form(p, v):
    """``(theta_{0;1}, theta_{0;2}, theta_{0;3})`` evaluated on tangent vector ``v``."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    n = dim_n(p)
    y, _ = split(p)
    dy = v[..., :4 * n].reshape(v.shape[:-1] + (n, 4))
    dt = v[..., 4 * n:]
    twist = np.sum(qt.im_bilinear(y, dy), axis=-2)
    return 0.5 * (dt - 2 * twist)


def horizontal_norm2(v):
    """``g0(v, v)`` for a horizontal vector given in coordinates: ``2 |v_y|^2``."""
    v = np.asarray(v, dtype=float)
    n = dim_n(v)
    return 2 * np.sum(v[..., :4 * n] ** 2, axis=-1)


# ---------------------------------------------------------------------------
# automorphisms
# ---------------------------------------------------------------------------

class HeisAuto:
    """A qc automorphism of ``H^n`` with its metric conformal factor.

    ``a.conformal_factor(p)`` is the scalar ``lam`` with ``a^* g0 = lam g0`` at ``p``.
    """

    def __call__(self, p):
        raise NotImplementedError

    def conformal_factor(self, p):
        raise NotImplementedError

    def __matmul__(self, other):
        return Composition((self, other))


@dataclass(frozen=True)
class Dilation(HeisAuto):
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("dilation factor must be positive")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        n = dim_n(p)
        out = p.copy()
        out[..., :4 * n] *= self.delta
        out[..., 4 * n:] *= self.delta ** 2
        return out

    def conformal_factor(self, p):
        return np.full(np.shape(p)[:-1], self.delta ** 2)


@dataclass(frozen=True, eq=False)
class LeftTranslation(HeisAuto):
    q: np.ndarray

    def __call__(self, p):
        return h_mul(self.q, p)

    def conformal_factor(self, p):
        return np.ones(np.shape(p)[:-1])


@dataclass(frozen=True, eq=False)
class Rotation(HeisAuto):
    """``(y, t) -> (y U, t)`` for ``U`` in Sp(n), given as an ``(n, n, 4)`` array."""

    U: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        resid = np.max(np.abs(qt.matmul(U, qt.conj_transpose(U)) - qt.identity(U.shape[0])))
        if resid > self.tol:
            raise NonSymplectic(f"matrix is not in Sp(n) (residual {resid:.3e})")

    def __call__(self, p):
        y, t = split(p)
        return make_point(qt.vecmat(y, np.asarray(self.U, dtype=float)), t)

    def conformal_factor(self, p):
        return np.ones(np.shape(p)[:-1])


@dataclass(frozen=True, eq=False)
class Sp1(HeisAuto):
    """``(y, t) -> (sigma y, sigma t sigma^{-1})`` for a unit quaternion sigma."""

    sigma: np.ndarray

    def __post_init__(self):
        if abs(qt.qnorm(self.sigma) - 1) > 1e-12:
            raise ValueError("sigma must be a unit quaternion")

    def __call__(self, p):
        y, t = split(p)
        s = np.asarray(self.sigma, dtype=float)
        ynew = qt.qmul(s, y)
        tq = qt.qmul(qt.qmul(s, qt.im_pure(t)), qt.qconj(s))
        return make_point(ynew, tq[..., 1:])

    def conformal_factor(self, p):
        return np.ones(np.shape(p)[:-1])


@dataclass(frozen=True)
class Inversion(HeisAuto):
    """``R(y, t) = (-(|y|^2 - t)^{-1} y, -t / (|y|^4 + |t|^2))``."""

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        rho = h_norm4(p)
        if np.any(rho == 0):
            raise InversionAtOrigin("inversion is undefined at the origin")
        y, t = split(p)
        a = qt.im_compose(y_norm2(p), -t)
        ynew = -qt.qmul(qt.qinv(a)[..., None, :], y)
        return make_point(ynew, -t / rho[..., None])

    def conformal_factor(self, p):
        rho = h_norm4(p)
        if np.any(rho == 0):
            raise InversionAtOrigin("inversion is undefined at the origin")
        return 1.0 / rho


@dataclass(frozen=True)
class Composition(HeisAuto):
    """``parts[0] o parts[1] o ... o parts[-1]``; the last part is applied first."""

    parts: Tuple[HeisAuto, ...] = field(default_factory=tuple)

    def __call__(self, p):
        for a in reversed(self.parts):
            p = a(p)
        return p

    def conformal_factor(self, p):
        lam = np.ones(np.shape(p)[:-1])
        for a in reversed(self.parts):
            lam = lam * a.conformal_factor(p)
            p = a(p)
        return lam


def apply_auto(a, p):
    return a(p)


def auto_conformal_factor(a, p):
    return a.conformal_factor(p)


def random_auto(rng, n, length=3, include_inversion=True):
    """A random composite automorphism, for property tests."""
    parts = []
    kinds = ["dilation", "translation", "rotation", "sp1"]
    if include_inversion:
        kinds.append("inversion")
    for _ in range(length):
        kind = kinds[rng.integers(len(kinds))]
        if kind == "dilation":
            parts.append(Dilation(float(np.exp(rng.uniform(-1, 1)))))
        elif kind == "translation":
            parts.append(LeftTranslation(rng.standard_normal(4 * n + 3)))
        elif kind == "rotation":
            parts.append(Rotation(qt.random_symplectic(rng, n)))
        elif kind == "sp1":
            parts.append(Sp1(qt.random_quaternion(rng, unit=True)))
        else:
            parts.append(Inversion())
    return Composition(tuple(parts))


# ---------------------------------------------------------------------------
# connected-sum gluing
# ---------------------------------------------------------------------------

def glue_auto(t, sigma, A):
    """``D_t o R o sigma o A`` as a composite automorphism."""
    return Composition((Dilation(t), Inversion(), Sp1(sigma), Rotation(A)))


def glue_map(t, sigma, A, p):
    """Gluing map of the connected sum on the annulus ``t < ||p|| < 1``.

    Swaps the two boundary spheres: ``||glue_map(p)|| = t / ||p||``.
    """
    if not 0 < t < 1:
        raise ValueError("neck parameter t must lie in (0, 1)")
    r = h_norm(p)
    # boundary spheres are admitted up to rounding
    slack = 1e-12
    if np.any(r < t * (1 - slack)) or np.any(r > 1 + slack):
        raise OutOfAnnulus(f"points must satisfy {t} <= ||p|| <= 1")
    return glue_auto(t, sigma, A)(p)
