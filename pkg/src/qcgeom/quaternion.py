"""Quaternion arithmetic on numpy arrays.

A quaternion ``w + x1 i + x2 j + x3 k`` is stored as the last axis of an
array of shape ``(..., 4)``.  Every function broadcasts over leading axes.

Convention used across the package: ``H^m`` is a LEFT quaternionic vector
space.  Scalars multiply vectors from the left and matrices act on row
vectors from the right, ``(v M)_l = sum_m v_m M_{ml}``.  A quaternionic
matrix is an array of shape ``(rows, cols, 4)``.
"""

import numpy as np

# 4x4 real structure matrices b^s with Im(x conj(x')) = sum_{k,j} b^s_{kj} x_k x'_j i_s
B1 = np.array([[0, -1, 0, 0],
               [1, 0, 0, 0],
               [0, 0, 0, -1],
               [0, 0, 1, 0]], dtype=float)
B2 = np.array([[0, 0, -1, 0],
               [0, 0, 0, 1],
               [1, 0, 0, 0],
               [0, -1, 0, 0]], dtype=float)
B3 = np.array([[0, 0, 0, -1],
               [0, 0, -1, 0],
               [0, 1, 0, 0],
               [1, 0, 0, 0]], dtype=float)
STRUCTURE = np.stack([B1, B2, B3])

ONE = np.array([1.0, 0.0, 0.0, 0.0])
I = np.array([0.0, 1.0, 0.0, 0.0])
J = np.array([0.0, 0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 0.0, 1.0])

ZERO_TOL = 1e-300


def quat(w=0.0, x1=0.0, x2=0.0, x3=0.0):
    return np.array([w, x1, x2, x3], dtype=float)


def qmul(a, b):
    """Hamilton product ``a b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2, a3 = np.moveaxis(a, -1, 0)
    b0, b1, b2, b3 = np.moveaxis(b, -1, 0)
    return np.stack([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ], axis=-1)


def qconj(a):
    a = np.asarray(a, dtype=float)
    return a * np.array([1.0, -1.0, -1.0, -1.0])


def qnorm2(a):
    a = np.asarray(a, dtype=float)
    return np.sum(a * a, axis=-1)


def qnorm(a):
    return np.sqrt(qnorm2(a))


def qinv(a):
    """Inverse ``conj(a) / |a|^2``; raises ZeroDivisionError for ``a == 0``."""
    n2 = qnorm2(a)
    if np.any(n2 <= ZERO_TOL):
        raise ZeroDivisionError("quaternion is zero to working precision")
    return qconj(a) / n2[..., None]


def left_matrix(a):
    """Real 4x4 matrix L(a) with ``L(a) @ b == qmul(a, b)``."""
    a0, a1, a2, a3 = np.moveaxis(np.asarray(a, dtype=float), -1, 0)
    rows = [
        [a0, -a1, -a2, -a3],
        [a1, a0, -a3, a2],
        [a2, a3, a0, -a1],
        [a3, -a2, a1, a0],
    ]
    return np.moveaxis(np.array(rows), (0, 1), (-2, -1))


def right_matrix(b):
    """Real 4x4 matrix R(b) with ``R(b) @ a == qmul(a, b)``."""
    b0, b1, b2, b3 = np.moveaxis(np.asarray(b, dtype=float), -1, 0)
    rows = [
        [b0, -b1, -b2, -b3],
        [b1, b0, b3, -b2],
        [b2, -b3, b0, b1],
        [b3, b2, -b1, b0],
    ]
    return np.moveaxis(np.array(rows), (0, 1), (-2, -1))


def im_decompose(x):
    """Split ``x`` into ``(Re x, (x1, x2, x3))``."""
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1:]


def im_compose(re, im):
    re = np.asarray(re, dtype=float)
    im = np.asarray(im, dtype=float)
    return np.concatenate([re[..., None], im], axis=-1)


def im_pure(v):
    """Embed a real 3-vector as a pure imaginary quaternion."""
    v = np.asarray(v, dtype=float)
    return np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)


def im_bilinear(x, xp):
    """``Im(x conj(x'))`` evaluated through the structure matrices."""
    return np.einsum("skj,...k,...j->...s", STRUCTURE, x, xp)


# ---------------------------------------------------------------------------
# vectors and matrices over H
# ---------------------------------------------------------------------------

def hform(q, p):
    """Hyperhermitian form ``<q, p> = sum_l q_l conj(p_l)``; shapes ``(..., m, 4)``."""
    return np.sum(qmul(q, qconj(p)), axis=-2)


def vnorm2(q):
    return np.sum(q * q, axis=(-2, -1))


def scale_left(c, v):
    """Left scalar multiplication ``c v`` of a vector ``(..., m, 4)``."""
    c = np.asarray(c, dtype=float)
    return qmul(c[..., None, :], v)


def vecmat(v, m):
    """Right action of matrix ``m`` (rows, cols, 4) on row vector ``v`` (..., rows, 4)."""
    return np.sum(qmul(v[..., :, None, :], m), axis=-3)


def matmul(a, b):
    """Quaternionic matrix product; shapes ``(..., r, m, 4)`` and ``(..., m, c, 4)``."""
    return np.sum(qmul(a[..., :, :, None, :], b[..., None, :, :, :]), axis=-3)


def conj_transpose(m):
    return qconj(np.swapaxes(m, -3, -2))


def identity(size):
    out = np.zeros((size, size, 4))
    out[np.arange(size), np.arange(size), 0] = 1.0
    return out


def real_matrix(m):
    """Real ``(4r, 4c)`` representation acting on stacked real row vectors.

    ``vecmat(v, m).reshape(-1) == v.reshape(-1) @ real_matrix(m)``.
    """
    m = np.asarray(m, dtype=float)
    r, c = m.shape[:2]
    out = np.zeros((4 * r, 4 * c))
    for a in range(r):
        for b in range(c):
            # (v_a m_ab) as a function of v_a is R(m_ab) @ v_a
            out[4 * a:4 * a + 4, 4 * b:4 * b + 4] = right_matrix(m[a, b]).T
    return out


def random_quaternion(rng, size=None, unit=False):
    shape = (4,) if size is None else tuple(np.atleast_1d(size)) + (4,)
    q = rng.standard_normal(shape)
    if unit:
        q = q / qnorm(q)[..., None]
    return q


def random_symplectic(rng, size):
    """Random element of Sp(size): rows orthonormal for the hyperhermitian form."""
    m = rng.standard_normal((size, size, 4))
    rows = []
    for i in range(size):
        r = m[i]
        for prev in rows:
            r = r - scale_left(hform(r, prev), prev)
        r = r / np.sqrt(vnorm2(r))
        rows.append(r)
    return np.stack(rows)
