"""Sub-Riemannian calculus on the flat model.

Everything here is expressed through the left-invariant frame ``Y_j`` of
:mod:`qcgeom.heisenberg`.  Because the ``y``-derivative of the ``t``-part of
``Y_j`` along ``Y_j`` is an antisymmetric-matrix diagonal entry, the second
order operator ``Y_j Y_j f`` is exactly ``Y_j^T (Hess f) Y_j``.

Conventions: ``Delta_0 = -1/2 sum_j Y_j Y_j`` and ``|grad_0 f|^2 = 1/2 sum_j (Y_j f)^2``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import heisenberg as hg
from . import numdiff
from .errors import DegenerateDenominator, NonPositiveConformalFactor

CLOSED_FORM = "closed-form"
FINITE_DIFFERENCE = "finite-difference"


def yamabe_constant(n):
    """``b_n = 4 (Q + 2) / (Q - 2)``."""
    Q = hg.homogeneous_dim(n)
    return 4.0 * (Q + 2) / (Q - 2)


# ---------------------------------------------------------------------------
# scalar fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """A real function on ``H^n`` with Euclidean first and second derivatives.

    When ``grad_fn`` and ``hess_fn`` are both supplied the field is in
    closed-form mode; otherwise derivatives come from Richardson differences.
    All callables take stacked points ``(..., 4n+3)``.
    """

    fn: Callable
    grad_fn: Optional[Callable] = None
    hess_fn: Optional[Callable] = None
    name: str = "field"

    @property
    def mode(self):
        if self.grad_fn is not None and self.hess_fn is not None:
            return CLOSED_FORM
        return FINITE_DIFFERENCE

    def __call__(self, p):
        return self.fn(np.asarray(p, dtype=float))

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        if self.grad_fn is not None:
            return self.grad_fn(p)
        return numdiff.gradient(self.fn, p, h=numdiff.HESSIAN_STEP)

    def hessian(self, p):
        p = np.asarray(p, dtype=float)
        if self.hess_fn is not None:
            return self.hess_fn(p)
        return numdiff.hessian(self.fn, p)

    def as_finite_difference(self):
        return ScalarField(self.fn, name=self.name + "[fd]")

    def scaled(self, c):
        c = float(c)
        return ScalarField(
            lambda p: c * self.fn(p),
            None if self.grad_fn is None else (lambda p: c * self.grad_fn(p)),
            None if self.hess_fn is None else (lambda p: c * self.hess_fn(p)),
            name=f"{c}*{self.name}",
        )

    def translated(self, q):
        """``p -> f(q^{-1} p)``; the map is affine so derivatives stay exact."""
        q = np.asarray(q, dtype=float)
        qinv = hg.h_inv(q)
        M = left_translation_jacobian(qinv)

        def fn(p):
            return self.fn(hg.h_mul(qinv, p))

        if self.mode == FINITE_DIFFERENCE:
            return ScalarField(fn, name=f"{self.name}@q")

        def grad(p):
            return self.grad_fn(hg.h_mul(qinv, p)) @ M

        def hess(p):
            return M.T @ self.hess_fn(hg.h_mul(qinv, p)) @ M

        return ScalarField(fn, grad, hess, name=f"{self.name}@q")


def left_translation_jacobian(q):
    """Constant Jacobian of ``p -> q p``."""
    q = np.asarray(q, dtype=float)
    n = hg.dim_n(q)
    d = 4 * n + 3
    return np.stack([hg.h_mul(q, e) - hg.h_mul(q, np.zeros(d)) for e in np.eye(d)], axis=-1)


def _rho_parts(p):
    """``rho = |y|^4 + |t|^2`` with its Euclidean gradient and Hessian."""
    p = np.asarray(p, dtype=float)
    n = hg.dim_n(p)
    m = 4 * n
    y = p[..., :m]
    t = p[..., m:]
    y2 = np.sum(y * y, axis=-1)
    rho = y2 * y2 + np.sum(t * t, axis=-1)
    grad = np.concatenate([4 * y2[..., None] * y, 2 * t], axis=-1)
    hess = np.zeros(p.shape[:-1] + (m + 3, m + 3))
    hess[..., :m, :m] = 4 * y2[..., None, None] * np.eye(m) + 8 * y[..., :, None] * y[..., None, :]
    hess[..., m:, m:] = 2 * np.eye(3)
    return rho, grad, hess


def radial_field(g, dg, d2g, name="radial"):
    """Closed-form field ``f = g(rho)`` with ``rho = ||p||^4``."""

    def fn(p):
        return g(hg.h_norm4(p))

    def grad(p):
        rho, gr, _ = _rho_parts(p)
        return dg(rho)[..., None] * gr

    def hess(p):
        rho, gr, H = _rho_parts(p)
        return d2g(rho)[..., None, None] * gr[..., :, None] * gr[..., None, :] + dg(rho)[..., None, None] * H

    return ScalarField(fn, grad, hess, name=name)


def norm4_field():
    """``||p||^4``."""
    return radial_field(lambda r: r, np.ones_like, np.zeros_like, name="norm4")


def regularized_kernel_field(n, eps):
    """``(||p||^4 + eps^2)^{-(Q-2)/4}``."""
    a = -(hg.homogeneous_dim(n) - 2) / 4.0
    e2 = float(eps) ** 2
    return radial_field(
        lambda r: (r + e2) ** a,
        lambda r: a * (r + e2) ** (a - 1),
        lambda r: a * (a - 1) * (r + e2) ** (a - 2),
        name=f"reg_kernel(eps={eps})",
    )


def norm_power_field(alpha):
    """``||p||^alpha``, smooth away from the origin."""
    a = alpha / 4.0
    return radial_field(
        lambda r: r ** a,
        lambda r: a * r ** (a - 1),
        lambda r: a * (a - 1) * r ** (a - 2),
        name=f"norm^{alpha}",
    )


def log_inverse_norm_field():
    """``ln(1 / ||p||) = -ln(rho) / 4``."""
    return radial_field(
        lambda r: -0.25 * np.log(r),
        lambda r: -0.25 / r,
        lambda r: 0.25 / r ** 2,
        name="log_inv_norm",
    )


def bump_field(radius=1.0):
    """Smooth compactly supported ``exp(1 - 1/(1 - rho/R^4))`` on the gauge ball of radius ``R``."""
    R4 = float(radius) ** 4

    def parts(r):
        u = np.asarray(r, dtype=float) / R4
        inside = u < 1
        w = np.where(inside, 1 - u, 1.0)
        g = np.where(inside, np.exp(1 - 1 / w), 0.0)
        # d/du exp(1 - 1/w) with w = 1 - u
        dgu = -g / w ** 2
        d2gu = g / w ** 4 - 2 * g / w ** 3
        return g, dgu / R4, d2gu / R4 ** 2

    return radial_field(
        lambda r: parts(r)[0], lambda r: parts(r)[1], lambda r: parts(r)[2], name=f"bump(R={radius})"
    )


def polynomial_field(rng, n, scale=0.3):
    """Random cubic ``c + b.x + x.A.x/2 + (u.x)^3`` with closed-form derivatives."""
    d = 4 * n + 3
    c = rng.standard_normal()
    b = scale * rng.standard_normal(d)
    A = scale * rng.standard_normal((d, d))
    A = A + A.T
    u = scale * rng.standard_normal(d)

    def fn(p):
        s = p @ u
        return c + p @ b + 0.5 * np.einsum("...i,ij,...j->...", p, A, p) + s ** 3

    def grad(p):
        s = p @ u
        return b + p @ A + 3 * s[..., None] ** 2 * u

    def hess(p):
        s = p @ u
        return A + 6 * s[..., None, None] * np.outer(u, u)

    return ScalarField(fn, grad, hess, name="cubic")


def shipped_fields(n):
    """Fields with closed forms that the library validates against FD."""
    return [
        norm4_field(),
        regularized_kernel_field(n, 0.1),
        regularized_kernel_field(n, 1.0),
        log_inverse_norm_field(),
        norm_power_field(-(hg.homogeneous_dim(n) - 2)),
        bump_field(2.0),
    ]


# ---------------------------------------------------------------------------
# horizontal operators
# ---------------------------------------------------------------------------

def horizontal_gradient(f, p):
    """``(Y_1 f, ..., Y_4n f)`` at ``p``; shape ``(..., 4n)``."""
    return np.einsum("...jd,...d->...j", hg.frame_at(p), f.gradient(p))


def horizontal_derivative(f, j, p):
    """``Y_j f(p)`` for a 0-based frame index ``j``."""
    return horizontal_gradient(f, p)[..., j]


def horizontal_gradient_sq(f, p):
    """``|grad_0 f|^2 = 1/2 sum_j (Y_j f)^2``."""
    return 0.5 * np.sum(horizontal_gradient(f, p) ** 2, axis=-1)


def frame_second(f, p):
    """``sum_j Y_j Y_j f`` at ``p``."""
    F = hg.frame_at(p)
    return np.einsum("...jd,...de,...je->...", F, f.hessian(p), F)


def sublaplacian(f, p):
    """``Delta_0 f = -1/2 sum_j Y_j Y_j f``."""
    return -0.5 * frame_second(f, p)


@dataclass(frozen=True)
class CurvatureReport:
    point: np.ndarray
    scalar_curvature: float
    gradient_norm_sq: float
    sublaplacian: float


def conformal_scalar_curvature_exp(h, p, report=False):
    """Scalar curvature of ``e^{2h} g0``.

    ``e^{-2h} (2(Q+2) Delta_0 h - (Q+2)(Q-2)/2 sum_j (Y_j h)^2)``.
    """
    p = np.asarray(p, dtype=float)
    Q = hg.homogeneous_dim(hg.dim_n(p))
    lap = sublaplacian(h, p)
    ysq = np.sum(horizontal_gradient(h, p) ** 2, axis=-1)
    s = np.exp(-2 * h(p)) * (2 * (Q + 2) * lap - 0.5 * (Q + 2) * (Q - 2) * ysq)
    if report:
        return CurvatureReport(p, s, 0.5 * ysq, lap)
    return s


def conformal_scalar_curvature_phi(phi, p):
    """Scalar curvature of ``phi^{4/(Q-2)} g0``: ``phi^{-(Q+2)/(Q-2)} b_n Delta_0 phi``."""
    p = np.asarray(p, dtype=float)
    n = hg.dim_n(p)
    Q = hg.homogeneous_dim(n)
    val = phi(p)
    if np.any(val <= 0):
        raise NonPositiveConformalFactor("conformal factor must be positive")
    return val ** (-(Q + 2) / (Q - 2)) * yamabe_constant(n) * sublaplacian(phi, p)


def pullback_sublaplacian(phi, f, p):
    """SubLaplacian of ``phi^{4/(Q-2)} g0`` applied to ``f``.

    ``-1/2 phi^{-2Q/(Q-2)} sum_j Y_j (phi^2 Y_j f)``, the divergence form with
    the rescaled frame ``phi^{-2/(Q-2)} Y_j`` and volume ``phi^{2Q/(Q-2)} dV_0``.
    """
    p = np.asarray(p, dtype=float)
    Q = hg.homogeneous_dim(hg.dim_n(p))
    v = phi(p)
    cross = np.sum(horizontal_gradient(phi, p) * horizontal_gradient(f, p), axis=-1)
    return v ** (-2 * Q / (Q - 2)) * (v * v * sublaplacian(f, p) - v * cross)


def volume_density(auto, p, h=numdiff.PUSHFORWARD_STEP):
    """``|det D auto(p)|`` by finite differences; equals ``lam^{Q/2}`` for a qc automorphism."""
    J = numdiff.jacobian(auto, np.asarray(p, dtype=float), h)
    return np.abs(np.linalg.det(J))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

MC_BLOCK = 1 << 15


def block_generator(seed, index):
    """Counter-based stream for block ``index``; independent of how blocks are scheduled."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def block_sizes(N, block=MC_BLOCK):
    full, rest = divmod(int(N), block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(work, seed, N, workers=1, block=MC_BLOCK):
    """Run ``work(rng, size)`` on every block, in block order, possibly in threads."""
    sizes = block_sizes(N, block)
    jobs = [(block_generator(seed, i), s) for i, s in enumerate(sizes)]
    if workers <= 1:
        return [work(rng, s) for rng, s in jobs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(lambda job: work(*job), jobs))


@dataclass(frozen=True)
class QuotientEstimate:
    value: float
    stderr: float
    numerator: float
    denominator: float
    seed: int
    samples: int


def yamabe_quotient(u, n, radius, N, seed, workers=1):
    """Monte Carlo value of ``b_n int |grad_0 u|^2 / (int u^{2Q/(Q-2)})^{(Q-2)/Q}``.

    ``u`` must vanish outside the gauge ball of ``radius``; samples are uniform
    on the box ``[-R, R]^{4n} x [-R^2, R^2]^3`` that contains it.  The standard
    error comes from the delta method on the two sample means.
    """
    Q = hg.homogeneous_dim(n)
    m = 4 * n
    R = float(radius)
    vol = (2 * R) ** m * (2 * R * R) ** 3
    expo = 2 * Q / (Q - 2)

    def work(rng, size):
        x = rng.uniform(-1, 1, size=(size, m + 3))
        x[:, :m] *= R
        x[:, m:] *= R * R
        a = horizontal_gradient_sq(u, x)
        b = np.abs(u(x)) ** expo
        return np.array([a.sum(), b.sum(), (a * a).sum(), (b * b).sum(), (a * b).sum()])

    S = np.sum(map_blocks(work, seed, N, workers), axis=0)
    ma, mb = S[0] / N, S[1] / N
    if mb * vol < 1e-300:
        raise DegenerateDenominator("integral of u^{2Q/(Q-2)} underflows")
    va = S[2] / N - ma ** 2
    vb = S[3] / N - mb ** 2
    cab = S[4] / N - ma * mb
    num = yamabe_constant(n) * ma * vol
    den = (mb * vol) ** ((Q - 2) / Q)
    val = num / den
    # relative variance of ma * mb^{-(Q-2)/Q}
    c = (Q - 2) / Q
    rel2 = (va / ma ** 2 + c * c * vb / mb ** 2 - 2 * c * cab / (ma * mb)) / N
    return QuotientEstimate(val, val * np.sqrt(max(rel2, 0.0)), num, den, int(seed), int(N))


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------

def _record(name, n, lhs, rhs, seed):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    err = np.abs(lhs - rhs)
    scale = np.max(np.abs(rhs))
    return {
        "identity": name,
        "n": int(n),
        "samples": int(lhs.shape[0]),
        "max_abs": float(np.max(err)),
        "max_rel": float(np.max(err) / scale) if scale > 0 else float(np.max(err)),
        "seed": int(seed),
    }


def identity_suite(n, samples=1000, seed=0, mode=CLOSED_FORM):
    """Residuals of the closed-form identities for ``||.||^4`` and related kernels.

    ``max_rel`` is normwise: the largest error divided by the largest
    magnitude of the right-hand side over the sample.
    """
    rng = np.random.default_rng(seed)
    Q = hg.homogeneous_dim(n)
    m = 4 * n
    p = rng.standard_normal((samples, m + 3))
    y, t = hg.split(p)
    y2 = hg.y_norm2(p)
    rho = hg.h_norm4(p)

    def pick(field):
        return field if mode == CLOSED_FORM else field.as_finite_difference()

    records = []
    N4 = pick(norm4_field())

    # Y_{4l+j} ||.||^4 = 4|y|^2 y_{4l+j} + 4 sum b^s_{kj} y_{4l+k} t_s
    from .quaternion import STRUCTURE

    rhs = 4 * y2[:, None, None] * y + 4 * np.einsum("skj,alk,as->alj", STRUCTURE, y, t)
    records.append(_record("app1'", n, horizontal_gradient(N4, p).reshape(samples, -1),
                           rhs.reshape(samples, -1), seed))

    records.append(_record("A2", n, horizontal_gradient_sq(N4, p), 8 * rho * y2, seed))
    records.append(_record("A1", n, sublaplacian(N4, p), -2 * (Q + 2) * y2, seed))

    for eps in (0.1, 1.0):
        K = pick(regularized_kernel_field(n, eps))
        rhs = (Q - 2) * (Q + 2) * y2 * eps ** 2 / (2 * (rho + eps ** 2) ** ((Q + 6) / 4))
        records.append(_record(f"a4(eps={eps})", n, sublaplacian(K, p), rhs, seed))

    h = pick(log_inverse_norm_field())
    target = 0.5 * (Q - 2) * (Q + 2) * y2 / np.sqrt(rho)
    records.append(_record("8899", n, conformal_scalar_curvature_exp(h, p), target, seed))
    phi = pick(norm_power_field(-(Q - 2) / 2))
    records.append(_record("8899(phi)", n, conformal_scalar_curvature_phi(phi, p), target, seed))

    # unit gauge sphere: ||xi||^2 |grad_0 ln(1/||xi||)|^2 = |y|^2 / 2
    pu = p.copy()
    r = hg.h_norm(pu)
    pu[:, :m] /= r[:, None]
    pu[:, m:] /= (r * r)[:, None]
    lhs = hg.h_norm(pu) ** 2 * horizontal_gradient_sq(h, pu)
    records.append(_record("8800", n, lhs, 0.5 * hg.y_norm2(pu), seed))
    return records


IDENTITY_TOLERANCE = {CLOSED_FORM: 1e-10, FINITE_DIFFERENCE: 1e-5}
