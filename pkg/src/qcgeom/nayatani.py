"""The invariant density ``phi_Gamma`` and the scalar curvature of its metric.

On the sphere ``phi_Gamma(xi) = (int G_S(xi, zeta)^kappa dmu(zeta))^{1/kappa}``
with ``kappa = 2 delta / (Q - 2)``.  Curvature is computed on ``H^n`` after the
Cayley transform, where the metric is ``e^{2f} g0`` with

    f = (1/delta) ln sum_i w~_i phi_{eta_i}^{-delta},
    phi_eta(xi) = C_Q^{2/(2-Q)} ||xi^{-1} eta||^2,
    w~_i = w_i (2 |1 + zeta_{i,n+1}|^2)^{-delta/2}.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import calculus as cc
from . import heisenberg as hg
from . import kleinian as kl
from . import quaternion as qt
from . import sphere as sp
from .errors import AtomProximity, InsufficientData
from .green import C_Q

ATOM_CUTOFF = 1e-6
DELTA_FLOOR = 1e-3


def sphere_gauge_distance(a, b):
    """``sqrt(2 |1 - <a, b>|)``; agrees with the gauge distance of Cayley images near the north pole."""
    return np.sqrt(2 * qt.qnorm(qt.ONE - qt.hform(a, b)))


@dataclass
class NayataniField:
    measure: kl.AtomicMeasure
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if len(self.measure.weights) == 0:
            raise ValueError("measure has no atoms")

    @property
    def n(self):
        return self.measure.n

    @property
    def Q(self):
        return hg.homogeneous_dim(self.n)

    @property
    def kappa(self):
        return 2 * self.delta / (self.Q - 2)

    def heisenberg_atoms(self):
        """Cayley images ``eta_i`` and pulled-back weights ``w~_i``."""
        z = self.measure.atoms
        eta = sp.cayley(z)
        w = self.measure.weights * sp.cayley_factor(z) ** (-self.delta / 2)
        return eta, w


def _check_atoms(xi, atoms):
    d = sphere_gauge_distance(np.asarray(xi)[..., None, :, :], atoms)
    if np.any(d < ATOM_CUTOFF):
        raise AtomProximity("evaluation point lies on an atom")


def phi_gamma(xi, field):
    """``(sum_i w_i G_S(xi, zeta_i)^kappa)^{1/kappa}``, evaluated in log space."""
    xi = np.asarray(xi, dtype=float)
    mu = field.measure
    _check_atoms(xi, mu.atoms)
    Q = field.Q
    gap = qt.qnorm(qt.ONE - qt.hform(xi[..., None, :, :], mu.atoms))
    logG = np.log(C_Q(field.n)) - (Q - 2) / 2 * np.log(4 * gap)
    k = field.kappa
    with np.errstate(divide="ignore"):
        logw = np.log(mu.weights)
    return np.exp(logsumexp(k * logG + logw, axis=-1) / k)


def phi_gamma_heisenberg(p, field):
    """The same density written on ``H^n``: ``(sum_i w~_i G0(p, eta_i)^kappa)^{1/kappa}``.

    ``phi_gamma(xi) = (2|1 + xi_{n+1}|^2)^{-(Q-2)/4} phi_gamma_heisenberg(F(xi))``.
    """
    p = np.asarray(p, dtype=float)
    eta, w = field.heisenberg_atoms()
    Q = field.Q
    r4 = hg.h_norm4(hg.h_mul(hg.h_inv(eta), p[..., None, :]))
    logG = np.log(C_Q(field.n)) - (Q - 2) / 4 * np.log(r4)
    k = field.kappa
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    return np.exp(logsumexp(k * logG + logw, axis=-1) / k)


def equivariance_residual(g, xi, field):
    """``|phi(g xi) - |g'(xi)|^{-(Q-2)/2} phi(xi)| / phi(g xi)``."""
    a = phi_gamma(sp.act(g, xi), field)
    b = sp.conformal_factor(g, xi) ** (-(field.Q - 2) / 2) * phi_gamma(xi, field)
    return np.abs(a - b) / a


# ---------------------------------------------------------------------------
# curvature on the Heisenberg side
# ---------------------------------------------------------------------------

def _tilted(p, field):
    """Log-derivatives ``d_i = Y ln phi_{eta_i}`` and the tilted probabilities ``nu_i``."""
    p = np.asarray(p, dtype=float)
    eta, w = field.heisenberg_atoms()
    n = field.n
    u = hg.h_mul(hg.h_inv(eta), p)  # eta_i^{-1} p
    rho = hg.h_norm4(u)
    if np.any(np.sqrt(np.sqrt(rho)) < ATOM_CUTOFF):
        raise AtomProximity("evaluation point lies on an atom")
    y, t = hg.split(u)
    y2 = hg.y_norm2(u)
    # Y_j rho at u, by left invariance equal to Y_j of rho(eta^{-1} .) at p
    Yrho = 4 * y2[:, None, None] * y + 4 * np.einsum("skj,alk,as->alj", qt.STRUCTURE, y, t)
    Yrho = Yrho.reshape(len(u), 4 * n)
    d = Yrho / (2 * rho[:, None])  # phi_eta ~ rho^{1/2}
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    lognu = logw - field.delta / 2 * np.log(rho)
    top = logsumexp(lognu)
    nu = np.exp(lognu - top)
    return d, nu, top


def a_matrix(p, field):
    """``A_jk = E_nu[d_j d_k] - E_nu[d_j] E_nu[d_k]`` at a point of ``H^n``."""
    d, nu, _ = _tilted(p, field)
    mean = nu @ d
    centered = d - mean
    return (centered * nu[:, None]).T @ centered


def f_value(p, field):
    """``f = (1/delta) ln sum_i w~_i phi_{eta_i}^{-delta}``."""
    _, _, top = _tilted(p, field)
    return (top + field.delta * np.log(C_Q(field.n)) * 2 / (field.Q - 2)) / field.delta


def nayatani_scalar(p, field):
    """``8 (n+2)(n+1 - delta/2) e^{-2f} Tr A``."""
    n = field.n
    A = a_matrix(p, field)
    return 8 * (n + 2) * (n + 1 - field.delta / 2) * np.exp(-2 * f_value(p, field)) * np.trace(A)


def f_scalar_field(field):
    """``f`` as a closed-form :class:`~qcgeom.calculus.ScalarField` (single points only).

    Derivatives go through Euclidean partials of ``||eta^{-1} xi||^4`` and
    the constant Jacobian of left translation, independently of ``a_matrix``.
    """
    eta, w = field.heisenberg_atoms()
    n = field.n
    m = 4 * n
    dlt = field.delta
    const = dlt * np.log(C_Q(n)) * 2 / (field.Q - 2)
    # M_i: Jacobian of p -> eta_i^{-1} p; identity plus a t-by-y block
    M = np.broadcast_to(np.eye(m + 3), (len(eta), m + 3, m + 3)).copy()
    M[:, m:, :m] = np.swapaxes(hg.frame_at(hg.h_inv(eta))[:, :, m:], -1, -2)
    Mt = np.swapaxes(M, -1, -2)
    with np.errstate(divide="ignore"):
        logw = np.log(w)

    def parts(p):
        u = hg.h_mul(hg.h_inv(eta), p)
        rho, g, H = cc._rho_parts(u)
        g = (g[:, None, :] @ M)[:, 0]
        H = Mt @ H @ M
        lognu = logw - dlt / 2 * np.log(rho)
        top = logsumexp(lognu)
        nu = np.exp(lognu - top)
        return rho, g, H, nu, top

    def fn(p):
        p = np.asarray(p, dtype=float)
        if p.ndim > 1:
            return np.array([fn(x) for x in p])
        return (parts(p)[4] + const) / dlt

    def grad(p):
        p = np.asarray(p, dtype=float)
        if p.ndim > 1:
            return np.array([grad(x) for x in p])
        rho, g, _, nu, _ = parts(p)
        # f = (1/delta) ln sum a_i rho_i^{-delta/2}
        return -0.5 * (nu / rho) @ g

    def hess(p):
        p = np.asarray(p, dtype=float)
        if p.ndim > 1:
            return np.array([hess(x) for x in p])
        rho, g, H, nu, _ = parts(p)
        v = g / rho[:, None]
        first = -0.5 * np.tensordot(nu / rho, H, axes=1)
        second = (0.5 + dlt / 4) * np.einsum("a,ax,ay->xy", nu, v, v)
        mean = nu @ v
        third = -(dlt / 4) * np.outer(mean, mean)
        return first + second + third

    return cc.ScalarField(fn, grad, hess, name="nayatani_f")


def scalar_crosscheck(p, field, h=None):
    """Curvature via ``e^{2f} g0`` and the general conformal law; returns ``(value, scale)``.

    ``scale`` is the magnitude of the individual terms, the natural yardstick
    for the residual when the curvature itself vanishes.
    """
    if h is None:
        h = f_scalar_field(field)
    p = np.asarray(p, dtype=float)
    Q = field.Q
    lap = cc.sublaplacian(h, p)
    ysq = np.sum(cc.horizontal_gradient(h, p) ** 2)
    e = np.exp(-2 * h(p))
    value = e * (2 * (Q + 2) * lap - 0.5 * (Q + 2) * (Q - 2) * ysq)
    scale = e * (2 * (Q + 2) * abs(lap) + 0.5 * (Q + 2) * (Q - 2) * ysq)
    return float(value), float(scale)


def crosscheck_residual(p, field, h=None):
    """Relative gap between the two curvature routes.

    Relative to the curvature itself, or to the size of its terms when the
    prefactor makes the curvature vanish exactly.
    """
    a = nayatani_scalar(p, field)
    b, scale = scalar_crosscheck(p, field, h)
    denom = abs(a) if a != 0 else scale
    return abs(a - b) / denom if denom > 0 else abs(a - b)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def synthetic_field(n, delta, atoms=3, seed=0):
    """Equal-weight measure on ``atoms`` random sphere points with a prescribed delta."""
    rng = np.random.default_rng(seed)
    z = sp.random_sphere_points(rng, n, atoms)
    # keep atoms away from the south pole so their Cayley images are finite
    z[..., -1, 0] = np.abs(z[..., -1, 0])
    z = sp.sphere_point(z)
    mu = kl.AtomicMeasure(z, np.full(atoms, 1.0 / atoms), float(delta), 0, np.zeros((n + 1, 4)),
                          {"synthetic": True})
    return NayataniField(mu, float(delta))


def curvature_sign_report(group, L, samples, delta=None, seed=0, orbit=None):
    """Run group -> delta-hat -> shell PS measure -> curvature at sample points.

    ``samples`` is an integer (fundamental-domain points drawn with ``seed``)
    or an explicit array of sphere points.
    """
    if orbit is None:
        orbit = kl.enumerate_orbit(group, L)
    fit = None
    try:
        fit = kl.estimate_delta(orbit)
        delta_hat = fit.delta
    except InsufficientData:  # too few annuli: report the shell exponent only
        delta_hat = float("nan")
    shell = kl.shell_exponent(orbit)
    s = float(delta) if delta is not None else max(shell, DELTA_FLOOR)
    mu = kl.ps_measure(group, s, L, orbit=orbit, shell=True)
    field = NayataniField(mu, s)
    if np.isscalar(samples):
        pts = kl.fundamental_domain_samples(group, int(samples), seed)
    else:
        pts = np.asarray(samples, dtype=float)
    h = f_scalar_field(field)
    rows = []
    for z in pts:
        p = sp.cayley(z)
        val = nayatani_scalar(p, field)
        res = crosscheck_residual(p, field, h)
        rows.append({"xi": z.tolist(), "heis": p.tolist(), "s_value": float(val),
                     "sign": int(np.sign(val)), "crosscheck_residual": float(res)})
    n = group.n
    notes = []
    if group.rank == 1:
        notes.append("cyclic group: limit set is two points, so it is not a single point as required")
    return {
        "group": group.meta(),
        "L": int(L),
        "delta_hat": delta_hat,
        "delta_fit": fit.as_dict() if fit is not None else None,
        "shell_exponent": shell,
        "delta_used": s,
        "threshold": 2 * n + 2,
        "branch": _branch(s, n),
        "points": rows,
        "all_positive": all(r["sign"] > 0 for r in rows),
        "max_crosscheck_residual": max(r["crosscheck_residual"] for r in rows) if rows else 0.0,
        "notes": notes,
    }


def _branch(delta, n):
    if delta < 2 * n + 2:
        return "positive"
    return "zero" if delta == 2 * n + 2 else "negative"


def synthetic_sign_report(n, delta, samples=20, atoms=3, seed=0):
    """Curvature signs for an equal-weight synthetic measure with prescribed delta."""
    field = synthetic_field(n, delta, atoms, seed)
    rng = np.random.default_rng([seed, 1])
    h = f_scalar_field(field)
    rows = []
    while len(rows) < samples:
        z = sp.random_sphere_points(rng, n, 1)[0]
        if sp.cayley_factor(z) < 0.5:
            continue
        if np.min(sphere_gauge_distance(z, field.measure.atoms)) < 0.1:
            continue
        p = sp.cayley(z)
        val = nayatani_scalar(p, field)
        rows.append({"xi": z.tolist(), "heis": p.tolist(), "s_value": float(val),
                     "sign": int(np.sign(val)), "crosscheck_residual": float(crosscheck_residual(p, field, h))})
    return {
        "group": {"synthetic": True, "n": int(n), "atoms": int(atoms)},
        "delta_used": float(delta),
        "threshold": 2 * n + 2,
        "branch": _branch(delta, n),
        "points": rows,
        "all_positive": all(r["sign"] > 0 for r in rows),
        "max_abs_value": max(abs(r["s_value"]) for r in rows),
        "max_crosscheck_residual": max(r["crosscheck_residual"] for r in rows),
        "notes": ["synthetic measure: delta prescribed, not estimated from a group"],
    }
