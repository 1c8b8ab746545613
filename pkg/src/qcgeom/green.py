"""Green function of the qc Yamabe operator on ``H^n``.

``G0(xi, eta) = C_Q / ||xi^{-1} eta||^{Q-2}`` solves ``b_n Delta_0 G0 = delta``
with

    C_Q^{-1} = 8 (n+1)(n+2) b_n I_n,
    I_n = int_{R^{4n+3}} |y|^2 / (|y|^4 + |t|^2 + 1)^{n+3} dy dt.

Polar coordinates in ``y`` (radius r) and ``t`` (radius s) give

    I_n = |S^{4n-1}| |S^2| int_0^inf int_0^inf r^{4n+1} s^2 / (r^4 + s^2 + 1)^{n+3} ds dr,

and the inner integral is a Beta function, so that

    I_n = |S^{4n-1}| |S^2| B(3/2, n+3/2) / (8 (n + 1/2)).

:func:`C_Q` returns this closed form; :func:`compute_CQ` evaluates the same
integral by 2-D adaptive quadrature or by importance-sampled Monte Carlo so the
closed form can be checked independently.
"""

import json
import math
import os
import time
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, special

from . import calculus as cc
from . import heisenberg as hg
from .errors import BudgetTooSmall, CoincidentPoints, NonConvergent

PRODUCT_RADIAL = "product-radial"
MONTE_CARLO = "monte-carlo"


def sphere_area(k):
    """Surface area of the unit sphere ``S^{k}`` in ``R^{k+1}``."""
    return 2 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def _area_constant(n):
    return sphere_area(4 * n - 1) * sphere_area(2)


def radial_integral_exact(n):
    return _area_constant(n) * special.beta(1.5, n + 1.5) / (8 * (n + 0.5))


def _cq_from_integral(n, I):
    return 1.0 / (8 * (n + 1) * (n + 2) * cc.yamabe_constant(n) * I)


@lru_cache(maxsize=None)
def C_Q(n):
    """Normalizing constant of the Green function (closed form)."""
    return _cq_from_integral(n, radial_integral_exact(n))


def integrand(p):
    """``|y|^2 / (|y|^4 + |t|^2 + 1)^{n+3}`` on stacked points."""
    n = hg.dim_n(p)
    return hg.y_norm2(p) / (hg.h_norm4(p) + 1.0) ** (n + 3)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CQEstimate:
    n: int
    method: str
    value: float
    error: float
    samples: int
    seed: int
    integral: float

    def relative_error(self):
        return self.error / self.value


def _half_line(f, scale=1.0, epsrel=1e-12, limit=200, epsabs=0.0):
    """``int_0^inf f`` through ``x = scale tan(theta)``; returns ``(value, error)``."""

    def g(theta):
        c = math.cos(theta)
        return f(scale * math.tan(theta)) * scale / (c * c)

    return integrate.quad(g, 0, math.pi / 2, epsabs=epsabs, epsrel=epsrel, limit=limit)


def _product_radial(n, budget):
    """Iterated adaptive quadrature over ``(r, s) = (|y|, |t|)``."""
    limit = max(50, int(budget))
    m = n + 3

    def inner(r):
        a = r ** 4 + 1.0
        return _half_line(lambda s: s * s / (a + s * s) ** m, math.sqrt(a), 1e-13, limit)[0]

    val, err = _half_line(lambda r: r ** (4 * n + 1) * inner(r), 1.0, 1e-12, limit)
    A = _area_constant(n)
    return A * val, A * max(err, 1e-13 * val)


def _mc_block(n, rng, size):
    """Importance-sampled block: returns (sum w, sum w^2).

    ``u = |y|^4`` follows a beta-prime law with exponent ``b`` slightly below
    the tail of the target, ``y`` has a uniform direction, and ``t | y`` is a
    3-variate Student law whose tails are a little heavier than the target's.
    """
    m = 4 * n
    a_shape, b_shape = n + 0.5, 0.98
    nu = 2 * n + 2.9
    g1 = rng.standard_gamma(a_shape, size)
    g2 = rng.standard_gamma(b_shape, size)
    u = g1 / g2
    r = u ** 0.25
    direction = rng.standard_normal((size, m))
    direction /= np.linalg.norm(direction, axis=1)[:, None]
    y = r[:, None] * direction
    A = 1.0 + u
    scale = np.sqrt(A / nu)
    z = rng.standard_normal((size, 3))
    chi = rng.chisquare(nu, size)
    t = scale[:, None] * z * np.sqrt(nu / chi)[:, None]

    # log proposal density in (y, t)
    log_pu = (a_shape - 1) * np.log(u) - (a_shape + b_shape) * np.log1p(u) - special.betaln(a_shape, b_shape)
    # density of y from that of u = r^4: p_y = p_u * 4 r^3 / (r^{m-1} |S^{m-1}|)
    log_py = log_pu + np.log(4.0) + 3 * np.log(r) - (m - 1) * np.log(r) - math.log(sphere_area(m - 1))
    t2 = np.sum(t * t, axis=1)
    log_pt = (special.gammaln((nu + 3) / 2) - special.gammaln(nu / 2) - 1.5 * np.log(nu * math.pi)
              - 3 * np.log(scale) - (nu + 3) / 2 * np.log1p(t2 / (nu * scale ** 2)))
    log_f = np.log(u) / 2 - (n + 3) * np.log(u + t2 + 1.0)
    w = np.exp(log_f - log_py - log_pt)
    return np.array([w.sum(), (w * w).sum()])


def _monte_carlo(n, N, seed, workers=1):
    S = np.sum(cc.map_blocks(lambda rng, size: _mc_block(n, rng, size), seed, N, workers), axis=0)
    mean = S[0] / N
    var = S[1] / N - mean ** 2
    return mean, math.sqrt(max(var, 0.0) / N)


def compute_CQ(n, method=PRODUCT_RADIAL, budget=200, seed=0, workers=1):
    """Estimate ``C_Q`` with an error bar.

    ``budget`` is the subdivision limit for product-radial quadrature and the
    sample count for Monte Carlo.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if method == PRODUCT_RADIAL:
        I, err = _product_radial(n, budget)
        samples = int(budget)
    elif method == MONTE_CARLO:
        samples = int(budget)
        if samples < 1000:
            raise BudgetTooSmall("Monte Carlo needs at least 1000 samples")
        I, err = _monte_carlo(n, samples, seed, workers)
    else:
        raise ValueError(f"unknown method {method!r}")
    value = _cq_from_integral(n, I)
    return CQEstimate(n, method, value, value * err / I, samples, int(seed), I)


def compare_methods(n, budget=10 ** 7, seed=0, quad_budget=200, workers=1, sigmas=4.0):
    """Run both quadratures; raise :class:`BudgetTooSmall` if they disagree beyond error bars."""
    a = compute_CQ(n, PRODUCT_RADIAL, quad_budget, seed)
    b = compute_CQ(n, MONTE_CARLO, budget, seed, workers)
    gap = abs(a.value - b.value) / a.value
    bar = sigmas * math.hypot(a.error, b.error) / a.value
    if gap > bar:
        raise BudgetTooSmall(f"C_Q estimates differ by {gap:.2e} (combined bar {bar:.2e})")
    return a, b, gap


def delta_mass(n, eps, cq=None):
    """``b_n C_Q int Delta_0 K_eps dV_0`` by 2-D quadrature.

    ``K_eps = (||.||^4 + eps^2)^{-(Q-2)/4}``; the integrand is evaluated with
    :func:`qcgeom.calculus.sublaplacian` at ``(r e_1, s e_t1)`` and depends
    only on ``(r, s)``.  The exact answer is 1 for every ``eps``.
    """
    if cq is None:
        cq = C_Q(n)
    K = cc.regularized_kernel_field(n, eps)
    d = 4 * n + 3

    def point(r, s):
        p = np.zeros(d)
        p[0] = r
        p[4 * n] = s
        return p

    def inner(r):
        scale = math.sqrt(r ** 4 + eps * eps)
        val, _ = _half_line(lambda s: s * s * cc.sublaplacian(K, point(r, s)), scale, 1e-10, epsabs=1e-15)
        return r ** (4 * n - 1) * val

    val, _ = _half_line(inner, math.sqrt(eps), 1e-9)
    return cc.yamabe_constant(n) * cq * _area_constant(n) * val


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def default_cache_path():
    root = os.environ.get("QCGEOM_CACHE_DIR")
    if root:
        return Path(root) / "cq_cache.json"
    return Path.home() / ".cache" / "qcgeom" / "cq_cache.json"


def cached_CQ(n, method, budget, seed, path=None, workers=1):
    """Look up or compute an estimate; returns ``(record, was_cached)``."""
    path = Path(path) if path else default_cache_path()
    key = f"{n}|{method}|{int(budget)}|{int(seed)}"
    store = {}
    if path.exists():
        try:
            store = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            store = {}
    if key in store:
        return store[key], True
    est = compute_CQ(n, method, budget, seed, workers)
    record = {
        "n": est.n, "method": est.method, "value": est.value, "error": est.error,
        "samples": est.samples, "seed": est.seed, "timestamp": time.time(),
    }
    store[key] = record
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(store, indent=1, sort_keys=True))
    tmp.replace(path)
    return record, False


# ---------------------------------------------------------------------------
# Green function
# ---------------------------------------------------------------------------

def heis_green(xi, eta, cq=None):
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    n = hg.dim_n(xi)
    Q = hg.homogeneous_dim(n)
    if cq is None:
        cq = C_Q(n)
    r4 = hg.h_norm4(hg.h_mul(hg.h_inv(xi), eta))
    # the twist term leaves O(eps) in t for equal inputs, so compare the inputs too
    if np.any(r4 == 0) or np.any(np.all(xi == eta, axis=-1)):
        raise CoincidentPoints("Green function is singular on the diagonal")
    return cq * r4 ** (-(Q - 2) / 4)


def green_field(eta, cq=None):
    """``xi -> G0(xi, eta)`` as a closed-form :class:`~qcgeom.calculus.ScalarField`."""
    eta = np.asarray(eta, dtype=float)
    n = hg.dim_n(eta)
    if cq is None:
        cq = C_Q(n)
    base = cc.norm_power_field(-(hg.homogeneous_dim(n) - 2)).scaled(cq)
    return base.translated(eta)


def green_transform_check(f, xi, eta):
    """Relative residual of ``||f(xi)^{-1} f(eta)||^{2-Q} = ||xi^{-1} eta||^{2-Q} / (phi(xi) phi(eta))``.

    ``phi = lam^{(Q-2)/4}`` where ``lam`` is the metric conformal factor of ``f``.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Q = hg.homogeneous_dim(hg.dim_n(xi))
    e = -(Q - 2) / 4
    lhs = hg.h_norm4(hg.h_mul(hg.h_inv(f(xi)), f(eta))) ** e
    phi_x = f.conformal_factor(xi) ** ((Q - 2) / 4)
    phi_e = f.conformal_factor(eta) ** ((Q - 2) / 4)
    rhs = hg.h_norm4(hg.h_mul(hg.h_inv(xi), eta)) ** e / (phi_x * phi_e)
    return np.abs(lhs - rhs) / rhs


# ---------------------------------------------------------------------------
# regular part
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularPart:
    value: float
    limit: float
    spread: float
    radii: tuple
    differences: tuple
    level: tuple

    def as_dict(self):
        return asdict(self)


def singular_part(chart, xi, eta, cq=None):
    """``C_Q / (phi(xi) phi(eta) ||xi^{-1} eta||^{Q-2})``."""
    return heis_green(xi, eta, cq) / (chart(xi) * chart(eta))


def regular_part_limit(G, chart, xi, r0=0.1, levels=7, direction=None, cq=None, tol=0.1):
    """``lim_{eta -> xi} |G(xi, eta) - rho(xi, eta)|^{1/(Q-2)}``.

    ``eta_k = xi D_{r_k}(v)`` with ``r_k = r0 2^{-k}`` and ``||v|| = 1``.  The
    differences are extrapolated with a Neville tableau in ``r`` and, as in
    Ridders' method, the entry with the smallest error estimate is kept.
    Rounding in ``G - rho`` grows like ``r^{2-Q}``, so the estimate for each
    tableau entry includes the propagated rounding of its inputs; this keeps
    the finest radii from polluting the answer.
    """
    xi = np.asarray(xi, dtype=float)
    n = hg.dim_n(xi)
    Q = hg.homogeneous_dim(n)
    if direction is None:
        direction = np.zeros(4 * n + 3)
        direction[0] = 1.0
    v = np.asarray(direction, dtype=float)
    v = hg.Dilation(1.0 / hg.h_norm(v))(v)
    radii = [r0 * 2.0 ** (-k) for k in range(levels)]
    diffs, noise = [], []
    eps = np.finfo(float).eps
    for r in radii:
        eta = hg.h_mul(xi, hg.Dilation(r)(v))
        g = float(G(xi, eta))
        rho = float(singular_part(chart, xi, eta, cq))
        diffs.append(abs(g - rho))
        noise.append(4 * eps * (abs(g) + abs(rho)))

    # tableau[k][j]: extrapolant from levels k-j..k eliminating r, ..., r^j
    tab = [[d] for d in diffs]
    err = [[noise[k]] for k in range(levels)]
    best = (tab[0][0], float("inf"), (0, 0), float("inf"))
    for k in range(levels):
        for j in range(1, k + 1):
            f = 2.0 ** j
            tab[k].append((f * tab[k][j - 1] - tab[k - 1][j - 1]) / (f - 1))
            err[k].append((f * err[k][j - 1] + err[k - 1][j - 1]) / (f - 1))
        for j in range(k + 1 if k else 0):
            if j > 0:
                trunc = max(abs(tab[k][j] - tab[k][j - 1]), abs(tab[k][j] - tab[k - 1][j - 1]))
            else:
                trunc = abs(tab[k][0] - tab[k - 1][0])
            est = trunc + err[k][j]
            if est < best[1]:
                best = (tab[k][j], est, (k, j), trunc)
    limit, spread, level, trunc = best
    limit = max(limit, 0.0)
    # disagreement below the rounding floor of the chosen entry is not divergence
    if trunc > tol * limit and trunc > err[level[0]][level[1]]:
        raise NonConvergent(f"extrapolation spread {spread:.3e} exceeds {tol:.0%} of {limit:.3e}")
    return RegularPart(limit ** (1.0 / (Q - 2)), limit, spread, tuple(radii), tuple(diffs), level)
