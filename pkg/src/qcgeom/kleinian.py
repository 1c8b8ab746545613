"""Schottky subgroups of Sp(n+1,1), orbit enumeration and Patterson-Sullivan measures.

Letters are integers: ``2i`` stands for generator ``i`` and ``2i+1`` for its
inverse.  A word ``(a_1, ..., a_m)`` denotes the matrix ``g_{a_1} ... g_{a_m}``;
with the right action this sends ``q`` to ``a_m(... a_1(q))``.
"""

import csv
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import optimize, special, stats

from . import quaternion as qt
from . import sphere as sp
from .errors import AxisCollision, BudgetExceeded, InsufficientData

AXIS_TOL = 1e-6
REORTHO_EVERY = 8
DEFAULT_WORD_BUDGET = 2_000_000


def inverse_letter(a):
    return a ^ 1


def letter_name(a):
    base = "abcdefghijklmnopqrstuvwxyz"[a // 2]
    return base.upper() if a & 1 else base


def word_name(word):
    return "".join(letter_name(a) for a in word) or "e"


# ---------------------------------------------------------------------------
# groups
# ---------------------------------------------------------------------------

@dataclass
class SchottkyGroup:
    n: int
    generators: List[np.ndarray]
    T: List[float]
    rotations: List[np.ndarray]
    verified: bool
    witness: dict = field(default_factory=dict)

    @property
    def rank(self):
        return len(self.generators)

    def letters(self):
        """Matrices for letters ``0 .. 2k-1``."""
        out = []
        for g in self.generators:
            out += [g, sp.sp_inverse(g)]
        return out

    def fixed_points(self):
        """``(attracting, repelling)`` boundary fixed points of each letter, shape ``(2k, 2, n+1, 4)``."""
        e1 = np.zeros((self.n + 1, 4))
        e1[0, 0] = 1.0
        pts = []
        for R in self.rotations:
            Rinv = sp.sp_inverse(R)
            plus = sp.act(Rinv, e1)
            minus = sp.act(Rinv, -e1)
            pts += [(plus, minus), (minus, plus)]
        return np.array(pts)

    def meta(self):
        return {
            "n": self.n, "rank": self.rank, "T": list(map(float, self.T)),
            "verified": bool(self.verified), "witness": self.witness,
            "generators": [sp.element_to_json(g) for g in self.generators],
        }


def default_axis_rotations(k, n=1):
    """Rotations ``diag(conj(u_m), 1, ...)`` with ``u_m = exp(i pi m / k)``.

    Axis ``m`` joins ``u_m`` and ``-u_m`` in the first coordinate; for ``k = 2``
    the two axes cross orthogonally at the origin of the ball.
    """
    rots = []
    for m in range(k):
        ang = np.pi * m / k
        U = qt.identity(n + 1)
        U[0, 0] = qt.qconj(np.array([np.cos(ang), np.sin(ang), 0.0, 0.0]))
        rots.append(U)
    return rots


def build_schottky(k, T, axis_rotations=None, n=1, samples=512, seed=0):
    """Generators ``R_i boost(T_i) R_i^{-1}`` plus a sampled ping-pong witness.

    ``axis_rotations`` are Sp(n+1) blocks.  The witness puts a chord ball of
    radius ``0.45 * (minimal fixed-point separation)`` around every fixed
    point and checks that each letter maps all sampled points outside its
    repelling ball into its attracting ball.  These balls are disjoint by
    construction, so a passing witness is a sampled ping-pong certificate.
    """
    if k < 1:
        raise ValueError("rank must be at least 1")
    Ts = np.broadcast_to(np.asarray(T, dtype=float), (k,))
    if np.any(Ts <= 0):
        raise ValueError("translation lengths must be positive")
    if axis_rotations is None:
        axis_rotations = default_axis_rotations(k, n)
    if len(axis_rotations) != k:
        raise ValueError("need one axis rotation per generator")
    rotations = [sp.rotation_elem(U) for U in axis_rotations]
    gens = [sp.conjugate(R, sp.boost(t, n)) for R, t in zip(rotations, Ts)]
    group = SchottkyGroup(n, gens, [float(t) for t in Ts], rotations, False)

    fp = group.fixed_points()
    centers = fp[0::2].reshape(-1, n + 1, 4)  # both endpoints of every axis
    dist = sp.spherical_distance(centers[:, None], centers[None, :])
    np.fill_diagonal(dist, np.inf)
    sep = float(dist.min())
    if k > 1 and sep < AXIS_TOL:
        raise AxisCollision(f"two axes share an endpoint (separation {sep:.2e})")

    radius = 0.45 * sep
    rng = np.random.default_rng(seed)
    pts = sp.random_sphere_points(rng, n, samples)
    worst = 0.0
    for a, g in enumerate(group.letters()):
        attract, repel = fp[a]
        outside = sp.spherical_distance(pts, repel) >= radius
        img = sp.act(g, pts[outside])
        worst = max(worst, float(np.max(sp.spherical_distance(img, attract) / radius)))
    ok = worst < 1.0 or k == 1
    group.verified = bool(ok)
    group.witness = {"samples": int(samples), "seed": int(seed), "radius": radius,
                     "separation": sep, "max_image_ratio": worst, "passed": bool(ok)}
    return group


# ---------------------------------------------------------------------------
# orbits
# ---------------------------------------------------------------------------

@dataclass
class OrbitTable:
    """Orbit of a basepoint under all reduced words up to length ``L``.

    Row 0 is the empty word.  ``rows`` holds the homogeneous images
    ``(q, 1) g_w`` so that points and distances never divide by ``1 - |x|^2``.
    """

    words: List[tuple]
    lengths: np.ndarray
    rows: np.ndarray
    distances: np.ndarray
    basepoint: np.ndarray
    L: int
    T: float
    max_sp_residual: float

    def points(self):
        return sp.dehomogenize(self.rows)

    def distances_from_origin(self):
        return distance_from_origin(self.rows, self.basepoint)

    def atoms(self):
        """Radial projections onto the sphere; ``nan`` where the point is the origin."""
        x = self.points()
        r = np.sqrt(qt.vnorm2(x))
        with np.errstate(invalid="ignore", divide="ignore"):
            return x / r[..., None, None]

    def __len__(self):
        return len(self.words)


def distance_from_origin(rows, q):
    """``d(0, x)`` for ``x`` the point of the row ``(q,1) g``."""
    return sp.distance_from_origin_row(rows, 1.0 - qt.vnorm2(q))


def distance_from_basepoint(rows, q):
    """``d(q, x)`` via ``cosh(d/2) = |v_{n+2} - <v', q>| / (1 - |q|^2)``."""
    q = np.asarray(q, dtype=float)
    c = qt.qnorm(rows[..., -1, :] - qt.hform(rows[..., :-1, :], q)) / (1.0 - qt.vnorm2(q))
    return 2 * np.arccosh(np.maximum(c, 1.0))


def word_count(k, L):
    if k == 1:
        return 2 * L
    return sum(2 * k * (2 * k - 1) ** (m - 1) for m in range(1, L + 1))


def enumerate_orbit(group, L, basepoint=None, budget=DEFAULT_WORD_BUDGET):
    """All reduced words up to length ``L`` (plus the empty word), level by level.

    Matrix products are accumulated left to right; every ``REORTHO_EVERY``
    letters each product gets a Newton-Schulz step toward the J-isometry
    manifold.  The largest relative ``sp_check`` residual is recorded.
    """
    n = group.n
    k = group.rank
    if L < 0:
        raise ValueError("L must be nonnegative")
    if word_count(k, L) > budget:
        raise BudgetExceeded(f"{word_count(k, L)} words exceed the budget of {budget}")
    q = np.zeros((n + 1, 4)) if basepoint is None else np.asarray(basepoint, dtype=float)
    base_row = sp.homogeneous(q)
    letters = np.array(group.letters())

    words = [()]
    rows = [base_row[None]]
    lengths = [np.zeros(1, dtype=int)]
    mats = qt.identity(n + 2)[None]
    cur_words = [()]
    max_res = 0.0
    for m in range(1, L + 1):
        new_mats, new_words = [], []
        for c in range(2 * k):
            keep = [i for i, w in enumerate(cur_words) if not w or w[-1] != inverse_letter(c)]
            if not keep:
                continue
            new_mats.append(qt.matmul(mats[keep], letters[c]))
            new_words.append([cur_words[i] + (c,) for i in keep])
        # lexicographic order: parent first, then letter
        flat = _flat(new_words)
        order = sorted(range(len(flat)), key=flat.__getitem__)
        mats = np.concatenate(new_mats)[order]
        cur_words = [flat[i] for i in order]
        if m % REORTHO_EVERY == 0:
            mats = np.array([sp.orthogonalize(g) for g in mats])
        max_res = max(max_res, max(sp.sp_residual(g, relative=True) for g in mats[:: max(1, len(mats) // 64)]))
        words += cur_words
        rows.append(qt.vecmat(base_row[None], mats))
        lengths.append(np.full(len(cur_words), m))
    rows = np.concatenate(rows)
    return OrbitTable(
        words=words,
        lengths=np.concatenate(lengths),
        rows=rows,
        distances=distance_from_basepoint(rows, q),
        basepoint=q,
        L=int(L),
        T=float(min(group.T)),
        max_sp_residual=float(max_res),
    )


def _flat(groups):
    out = []
    for g in groups:
        out += g
    return out


# ---------------------------------------------------------------------------
# critical exponent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaFit:
    delta: float
    slope: float
    intercept: float
    r2: float
    stderr: float
    radii: tuple
    counts: tuple
    complete_radius: float

    def as_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def estimate_delta(orbit, width=None):
    """``2 h`` with ``h`` the least-squares slope of ``ln N(R)`` against ``R``.

    ``N(R)`` counts orbit points (identity included) within distance ``R``,
    sampled on annulus boundaries ``R_j = j * width``.  Only radii below the
    smallest distance reached by a word of maximal length are used, because
    beyond it longer words could be missing; the first annulus is discarded.
    """
    if width is None:
        width = orbit.T / 2
    d = np.sort(orbit.distances[1:])
    complete = float(orbit.distances[orbit.lengths == orbit.L].min())
    radii = np.arange(2, int(np.floor(complete / width)) + 1) * width
    if len(radii) < 3:
        raise InsufficientData("orbit spans fewer than three distance annuli")
    counts = 1 + np.searchsorted(d, radii, side="right")
    fit = stats.linregress(radii, np.log(counts))
    return DeltaFit(
        delta=2 * fit.slope, slope=fit.slope, intercept=fit.intercept, r2=fit.rvalue ** 2,
        stderr=2 * fit.stderr, radii=tuple(map(float, radii)), counts=tuple(map(int, counts)),
        complete_radius=complete,
    )


def shell_exponent(orbit, level=None):
    """Exponent ``s`` at which the two outermost word shells carry equal mass.

    ``sum_{|w|=L} e^{-s d_w/2} = sum_{|w|=L-1} e^{-s d_w/2}``.  This is a
    transfer-operator estimate of the critical exponent; it is 0 for cyclic groups.
    """
    level = orbit.L if level is None else level
    if level < 2:
        raise InsufficientData("need at least two word shells")
    d = orbit.distances_from_origin()
    a = d[orbit.lengths == level]
    b = d[orbit.lengths == level - 1]
    shift = min(a.min(), b.min())

    def gap(s):
        return special.logsumexp(-0.5 * s * (a - shift)) - special.logsumexp(-0.5 * s * (b - shift))

    if gap(0.0) <= 0:
        return 0.0
    hi = 8.0 * (orbit.rows.shape[-2] - 1) + 8.0
    while gap(hi) > 0:
        hi *= 4
        if hi > 1e6:
            raise InsufficientData("outer shell outweighs the inner one for every exponent")
    return float(optimize.brentq(gap, 0.0, hi, xtol=1e-14))


# ---------------------------------------------------------------------------
# Patterson-Sullivan measures
# ---------------------------------------------------------------------------

@dataclass
class AtomicMeasure:
    atoms: np.ndarray
    weights: np.ndarray
    s: float
    L: int
    basepoint: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.atoms.shape[-2] - 1

    def integrate(self, values):
        return np.asarray(values) @ self.weights

    def pushforward_integral(self, g, f):
        """``int f d(g^* mu) = sum_i w_i f(g^{-1} zeta_i)``."""
        return f(sp.act(sp.sp_inverse(g), self.atoms)) @ self.weights

    def to_json(self):
        return {
            "atoms": [{"zeta": z.tolist(), "w": float(w)} for z, w in zip(self.atoms, self.weights)],
            "s": float(self.s), "L": int(self.L), "basepoint": self.basepoint.tolist(),
            "flags": self.flags,
        }

    @classmethod
    def from_json(cls, obj):
        atoms = np.array([a["zeta"] for a in obj["atoms"]], dtype=float)
        weights = np.array([a["w"] for a in obj["atoms"]], dtype=float)
        return cls(atoms, weights, obj["s"], obj["L"], np.asarray(obj["basepoint"]), obj.get("flags", {}))


def ps_measure(group, s, L, basepoint=None, orbit=None, shell=False):
    """Atomic approximation of the Patterson-Sullivan measure.

    Atoms sit at the radial projections of ``g_w(q)`` with weights
    ``exp(-s d(0, g_w(q)) / 2)``, normalized; no ``a_gamma`` correction.  With
    ``shell=True`` only words of length exactly ``L`` are used.  The origin
    has no radial projection, so the empty word is dropped when ``q = 0``.
    """
    if orbit is None or orbit.L < L:
        orbit = enumerate_orbit(group, L, basepoint)
    q = orbit.basepoint
    sel = orbit.lengths == L if shell else orbit.lengths <= L
    d = orbit.distances_from_origin()
    at = orbit.atoms()
    finite = np.all(np.isfinite(at), axis=(-2, -1))
    dropped = bool(np.any(sel & ~finite))
    sel = sel & finite
    if not np.any(sel):
        raise InsufficientData("no atom has a radial projection (basepoint at the origin with L = 0)")
    dd = d[sel]
    w = np.exp(-0.5 * s * (dd - dd.min()))
    w /= w.sum()
    flags = {"a_gamma": 1, "shell": bool(shell), "dropped_origin_atom": dropped,
             "reference": "origin"}
    return AtomicMeasure(at[sel], w, float(s), int(L), np.asarray(q), flags)


def default_test_battery(n, count=6, seed=20240601):
    """Smooth functions on the sphere with sup norm 1.

    Four coordinate functions and ``exp(2 <zeta, c> - 2)`` bumps at fixed
    random centers ``c``.
    """
    rng = np.random.default_rng(seed)
    centers = sp.random_sphere_points(rng, n, count)

    def battery(z):
        out = [z[..., 0, 0], z[..., 0, 1], z[..., 0, 2], z[..., -1, 0]]
        for c in centers:
            out.append(np.exp(2 * np.sum(z * c, axis=(-2, -1)) - 2))
        return np.stack(out)

    return battery


def quasi_invariance_residual(mu, g, delta, tests=None):
    """``max_f |int f d(g^* mu) - int f |g'|^delta dmu| / ||f||_inf`` over a battery."""
    if tests is None:
        tests = default_test_battery(mu.n)
    lhs = mu.pushforward_integral(g, tests)
    rhs = (tests(mu.atoms) * sp.conformal_factor(g, mu.atoms) ** delta) @ mu.weights
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# fundamental domain and export
# ---------------------------------------------------------------------------

def fundamental_domain_samples(group, count, seed=0, margin=1.0):
    """Uniform sphere points outside every ping-pong ball (a Schottky fundamental domain)."""
    rng = np.random.default_rng(seed)
    radius = group.witness.get("radius", 0.5) * margin
    centers = group.fixed_points()[:, 0]
    south = np.zeros((group.n + 1, 4))
    south[-1, 0] = -1.0
    out = []
    while sum(len(o) for o in out) < count:
        pts = sp.random_sphere_points(rng, group.n, 4 * count)
        ok = np.all(sp.spherical_distance(pts[:, None], centers[None]) > radius, axis=1)
        ok &= sp.spherical_distance(pts, south) > 0.1
        out.append(pts[ok])
    return np.concatenate(out)[:count]


def orbit_to_csv(orbit, path):
    atoms = orbit.atoms()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        m = atoms.shape[-2]
        w.writerow(["word", "length", "distance"] + [f"zeta{l}_{c}" for l in range(m) for c in range(4)])
        for word, L, d, a in zip(orbit.words, orbit.lengths, orbit.distances, atoms):
            w.writerow([word_name(word), int(L), repr(float(d))] + [repr(float(v)) for v in a.reshape(-1)])


def measure_to_json(mu, path):
    with open(path, "w") as fh:
        json.dump(mu.to_json(), fh)
