"""One-generalist (M = 1) star systems: potential landscape and orbit taxonomy.

The reduced star dynamics is the one-degree-of-freedom Hamiltonian system

    dq/dt = exp(p) - mu,      dp/dt = -Phi'(q)
    H(q, p) = Psi(p) + Phi(q)
    Psi(p)  = exp(p) - mu p                      (kinetic part)
    Phi(q)  = sum_j rho_j C_j exp(a_j q) - rbar q  (potential part)

with rho_j = b_j / a_j.  Orbits at energy E live on the level set
Phi(q) = E - min Psi; their type (equilibrium, periodic, soliton, kink,
unbounded) is read off the potential profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .util import EXP_LIMIT, guarded_exp


@dataclass(frozen=True)
class PotentialTerms:
    """Exponential-sum potential Phi(q) = sum_k c_k exp(a_k q) - slope * q."""

    c: np.ndarray
    a: np.ndarray
    slope: float = 0.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if c.shape != a.shape:
            raise ValueError("coefficients and exponents must have equal length")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "slope", float(self.slope))

    @property
    def degenerate(self):
        """Constant potential: every exponent and the slope vanish."""
        return not (np.any(self.a) or self.slope)

    def phi(self, q):
        q = np.asarray(q, dtype=float)
        val = np.exp(np.clip(np.multiply.outer(q, self.a), -EXP_LIMIT, EXP_LIMIT)) @ self.c
        return val - self.slope * q

    def dphi(self, q):
        q = np.asarray(q, dtype=float)
        val = np.exp(np.clip(np.multiply.outer(q, self.a), -EXP_LIMIT, EXP_LIMIT)) @ (self.c * self.a)
        return val - self.slope

    def d2phi(self, q):
        q = np.asarray(q, dtype=float)
        return np.exp(np.clip(np.multiply.outer(q, self.a), -EXP_LIMIT, EXP_LIMIT)) @ (self.c * self.a ** 2)

    def limit_sign(self, direction):
        """Sign of Phi at q -> +inf (direction=+1) or -inf (-1); 0 if bounded.

        The dominant exponent decides; when every exponential decays the
        linear term does, and a flat tail gives 0.
        """
        a, c = self.a, self.c
        live = c != 0.0
        if np.any(live):
            extreme = np.max(a[live] * direction)
            if extreme > 0:
                coeff = np.sum(c[live][a[live] * direction == extreme])
                if coeff != 0:
                    return 1 if coeff > 0 else -1
        if self.slope != 0.0:
            return -1 if self.slope * direction > 0 else 1
        return 0


@dataclass(frozen=True)
class StarSystem:
    """Star parameters: prey couplings a, b, hub rate rbar, offset mu, memory C."""

    a: np.ndarray
    b: np.ndarray
    rbar: float
    mu: float = 1.0
    C: np.ndarray = None
    r: np.ndarray = None

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape:
            raise ValueError("a and b must have equal length")
        if np.any(a == 0):
            raise ValueError("coefficients a must be nonzero")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        C = np.ones_like(a) if self.C is None else np.atleast_1d(
            np.asarray(self.C, dtype=float))
        if C.shape != a.shape or np.any(C <= 0):
            raise ValueError("C must be positive, one entry per species")
        r = a * self.mu if self.r is None else np.atleast_1d(
            np.asarray(self.r, dtype=float))
        for name, arr in (("a", a), ("b", b), ("C", C), ("r", r)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rbar", float(self.rbar))
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def n_species(self):
        return self.a.size

    @property
    def rho(self):
        return self.b / self.a

    def is_hamiltonian(self, tol=1e-12):
        """True when r_i = a_i mu for every species."""
        return bool(np.all(np.abs(self.r - self.a * self.mu)
                           <= tol * (1.0 + np.abs(self.r))))

    def terms(self):
        return PotentialTerms(c=self.rho * self.C, a=self.a, slope=self.rbar)

    def psi_min(self):
        """min Psi = mu (1 - ln mu), attained at p = ln mu."""
        return self.mu * (1.0 - math.log(self.mu))

    def to_interaction_system(self, gamma=None, d=0.0):
        """Embed as an InteractionSystem (optionally with self-limitation)."""
        from .model import InteractionSystem
        n = self.n_species
        Gamma = None if gamma is None else np.diag(np.atleast_1d(
            np.asarray(gamma, dtype=float)) * np.ones(n))
        return InteractionSystem(
            r=self.r, rbar=[self.rbar], A=self.a[:, None], B=self.b[None, :],
            Gamma=Gamma, D=[[d]])


def potential(star, q):
    """Phi(q) of the star."""
    return star.terms().phi(q)


def kinetic(star, p):
    """Psi(p) = exp(p) - mu p."""
    return guarded_exp(p) - star.mu * np.asarray(p, dtype=float)


@dataclass(frozen=True)
class Extremum:
    q: float
    phi: float
    kind: str  # "min" or "max"


@dataclass(frozen=True)
class PotentialProfile:
    extrema: tuple
    coercive_left: bool
    coercive_right: bool
    window: tuple
    window_warning: bool = False

    def minima(self):
        return [e for e in self.extrema if e.kind == "min"]

    def maxima(self):
        return [e for e in self.extrema if e.kind == "max"]


def _profile_of_terms(terms, q_window=None, n_grid=2001, tol_scale=1e-12):
    if q_window is None:
        amax = float(np.max(np.abs(terms.a))) if np.any(terms.a) else 1.0
        half = 50.0 / amax
        q_window = (-half, half)
    lo, hi = float(q_window[0]), float(q_window[1])
    if not lo < hi:
        raise ValueError("window must be a nondegenerate interval")
    grid = np.linspace(lo, hi, n_grid)
    dvals = terms.dphi(grid)
    scale = float(np.max(np.abs(dvals))) or 1.0
    roots = []
    sign = np.sign(dvals)
    for i in range(n_grid - 1):
        s0, s1 = sign[i], sign[i + 1]
        if s0 == 0.0:
            roots.append(grid[i])
        elif s0 * s1 < 0:
            roots.append(brentq(terms.dphi, grid[i], grid[i + 1],
                                xtol=1e-15, rtol=8.9e-16))
    if sign[-1] == 0.0:
        roots.append(grid[-1])
    extrema = []
    for q in sorted(roots):
        # one Newton polish, guarded against a flat second derivative
        curv = float(terms.d2phi(q))
        if curv != 0.0:
            step = float(terms.dphi(q)) / curv
            if abs(step) < (hi - lo) / n_grid:
                q -= step
        if extrema and abs(q - extrema[-1][0]) <= 1e-12 * (1.0 + abs(q)):
            continue
        if abs(float(terms.dphi(q))) > tol_scale * scale * 1e3:
            continue  # spurious bracket from a near-flat stretch
        kind = "min" if float(terms.d2phi(q)) > 0 else "max"
        extrema.append((q, float(terms.phi(q)), kind))
    # enforce alternation: merge duplicate kinds produced by degenerate curvature
    cleaned = []
    for q, val, kind in extrema:
        if cleaned and cleaned[-1][2] == kind:
            keep = (q, val, kind) if (kind == "min") == (val < cleaned[-1][1]) else cleaned[-1]
            cleaned[-1] = keep
            continue
        cleaned.append((q, val, kind))
    ext = tuple(Extremum(q=q, phi=val, kind=kind) for q, val, kind in cleaned)
    warn = bool(ext) and (ext[0].q - lo < (hi - lo) * 1e-3
                          or hi - ext[-1].q < (hi - lo) * 1e-3)
    return PotentialProfile(
        extrema=ext,
        coercive_left=terms.limit_sign(-1) > 0,
        coercive_right=terms.limit_sign(+1) > 0,
        window=(lo, hi),
        window_warning=warn,
    )


def analyze_potential(star, q_window=None, n_grid=2001):
    """Locate the extrema of Phi and settle coercivity on both sides.

    Sign changes of Phi' on a refined grid are bracketed and bisected to
    machine precision, then polished with one Newton step.  Coercivity comes
    from the dominant exponent (the -rbar q term decides when every
    exponential decays).  A window_warning is raised, not an error, when an
    extremum sits against the window edge.
    """
    if hasattr(star, "terms"):
        star = star.terms()
    return _profile_of_terms(star, q_window=q_window, n_grid=n_grid)


@dataclass(frozen=True)
class Orbit:
    """Classified level set of the star Hamiltonian at energy E."""

    kind: str  # equilibrium | periodic | soliton | kink | unbounded
    energy: float
    level: float
    q_minus: float = None
    q_plus: float = None
    period: float = None
    q_plateau: float = None
    direction: str = None

    def to_dict(self):
        out = {"class": self.kind, "E": self.energy}
        if self.kind == "periodic":
            out.update(q_minus=self.q_minus, q_plus=self.q_plus, period=self.period)
        elif self.kind == "soliton":
            out.update(q_plateau=self.q_plateau, q_minus=self.q_minus,
                       q_plus=self.q_plus)
        elif self.kind == "kink":
            out.update(q_minus=self.q_minus, q_plus=self.q_plus)
        elif self.kind == "unbounded":
            out.update(direction=self.direction)
        elif self.kind == "equilibrium":
            out.update(q=self.q_minus)
        return out


class EnergyBelowWellError(ValueError):
    """Requested energy lies below the bottom of the tracked well."""


def _expand_root(terms, level, start, direction, step0):
    """Find a root of Phi = level beyond the last extremum by bracket growth."""
    step = step0
    q0 = start
    f0 = float(terms.phi(q0)) - level
    for _ in range(200):
        q1 = q0 + direction * step
        f1 = float(terms.phi(q1)) - level
        if f0 <= 0.0 <= f1 or f1 <= 0.0 <= f0:
            lo, hi = (q0, q1) if q0 < q1 else (q1, q0)
            return brentq(lambda q: float(terms.phi(q)) - level, lo, hi,
                          xtol=1e-14, rtol=8.9e-16)
        q0, f0 = q1, f1
        step *= 1.6
    raise RuntimeError("failed to bracket a level-set root on a coercive side")


def _march(terms, profile, level, q_start, side, tol_deg):
    """Walk extrema away from the well bottom until the level set closes.

    Returns ("simple", q), ("degenerate", q_max) or ("unbounded", None).
    """
    direction = 1 if side == "right" else -1
    ext = [e for e in profile.extrema
           if (e.q > q_start if side == "right" else e.q < q_start)]
    if side == "left":
        ext = ext[::-1]
    prev_q = q_start
    for e in ext:
        if e.kind == "max":
            if e.phi > level + tol_deg:
                lo, hi = (prev_q, e.q) if prev_q < e.q else (e.q, prev_q)
                return "simple", brentq(lambda q: float(terms.phi(q)) - level,
                                        lo, hi, xtol=1e-14, rtol=8.9e-16)
            if abs(e.phi - level) <= tol_deg:
                return "degenerate", e.q
        prev_q = e.q
    coercive = profile.coercive_right if side == "right" else profile.coercive_left
    if coercive:
        span = profile.window[1] - profile.window[0]
        return "simple", _expand_root(terms, level, prev_q, direction,
                                      max(span / 100.0, 1e-3))
    # windowed tail may still rise above the level even if the limit does not
    edge = profile.window[1] if side == "right" else profile.window[0]
    if float(terms.phi(edge)) > level:
        lo, hi = (prev_q, edge) if prev_q < edge else (edge, prev_q)
        return "simple", brentq(lambda q: float(terms.phi(q)) - level,
                                lo, hi, xtol=1e-14, rtol=8.9e-16)
    return "unbounded", None


def classify_orbit(star, E, q_ref=None, tol_deg=None, q_window=None,
                   with_period=True):
    """Classify the orbit at energy E in the well containing q_ref.

    The turning points solve Phi(q) = E - mu(1 - ln mu).  Two simple roots
    bound a periodic orbit; a root degenerate at a local maximum (within
    tol_deg) gives a soliton plateau; two degenerate ends give a kink; an
    open side gives an unbounded escape.  q_ref defaults to the deepest
    minimum of the profile.
    """
    terms = star.terms()
    psi_min = star.psi_min()
    level = E - psi_min
    profile = _profile_of_terms(terms, q_window=q_window)
    if tol_deg is None:
        tol_deg = 1e-9 * (1.0 + abs(level))

    minima = profile.minima()
    if not minima:
        # no well anywhere: the component is open on every non-coercive side
        sides = [s for s, flag in (("left", profile.coercive_left),
                                   ("right", profile.coercive_right)) if not flag]
        direction = "both" if len(sides) == 2 else (sides[0] if sides else None)
        if direction is None:
            raise EnergyBelowWellError("coercive potential without extrema in window")
        return Orbit(kind="unbounded", energy=E, level=level, direction=direction)

    if q_ref is None:
        well = min(minima, key=lambda e: e.phi)
    else:
        well = min(minima, key=lambda e: abs(e.q - q_ref))

    if level < well.phi - tol_deg:
        raise EnergyBelowWellError(
            f"E = {E:g} is below the well bottom energy {well.phi + psi_min:g}")
    if level <= well.phi + tol_deg:
        return Orbit(kind="equilibrium", energy=E, level=level,
                     q_minus=well.q, q_plus=well.q)

    right_kind, q_plus = _march(terms, profile, level, well.q, "right",
                                tol_deg)
    left_kind, q_minus = _march(terms, profile, level, well.q, "left",
                                tol_deg)
    if right_kind == "unbounded" or left_kind == "unbounded":
        direction = ("both" if right_kind == left_kind == "unbounded"
                     else ("right" if right_kind == "unbounded" else "left"))
        return Orbit(kind="unbounded", energy=E, level=level, direction=direction)
    if right_kind == "degenerate" and left_kind == "degenerate":
        return Orbit(kind="kink", energy=E, level=level,
                     q_minus=q_minus, q_plus=q_plus)
    if right_kind == "degenerate" or left_kind == "degenerate":
        plateau = q_plus if right_kind == "degenerate" else q_minus
        return Orbit(kind="soliton", energy=E, level=level,
                     q_minus=q_minus, q_plus=q_plus, q_plateau=plateau)
    T = None
    if with_period:
        T, _ = _orbit_quadrature(star, E, q_minus, q_plus)
    return Orbit(kind="periodic", energy=E, level=level,
                 q_minus=q_minus, q_plus=q_plus, period=T)


def _psi_roots(mu, w, p_lo_hint=None, p_hi_hint=None):
    """Both solutions of exp(p) - mu p = w around the minimum at ln mu."""
    pmin = math.log(mu)
    wmin = mu * (1.0 - pmin)
    if w < wmin:
        raise ValueError("kinetic level below min Psi")
    if w == wmin:
        return pmin, pmin

    def f(p):
        return math.exp(p) - mu * p - w

    hi = p_hi_hint if p_hi_hint is not None else pmin + 1.0
    while f(hi) < 0:
        hi = pmin + 2.0 * (hi - pmin)
    p_up = brentq(f, pmin, hi, xtol=1e-15, rtol=8.9e-16)
    lo = p_lo_hint if p_lo_hint is not None else pmin - 1.0
    while f(lo) < 0:
        lo = pmin - 2.0 * (pmin - lo)
    p_dn = brentq(f, lo, pmin, xtol=1e-15, rtol=8.9e-16)
    return p_up, p_dn


_GL_NODES, _GL_WEIGHTS = leggauss(80)


def _orbit_quadrature(star, E, q_minus, q_plus, n_segments=8):
    """Time-weighted quadrature nodes along one closed orbit.

    The turning-point singularity is removed with the substitution
    q = q_end -/+ u^2 on the outer halves; interior pieces integrate directly.
    Returns (period, nodes) where nodes is a list of (q, p, dt_weight).
    """
    terms = star.terms()
    mu = star.mu
    qm = 0.5 * (q_minus + q_plus)

    pieces = []  # (transform, jacobian, lo, hi) in integration variable
    half = [(q_minus, qm, +1), (q_plus, qm, -1)]
    for q_end, q_mid, sgn in half:
        umax = math.sqrt(abs(q_mid - q_end))
        # split the u-interval geometrically toward the turning point
        cuts = np.concatenate(([0.0], umax * 2.0 ** np.arange(1 - n_segments, 0.0),
                               [umax]))
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            pieces.append((q_end, sgn, lo, hi))

    nodes = []
    period = 0.0
    for q_end, sgn, lo, hi in pieces:
        mid, rad = 0.5 * (hi + lo), 0.5 * (hi - lo)
        for xi, wgt in zip(_GL_NODES, _GL_WEIGHTS):
            u = mid + rad * xi
            q = q_end + sgn * u * u
            w = E - float(terms.phi(q))
            try:
                p_up, p_dn = _psi_roots(mu, w)
            except ValueError:
                continue  # roundoff placed the node a hair outside the well
            vel_up = math.exp(p_up) - mu
            vel_dn = mu - math.exp(p_dn)
            if vel_up <= 0.0 or vel_dn <= 0.0:
                continue
            jac = wgt * rad * 2.0 * u
            dt_up = jac / vel_up
            dt_dn = jac / vel_dn
            nodes.append((q, p_up, dt_up))
            nodes.append((q, p_dn, dt_dn))
            period += dt_up + dt_dn
    return period, nodes


def period(star, E, q_ref=None, q_window=None, rtol=1e-6):
    """Period of the periodic orbit at energy E via two-branch quadrature.

    Both momentum branches contribute: dq/dt changes sign over a closed orbit,
    so T = int [ (e^{p_up} - mu)^{-1} + (mu - e^{p_dn})^{-1} ] dq between the
    turning points.  The estimate is refined until two segment resolutions
    agree to rtol.
    """
    orbit = classify_orbit(star, E, q_ref=q_ref, q_window=q_window,
                           with_period=False)
    if orbit.kind != "periodic":
        raise ValueError(f"orbit at E = {E:g} is {orbit.kind}, not periodic")
    t_prev, _ = _orbit_quadrature(star, E, orbit.q_minus, orbit.q_plus,
                                  n_segments=6)
    for n_seg in (8, 12, 18, 28):
        t_cur, _ = _orbit_quadrature(star, E, orbit.q_minus, orbit.q_plus,
                                     n_segments=n_seg)
        if abs(t_cur - t_prev) <= rtol * abs(t_cur):
            return t_cur
        t_prev = t_cur
    return t_prev


@dataclass(frozen=True)
class PersistenceVerdict:
    passed: bool
    rule: str  # "PI" | "PII" | "PIII" | "fails"
    i_plus: int = None
    i_minus: int = None
    tied: bool = False

    def __bool__(self):
        return self.passed


def persistence_criteria(star):
    """Coercivity-based persistence rules for a star.

    PI  (all a > 0): b > 0 at the largest a and rbar > 0.
    PII (all a < 0): b < 0 at the most negative a and rbar < 0.
    PIII (mixed):    b > 0 at the largest a and b < 0 at the most negative a.

    Argmax ties break to the lowest index and are flagged.
    """
    a, b = star.a, star.b
    if np.all(a > 0):
        i_plus = int(np.argmax(a))
        tied = int(np.sum(a == a[i_plus])) > 1
        ok = b[i_plus] > 0 and star.rbar > 0
        return PersistenceVerdict(passed=bool(ok), rule="PI" if ok else "fails",
                                  i_plus=i_plus, tied=tied)
    if np.all(a < 0):
        i_minus = int(np.argmax(-a))
        tied = int(np.sum(a == a[i_minus])) > 1
        ok = b[i_minus] < 0 and star.rbar < 0
        return PersistenceVerdict(passed=bool(ok), rule="PII" if ok else "fails",
                                  i_minus=i_minus, tied=tied)
    i_plus = int(np.argmax(a))
    i_minus = int(np.argmin(a))
    tied = int(np.sum(a == a[i_plus])) > 1 or int(np.sum(a == a[i_minus])) > 1
    ok = b[i_plus] > 0 and b[i_minus] < 0
    return PersistenceVerdict(passed=bool(ok), rule="PIII" if ok else "fails",
                              i_plus=i_plus, i_minus=i_minus, tied=tied)


def domino_check(star):
    """Indices whose removal alone breaks persistence (keystone species)."""
    base = persistence_criteria(star)
    if base.rule not in ("PI", "PIII"):
        raise ValueError("domino check applies to stars passing PI or PIII")
    keystones = []
    for j in range(star.n_species):
        if star.n_species == 1:
            keystones.append(j)
            continue
        keep = np.arange(star.n_species) != j
        reduced = StarSystem(a=star.a[keep], b=star.b[keep], rbar=star.rbar,
                             mu=star.mu, C=star.C[keep])
        if not persistence_criteria(reduced).passed:
            keystones.append(j)
    return keystones
