"""Two weakly coupled star systems: linearization, slow amplitudes, stability.

Near the decoupled equilibria (qbar_1, qbar_2) each star oscillates at
omega_k^2 = mu_k Phi_k''(qbar_k).  At resonance the coupling feeds one
amplitude from the other on the slow time tau = kappa t:

    2 omega Q1' = -ebar d1 omega Q1 + b12 Q2 sin(phi2 - phi1)
    2 omega Q2' = -ebar d2 omega Q2 + b21 Q1 sin(phi2 - phi1)
    2 omega Q1 phi1' = -b12 Q2 cos(phi2 - phi1)
    2 omega Q2 phi2' =  b21 Q1 cos(phi2 - phi1)

with b12 = g12 / 2, b21 = -g21 / 2 from the coupling derivatives.  The
normalization is the one whose phase-locked reduction has the closed-form
rates of ``phase_locked_rates`` exactly, so simulated and predicted growth
agree for every damping level.  Exponential instability needs R = g12 g21 < 0
(equivalently b12 b21 > 0) with weak damping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .star import StarSystem, analyze_potential


@dataclass(frozen=True)
class TwoStarSystem:
    """Two stars plus weak cross couplings and scaled self-limitation.

    atilde1/btilde2 couple the first star's specialists to the second hub and
    vice versa; kappa is the coupling strength, epsilon the self-limitation
    scale, with kappa >> epsilon recorded as ebar = epsilon / kappa.
    """

    star1: StarSystem
    star2: StarSystem
    atilde1: np.ndarray   # (N1,) benefit of star-1 specialists from hub 2
    atilde2: np.ndarray   # (N2,) benefit of star-2 specialists from hub 1
    btilde1: np.ndarray   # (N2,) hub-1 predation on star-2 specialists
    btilde2: np.ndarray   # (N1,) hub-2 predation on star-1 specialists
    kappa: float
    epsilon: float
    d1: float = 0.0
    d2: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0 or self.epsilon < 0:
            raise ValueError("need kappa > 0 and epsilon >= 0")
        for name, size in (("atilde1", self.star1.n_species),
                           ("btilde2", self.star1.n_species),
                           ("atilde2", self.star2.n_species),
                           ("btilde1", self.star2.n_species)):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.size != size:
                raise ValueError(f"{name} must have length {size}")
            object.__setattr__(self, name, arr)

    @property
    def ebar(self):
        return self.epsilon / self.kappa

    def to_interaction_system(self):
        """Combined (N1 + N2) x 2 population system for direct simulation.

        The specialist rates r and the hub rates rbar absorb the O(kappa)
        cross terms, so the decoupled equilibrium (q = 0, v = mu, constants C)
        survives the coupling exactly and the pair stays on resonance instead
        of picking up an O(kappa) frequency split.
        """
        from .model import InteractionSystem
        s1, s2 = self.star1, self.star2
        n1, n2 = s1.n_species, s2.n_species
        A = np.zeros((n1 + n2, 2))
        A[:n1, 0] = s1.a
        A[:n1, 1] = self.kappa * self.atilde1
        A[n1:, 1] = s2.a
        A[n1:, 0] = self.kappa * self.atilde2
        B = np.zeros((2, n1 + n2))
        B[0, :n1] = s1.b
        B[0, n1:] = self.kappa * self.btilde1
        B[1, n1:] = s2.b
        B[1, :n1] = self.kappa * self.btilde2
        mu = np.array([s1.mu, s2.mu])
        r = A @ mu
        qbars = []
        for star in (s1, s2):
            minima = analyze_potential(star).minima()
            if not minima:
                raise ValueError("a star has no potential well to anchor")
            qbars.append(min(minima, key=lambda e: e.phi).q)
        cross1 = self.kappa * float(np.sum(self.btilde1 * s2.C
                                           * np.exp(s2.a * qbars[1])))
        cross2 = self.kappa * float(np.sum(self.btilde2 * s1.C
                                           * np.exp(s1.a * qbars[0])))
        rbar = [s1.rbar + cross1, s2.rbar + cross2]
        D = self.epsilon * np.diag([self.d1, self.d2])
        return InteractionSystem(r=r, rbar=rbar, A=A, B=B, D=D)


@dataclass(frozen=True)
class ResonanceModel:
    """Linearized two-star data at the decoupled equilibria."""

    omega1: float
    omega2: float
    g12: float
    g21: float
    ebar: float
    qbar: tuple
    mu: tuple
    d: tuple
    mu_tilde: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mu_tilde",
                           (self.ebar * self.mu[0] * self.d[0],
                            self.ebar * self.mu[1] * self.d[1]))

    @property
    def b12(self):
        return 0.5 * self.g12

    @property
    def b21(self):
        return -0.5 * self.g21

    @property
    def R(self):
        return self.g12 * self.g21

    @property
    def omega(self):
        return 0.5 * (self.omega1 + self.omega2)


def linearize(two_star):
    """Resonance model from the two decoupled potentials.

    Each star must have an interior minimum qbar_k; the frequencies are
    omega_k = sqrt(mu_k Phi_k''(qbar_k)) and the coupling derivatives are
    g12 = g1'(qbar_2), g21 = g2'(qbar_1) where g1 collects the hub-1 coupling
    to star-2 specialists and vice versa.
    """
    s1, s2 = two_star.star1, two_star.star2
    qbars = []
    omegas = []
    for star in (s1, s2):
        profile = analyze_potential(star)
        minima = profile.minima()
        if not minima:
            raise ValueError("a decoupled star has no interior potential well")
        well = min(minima, key=lambda e: e.phi)
        curv = float(star.terms().d2phi(well.q))
        qbars.append(well.q)
        omegas.append(math.sqrt(star.mu * curv))
    q1, q2 = qbars
    g12 = float(np.sum(two_star.btilde1 * s2.C * s2.a
                       * np.exp(s2.a * q2)))
    g21 = float(np.sum(two_star.btilde2 * s1.C * s1.a
                       * np.exp(s1.a * q1)))
    return ResonanceModel(omega1=omegas[0], omega2=omegas[1], g12=g12, g21=g21,
                          ebar=two_star.ebar, qbar=(q1, q2),
                          mu=(s1.mu, s2.mu), d=(two_star.d1, two_star.d2))


def detuning(model, kappa, factor=1.0):
    """'resonant' when |omega1 - omega2| <= factor * kappa (inclusive)."""
    gap = abs(model.omega1 - model.omega2)
    return "resonant" if gap <= factor * kappa else "nonresonant"


@dataclass
class SlowTrajectory:
    tau: np.ndarray
    Q: np.ndarray        # (n, 2) amplitudes
    phi: np.ndarray      # (n, 2) phases
    extinguished: bool = False
    extinction_tau: float = None


def integrate_resonance(model, Q0, phi0, tau_end, rtol=1e-10, atol=1e-12,
                        n_samples=1001):
    """Integrate the slow amplitude-phase system at exact resonance.

    Stops with an extinction-of-oscillation event if either amplitude falls
    below 1e-12 (the phase equations divide by Q).
    """
    Q0 = np.asarray(Q0, dtype=float)
    phi0 = np.asarray(phi0, dtype=float)
    if Q0.shape != (2,) or phi0.shape != (2,):
        raise ValueError("Q0 and phi0 must each have two components")
    if np.any(Q0 <= 0):
        raise ValueError("initial amplitudes must be positive")
    w = model.omega
    b12, b21 = model.b12, model.b21
    e1 = model.ebar * model.d[0]
    e2 = model.ebar * model.d[1]

    def rhs(tau, y):
        q1, q2, f1, f2 = y
        s = math.sin(f2 - f1)
        c = math.cos(f2 - f1)
        return [(-e1 * w * q1 + b12 * q2 * s) / (2.0 * w),
                (-e2 * w * q2 + b21 * q1 * s) / (2.0 * w),
                -b12 * q2 * c / (2.0 * w * q1),
                b21 * q1 * c / (2.0 * w * q2)]

    def floor_event(tau, y):
        return min(y[0], y[1]) - 1e-12

    floor_event.terminal = True
    floor_event.direction = -1

    y0 = np.concatenate((Q0, phi0))
    t_eval = np.linspace(0.0, tau_end, n_samples)
    sol = solve_ivp(rhs, (0.0, tau_end), y0, method="DOP853", rtol=rtol,
                    atol=atol, t_eval=t_eval, events=floor_event)
    if sol.status == -1:
        raise RuntimeError(f"slow integration failed: {sol.message}")
    ext = sol.status == 1
    return SlowTrajectory(tau=sol.t.copy(), Q=sol.y[:2].T, phi=sol.y[2:].T,
                          extinguished=ext,
                          extinction_tau=float(sol.t_events[0][0]) if ext and
                          sol.t_events[0].size else None)


def phase_locked_rates(model, branch=+1):
    """Eigenvalues of the phase-locked linear amplitude system.

    2 omega Q' = [[-ebar d1 omega, +-b12], [+-b21, -ebar d2 omega]] Q gives

        lambda = [-ebar omega (d1 + d2)
                  +- sqrt(ebar^2 omega^2 (d1 - d2)^2 + 4 b12 b21)] / (4 omega)

    independent of the branch sign.  Returns (lam_minus, lam_plus, growing).
    """
    w = model.omega
    d1, d2 = model.d
    eb = model.ebar
    disc = eb * eb * w * w * (d1 - d2) ** 2 + 4.0 * model.b12 * model.b21
    root = math.sqrt(disc) if disc >= 0 else 1j * math.sqrt(-disc)
    lam_plus = (-eb * w * (d1 + d2) + root) / (4.0 * w)
    lam_minus = (-eb * w * (d1 + d2) - root) / (4.0 * w)
    growing = bool(np.real(lam_plus) > 0)
    return lam_minus, lam_plus, growing


def locked_matrix(model, branch=+1):
    """The 2x2 rate matrix of the locked branch (for numeric cross-checks)."""
    w = model.omega
    s = 1.0 if branch >= 0 else -1.0
    return np.array([[-model.ebar * model.d[0] * w, s * model.b12],
                     [s * model.b21, -model.ebar * model.d[1] * w]]) / (2.0 * w)


@dataclass(frozen=True)
class ResonanceVerdict:
    verdict: str      # "unstable" | "stable" | "damped"
    R: float
    b12: float
    b21: float
    ebar: float
    lambda_max: float

    def to_dict(self):
        return {"R": self.R, "b12": self.b12, "b21": self.b21,
                "ebar": self.ebar, "lambda_max": self.lambda_max,
                "verdict": self.verdict}


def instability_criterion(model):
    """Stability of the resonant pair.

    unstable: R < 0 (so b12 b21 > 0) and the locked growth rate is positive;
    damped:   coupling of the unstable sign but damping wins (max Re λ <= 0),
              and likewise pure damping with no coupling product;
    stable:   R > 0 (oscillatory energy exchange, no exponential growth).
    """
    _, lam_plus, growing = phase_locked_rates(model)
    lam_max = float(np.real(lam_plus))
    if model.R > 0:
        verdict = "stable"
    elif growing:
        verdict = "unstable"
    elif model.ebar > 0:
        verdict = "damped"
    else:
        verdict = "stable"
    return ResonanceVerdict(verdict=verdict, R=model.R, b12=model.b12,
                            b21=model.b21, ebar=model.ebar, lambda_max=lam_max)
