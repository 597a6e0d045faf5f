"""Slow-environment averaging for star systems.

Over times of order 1/epsilon the fast oscillation is summarized by its
energy E and the slowly drifting constants Cbar.  Period averages over the
frozen orbit close the system:

    dE/dtau    = S1 + S2 + S3
    dCbar_i/dtau = W_i = beta Cbar_i (ghat_i - g_i Cbar_i theta_i - a_i'(tau) <Q>)

with S1 the self-limitation work -dbar <e^P (e^P - mu)>, S2 = <Phi_tau> the
explicit slow dependence, S3 = sum_i <Phi_C_i> W_i, and theta_i = <exp(a_i Q)>.
A trajectory leaves this description when E reaches the lowest barrier of its
well; that crossing is emitted as a regime event, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import find_peaks

from .integrate import Trajectory
from .star import StarSystem, _orbit_quadrature, _profile_of_terms
from .util import EXP_LIMIT


class CoefficientPath:
    """Scalar or vector coefficient as a function of slow time.

    Wraps a constant, a callable (optionally with an analytic derivative), or
    a sampled table with linear interpolation.  Derivatives fall back to
    central differences with step 1e-4.
    """

    _FD_STEP = 1e-4

    def __init__(self, value_fn, derivative_fn=None, analytic=False):
        self._value = value_fn
        self._derivative = derivative_fn
        self.analytic_derivative = bool(derivative_fn) and analytic

    @classmethod
    def constant(cls, value):
        arr = np.asarray(value, dtype=float)
        frozen = arr.copy()
        zero = np.zeros_like(frozen) if frozen.ndim else 0.0
        return cls(lambda tau: frozen, lambda tau: zero, analytic=True)

    @classmethod
    def from_callable(cls, fn, derivative=None):
        return cls(fn, derivative, analytic=derivative is not None)

    @classmethod
    def from_table(cls, taus, values):
        taus = np.asarray(taus, dtype=float)
        values = np.asarray(values, dtype=float)
        if np.any(np.diff(taus) <= 0):
            raise ValueError("table abscissae must be strictly increasing")

        def value(tau):
            if values.ndim == 1:
                return float(np.interp(tau, taus, values))
            return np.array([np.interp(tau, taus, col) for col in values.T])

        return cls(value)

    def value(self, tau):
        out = self._value(tau)
        return out if np.ndim(out) else float(out)

    def derivative(self, tau):
        if self._derivative is not None:
            out = self._derivative(tau)
            return out if np.ndim(out) else float(out)
        h = self._FD_STEP
        hi = np.asarray(self._value(tau + h), dtype=float)
        lo = np.asarray(self._value(tau - h), dtype=float)
        out = (hi - lo) / (2.0 * h)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class SlowEnvironment:
    """Slowly varying star coefficients plus scaled self-limitation.

    epsilon sets the time-scale ratio, dbar the hub self-limitation
    (d11 = epsilon dbar), beta = kappa / epsilon the ratio of the specialist
    self-limitation scale, and gamma_hat / gamma the scaled offsets and
    limitation coefficients entering the Cbar drift.
    """

    a: CoefficientPath
    b: CoefficientPath
    rbar: CoefficientPath
    mu: float
    epsilon: float
    dbar: float = 0.0
    beta: float = 0.0
    gamma_hat: np.ndarray = None
    gamma: np.ndarray = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        n = np.atleast_1d(np.asarray(self.a.value(0.0))).size
        for name in ("gamma_hat", "gamma"):
            val = getattr(self, name)
            arr = (np.zeros(n) if val is None
                   else np.atleast_1d(np.asarray(val, dtype=float)))
            object.__setattr__(self, name, arr)

    def star_at(self, tau, Cbar):
        return StarSystem(a=self.a.value(tau), b=self.b.value(tau),
                          rbar=self.rbar.value(tau), mu=self.mu, C=Cbar)


@dataclass(frozen=True)
class AveragedState:
    tau: float
    E: float
    Cbar: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.Cbar, dtype=float))
        if np.any(arr <= 0):
            raise ValueError("Cbar must be strictly positive")
        object.__setattr__(self, "Cbar", arr)


class OrbitLostError(RuntimeError):
    """E reached the barrier of the tracked well: regime change, not a bug."""


_DEGENERATE_GAP = 1e-10


def orbit_averages(star, E, observables, q_ref=None):
    """Period T and time averages of observables f(q, p) over the orbit at E.

    Near the bottom of the well (E - E_min below a tiny threshold) the orbit
    degenerates to the equilibrium and averages reduce to point evaluations.
    """
    from .star import classify_orbit

    profile = _profile_of_terms(star.terms())
    minima = profile.minima()
    if not minima:
        raise ValueError("no potential well: averages undefined")
    well = (min(minima, key=lambda e: e.phi) if q_ref is None
            else min(minima, key=lambda e: abs(e.q - q_ref)))
    e_min = well.phi + star.psi_min()
    if E - e_min <= _DEGENERATE_GAP * (1.0 + abs(E)):
        p_eq = math.log(star.mu)
        omega2 = star.mu * float(star.terms().d2phi(well.q))
        T = 2.0 * math.pi / math.sqrt(omega2) if omega2 > 0 else math.inf
        return T, [float(f(well.q, p_eq)) for f in observables]
    orbit = classify_orbit(star, E, q_ref=well.q, with_period=False)
    if orbit.kind != "periodic":
        raise ValueError(f"orbit at E = {E:g} is {orbit.kind}, not periodic")
    T, nodes = _orbit_quadrature(star, E, orbit.q_minus, orbit.q_plus)
    sums = [0.0] * len(observables)
    for q, p, dt in nodes:
        for k, f in enumerate(observables):
            sums[k] += dt * f(q, p)
    return T, [s / T for s in sums]


def period_average(star, E, f, q_ref=None):
    """Average of f(q, p) over one period of the orbit at energy E."""
    _, (avg,) = orbit_averages(star, E, [f], q_ref=q_ref)
    return avg


def mu_balance(a, b, r, gamma, rbar=0.0):
    """Offset mu making the averaged Cbar equation stationary.

    Solves sum_k b_k (a_k mu - r_k) / gamma_k = rbar, i.e.

        mu = (rbar + sum_k b_k r_k / gamma_k) / (sum_k b_k a_k / gamma_k),

    which equals the hub equilibrium abundance vbar of the star with diagonal
    self-limitation and d = 0.  With rbar omitted this reduces to the balance
    of the specialist terms alone.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    denom = float(np.sum(b * a / gamma))
    if denom == 0.0:
        raise ValueError("sum of b a / gamma vanishes: mu undefined")
    return float((rbar + np.sum(b * r / gamma)) / denom)


def _well_and_barrier(star, q_hint):
    """Tracked well (nearest the hint) and its lowest adjacent barrier energy."""
    profile = _profile_of_terms(star.terms())
    minima = profile.minima()
    if not minima:
        raise OrbitLostError("potential lost every well")
    well = (min(minima, key=lambda e: abs(e.q - q_hint)) if q_hint is not None
            else min(minima, key=lambda e: e.phi))
    ext = list(profile.extrema)
    idx = ext.index(well)
    barrier_phis = []
    if idx > 0 and ext[idx - 1].kind == "max":
        barrier_phis.append(ext[idx - 1].phi)
    if idx + 1 < len(ext) and ext[idx + 1].kind == "max":
        barrier_phis.append(ext[idx + 1].phi)
    psi_min = star.psi_min()
    e_min = well.phi + psi_min
    e_barrier = min(barrier_phis) + psi_min if barrier_phis else math.inf
    all_barriers = [p + psi_min for p in barrier_phis]
    return well, e_min, e_barrier, all_barriers


def _averaged_terms(env, tau, E, Cbar, q_hint):
    """All averaged quantities at (tau, E, Cbar); clamps E inside the well."""
    star = env.star_at(tau, Cbar)
    well, e_min, e_barrier, barriers = _well_and_barrier(star, q_hint)
    margin = 1e-6 * (1.0 + abs(E))
    e_eff = min(E, e_barrier - margin) if math.isfinite(e_barrier) else E
    e_eff = max(e_eff, e_min)

    a = np.atleast_1d(np.asarray(star.a))
    n = a.size
    mu = env.mu
    obs = [lambda q, p, ai=ai: math.exp(ai * q) for ai in a]
    obs.append(lambda q, p: q)
    obs.append(lambda q, p: math.exp(p) * (math.exp(p) - mu))
    for ai in a:
        obs.append(lambda q, p, ai=ai: q * math.exp(ai * q))
    T, avgs = orbit_averages(star, e_eff, obs, q_ref=well.q)
    theta = np.array(avgs[:n])
    q_avg = avgs[n]
    work = avgs[n + 1]
    q_exp = np.array(avgs[n + 2:])

    da = np.atleast_1d(np.asarray(env.a.derivative(tau), dtype=float)) * np.ones(n)
    db = np.atleast_1d(np.asarray(env.b.derivative(tau), dtype=float)) * np.ones(n)
    drbar = float(env.rbar.derivative(tau))
    b = np.atleast_1d(np.asarray(star.b))
    rho = b / a

    W = env.beta * Cbar * (env.gamma_hat - env.gamma * Cbar * theta - da * q_avg)
    S1 = -env.dbar * work
    # d(rho)/dtau = (b' a - b a') / a^2 ; Phi_tau also carries rho a' q and -rbar' q
    drho = (db * a - b * da) / (a * a)
    S2 = float(np.sum(Cbar * (drho * theta + rho * da * q_exp)) - drbar * q_avg)
    S3 = float(np.sum(rho * theta * W))
    return {"star": star, "well": well, "T": T, "theta": theta, "q_avg": q_avg,
            "S1": S1, "S2": S2, "S3": S3, "W": W, "e_min": e_min,
            "e_barrier": e_barrier, "barriers": barriers}


def averaged_rhs(env, state, q_hint=None):
    """Slow derivatives (dE/dtau, dCbar/dtau) of the averaged system.

    Raises OrbitLostError once E is at or above the lowest barrier of the
    tracked well (the crossing is a regime event for evolve_averaged).
    """
    terms = _averaged_terms(env, state.tau, state.E, state.Cbar, q_hint)
    if state.E >= terms["e_barrier"]:
        raise OrbitLostError(
            f"E = {state.E:g} reached the barrier {terms['e_barrier']:g}")
    dE = terms["S1"] + terms["S2"] + terms["S3"]
    return dE, terms["W"]


@dataclass
class RegimeEvent:
    tau: float
    kind: str  # "burst" | "stabilized" | "environment-destabilized"

    def to_dict(self):
        return {"tau": self.tau, "kind": self.kind}


@dataclass
class AveragedTrajectory:
    tau: np.ndarray
    E: np.ndarray
    Cbar: np.ndarray          # (n_samples, N)
    events: list
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        from .util import fmt17
        with open(path, "w", encoding="utf-8") as fh:
            n = self.Cbar.shape[1]
            fh.write("tau,E," + ",".join(f"C{i + 1}" for i in range(n)) + "\n")
            for k in range(self.tau.size):
                row = [fmt17(self.tau[k]), fmt17(self.E[k])]
                row += [fmt17(c) for c in self.Cbar[k]]
                fh.write(",".join(row) + "\n")


def evolve_averaged(env, init, tau_end, rtol=1e-7, atol=1e-10, n_samples=201,
                    q_well=None):
    """Integrate the averaged system, emitting regime events.

    Stops at the first barrier crossing; the event kind is
    "environment-destabilized" when the explicit slow drive S2 overcomes an
    actual damping term (S1 < 0 and S2 > |S1|), plain "burst" otherwise.  A
    run with no crossing ends with a single "stabilized" event at tau_end.
    """
    n = init.Cbar.size
    hint = {"q": q_well}

    def unpack(y):
        return float(y[0]), np.exp(np.clip(y[1:], -EXP_LIMIT, EXP_LIMIT))

    def rhs(tau, y):
        E, Cbar = unpack(y)
        terms = _averaged_terms(env, tau, E, Cbar, hint["q"])
        hint["q"] = terms["well"].q
        dE = terms["S1"] + terms["S2"] + terms["S3"]
        return np.concatenate(([dE], terms["W"] / Cbar))

    def barrier_margin(tau, y):
        E, Cbar = unpack(y)
        terms = _averaged_terms(env, tau, E, Cbar, hint["q"])
        if not math.isfinite(terms["e_barrier"]):
            return 1.0 + abs(E)
        return terms["e_barrier"] - E

    barrier_margin.terminal = True
    barrier_margin.direction = -1

    y0 = np.concatenate(([init.E], np.log(init.Cbar)))
    t_eval = np.linspace(init.tau, tau_end, n_samples)
    sol = solve_ivp(rhs, (init.tau, tau_end), y0, method="RK45", rtol=rtol,
                    atol=atol, t_eval=t_eval, events=barrier_margin)
    if sol.status == -1:
        raise RuntimeError(f"averaged integration failed: {sol.message}")

    E_samples = sol.y[0]
    C_samples = np.exp(sol.y[1:]).T
    events = []
    if sol.status == 1 and sol.t_events[0].size:
        tau_c = float(sol.t_events[0][0])
        y_c = sol.y_events[0][0]
        E_c, C_c = unpack(y_c)
        terms = _averaged_terms(env, tau_c, E_c, C_c, hint["q"])
        driven = terms["S1"] < 0 and terms["S2"] > abs(terms["S1"])
        events.append(RegimeEvent(tau=tau_c,
                                  kind="environment-destabilized" if driven
                                  else "burst"))
        # include the crossing point itself in the samples
        E_samples = np.append(E_samples, E_c)
        C_samples = np.vstack((C_samples, C_c))
        sol_t = np.append(sol.t, tau_c)
    else:
        events.append(RegimeEvent(tau=float(tau_end), kind="stabilized"))
        sol_t = sol.t
    meta = {"rtol": rtol, "atol": atol, "nfev": int(sol.nfev),
            "s2_derivative": "analytic" if env.rbar.analytic_derivative
            else "central-difference"}
    return AveragedTrajectory(tau=np.asarray(sol_t), E=np.asarray(E_samples),
                              Cbar=np.asarray(C_samples), events=events,
                              meta=meta)


@dataclass
class BurstScan:
    times: np.ndarray
    heights: np.ndarray
    intervals: np.ndarray
    rare: bool = None
    sampling_warning: bool = False

    @property
    def count(self):
        return self.times.size


def detect_bursts(traj, observable=0, prominence=None, reference_period=None):
    """Locate bursts of an observable by prominence-thresholded peak search.

    The default threshold is five times the median absolute deviation of the
    signal (rare bursts barely move the MAD, so it tracks the quiet
    baseline).  When a reference fast period is supplied the scan flags the
    rare-burst regime (mean spacing above ten periods) and warns about
    sampling sparser than twenty samples per period.
    """
    if isinstance(observable, str):
        signal = traj.column(observable)
    else:
        signal = traj.states[:, observable]
    t = traj.t
    if prominence is None:
        mad = float(np.median(np.abs(signal - np.median(signal))))
        prominence = 5.0 * (mad if mad > 0 else float(np.std(signal)) or 1.0)
    idx, _ = find_peaks(signal, prominence=prominence)
    times = t[idx]
    intervals = np.diff(times)
    rare = None
    warning = False
    if reference_period is not None and reference_period > 0:
        dt = float(np.median(np.diff(t))) if t.size > 1 else math.inf
        warning = reference_period / dt < 20.0
        if intervals.size:
            rare = bool(np.mean(intervals) > 10.0 * reference_period)
    return BurstScan(times=times, heights=signal[idx], intervals=intervals,
                     rare=rare, sampling_warning=warning)


def simulate_slow_fast(env, q0, p0, C0, t_end, rtol=1e-9, atol=1e-12,
                       n_samples=2001):
    """Direct integration of the fast star under the slow environment.

    Integrates (q, p, ln C) with tau = epsilon t entering the coefficients,
    the hub self-limitation epsilon dbar e^p, and the specialist drift in the
    same scaled form the averaged system uses.  Returns a Trajectory with the
    instantaneous H(q, p; tau, C) recorded for comparison against E(tau).
    """
    C0 = np.atleast_1d(np.asarray(C0, dtype=float))
    n = C0.size
    eps, mu = env.epsilon, env.mu

    def rhs(t, y):
        tau = eps * t
        q, p = y[0], y[1]
        C = np.exp(np.clip(y[2:], -EXP_LIMIT, EXP_LIMIT))
        a = np.atleast_1d(np.asarray(env.a.value(tau))) * np.ones(n)
        b = np.atleast_1d(np.asarray(env.b.value(tau))) * np.ones(n)
        da = np.atleast_1d(np.asarray(env.a.derivative(tau), dtype=float)) * np.ones(n)
        expq = np.exp(np.clip(a * q, -EXP_LIMIT, EXP_LIMIT))
        ep = math.exp(min(p, EXP_LIMIT))
        dq = ep - mu
        dp = float(env.rbar.value(tau)) - float(np.sum(b * C * expq)) \
            - eps * env.dbar * ep
        dlnC = eps * env.beta * (env.gamma_hat - env.gamma * C * expq - q * da)
        return np.concatenate(([dq, dp], dlnC))

    y0 = np.concatenate(([q0, p0], np.log(C0)))
    t_eval = np.linspace(0.0, t_end, n_samples)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=rtol,
                    atol=atol, t_eval=t_eval)
    if not sol.success:
        raise RuntimeError(f"fast integration failed: {sol.message}")
    qs, ps = sol.y[0], sol.y[1]
    Cs = np.exp(sol.y[2:]).T
    H = np.empty(sol.t.size)
    for k, t in enumerate(sol.t):
        star = env.star_at(eps * t, Cs[k])
        H[k] = float(star.terms().phi(qs[k])) + math.exp(ps[k]) - mu * ps[k]
    states = np.column_stack((qs, ps, Cs))
    labels = ["q", "p"] + [f"C{i + 1}" for i in range(n)]
    return Trajectory(t=sol.t.copy(), states=states, labels=labels, energy=H,
                      meta={"method": "DOP853", "rtol": rtol, "epsilon": eps})
