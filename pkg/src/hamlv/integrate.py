"""Time integration: positivity-preserving adaptive runs and symplectic steps.

The full population system is integrated in log abundances (u = ln x,
w = ln v), which keeps the positive cone invariant structurally and turns
blow-up into a finite log-coordinate threshold.  The reduced star Hamiltonian
uses a fixed-step Stormer-Verlet splitting whose kick and drift substeps are
the exact flows of Phi and Psi separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .canonical import hamiltonian, transformed_rhs
from .util import EXP_LIMIT, fmt17


@dataclass
class Trajectory:
    """Sampled solution with optional energy diagnostic and solver metadata."""

    t: np.ndarray
    states: np.ndarray          # (n_samples, dim)
    labels: list
    energy: np.ndarray = None
    meta: dict = field(default_factory=dict)
    escaped: bool = False
    escape_time: float = None

    def column(self, label):
        return self.states[:, self.labels.index(label)]

    def to_csv(self, path):
        header = ["t"] + list(self.labels)
        if self.energy is not None:
            header.append("H")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for i, ti in enumerate(self.t):
                row = [fmt17(ti)] + [fmt17(v) for v in self.states[i]]
                if self.energy is not None:
                    row.append(fmt17(self.energy[i]))
                fh.write(",".join(row) + "\n")


def _solve_log_system(rhs, y0, t_end, rtol, atol, t_eval, method):
    escape = lambda t, y: EXP_LIMIT - float(np.max(np.abs(y)))
    escape.terminal = True
    escape.direction = -1
    diverged = {"t": None}

    def guarded(t, y):
        if diverged["t"] is None and float(np.max(np.abs(y))) > 30.0:
            diverged["t"] = t
        return rhs(t, y)

    sol = solve_ivp(guarded, (0.0, t_end), y0, method=method, rtol=rtol,
                    atol=atol, t_eval=t_eval, events=escape)
    escaped = sol.status == 1
    t_escape = float(sol.t_events[0][0]) if escaped and sol.t_events[0].size else None
    if sol.status == -1:
        # superexponential blow-up collapses the step size long before a log
        # coordinate reaches the clamp; a clearly diverged state is an escape
        if diverged["t"] is not None:
            escaped = True
            t_escape = float(diverged["t"])
        else:
            raise RuntimeError(f"integration failed: {sol.message}")
    meta = {"method": method, "rtol": rtol, "atol": atol,
            "nfev": int(sol.nfev), "n_accepted": int(sol.t.size)}
    return sol, escaped, t_escape, meta


def integrate_lv(system, x0, v0, t_end, rtol=1e-8, atol=1e-10, n_samples=1001,
                 t_eval=None, method="DOP853"):
    """Integrate the two-group system from positive initial abundances.

    Escape (any log abundance beyond +-700) terminates the run and is reported
    on the trajectory rather than raised.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    if np.any(x0 <= 0) or np.any(v0 <= 0):
        raise ValueError("initial abundances must be strictly positive")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    n, m = system.N, system.M
    r, rbar, A, B = system.r, system.rbar, system.A, system.B
    Gamma, D = system.Gamma, system.D

    def rhs(t, y):
        x = np.exp(np.clip(y[:n], -EXP_LIMIT, EXP_LIMIT))
        v = np.exp(np.clip(y[n:], -EXP_LIMIT, EXP_LIMIT))
        du = -r + A @ v - Gamma @ x
        dw = rbar - B @ x - D @ v
        return np.concatenate((du, dw))

    y0 = np.concatenate((np.log(x0), np.log(v0)))
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, n_samples)
    sol, escaped, t_escape, meta = _solve_log_system(rhs, y0, t_end, rtol,
                                                     atol, t_eval, method)
    states = np.exp(sol.y.T)
    labels = [f"x{i + 1}" for i in range(n)] + [f"v{j + 1}" for j in range(m)]
    return Trajectory(t=sol.t.copy(), states=states, labels=labels, meta=meta,
                      escaped=escaped, escape_time=t_escape)


def integrate_transformed(csys, state0, t_end, rtol=1e-8, atol=1e-10,
                          n_samples=1001, t_eval=None, method="DOP853"):
    """Integrate the transformed (q, p, C) system, C in log space.

    Records H at the samples; H is a conserved quantity only when the
    reduction is exact (limitation-free, gamma_bar = 0) and a plain
    diagnostic otherwise.
    """
    from .canonical import CanonicalState
    m = csys.base.M

    def rhs(t, y):
        state = CanonicalState(q=y[:m], p=y[m:2 * m],
                               C=np.exp(np.clip(y[2 * m:], -EXP_LIMIT, EXP_LIMIT)))
        dq, dp, dC = transformed_rhs(csys, state)
        return np.concatenate((dq, dp, dC / state.C))

    y0 = np.concatenate((state0.q, state0.p, np.log(state0.C)))
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, n_samples)
    sol, escaped, t_escape, meta = _solve_log_system(rhs, y0, t_end, rtol,
                                                     atol, t_eval, method)
    qs = sol.y[:m].T
    ps = sol.y[m:2 * m].T
    Cs = np.exp(sol.y[2 * m:].T)
    states = np.hstack((qs, ps, Cs))
    energy = np.array([hamiltonian(csys, CanonicalState(q=qs[i], p=ps[i], C=Cs[i]))
                       for i in range(sol.t.size)])
    labels = ([f"q{j + 1}" for j in range(m)] + [f"p{j + 1}" for j in range(m)]
              + [f"C{i + 1}" for i in range(csys.base.N)])
    return Trajectory(t=sol.t.copy(), states=states, labels=labels,
                      energy=energy, meta=meta, escaped=escaped,
                      escape_time=t_escape)


def integrate_symplectic(star, q0, p0, h, t_end, n_samples=2001):
    """Fixed-step Stormer-Verlet (kick-drift-kick) for the star Hamiltonian.

    Second order, symplectic; the energy error oscillates with bounded
    amplitude instead of drifting.  Aborts when a single step moves H by more
    than 10% of its magnitude (step too large for the orbit).
    """
    if h == 0.0:
        raise ValueError("step h must be nonzero")
    n_steps = int(round(t_end / h))
    if n_steps <= 0:
        raise ValueError("t_end must allow at least one step")
    stride = max(1, n_steps // max(1, n_samples - 1))
    mu = star.mu
    rbar = star.rbar
    bc = (star.b * star.C).tolist()
    a = star.a.tolist()
    n_terms = len(a)

    # dp/dt = -Phi'(q) = rbar - sum_j b_j C_j exp(a_j q)
    if n_terms == 1:
        a0, bc0 = a[0], bc[0]
        dphi = lambda q: bc0 * math.exp(a0 * q) - rbar
        phi = lambda q: (bc0 / a0) * math.exp(a0 * q) - rbar * q
    else:
        rc = [bcj / aj for bcj, aj in zip(bc, a)]
        dphi = lambda q: sum(bcj * math.exp(aj * q) for bcj, aj in zip(bc, a)) - rbar
        phi = lambda q: sum(rcj * math.exp(aj * q) for rcj, aj in zip(rc, a)) - rbar * q

    q, p = float(q0), float(p0)
    H0 = phi(q) + math.exp(p) - mu * p
    ts = [0.0]
    qs = [q]
    ps = [p]
    Hs = [H0]
    guard = 0.1 * abs(H0) if H0 != 0.0 else 0.1
    h_half = 0.5 * h
    exp_ = math.exp
    H_prev = H0
    for step in range(1, n_steps + 1):
        p -= h_half * dphi(q)
        q += h * (exp_(p) - mu)
        p -= h_half * dphi(q)
        if step % stride == 0 or step == n_steps:
            H = phi(q) + exp_(p) - mu * p
            if abs(H - H_prev) > guard * max(1, stride):
                raise RuntimeError(
                    f"energy moved {abs(H - H_prev):.3g} over {stride} step(s) "
                    f"at t = {step * h:.6g}: step h = {h:g} too large")
            H_prev = H
            ts.append(step * h)
            qs.append(q)
            ps.append(p)
            Hs.append(H)
    states = np.column_stack((qs, ps))
    meta = {"method": "stormer-verlet", "h": h, "n_steps": n_steps,
            "stride": stride}
    return Trajectory(t=np.asarray(ts), states=states, labels=["q", "p"],
                      energy=np.asarray(Hs), meta=meta)


def poincare_return_time(star, E, h=1e-3, q_ref=None, max_periods=1e6):
    """First-return time to the section q = q*, dq/dt > 0 at energy E.

    Starts on the section at the well bottom q* with the upward momentum
    branch and integrates with the symplectic stepper until the next upward
    crossing, locating it by linear interpolation within the step.
    """
    from .star import _psi_roots, analyze_potential

    profile = analyze_potential(star)
    minima = profile.minima()
    if not minima:
        raise ValueError("no potential well to anchor the section")
    well = (min(minima, key=lambda e: e.phi) if q_ref is None
            else min(minima, key=lambda e: abs(e.q - q_ref)))
    q_star = well.q
    p_up, _ = _psi_roots(star.mu, E - well.phi)

    mu = star.mu
    rbar = star.rbar
    bc = (star.b * star.C).tolist()
    a = star.a.tolist()
    dphi = lambda q: sum(bcj * math.exp(aj * q) for bcj, aj in zip(bc, a)) - rbar
    exp_ = math.exp
    h_half = 0.5 * h
    ln_mu = math.log(mu)

    q, p = q_star, p_up
    t = 0.0
    prev_rel = 0.0
    max_steps = int(max_periods)
    for _ in range(max_steps):
        p -= h_half * dphi(q)
        q += h * (exp_(p) - mu)
        p -= h_half * dphi(q)
        t += h
        rel = q - q_star
        if prev_rel < 0.0 <= rel and p > ln_mu:
            return t - h + h * (-prev_rel) / (rel - prev_rel)
        prev_rel = rel
    raise RuntimeError("no return to the section within the step budget")
