"""Heteroclinic connection from 0 to K of the diffusion-free delay system.

The unstable direction at 0 is seeded with a small multiple of the
eigen-solution ``c0 exp(lambda0 t) v`` and integrated forward until the
solution settles at ``K``.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq, least_squares, minimize_scalar

from .dde import Trajectory, hermite, integrate_dde
from .errors import BlowUp, ConvergenceFailure, HypothesisFailure
from .settings import DEFAULT, Tolerances


def _seed_history(c0, lam, v, tau):
    v = np.asarray(v, dtype=float)

    def seg(theta):
        th = np.asarray(theta, dtype=float)
        if th.ndim == 0:
            return c0 * np.exp(lam * (tau + th)) * v
        return c0 * np.exp(lam * (tau + th))[:, None] * v[None, :]

    seg.tau = tau
    seg.N = v.size
    return seg


def first_crossing(t, norms, level):
    """Linearly interpolated first time ``norms`` reaches ``level``."""
    idx = np.nonzero(norms >= level)[0]
    if idx.size == 0:
        raise ValueError("level never reached")
    i = idx[0]
    if i == 0:
        return float(t[0])
    a, b = norms[i - 1], norms[i]
    return float(t[i - 1] + (level - a) / (b - a) * (t[i] - t[i - 1]))


def crossing_time(t, values, derivs, level):
    """First time ``||u||_inf`` reaches ``level`` on the cubic Hermite interpolant."""
    norms = np.max(np.abs(values), axis=1)
    idx = np.nonzero(norms >= level)[0]
    if idx.size == 0:
        raise ValueError("level never reached")
    i = idx[0]
    if i == 0:
        return float(t[0])
    h = t[i] - t[i - 1]

    def g(s):
        u = hermite(values[i - 1], values[i], derivs[i - 1], derivs[i], s, h)
        return float(np.max(np.abs(u))) - level

    s = brentq(g, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return float(t[i - 1] + s * h)


def compute_heteroclinic(model, lambda0, v, tol: Tolerances = DEFAULT, h=None, seed_amp=None,
                         t_max=None, M=None) -> Trajectory:
    """Seed on the unstable eigen-direction and integrate to ``K``.

    Parameters
    ----------
    model : DelayModel
    lambda0, v : float, ndarray
        Dominant root and positive eigenvector at the zero state.
    h : float, optional
        Step, default ``tau / het_steps_per_tau``.
    seed_amp : float, optional
        ``||c0 v||``, default ``seed_amp_frac * ||K||``.

    Returns
    -------
    Trajectory
        Re-centred so that ``||u(0)|| = ||K|| / 2``.  Nodes on
        ``[T_minus, T_minus + tau]`` are the seed history.

    Raises
    ------
    HypothesisFailure
        No convergence to ``K`` by ``t_max`` or the solution left ``[0, M]``.
    """
    K = model.K
    if K is None:
        raise HypothesisFailure("model has no equilibrium K")
    v = np.asarray(v, dtype=float)
    if not np.all(v > 0):
        raise HypothesisFailure("eigenvector is not positive")
    tau = model.tau
    h = h or tau / tol.het_steps_per_tau
    m = int(round(tau / h))
    if abs(m * h - tau) > 1e-9 * tau:
        raise ValueError("tau must be an integer multiple of h")
    Knorm = float(np.max(np.abs(K)))
    amp = seed_amp if seed_amp is not None else tol.seed_amp_frac * Knorm
    c0 = amp / float(np.max(np.abs(v)))
    t_max = t_max or tol.t_max_factor * max(tau, 1.0)
    M = M if M is not None else model.box
    hist = _seed_history(c0, lambda0, v, tau)

    need = int(np.ceil(tol.converge_window_taus * tau / h))
    state = {"run": 0}

    def stop(t, y):
        if np.max(np.abs(y - K)) <= tol.tol_K:
            state["run"] += 1
        else:
            state["run"] = 0
        return state["run"] >= need

    try:
        sol = integrate_dde(model, hist, t_max, h, t0=tau, blowup=tol.blowup, stop=stop)
    except BlowUp as exc:
        raise HypothesisFailure(f"heteroclinic integration blew up: {exc}") from exc

    ts = h * np.arange(m + 1)
    seed_vals = c0 * np.exp(lambda0 * ts)[:, None] * v
    t = np.concatenate([ts, sol.t[1:]])
    vals = np.concatenate([seed_vals, sol.values[1:]])
    ders = np.concatenate([lambda0 * seed_vals[:-1], sol.derivs])
    converged = state["run"] >= need
    tail = vals[-need:] if converged else vals[-1:]
    achieved = float(np.max(np.abs(tail - K)))
    info = {"h": h, "t_max": t_max, "box": M, "steps": len(t) - 1}
    traj = Trajectory(t, vals, ders, {"c0": c0, "lambda0": float(lambda0), "v": v.tolist(), "T_minus": 0.0, "tau": tau},
                      converged, achieved, info)
    if not converged:
        raise HypothesisFailure(
            f"no convergence to K within t_max={t_max:g} (last distance {achieved:.3g})", traj)
    lo, hi = float(vals.min()), float(vals.max())
    if lo < 0 or hi > M:
        raise HypothesisFailure(f"trajectory left the box [0, {M:g}] (range [{lo:.3g}, {hi:.3g}])", traj)
    tstar = crossing_time(t, vals, ders, 0.5 * Knorm)
    out = traj.shifted(-tstar)
    out.info["t_star"] = tstar
    return out


def check_positive(traj: Trajectory):
    """True iff every component is positive at all nodes and step midpoints.

    Returns
    -------
    ok : bool
    where : dict or None
        Time and component of the first violation.
    """
    mids = hermite(traj.values[:-1], traj.values[1:], traj.derivs[:-1], traj.derivs[1:], 0.5, traj.h)
    t_mid = 0.5 * (traj.t[:-1] + traj.t[1:])
    times = np.empty(2 * len(traj.t) - 1)
    times[0::2] = traj.t
    times[1::2] = t_mid
    vals = np.empty((len(times),) + traj.values.shape[1:])
    vals[0::2] = traj.values
    vals[1::2] = mids
    bad = np.argwhere(~(vals > 0))
    if bad.size == 0:
        return True, None
    i, comp = bad[0][0], bad[0][-1]
    return False, {"t": float(times[i]), "component": int(comp), "value": float(vals[(i,) + tuple(bad[0][1:])])}


@dataclass
class DecayFit:
    lambda_fit: float
    c_fit: float
    v_fit: list
    remainder_slope: float
    loglinear_slope: float
    window: list
    nodes: int

    def to_dict(self):
        return asdict(self)


def linear_window(t, values, K, level=0.01, start=None):
    """Nodes after ``start`` before the norm first reaches ``level * ||K||``."""
    norms = np.max(np.abs(values), axis=-1)
    lim = level * float(np.max(np.abs(K)))
    above = np.nonzero(norms >= lim)[0]
    end = above[0] if above.size else len(t)
    mask = np.zeros(len(t), dtype=bool)
    mask[:end] = True
    if start is not None:
        mask &= t >= start - 1e-12
    return mask


def fit_exponential(t, U):
    """Variable-projection fit ``U ~ a exp(lam t) + w exp(2 lam t)``.

    Rows are weighted by ``1 / ||U(t)||`` so every node counts equally in
    relative terms.  Returns ``lam``, ``a`` and the plain log-linear slope.
    """
    norms = np.max(np.abs(U), axis=1)
    logs = np.log(norms)
    slope = float(np.polyfit(t, logs, 1)[0])
    tref = float(t[-1])
    w = 1.0 / norms

    def solve(lam):
        e = np.exp(lam * (t - tref))
        B = np.stack([e, e * e], axis=1) * w[:, None]
        coef, *_ = np.linalg.lstsq(B, U * w[:, None], rcond=None)
        res = U * w[:, None] - B @ coef
        return float(np.sum(res**2)), coef

    opt = minimize_scalar(lambda lam: solve(lam)[0], bounds=(0.5 * slope, 1.5 * slope), method="bounded",
                          options={"xatol": 1e-13 * max(1.0, abs(slope)), "maxiter": 500})
    lam = float(opt.x)
    _, coef = solve(lam)
    # polish all parameters together; the projected objective is too flat
    # near its minimum to pin lam below ~1e-9
    N = U.shape[1]

    def resid(p):
        e = np.exp(p[0] * (t - tref))[:, None]
        model = e * p[1:1 + N] + e * e * p[1 + N:]
        return ((U - model) * w[:, None]).ravel()

    p0 = np.concatenate([[lam], coef[0], coef[1]])
    sol = least_squares(resid, p0, xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    if sol.success and np.all(np.isfinite(sol.x)):
        lam, a0 = float(sol.x[0]), sol.x[1:1 + N]
    else:
        a0 = coef[0]
    a = a0 * np.exp(-lam * tref)
    return lam, a, slope


def fit_decay(traj: Trajectory, window=None, K=None, tol: Tolerances = DEFAULT) -> DecayFit:
    """Exponential fit of the approach to 0 at the left end of a trajectory.

    Parameters
    ----------
    traj : Trajectory
    window : (a, b), optional
        Time window.  Defaults to the nodes after the seed history and before
        ``||u||`` first reaches ``linear_level * ||K||``.
    K : ndarray, optional
        Equilibrium used for the linear-regime test; defaults to the last node.

    Returns
    -------
    DecayFit
        ``lambda_fit`` and ``a = c_fit * v_fit`` come from the two-term fit;
        ``remainder_slope`` is the log-linear slope of
        ``||u - a exp(lambda_fit t)||``.
    """
    K = traj.values[-1] if K is None else np.asarray(K)
    lim = tol.linear_level * float(np.max(np.abs(K)))
    if window is None:
        start = None
        if traj.seed is not None:
            # the seed history is an exact exponential; skip it
            start = traj.seed["T_minus"] + traj.seed["tau"]
        mask = linear_window(traj.t, traj.values, K, tol.linear_level, start)
    else:
        a, b = window
        mask = (traj.t >= a) & (traj.t <= b)
    t = traj.t[mask]
    U = traj.values[mask]
    if t.size < 50:
        raise ValueError(f"decay window has {t.size} nodes; at least 50 are needed")
    norms = np.max(np.abs(U), axis=1)
    if norms.max() > lim * (1 + 1e-9):
        raise ValueError("window extends outside the linear regime")
    if np.any(np.diff(np.log(norms)) <= 0):
        raise ValueError("log-norm is not monotone on the window; fit rejected")
    lam, a, slope = fit_exponential(t, U)
    c_fit = float(np.max(np.abs(a)))
    r = U - np.exp(lam * t)[:, None] * a
    rn = np.max(np.abs(r), axis=1)
    good = rn > 0
    rslope = float(np.polyfit(t[good], np.log(rn[good]), 1)[0]) if good.sum() > 2 else float("inf")
    return DecayFit(lam, c_fit, (a / c_fit).tolist(), rslope, slope, [float(t[0]), float(t[-1])], int(t.size))


def write_csv(path, traj: Trajectory, columns=("u", "du")):
    """Write ``t,u_1..u_N,du_1..du_N`` with 17 significant digits."""
    N = traj.N
    header = ["t"] + [f"{columns[0]}_{i + 1}" for i in range(N)] + [f"{columns[1]}_{i + 1}" for i in range(N)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(traj.t)):
            row = [traj.t[k], *traj.values[k], *traj.derivs[k]]
            w.writerow([f"{x:.17g}" for x in row])


def read_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    N = (data.shape[1] - 1) // 2
    return Trajectory(data[:, 0], data[:, 1:1 + N], data[:, 1 + N:])
