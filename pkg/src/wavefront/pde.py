"""Method-of-lines simulation of ``u_t = diag(d) u_xx + f(u_t)`` on ``[0, X]``.

Second-order centred Laplacian with zero-flux ends, RK4 in time.  Delayed
slices come from cubic Hermite dense output over a trailing ring of nodes.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .dde import DelayStepper
from .errors import BlowUp, ConfigError, ConvergenceFailure
from .settings import DEFAULT, Tolerances


def laplacian_neumann(u, dx):
    """Centred second difference along axis 0 with ghost points ``u[-1] = u[1]``."""
    out = np.empty_like(u)
    out[1:-1] = u[2:] - 2 * u[1:-1] + u[:-2]
    out[0] = 2 * (u[1] - u[0])
    out[-1] = 2 * (u[-2] - u[-1])
    return out / (dx * dx)


def trapezoid_mass(u, dx):
    """Trapezoid integral over the grid, per component."""
    return dx * (u.sum(axis=0) - 0.5 * (u[0] + u[-1]))


@dataclass
class FieldHistory:
    """Snapshots of a simulated field.

    Attributes
    ----------
    x : ndarray, shape (G,)
    times : ndarray, shape (S,)
    snapshots : ndarray, shape (S, G, N)
    """

    x: np.ndarray
    times: np.ndarray
    snapshots: np.ndarray
    dx: float
    dt: float
    d: np.ndarray
    bc: str = "neumann"
    info: dict = field(default_factory=dict)

    def snapshot(self, t):
        """Snapshot stored at time ``t`` (to within half a step)."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 0.5 * self.dt + 1e-12:
            raise ValueError(f"no snapshot stored at t={t}")
        return self.snapshots[k]

    def manifest(self) -> dict:
        return {"times": self.times.tolist(), "dx": self.dx, "dt": self.dt, "bc": self.bc,
                "d": np.asarray(self.d).tolist(), "X": float(self.x[-1]), "points": int(self.x.size)}

    def write(self, outdir, prefix="snapshot"):
        """One CSV ``x,u_1..u_N`` per snapshot plus ``manifest.json``."""
        os.makedirs(outdir, exist_ok=True)
        N = self.snapshots.shape[-1]
        names = []
        for k, snap in enumerate(self.snapshots):
            name = f"{prefix}_{k:04d}.csv"
            names.append(name)
            with open(os.path.join(outdir, name), "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["x"] + [f"u_{i + 1}" for i in range(N)])
                for j in range(self.x.size):
                    w.writerow([f"{v:.17g}" for v in (self.x[j], *snap[j])])
        man = self.manifest()
        man["files"] = names
        with open(os.path.join(outdir, "manifest.json"), "w") as fh:
            json.dump(man, fh, indent=2, sort_keys=True)
            fh.write("\n")


def constant_history(values):
    """Time-independent history from a ``(G, N)`` array."""
    values = np.asarray(values, dtype=float)

    def hist(theta):
        if np.ndim(theta) == 0:
            return values
        th = np.asarray(theta)
        return np.broadcast_to(values[:, None, :], (values.shape[0], th.size, values.shape[1])).copy()

    return hist


def profile_history(profile, x, c, x0):
    """History ``u(theta, x) = psi(theta + (x - x0) / c)`` of a travelling wave."""
    xi = (np.asarray(x, dtype=float) - x0) / c

    def hist(theta):
        if np.ndim(theta) == 0:
            return profile.at(xi + theta)
        th = np.asarray(theta, dtype=float)
        return profile.at(xi[:, None] + th[None, :])

    return hist


def simulate(model, initial, t_end, dx, X=None, x=None, dt=None, snapshot_dt=None, tol: Tolerances = DEFAULT):
    """Integrate the reaction-diffusion system with delay.

    Parameters
    ----------
    model : DelayModel
    initial : callable
        ``initial(theta)`` gives the field at offset ``theta <= 0``: shape
        ``(G, N)`` for a scalar and ``(G, Q, N)`` for an array of offsets.
    t_end, dx : float
    X : float, optional
        Domain length; the grid is ``0, dx, ..., X``.  Alternatively pass ``x``.
    dt : float, optional
        Defaults to the largest step below ``cfl * dx^2 / max d`` and ``tau / 8``
        that divides the snapshot interval.
    snapshot_dt : float, optional
        Snapshot spacing, default ``t_end / 50``.

    Raises
    ------
    ConfigError
        Step violates the explicit stability or delay bounds.
    ConvergenceFailure
        Blow-up of the field.
    """
    if x is None:
        if X is None:
            raise ConfigError("need X or x")
        G = int(round(X / dx)) + 1
        x = dx * np.arange(G)
    x = np.asarray(x, dtype=float)
    d = np.asarray(model.diffusion, dtype=float)
    dt_max = min(tol.pde_cfl * dx * dx / float(d.max()), model.tau / 8)
    snapshot_dt = snapshot_dt or t_end / 50
    if dt is None:
        dt = snapshot_dt / math.ceil(snapshot_dt / dt_max - 1e-12)
    elif dt > dt_max * (1 + 1e-12):
        raise ConfigError(f"dt={dt:g} exceeds the stability limit {dt_max:g}")
    stride = int(round(snapshot_dt / dt))
    if stride < 1 or abs(stride * dt - snapshot_dt) > 1e-9 * snapshot_dt:
        raise ConfigError("snapshot interval must be a multiple of dt")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(t_end, 1.0):
        n_steps = int(math.ceil(t_end / dt))

    def local(u):
        return d * laplacian_neumann(u, dx)

    stepper = DelayStepper(model.f, initial, 0.0, dt, model.tau, n_steps, local=local, ring=True,
                           blowup=tol.blowup)
    times = [0.0]
    snaps = [np.array(stepper.y, copy=True)]
    low = float(stepper.y.min())
    try:
        for n in range(1, n_steps + 1):
            y = stepper.step()
            low = min(low, float(y.min()))
            if n % stride == 0 or n == n_steps:
                times.append(n * dt)
                snaps.append(y.copy())
    except BlowUp as exc:
        raise ConvergenceFailure(f"field blew up: {exc}") from exc
    info = {"steps": n_steps, "min_value": low, "stride": stride}
    return FieldHistory(x, np.asarray(times), np.asarray(snaps), float(dx), float(dt), d, "neumann", info)


def front_position(history: FieldHistory, level, component=0):
    """Leftmost crossing of ``level`` in each snapshot, linearly interpolated.

    Returns
    -------
    times, x_front : ndarray

    Raises
    ------
    ValueError
        Some snapshot has no crossing.
    """
    u = history.snapshots[:, :, component]
    x = history.x
    out = np.empty(len(history.times))
    for k, row in enumerate(u):
        idx = np.nonzero(row >= level)[0]
        if idx.size == 0:
            raise ValueError(f"no crossing of {level} at t={history.times[k]:g}")
        i = idx[0]
        if i == 0:
            out[k] = x[0]
            continue
        a, b = row[i - 1], row[i]
        out[k] = x[i - 1] + (level - a) / (b - a) * (x[i] - x[i - 1])
    return history.times.copy(), out


def measure_speed(times, xf, t_from=None):
    """Least-squares speed ``-dx_front/dt`` and ``R^2`` over ``t >= t_from``."""
    mask = np.ones_like(times, dtype=bool) if t_from is None else times >= t_from
    t, y = times[mask], xf[mask]
    slope, icpt = np.polyfit(t, y, 1)
    fit = slope * t + icpt
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss if ss > 0 else 1.0
    return -float(slope), r2


def translation_error(history: FieldHistory, profile, c, t, x0, shift_range=1.0, c_profile=None):
    """Shift-minimised L2 distance between ``u(t, .)`` and the travelling profile.

    The reference is ``x -> psi(t + (x - x0 + s) / c_profile)`` advanced at speed
    ``c``; ``s`` ranges over ``[-shift_range, shift_range]``.

    Returns
    -------
    dict
        ``abs`` (``sqrt(dx * sum |u - ref|^2)``), ``rel`` (divided by the
        reference norm) and the optimal ``shift``.
    """
    c_profile = c if c_profile is None else c_profile
    u = history.snapshot(t)
    x = history.x
    dx = history.dx
    # the reference below xi < T_minus uses the exponential tail, above T_plus uses K
    def ref(s):
        return profile.at((c * t + x - x0 + s) / c_profile)

    def dist(s):
        return float(np.sqrt(dx * np.sum((u - ref(s)) ** 2)))

    opt = minimize_scalar(dist, bounds=(-shift_range, shift_range), method="bounded",
                          options={"xatol": 1e-10})
    s = float(opt.x)
    best = dist(s)
    d0 = dist(0.0)
    if d0 < best:
        s, best = 0.0, d0
    norm = float(np.sqrt(dx * np.sum(ref(s) ** 2)))
    return {"abs": best, "rel": best / norm, "shift": s}


def wave_domain(profile, c, t_end, dx):
    """Domain ``[0, X]`` and front offset ``x0`` that keep the wave inside for ``t <= t_end``.

    At ``x = 0`` the profile stays at its left truncation level; at ``x = X``
    it stays at its right end.
    """
    s_lo = float(profile.t[0])
    s_hi = float(profile.t[-1])
    x0 = c * (t_end - min(s_lo, 0.0))
    X = x0 + c * max(s_hi, 0.0)
    X = dx * math.ceil(X / dx)
    return X, x0


def validate_profile(model, profile, c, tol: Tolerances = DEFAULT, t_end=None, dx=None, snapshot_dt=None,
                     right_level=1e-6):
    """Seed the simulator with a wave profile and measure speed and shape drift.

    ``right_level`` trims the right end of the domain where ``|psi - K|`` is
    below that level.
    """
    t_end = t_end or tol.pde_t_end
    dx = dx or tol.pde_dx
    K = np.asarray(model.K, dtype=float)
    gap = np.max(np.abs(profile.psi - K), axis=1)
    big = np.nonzero(gap > right_level * max(1.0, float(np.max(np.abs(K)))))[0]
    s_hi = float(profile.t[big[-1]]) if big.size else float(profile.t[-1])
    s_lo = float(profile.t[0])
    x0 = c * (t_end - min(s_lo, 0.0))
    X = dx * math.ceil((x0 + c * max(s_hi, 0.0)) / dx)
    x = dx * np.arange(int(round(X / dx)) + 1)
    hist = simulate(model, profile_history(profile, x, c, x0), t_end, dx, x=x,
                    snapshot_dt=snapshot_dt or t_end / 50, tol=tol)
    comp = int(np.argmax(K))
    level = 0.5 * float(K[comp])
    times, xf = front_position(hist, level, comp)
    speed, r2 = measure_speed(times, xf)
    errs = [translation_error(hist, profile, c, float(tt), x0, tol.pde_shift_range) for tt in hist.times]
    final = errs[-1]
    ok = bool(abs(speed - c) <= tol.pde_speed_tol * c and final["rel"] <= tol.pde_l2_tol)
    report = {
        "c": c, "speed": speed, "r2": r2, "speed_ok": bool(abs(speed - c) <= tol.pde_speed_tol * c),
        "l2_rel_final": final["rel"], "l2_abs_final": final["abs"], "shift_final": final["shift"],
        "l2_ok": bool(final["rel"] <= tol.pde_l2_tol), "pass": ok,
        "X": X, "x0": x0, "dx": hist.dx, "dt": hist.dt, "t_end": t_end, "min_value": hist.info["min_value"],
        "series": {"t": hist.times.tolist(), "x_front": xf.tolist(), "l2_rel": [e["rel"] for e in errs],
                   "l2_abs": [e["abs"] for e in errs]},
    }
    return report, hist
