"""Explicit Runge-Kutta integration of delay equations by the method of steps.

The scheme is classical RK4 on a uniform grid.  Delayed values are read from
cubic Hermite dense output built from the stored node values and node
derivatives.  Right after a node the right derivative ``f(u_t)`` is used, so
the junction between the initial history and the computed solution keeps its
kink.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUp


def hermite(y0, y1, d0, d1, s, h):
    """Cubic Hermite interpolant on one step; ``s`` is the local coordinate in units of ``h``."""
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h * h10 * d0 + h01 * y1 + h * h11 * d1


class _Store:
    """Node values and derivatives, either all of them or a trailing ring."""

    def __init__(self, shape, n_nodes, depth=None):
        self.ring = depth is not None
        cap = depth if self.ring else n_nodes
        self.cap = cap
        self.Y = np.empty((cap,) + shape)
        self.P = np.empty((cap,) + shape)

    def idx(self, k):
        return k % self.cap if self.ring else k


class DelayStepper:
    """RK4 stepper for ``y' = f(y_t) + local(y(t))``.

    Parameters
    ----------
    func : callable
        ``func(seg)`` returns the delayed reaction term, shape ``(..., N)``.
    history : callable
        Initial history; ``history(theta)`` for offsets ``theta <= 0`` relative
        to ``t0``.
    t0, h : float
        Start time and step.
    tau : float
        Delay horizon (sets the ring depth).
    n_steps : int
        Number of steps to allocate for when storing all nodes.
    local : callable, optional
        Undelayed extra term such as a discrete Laplacian.
    ring : bool
        Keep only the trailing window needed by the delay.
    """

    def __init__(self, func, history, t0, h, tau, n_steps, local=None, ring=False, blowup=1e8):
        if h > tau * (1 + 1e-12):
            raise ValueError(f"step h={h} exceeds the delay horizon tau={tau}; the scheme would be implicit")
        self.func = func
        self.local = local
        self.history = history
        self.t0 = float(t0)
        self.h = float(h)
        self.blowup = blowup
        y0 = np.asarray(history(0.0), dtype=float)
        self.shape = y0.shape
        depth = int(np.ceil(tau / h)) + 4 if ring else None
        self.store = _Store(self.shape, n_steps + 1, depth)
        self.n = 0
        self.store.Y[0] = y0
        self.y = y0.copy()
        self.dy = None

    # dense output ---------------------------------------------------------
    def _lookup(self, times):
        """Values at ``times`` (1-D array); returns shape ``batch + (Q, N)``."""
        times = np.asarray(times, dtype=float)
        batch = self.shape[:-1]
        out = np.empty(batch + (times.size, self.shape[-1]))
        old = times <= self.t0
        if np.any(old):
            hv = np.asarray(self.history(times[old] - self.t0), dtype=float)
            out[..., old, :] = np.broadcast_to(hv, batch + (int(old.sum()), self.shape[-1]))
        new = ~old
        if np.any(new):
            tn = times[new]
            st = self.store
            if self.n == 0:
                dt = (tn - self.t0)[:, None]
                out[..., new, :] = st.Y[0][..., None, :] + dt * st.P[0][..., None, :]
            else:
                x = (tn - self.t0) / self.h
                k = np.clip(np.floor(x).astype(int), max(0, self.n - st.cap + 2), self.n - 1)
                s = (x - k)[:, None]
                i0 = st.idx(k)
                i1 = st.idx(k + 1)
                Y0 = np.moveaxis(st.Y[i0], 0, -2)
                Y1 = np.moveaxis(st.Y[i1], 0, -2)
                P0 = np.moveaxis(st.P[i0], 0, -2)
                P1 = np.moveaxis(st.P[i1], 0, -2)
                out[..., new, :] = hermite(Y0, Y1, P0, P1, s, self.h)
        return out

    def _segment(self, t, y):
        """History segment at time ``t`` whose value at ``theta = 0`` is ``y``."""

        def seg(theta):
            if np.ndim(theta) == 0:
                if theta == 0:
                    return y
                return self._lookup(np.array([t + theta]))[..., 0, :]
            th = np.asarray(theta, dtype=float)
            vals = self._lookup(t + th)
            zero = th == 0
            if np.any(zero):
                vals[..., zero, :] = y[..., None, :]
            return vals

        seg.N = self.shape[-1]
        seg.tau = np.inf
        return seg

    def _rhs(self, t, y):
        out = np.asarray(self.func(self._segment(t, y)), dtype=float)
        if self.local is not None:
            out = out + self.local(y)
        return out

    # stepping -------------------------------------------------------------
    def step(self):
        h, n, st = self.h, self.n, self.store
        tn = self.t0 + n * h
        y = self.y
        # the stored slope at t_n is the last stage of the previous step;
        # it is replaced by k1 once k1 is known
        k1 = self._rhs(tn, y)
        st.P[st.idx(n)] = k1
        k2 = self._rhs(tn + 0.5 * h, y + 0.5 * h * k1)
        k3 = self._rhs(tn + 0.5 * h, y + 0.5 * h * k2)
        k4 = self._rhs(tn + h, y + h * k3)
        ynew = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(ynew)) or np.max(np.abs(ynew)) > self.blowup:
            raise BlowUp(f"solution exceeded {self.blowup:g} near t={tn + h:.6g}")
        self.n = n + 1
        st.Y[st.idx(self.n)] = ynew
        st.P[st.idx(self.n)] = k4
        self.y = ynew
        self.dy = k4
        return ynew

    def finalize_slope(self):
        """Replace the provisional slope at the last node by ``f(u_t)``."""
        tn = self.t0 + self.n * self.h
        d = self._rhs(tn, self.y)
        self.store.P[self.store.idx(self.n)] = d
        self.dy = d
        return d


@dataclass
class Trajectory:
    """Solution on a uniform grid with node derivatives.

    Attributes
    ----------
    t : ndarray, shape (M,)
    values, derivs : ndarray, shape (M, ..., N)
    seed : dict, optional
        Seeding data for heteroclinic runs (``c0``, ``lambda0``, ``v``, ``T_minus``).
    converged_to_K : bool
    achieved_tol : float
        ``max |u - K|`` over the trailing convergence window.
    """

    t: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    seed: dict | None = None
    converged_to_K: bool = False
    achieved_tol: float = np.inf
    info: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def N(self) -> int:
        return self.values.shape[-1]

    def at(self, times, extrapolate=False):
        """Hermite interpolation at ``times`` (inside the grid unless ``extrapolate``)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if not extrapolate and (times.min() < self.t[0] - 1e-9 * self.h or times.max() > self.t[-1] + 1e-9 * self.h):
            raise ValueError("time outside trajectory grid")
        x = (times - self.t[0]) / self.h
        k = np.clip(np.floor(x).astype(int), 0, len(self.t) - 2)
        s = (x - k).reshape((-1,) + (1,) * (self.values.ndim - 1))
        return hermite(self.values[k], self.values[k + 1], self.derivs[k], self.derivs[k + 1], s, self.h)

    def shifted(self, dt) -> "Trajectory":
        seed = None
        if self.seed is not None:
            seed = dict(self.seed)
            seed["T_minus"] = seed["T_minus"] + dt
        return Trajectory(self.t + dt, self.values, self.derivs, seed, self.converged_to_K,
                          self.achieved_tol, dict(self.info))


def integrate_dde(model, initial, t_end, h, t0=None, blowup=1e8, stop=None) -> Trajectory:
    """Integrate ``u'(t) = f(u_t)`` from an initial history to ``t_end``.

    Parameters
    ----------
    model : DelayModel
    initial : callable
        History segment, ``initial(theta)`` for ``theta`` in ``[-tau, 0]``.  It
        may carry batch axes, in which case all members are integrated
        together.
    t_end : float
    h : float
        Uniform step; must not exceed ``tau``.
    t0 : float, optional
        Time at which the history ends.  Defaults to the end of a
        :class:`~wavefront.kernel.HistorySegment`, else 0.
    stop : callable, optional
        ``stop(t, y)`` is called after each step; returning True ends the run.

    Returns
    -------
    Trajectory
        Nodes from ``t0`` onward.
    """
    span = getattr(initial, "tau", model.tau)
    if span < model.tau * (1 - 1e-12) - 1e-12:
        raise ValueError("initial history is shorter than tau")
    if t0 is None:
        times = getattr(initial, "times", None)
        t0 = float(times[-1]) if times is not None else 0.0
    n_steps = int(np.ceil((t_end - t0) / h - 1e-9))
    if n_steps < 1:
        raise ValueError("t_end must be after the end of the initial history")
    stepper = DelayStepper(model.f, initial, t0, h, model.tau, n_steps, blowup=blowup)
    done = n_steps
    for n in range(n_steps):
        y = stepper.step()
        if stop is not None and stop(t0 + (n + 1) * h, y):
            done = n + 1
            break
    stepper.finalize_slope()
    t = t0 + h * np.arange(done + 1)
    return Trajectory(t, stepper.store.Y[: done + 1].copy(), stepper.store.P[: done + 1].copy())
