"""Matrix-valued delay kernels and history segments.

A :class:`DelayKernel` is a finite sum of point masses plus a piecewise
polynomial density on ``[-tau, 0]``.  It represents the bounded linear map

    L(phi) = sum_j W_j phi(theta_j) + int_{-tau}^0 rho(theta) phi(theta) dtheta.

Segments are plain callables ``seg(theta)``.  A scalar ``theta`` returns an
array of shape ``(..., N)``; a 1-D array of ``Q`` offsets returns
``(..., Q, N)``.  The leading axes are free, so the same kernel code serves a
single history, a batch of histories, or every node of a spatial grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

_SERIES_CUTOFF = 4.0


@dataclass(frozen=True)
class PiecewiseDensity:
    """Piecewise polynomial ``N x N`` density.

    Parameters
    ----------
    breaks : array_like, shape (m + 1,)
        Increasing break points inside ``[-tau, 0]``.
    coeffs : array_like, shape (m, deg + 1, N, N)
        ``coeffs[k, p]`` multiplies ``(theta - breaks[k]) ** p`` on piece ``k``.
    """

    breaks: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        c = np.asarray(self.coeffs, dtype=float)
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("density breaks must be strictly increasing with at least two entries")
        if c.ndim != 4 or c.shape[0] != b.size - 1 or c.shape[2] != c.shape[3]:
            raise ValueError("density coeffs must have shape (pieces, degree+1, N, N)")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def __call__(self, theta):
        """Evaluate the density at ``theta`` (scalar or 1-D array)."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        k = np.clip(np.searchsorted(self.breaks, th, side="right") - 1, 0, len(self.coeffs) - 1)
        x = th - self.breaks[k]
        powers = x[:, None] ** np.arange(self.degree + 1)
        out = np.einsum("qp,qpij->qij", powers, self.coeffs[k])
        inside = (th >= self.breaks[0]) & (th <= self.breaks[-1])
        out[~inside] = 0.0
        return out[0] if np.ndim(theta) == 0 else out


def exp_moments(z, h: float, kmax: int) -> np.ndarray:
    """Return ``m_k(z) = int_0^h x**k exp(z x) dx`` for ``k = 0..kmax``.

    Uses the power series for ``|z h|`` small and the forward recurrence
    ``m_k = (h**k e^{zh} - k m_{k-1}) / z`` otherwise.  ``z`` may be an array;
    the result has shape ``z.shape + (kmax + 1,)``.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (kmax + 1,), dtype=complex)
    small = np.abs(z * h) <= _SERIES_CUTOFF
    if np.any(small):
        zs = z[small]
        zh = zs * h
        n = np.arange(60)
        # term_n = (zh)^n / n!
        terms = np.cumprod(np.concatenate([np.ones((zs.size, 1)), zh[:, None] / n[None, 1:]], axis=1), axis=1)
        for k in range(kmax + 1):
            out[small, k] = h ** (k + 1) * np.sum(terms / (n + k + 1), axis=1)
    big = ~small
    if np.any(big):
        zb = z[big]
        e = np.exp(zb * h)
        m = np.expm1(zb * h) / zb
        out[big, 0] = m
        for k in range(1, kmax + 1):
            m = (h**k * e - k * m) / zb
            out[big, k] = m
    return out


class DelayKernel:
    """Bounded linear operator on history segments over ``[-tau, 0]``.

    Parameters
    ----------
    N : int
        State dimension.
    tau : float
        Delay horizon.
    atoms : sequence of (theta, W)
        Point masses; ``W`` is ``N x N`` (scalars are accepted for ``N = 1``).
    density : PiecewiseDensity, optional
        Absolutely continuous part.
    quad_nodes : int
        Gauss-Legendre nodes per density piece used by :func:`kernel_apply`.
    """

    def __init__(self, N, tau, atoms=(), density=None, quad_nodes=8):
        if int(N) != N or N < 1:
            raise ValueError("N must be a positive integer")
        if not tau > 0:
            raise ValueError("tau must be positive")
        self.N = int(N)
        self.tau = float(tau)
        tol = 1e-12 * max(1.0, self.tau)
        merged: dict[float, np.ndarray] = {}
        for theta, w in atoms:
            theta = float(theta)
            if theta < -self.tau - tol or theta > tol:
                raise ValueError(f"atom position {theta} outside [-tau, 0]")
            theta = min(0.0, max(-self.tau, theta))
            w = np.asarray(w, dtype=float).reshape(self.N, self.N)
            if theta in merged:
                raise ValueError(f"duplicate atom position {theta}")
            merged[theta] = w
        self.atoms = tuple(sorted(merged.items()))
        if density is not None:
            if density.coeffs.shape[2] != self.N:
                raise ValueError("density dimension does not match N")
            if density.breaks[0] < -self.tau - tol or density.breaks[-1] > tol:
                raise ValueError("density support outside [-tau, 0]")
        self.density = density
        self.quad_nodes = int(quad_nodes)
        self._build_nodes()

    def _build_nodes(self):
        thetas = [a[0] for a in self.atoms]
        weights = [a[1] for a in self.atoms]
        if self.density is not None:
            x, w = np.polynomial.legendre.leggauss(self.quad_nodes)
            b = self.density.breaks
            for k in range(len(b) - 1):
                half = 0.5 * (b[k + 1] - b[k])
                nodes = b[k] + half * (x + 1.0)
                vals = self.density(nodes)
                for q in range(len(nodes)):
                    thetas.append(nodes[q])
                    weights.append(half * w[q] * vals[q])
        self.theta = np.asarray(thetas, dtype=float)
        self.weights = np.asarray(weights, dtype=float).reshape(len(thetas), self.N, self.N)

    # convenience constructors
    @classmethod
    def point(cls, theta, w, tau, N=1):
        return cls(N, tau, atoms=[(theta, w)])

    @classmethod
    def uniform(cls, c, lo, hi, tau, N=1):
        """Constant density ``c`` on ``[lo, hi]``."""
        coeffs = np.asarray(c, dtype=float).reshape(1, 1, N, N)
        return cls(N, tau, density=PiecewiseDensity([lo, hi], coeffs))

    def scaled(self, left=None, right=None) -> "DelayKernel":
        """Kernel ``A L B`` for constant matrices ``A`` (left) and ``B`` (right)."""
        A = np.eye(self.N) if left is None else np.asarray(left, dtype=float).reshape(self.N, self.N)
        B = np.eye(self.N) if right is None else np.asarray(right, dtype=float).reshape(self.N, self.N)
        atoms = [(t, A @ w @ B) for t, w in self.atoms]
        dens = None
        if self.density is not None:
            dens = PiecewiseDensity(self.density.breaks, A @ self.density.coeffs @ B)
        return DelayKernel(self.N, self.tau, atoms, dens, self.quad_nodes)

    def plus_atoms(self, extra) -> "DelayKernel":
        """Return a copy with ``extra`` point masses added (merged by position)."""
        merged = {t: w.copy() for t, w in self.atoms}
        for t, w in extra:
            w = np.asarray(w, dtype=float).reshape(self.N, self.N)
            merged[float(t)] = merged.get(float(t), 0.0) + w
        return DelayKernel(self.N, self.tau, list(merged.items()), self.density, self.quad_nodes)

    def __repr__(self):
        return (f"DelayKernel(N={self.N}, tau={self.tau}, atoms={len(self.atoms)}, "
                f"density={'yes' if self.density is not None else 'no'})")


def kernel_apply(kernel: DelayKernel, segment) -> np.ndarray:
    """Apply the kernel to a history segment.

    Parameters
    ----------
    kernel : DelayKernel
    segment : callable
        ``segment(theta)`` for an array of offsets in ``[-tau, 0]`` returns
        values of shape ``(..., Q, N)``.

    Returns
    -------
    ndarray, shape (..., N)
    """
    span = getattr(segment, "tau", None)
    if span is not None and span < kernel.tau * (1 - 1e-12) - 1e-12:
        raise ValueError(f"segment covers {span}, shorter than kernel horizon {kernel.tau}")
    dim = getattr(segment, "N", None)
    if dim is not None and dim != kernel.N:
        raise ValueError(f"segment dimension {dim} does not match kernel dimension {kernel.N}")
    if kernel.theta.size == 0:
        probe = np.asarray(segment(np.zeros(1)))
        return np.zeros(probe.shape[:-2] + (kernel.N,))
    vals = np.asarray(segment(kernel.theta))
    if vals.shape[-1] != kernel.N:
        raise ValueError(f"segment dimension {vals.shape[-1]} does not match kernel dimension {kernel.N}")
    return np.einsum("pij,...pj->...i", kernel.weights, vals)


def kernel_exp_symbol(kernel: DelayKernel, z, order: int = 0) -> np.ndarray:
    """Return ``L(theta**order * exp(z theta) I)`` exactly.

    ``order = 0`` is the symbol ``L(e^{z.} I)``; ``order = 1`` is its
    derivative in ``z``.  Density pieces are integrated with closed-form
    moments, so the result carries no quadrature error.  ``z`` may be an
    array, giving shape ``z.shape + (N, N)``.
    """
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape + (kernel.N, kernel.N), dtype=complex)
    for theta, w in kernel.atoms:
        out += (theta**order * np.exp(z * theta))[..., None, None] * w
    dens = kernel.density
    if dens is not None:
        deg = dens.degree
        for k in range(len(dens.coeffs)):
            b0 = dens.breaks[k]
            h = dens.breaks[k + 1] - b0
            m = exp_moments(z, h, deg + order)
            scale = np.exp(z * b0)
            acc = np.zeros(z.shape + (kernel.N, kernel.N), dtype=complex)
            for p in range(deg + 1):
                # (b0 + x)^order x^p expanded binomially
                mom = np.zeros(z.shape, dtype=complex)
                for j in range(order + 1):
                    binom = factorial(order) // (factorial(j) * factorial(order - j))
                    mom = mom + binom * b0 ** (order - j) * m[..., p + j]
                acc = acc + mom[..., None, None] * dens.coeffs[k, p]
            out += scale[..., None, None] * acc
    return out


def kernel_norm(kernel: DelayKernel, nodes: int = 64) -> float:
    """Operator norm bound ``sum ||W_j|| + int ||rho(theta)|| dtheta`` (max-row norm)."""
    total = sum(np.abs(w).sum(axis=1).max() for _, w in kernel.atoms)
    if kernel.density is not None:
        x, wq = np.polynomial.legendre.leggauss(nodes)
        b = kernel.density.breaks
        for k in range(len(b) - 1):
            half = 0.5 * (b[k + 1] - b[k])
            vals = kernel.density(b[k] + half * (x + 1.0))
            total += half * np.dot(wq, np.abs(vals).sum(axis=2).max(axis=1))
    return float(total)


class HistorySegment:
    """Sampled history on ``[t - tau, t]`` with cubic interpolation.

    Parameters
    ----------
    times : array_like, shape (M,)
        Strictly increasing sample times; ``times[-1] - times[0]`` is the span.
    values : array_like, shape (M, N)
    derivs : array_like, optional
        Derivatives at the samples.  When given, interpolation is cubic
        Hermite; otherwise a not-a-knot cubic spline is used.

    Calling the segment with offsets ``theta`` in ``[-tau, 0]`` evaluates the
    stored function at ``times[-1] + theta``.
    """

    def __init__(self, times, values, derivs=None):
        t = np.asarray(times, dtype=float)
        y = np.asarray(values, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("segment times must be strictly increasing")
        if y.shape[0] != t.size:
            raise ValueError("values must have one row per sample time")
        self.times = t
        self.values = y
        self.N = y.shape[1]
        self.tau = float(t[-1] - t[0])
        if derivs is not None:
            d = np.asarray(derivs, dtype=float).reshape(y.shape)
            self._interp = CubicHermiteSpline(t, y, d, axis=0)
        elif t.size >= 4:
            self._interp = CubicSpline(t, y, axis=0)
        else:
            self._interp = None

    @classmethod
    def from_function(cls, fn, tau, n=201, t=0.0, derivative=None):
        """Sample ``fn(theta)`` (returns shape ``(N,)`` or scalar) on ``n`` points."""
        theta = np.linspace(-tau, 0.0, n)
        vals = np.array([np.atleast_1d(fn(th)) for th in theta], dtype=float)
        ders = None
        if derivative is not None:
            ders = np.array([np.atleast_1d(derivative(th)) for th in theta], dtype=float)
        return cls(t + theta, vals, ders)

    @classmethod
    def constant(cls, value, tau, n=5):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        theta = np.linspace(-tau, 0.0, n)
        return cls(theta, np.tile(value, (n, 1)), np.zeros((n, value.size)))

    def at_time(self, t):
        t = np.asarray(t, dtype=float)
        if self._interp is None:
            out = np.stack([np.interp(t, self.times, self.values[:, i]) for i in range(self.N)], axis=-1)
            return out
        return self._interp(t)

    def __call__(self, theta):
        return self.at_time(self.times[-1] + np.asarray(theta, dtype=float))

    def derivative(self, theta):
        if self._interp is None:
            raise ValueError("derivative needs a cubic segment")
        return self._interp.derivative()(self.times[-1] + np.asarray(theta, dtype=float))


class SampledSegments:
    """A batch of piecewise-linear segments on a shared offset grid.

    Linear interpolation keeps every sample inside the range of its values,
    which the positivity sampler relies on.

    Parameters
    ----------
    theta : array_like, shape (G,)
        Increasing offsets covering ``[-tau, 0]``.
    values : array_like, shape (S, G, N)
    """

    def __init__(self, theta, values):
        self.theta_grid = np.asarray(theta, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.N = self.values.shape[-1]
        self.tau = float(self.theta_grid[-1] - self.theta_grid[0])

    def __call__(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        g = self.theta_grid
        k = np.clip(np.searchsorted(g, th, side="right") - 1, 0, g.size - 2)
        w = ((th - g[k]) / (g[k + 1] - g[k]))[None, :, None]
        out = (1 - w) * self.values[:, k, :] + w * self.values[:, k + 1, :]
        return out[:, 0, :] if np.ndim(theta) == 0 else out


def constant_segment(value):
    """Segment that is constant in ``theta``; ``value`` has shape ``(..., N)``."""
    value = np.asarray(value, dtype=float)

    def seg(theta):
        if np.ndim(theta) == 0:
            return value
        return np.broadcast_to(value[..., None, :], value.shape[:-1] + (np.size(theta), value.shape[-1]))

    seg.N = value.shape[-1]
    return seg


def exp_segment(z, v):
    """Segment ``theta -> exp(z theta) v`` (complex ``z`` allowed)."""
    v = np.asarray(v)

    def seg(theta):
        th = np.asarray(theta)
        if th.ndim == 0:
            return np.exp(z * th) * v
        return np.exp(z * th)[:, None] * v[None, :]

    seg.N = v.shape[-1]
    return seg
