"""Travelling-wave profiles by fixed-point iteration.

A wave ``u(t, x) = psi(t + x / c)`` of ``u_t = diag(d) u_xx + f(u_t)`` solves

    eps^2 diag(d) psi'' - psi' + f(psi_t) = 0,    eps = 1 / c,

in the slow variable ``t``, with the original delay window ``[-tau, 0]``.
Writing ``g = psi + f(psi_t)`` the equation is ``d eps^2 psi'' - psi' - psi = -g``,
whose bounded Green's function gives, per component,

    psi(t) = A [ int_{-inf}^t e^{alpha (t - s)} g(s) ds + int_t^{inf} e^{beta (t - s)} g(s) ds ],

where ``alpha < 0 < beta`` solve ``d eps^2 z^2 - z - 1 = 0`` and
``A = 1 / sqrt(1 + 4 d eps^2)``.  :func:`picard_step` evaluates this map on a
truncated grid with exact exponential weights and closed-form tails.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from .dde import hermite
from .errors import ConvergenceFailure
from .heteroclinic import crossing_time, fit_exponential
from .kernel import constant_segment, kernel_exp_symbol
from .settings import DEFAULT, Tolerances
from .spectrum import CharProblem, root_continuation, weighted_exponent


@dataclass
class WaveParams:
    """Speed-dependent constants of the profile operator."""

    c: float
    epsilon: float
    alpha: np.ndarray
    beta: np.ndarray
    gain: np.ndarray
    lambda_eps: float
    v1_eps: np.ndarray
    mu: float
    lambda0: float
    v0: np.ndarray

    def to_dict(self):
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
        return out


def kernel_exponents(epsilon, d=1.0):
    """Roots ``alpha < 0 < beta`` of ``d eps^2 z^2 - z - 1 = 0`` and ``A = 1/sqrt(1 + 4 d eps^2)``.

    ``alpha`` uses the cancellation-free form ``-2 / (1 + sqrt(1 + 4 d eps^2))``.
    """
    d = np.asarray(d, dtype=float)
    e2 = epsilon**2 * d
    root = np.sqrt(1.0 + 4.0 * e2)
    alpha = -2.0 / (1.0 + root)
    beta = (1.0 + root) / (2.0 * e2)
    return alpha, beta, 1.0 / root


def wave_params(c, model, spectrum, tol: Tolerances = DEFAULT) -> WaveParams:
    """Constants for speed ``c``.

    ``lambda_eps`` is taken from the spectrum report when it already holds
    ``eps = 1 / c``, otherwise it is continued from ``lambda0`` here.

    Raises
    ------
    ConvergenceFailure
        The root is not isolated in the validated strip (speed too low).
    """
    if not c > 0:
        raise ValueError("speed must be positive")
    eps = 1.0 / c
    problem = CharProblem(model.linearization("zero"), 0.0, tuple(model.diffusion))
    entry = spectrum.lookup(eps)
    if entry is None:
        try:
            entry = root_continuation(problem, eps, spectrum.lambda0, tol)
        except ValueError as exc:
            raise ConvergenceFailure(f"c={c}: below validated speed range ({exc})") from exc
    alpha, beta, gain = kernel_exponents(eps, model.diffusion)
    mu = weighted_exponent(problem, spectrum.lambda0, tol)
    return WaveParams(float(c), eps, alpha, beta, gain, float(entry["lambda"]), np.asarray(entry["v"], float),
                      float(mu), float(spectrum.lambda0), np.asarray(spectrum.v, float))


@dataclass
class WaveProfile:
    """Profile on a uniform grid with exponential left tail and constant right tail.

    For ``t < t[0]`` the profile is ``tail_amp * exp(lambda_eps t) * v1``; for
    ``t > t[-1]`` it is ``K``.  A constant profile instead sets ``left_value``
    (with ``tail_amp = 0``), which replaces the exponential tail.
    """

    t: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    c: float
    tail_amp: float
    lambda_eps: float
    v1: np.ndarray
    K: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    left_value: np.ndarray | None = None

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def N(self) -> int:
        return self.psi.shape[1]

    def tail(self, times):
        times = np.asarray(times, dtype=float)
        out = self.tail_amp * np.exp(self.lambda_eps * times)[..., None] * self.v1
        if self.left_value is not None:
            out = out + self.left_value
        return out

    def at(self, times):
        """Values at arbitrary times, tails included; shape ``times.shape + (N,)``."""
        times = np.asarray(times, dtype=float)
        flat = times.reshape(-1)
        return _evaluate(self.t, self.psi, self.dpsi, self.tail_amp, self.lambda_eps, self.v1, self.K,
                         flat, self.left_value).reshape(times.shape + (self.N,))

    def relabel(self, shift) -> "WaveProfile":
        """Same function with the time origin moved: new ``t = old t - shift``."""
        amp = self.tail_amp * math.exp(self.lambda_eps * shift)
        return WaveProfile(self.t - shift, self.psi, self.dpsi, self.c, amp, self.lambda_eps, self.v1, self.K,
                           dict(self.diagnostics), self.left_value)


def _evaluate(t, psi, dpsi, amp, lam, v1, K, times, left_value=None):
    h = t[1] - t[0]
    x = (times - t[0]) / h
    out = np.empty(times.shape + (psi.shape[1],))
    left = x < 0
    right = x > len(t) - 1
    mid = ~(left | right)
    if np.any(left):
        out[left] = amp * np.exp(lam * times[left])[:, None] * v1
        if left_value is not None:
            out[left] += left_value
    if np.any(right):
        out[right] = K
    if np.any(mid):
        k = np.clip(np.floor(x[mid]).astype(int), 0, len(t) - 2)
        s = (x[mid] - k)[:, None]
        out[mid] = hermite(psi[k], psi[k + 1], dpsi[k], dpsi[k + 1], s, h)
    return out


class _GridSegments:
    """Histories ``theta -> psi(t_i + theta)`` at every grid node at once."""

    def __init__(self, t, psi, dpsi, amp, lam, v1, K, left_value=None):
        self.args = (t, psi, dpsi, amp, lam, v1, K)
        self.left = left_value
        self.t = t
        self.psi = psi
        self.N = psi.shape[1]
        self.tau = np.inf

    def __call__(self, theta):
        if np.ndim(theta) == 0:
            if theta == 0:
                return self.psi
            return _evaluate(*self.args, self.t + theta, self.left)
        th = np.asarray(theta, dtype=float)
        times = (self.t[:, None] + th[None, :]).reshape(-1)
        vals = _evaluate(*self.args, times, self.left).reshape(self.t.size, th.size, self.N)
        zero = th == 0
        if np.any(zero):
            vals[:, zero, :] = self.psi[:, None, :]
        return vals


def _hat_weights(rate, h):
    """Exact weights of a hat basis against ``e^{rate (h - x)}`` on ``[0, h]``.

    Returns ``(w_left, w_right, E)`` with ``E = e^{rate h}`` so that
    ``int_0^h e^{rate (h - x)} g(x) dx = w_left g(0) + w_right g(h)`` for linear ``g``.
    """
    ah = rate * h
    E = math.exp(ah)
    I0 = math.expm1(ah) / rate
    if abs(ah) < 1e-3:
        # (E - 1 - ah) / rate^2 by its series
        I1 = h * h * (0.5 + ah / 6.0 + ah * ah / 24.0 + ah**3 / 120.0)
    else:
        I1 = (math.expm1(ah) - ah) / rate**2
    return I0 - I1 / h, I1 / h, E


class ProfileOperator:
    """The integral map on a fixed grid ``t`` with pinned left-tail amplitude."""

    def __init__(self, model, params: WaveParams, t, tail_amp, left_value=None, right_value=None):
        self.model = model
        self.left = None if left_value is None else np.asarray(left_value, dtype=float)
        self.p = params
        self.t = np.asarray(t, dtype=float)
        self.h = float(self.t[1] - self.t[0])
        self.amp = float(tail_amp)
        self.K = np.asarray(model.K if right_value is None else right_value, dtype=float)
        # g = psi + f(psi_t) on the right tail; equals K when f(K) = 0
        self.g_right = self.K + np.asarray(model.f(constant_segment(self.K)))
        lam, v1 = params.lambda_eps, params.v1_eps
        S = kernel_exp_symbol(model.linearization("zero"), lam).real
        # g = psi + f(psi_t) on the left tail, from the linearization at 0
        self.g_tail = v1 + S @ v1
        if self.left is not None:
            if self.amp != 0:
                raise ValueError("a constant left state needs a zero tail amplitude")
            self.g_left = self.left + np.asarray(model.f(constant_segment(self.left)))
        else:
            self.g_left = np.zeros(model.N)
        self.coef = []
        for i in range(model.N):
            a, b = params.alpha[i], params.beta[i]
            wl, wr, Ea = _hat_weights(a, self.h)
            # backward sweep: int_0^h e^{-b x} g(t_i + x) dx
            Eb = math.exp(-b * self.h)
            J0 = -math.expm1(-b * self.h) / b
            J1 = (J0 - self.h * Eb) / b
            self.coef.append((wl, wr, Ea, J0 - J1 / self.h, J1 / self.h, Eb))

    def segments(self, psi, dpsi):
        p = self.p
        return _GridSegments(self.t, psi, dpsi, self.amp, p.lambda_eps, p.v1_eps, self.K, self.left)

    def source(self, psi, dpsi):
        return psi + np.asarray(self.model.f(self.segments(psi, dpsi)))

    def apply(self, psi, dpsi):
        """One application of the map; returns ``(psi_new, dpsi_new)``."""
        g = self.source(psi, dpsi)
        p = self.p
        T0 = self.t[0]
        lam = p.lambda_eps
        new = np.empty_like(psi)
        dnew = np.empty_like(psi)
        for i in range(self.model.N):
            wl, wr, Ea, vl, vr, Eb = self.coef[i]
            a, b, A = p.alpha[i], p.beta[i], p.gain[i]
            gi = g[:, i]
            ia0 = self.amp * self.g_tail[i] * math.exp(lam * T0) / (lam - a) - self.g_left[i] / a
            xa = wl * gi[:-1] + wr * gi[1:]
            Ia = np.empty_like(gi)
            Ia[0] = ia0
            Ia[1:] = lfilter([1.0], [1.0, -Ea], xa, zi=[Ea * ia0])[0]
            ib_end = self.g_right[i] / b
            xb = (vl * gi[:-1] + vr * gi[1:])[::-1]
            Ib = np.empty_like(gi)
            Ib[-1] = ib_end
            Ib[-2::-1] = lfilter([1.0], [1.0, -Eb], xb, zi=[Eb * ib_end])[0]
            new[:, i] = A * (Ia + Ib)
            dnew[:, i] = A * (a * Ia + b * Ib)
        return new, dnew


def weighted_norm(t, x, mu):
    """``max(sup |x|, sup_{t <= 0} e^{-mu t} |x(t)|)`` with the max norm on components."""
    n = np.max(np.abs(x), axis=-1)
    w = np.where(t <= 0, np.exp(-mu * np.minimum(t, 0.0)), 1.0)
    return float(max(np.max(n), np.max(n * w)))


def picard_step(profile: WaveProfile, model, params: WaveParams) -> WaveProfile:
    """Apply the integral map once; the tail amplitude is kept."""
    op = ProfileOperator(model, params, profile.t, profile.tail_amp, profile.left_value, profile.K)
    psi, dpsi = op.apply(profile.psi, profile.dpsi)
    return WaveProfile(profile.t.copy(), psi, dpsi, profile.c, profile.tail_amp, params.lambda_eps,
                       params.v1_eps, profile.K, {}, profile.left_value)


def initial_profile(model, params: WaveParams, het, fit, tol: Tolerances = DEFAULT, h=None,
                    t_lo=None, t_hi=None) -> WaveProfile:
    """Heteroclinic sampled on the profile grid with its exponential tail below ``het.t[0]``.

    ``fit`` is the heteroclinic decay fit (``lambda_fit``, ``c_fit``, ``v_fit``).
    """
    tau = model.tau
    if h is None:
        h = tau / math.ceil(tau / tol.profile_h)
    K = np.asarray(model.K, dtype=float)
    Kn = float(np.max(np.abs(K)))
    lam0 = fit.lambda_fit
    a0 = fit.c_fit * np.asarray(fit.v_fit)
    if t_lo is None:
        t_lo = math.log(tol.tail_level * Kn / fit.c_fit) / lam0
    if t_hi is None:
        t_hi = float(het.t[-1])
    n_lo = math.floor(t_lo / h)
    n_hi = math.ceil(t_hi / h)
    t = h * np.arange(n_lo, n_hi + 1)
    psi = np.empty((t.size, model.N))
    dpsi = np.empty_like(psi)
    inside = (t >= het.t[0]) & (t <= het.t[-1])
    below = t < het.t[0]
    above = t > het.t[-1]
    psi[inside] = het.at(t[inside])
    dpsi[inside] = _hermite_derivative(het, t[inside])
    psi[below] = np.exp(lam0 * t[below])[:, None] * a0
    dpsi[below] = lam0 * psi[below]
    psi[above] = K
    dpsi[above] = 0.0
    # pin the tail so it matches u* at the left end
    amp = float(np.max(np.abs(psi[0]))) * math.exp(-params.lambda_eps * t[0]) / float(np.max(np.abs(params.v1_eps)))
    return WaveProfile(t, psi, dpsi, params.c, amp, params.lambda_eps, params.v1_eps, K, {})


def _hermite_derivative(traj, times):
    x = (times - traj.t[0]) / traj.h
    k = np.clip(np.floor(x).astype(int), 0, len(traj.t) - 2)
    s = (x - k)[:, None]
    h = traj.h
    y0, y1, d0, d1 = traj.values[k], traj.values[k + 1], traj.derivs[k], traj.derivs[k + 1]
    return ((6 * s * s - 6 * s) * y0 + h * (3 * s * s - 4 * s + 1) * d0
            + (-6 * s * s + 6 * s) * y1 + h * (3 * s * s - 2 * s) * d1) / h


def iterate(model, params: WaveParams, start: WaveProfile, tol: Tolerances = DEFAULT, max_iter=None):
    """Picard iteration with the tail amplitude held fixed.

    Returns the final profile and the list of weighted step sizes.  Raises
    :class:`ConvergenceFailure` on divergence or persistent ``rho >= 1``.
    """
    op = ProfileOperator(model, params, start.t, start.tail_amp)
    psi, dpsi = start.psi, start.dpsi
    steps, ratios = [], []
    streak = 0
    k_max = max_iter or tol.k_max
    bound = tol.blowup
    for k in range(k_max):
        new, dnew = op.apply(psi, dpsi)
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > bound:
            raise ConvergenceFailure(f"c={params.c}: iteration diverged at step {k + 1}",
                                     {"steps": steps, "ratios": ratios})
        d = weighted_norm(start.t, new - psi, params.mu)
        if steps and steps[-1] > 0:
            rho = d / steps[-1]
            ratios.append(rho)
            streak = streak + 1 if (rho >= 1 and k >= tol.burn_in) else 0
        steps.append(d)
        psi, dpsi = new, dnew
        if d <= tol.tol_fix:
            break
        if streak >= tol.nonconv_patience:
            raise ConvergenceFailure(
                f"c={params.c}: no contraction (rho={ratios[-1]:.4f} for {streak} iterations); try a larger speed",
                {"steps": steps, "ratios": ratios})
    else:
        raise ConvergenceFailure(f"c={params.c}: not converged after {k_max} iterations (last step {steps[-1]:.3g})",
                                 {"steps": steps, "ratios": ratios})
    out = WaveProfile(start.t, psi, dpsi, start.c, start.tail_amp, params.lambda_eps, params.v1_eps, start.K, {})
    return out, steps, ratios


def residual(profile: WaveProfile, model, params: WaveParams, scaled=False):
    """Sup over interior nodes of ``|eps^2 d psi'' - psi' + f(psi_t)|`` with central differences."""
    h = profile.h
    psi = profile.psi
    segs = _GridSegments(profile.t, psi, profile.dpsi, profile.tail_amp, profile.lambda_eps, profile.v1,
                         profile.K, profile.left_value)
    fv = np.asarray(model.f(segs))
    d2 = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / h**2
    d1 = (psi[2:] - psi[:-2]) / (2 * h)
    r = params.epsilon**2 * model.diffusion * d2 - d1 + fv[1:-1]
    val = float(np.max(np.abs(r)))
    if scaled:
        return val, val / (1.0 + float(np.max(np.abs(fv))))
    return val


def tail_mismatch(profile: WaveProfile) -> float:
    """Relative gap between the left tail and the first grid node."""
    ref = profile.tail(profile.t[0])
    return float(np.max(np.abs(profile.psi[0] - ref)) / np.max(np.abs(ref)))


def solve_profile(model, c, het, fit, spectrum=None, params=None, tol: Tolerances = DEFAULT, h=None) -> WaveProfile:
    """Fixed point of the profile map for speed ``c``, started from the heteroclinic.

    Parameters
    ----------
    model : DelayModel
    c : float
    het : Trajectory
        Heteroclinic, centred so that ``||u(0)|| = ||K|| / 2``.
    fit : DecayFit
        Decay fit of ``het``; extends it below its first node.
    spectrum : SpectrumReport, optional
        Needed when ``params`` is not given.

    The left-tail amplitude is pinned to the heteroclinic at the left grid
    end during the iteration, which fixes the translation freedom.  After
    convergence the time origin is moved to where ``||psi|| = ||K|| / 2``.
    If a tail condition fails the grid is extended on that side and the
    iteration restarted from the current iterate, at most
    ``extend_retries`` times.
    """
    if params is None:
        params = wave_params(c, model, spectrum, tol)
    K = np.asarray(model.K, dtype=float)
    Kn = float(np.max(np.abs(K)))
    start = initial_profile(model, params, het, fit, tol, h)
    base_lo, base_hi = float(start.t[0]), float(start.t[-1])
    total_steps, total_ratios = [], []
    extensions = []
    for attempt in range(tol.extend_retries + 1):
        prof, steps, ratios = iterate(model, params, start, tol)
        total_steps += steps
        total_ratios += ratios
        tstar = crossing_time(prof.t, prof.psi, prof.dpsi, 0.5 * Kn)
        centred = prof.relabel(tstar)
        left_level = float(centred.tail_amp * math.exp(params.lambda_eps * centred.t[0]))
        right_gap = float(np.max(np.abs(centred.psi[-1] - K)))
        left_ok = left_level <= 10 * tol.tail_level * Kn
        right_ok = right_gap <= 100 * tol.right_tol * max(1.0, Kn)
        if left_ok and right_ok:
            break
        if attempt == tol.extend_retries:
            raise ConvergenceFailure(
                f"c={c}: truncation tails not matched after {attempt} extensions "
                f"(left level {left_level:.3g}, right gap {right_gap:.3g})")
        # extend by half the original span on the failing side, in grid steps
        hh = prof.h
        add_lo = 0 if left_ok else int(math.ceil(0.5 * (0 - base_lo) / hh)) if base_lo < 0 else 100
        add_hi = 0 if right_ok else int(math.ceil(0.5 * (base_hi - 0) / hh)) if base_hi > 0 else 100
        extensions.append({"left": add_lo * hh, "right": add_hi * hh})
        t = hh * np.arange(round(prof.t[0] / hh) - add_lo, round(prof.t[-1] / hh) + add_hi + 1)
        psi = prof.at(t)
        dpsi = np.vstack([params.lambda_eps * prof.tail(t[:add_lo]) if add_lo else np.empty((0, model.N)),
                          prof.dpsi, np.zeros((add_hi, model.N))])
        start = WaveProfile(t, psi, dpsi, c, prof.tail_amp, params.lambda_eps, params.v1_eps, K, {})
    res, res_scaled = residual(centred, model, params, scaled=True)
    centred.diagnostics = {
        "iterations": len(total_steps),
        "steps": total_steps,
        "contraction_ratios": total_ratios,
        "rho_final": _asymptotic_ratio(total_ratios),
        "t_star": tstar,
        "residual": res,
        "residual_scaled": res_scaled,
        "tail_mismatch": tail_mismatch(centred),
        "left_level": left_level,
        "right_gap": right_gap,
        "extensions": extensions,
        "mu": params.mu,
    }
    return centred


def _asymptotic_ratio(ratios, last=10):
    if not ratios:
        return float("nan")
    tail = ratios[-last:]
    return float(np.median(tail))


def distance_to(profile: WaveProfile, het, fit, mu) -> float:
    """Weighted distance ``||psi - u*||_mu`` on the profile grid.

    ``u*`` is extended below its first node by its fitted exponential and
    above its last node by ``K``.
    """
    t = profile.t
    u = np.empty_like(profile.psi)
    inside = (t >= het.t[0]) & (t <= het.t[-1])
    u[inside] = het.at(t[inside])
    below = t < het.t[0]
    u[below] = np.exp(fit.lambda_fit * t[below])[:, None] * (fit.c_fit * np.asarray(fit.v_fit))
    u[t > het.t[-1]] = profile.K
    return weighted_norm(t, profile.psi - u, mu)


# ---------------------------------------------------------------------------
# verification

@dataclass
class FrontReport:
    positive: bool
    monotone_left: bool
    lambda_eps: float
    lambda_fit: float
    v1_eps: list
    v1_fit: list
    residual: float
    contraction_ratios: list
    lambda_rel_error: float = float("nan")
    angle_deg: float = float("nan")
    claim1_ratio: float = float("nan")
    remainder_slope: float = float("nan")
    window: list = field(default_factory=list)
    violation: dict | None = None
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.positive and self.monotone_left and all(self.checks.values()))

    def to_dict(self):
        out = asdict(self)
        out["ok"] = self.ok
        return out


def front_window(profile: WaveProfile, level=0.01):
    Kn = float(np.max(np.abs(profile.K)))
    norms = np.max(np.abs(profile.psi), axis=1)
    above = np.nonzero(norms >= level * Kn)[0]
    end = above[0] if above.size else len(norms)
    return np.arange(end)


def verify_front(profile: WaveProfile, params: WaveParams, tol: Tolerances = DEFAULT) -> FrontReport:
    """Positivity, monotonicity near ``-inf`` and decay rate of a converged profile."""
    psi, dpsi = profile.psi, profile.dpsi
    mids = hermite(psi[:-1], psi[1:], dpsi[:-1], dpsi[1:], 0.5, profile.h)
    allv = np.concatenate([psi, mids])
    positive = bool(np.all(allv > 0) and profile.tail_amp > 0 and np.all(profile.v1 > 0))
    violation = None
    if not np.all(allv > 0):
        bad = np.argwhere(~(allv > 0))[0]
        i = bad[0]
        tt = profile.t[i] if i < len(psi) else 0.5 * (profile.t[i - len(psi)] + profile.t[i - len(psi) + 1])
        violation = {"t": float(tt), "component": int(bad[1]), "value": float(allv[tuple(bad)])}
    idx = front_window(profile, tol.linear_level)
    t = profile.t[idx]
    U = psi[idx]
    dU = dpsi[idx]
    monotone = bool(idx.size > 0 and np.all(dU > 0))
    lam = params.lambda_eps
    rep = FrontReport(positive, monotone, lam, float("nan"), np.asarray(params.v1_eps).tolist(), [],
                      float(profile.diagnostics.get("residual", float("nan"))),
                      list(profile.diagnostics.get("contraction_ratios", [])), violation=violation)
    if idx.size < 50:
        rep.checks = {"window": False}
        return rep
    lam_fit, a, _ = fit_exponential(t, U)
    v_fit = a / np.max(np.abs(a))
    v1 = np.asarray(params.v1_eps, dtype=float)
    cosang = abs(np.dot(v_fit, v1)) / (np.linalg.norm(v_fit) * np.linalg.norm(v1))
    angle = math.degrees(math.acos(min(1.0, cosang)))
    claim1 = float(np.max(np.abs(dU - lam * U) / np.abs(U)))
    r = U - np.exp(lam_fit * t)[:, None] * a
    rn = np.max(np.abs(r), axis=1)
    good = rn > 0
    rslope = float(np.polyfit(t[good], np.log(rn[good]), 1)[0]) if good.sum() > 2 else float("inf")
    rep.lambda_fit = float(lam_fit)
    rep.v1_fit = v_fit.tolist()
    rep.lambda_rel_error = abs(lam_fit - lam) / lam
    rep.angle_deg = angle
    rep.claim1_ratio = claim1
    rep.remainder_slope = rslope
    rep.window = [float(t[0]), float(t[-1])]
    rep.checks = {
        "lambda": bool(rep.lambda_rel_error <= tol.fit_rel_tol),
        "direction": bool(angle <= tol.angle_tol_deg),
        "claim1": bool(claim1 <= tol.fit_rel_tol),
    }
    return rep


def write_csv(path, profile: WaveProfile):
    """Write ``t,psi_1..psi_N,dpsi_1..dpsi_N`` with 17 significant digits."""
    N = profile.N
    header = ["t"] + [f"psi_{i + 1}" for i in range(N)] + [f"dpsi_{i + 1}" for i in range(N)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(profile.t)):
            w.writerow([f"{x:.17g}" for x in (profile.t[k], *profile.psi[k], *profile.dpsi[k])])
