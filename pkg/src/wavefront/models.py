"""Reaction functionals with distributed delay and hypothesis checks.

Every model maps a history segment (see :mod:`wavefront.kernel`) to the
reaction term ``f(phi)``.  Segments may carry leading batch axes, so one call
evaluates a whole grid of histories.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import (DelayKernel, PiecewiseDensity, SampledSegments, constant_segment,
                     kernel_apply, kernel_exp_symbol, kernel_norm)
from .settings import DEFAULT, Tolerances


class DelayModel:
    """Base class for ``u'(t) = f(u_t)`` with equilibria ``0`` and ``K``.

    Subclasses implement :meth:`f` and :meth:`jacobian_at`.
    """

    name = "model"

    def __init__(self, N, tau, K, params=None, diffusion=None, box=None):
        self.N = int(N)
        self.tau = float(tau)
        self.K = None if K is None else np.asarray(K, dtype=float).reshape(self.N)
        self.params = dict(params or {})
        d = np.ones(self.N) if diffusion is None else np.asarray(diffusion, dtype=float).reshape(self.N)
        if np.any(d <= 0):
            raise ValueError("diffusion coefficients must be positive")
        self.diffusion = d
        self._box = box

    @property
    def box(self) -> float:
        """Upper bound ``M`` of the positivity box ``[0, M]``."""
        if self._box is not None:
            return float(self._box)
        if self.K is None or not np.all(np.isfinite(self.K)):
            return 1.0
        return 2.0 * float(np.max(np.abs(self.K)))

    def f(self, seg):
        raise NotImplementedError

    def jacobian_at(self, seg) -> DelayKernel:
        raise NotImplementedError

    def linearization(self, at="zero") -> DelayKernel:
        """Kernel of ``Df`` at the constant segment ``0`` or ``K``."""
        if at == "zero":
            point = np.zeros(self.N)
        elif at == "K":
            if self.K is None:
                raise ValueError("model has no equilibrium K")
            point = self.K
        else:
            raise ValueError("at must be 'zero' or 'K'")
        return self.jacobian_at(constant_segment(point))

    def describe(self) -> dict:
        return {"name": self.name, "N": self.N, "tau": self.tau, "params": self.params,
                "K": None if self.K is None else self.K.tolist(),
                "diffusion": self.diffusion.tolist()}


class LinearModel(DelayModel):
    """``f(phi) = L phi`` for a fixed kernel ``L``."""

    name = "linear"

    def __init__(self, kernel: DelayKernel, K=None, diffusion=None, box=None):
        super().__init__(kernel.N, kernel.tau, K, {}, diffusion, box)
        self.kernel = kernel

    def f(self, seg):
        return kernel_apply(self.kernel, seg)

    def jacobian_at(self, seg):
        return self.kernel


class LogisticDistributed(DelayModel):
    """Delayed logistic law ``f(phi) = b phi(0) (1 - L phi)`` componentwise.

    The positive equilibrium is ``K = L(1)^{-1} 1``.
    """

    name = "logistic_distributed"

    def __init__(self, b, kernel: DelayKernel, diffusion=None, box=None, name=None):
        b = float(b)
        if not b > 0:
            raise ValueError("b must be positive")
        L1 = kernel_exp_symbol(kernel, 0.0).real
        try:
            K = np.linalg.solve(L1, np.ones(kernel.N))
        except np.linalg.LinAlgError:
            K = None
        super().__init__(kernel.N, kernel.tau, K, {"b": b}, diffusion, box)
        self.b = b
        self.kernel = kernel
        if name:
            self.name = name

    def positive_kernel(self) -> bool:
        ok = all(np.all(w >= 0) for _, w in self.kernel.atoms)
        if self.kernel.density is not None:
            ok = ok and bool(np.all(self.kernel.weights[len(self.kernel.atoms):] >= 0))
        nonzero = kernel_norm(self.kernel) > 0
        return bool(ok and nonzero)

    def delay_condition(self) -> dict:
        """Status of the sufficient condition ``b tau <= 3/2`` for global attraction."""
        span = max([-t for t, _ in self.kernel.atoms] + [0.0])
        if self.kernel.density is not None:
            span = max(span, -float(self.kernel.density.breaks[0]))
        value = self.b * span
        return {"b_tau": value, "met": bool(value <= 1.5)}

    def f(self, seg):
        phi0 = seg(0.0)
        return self.b * phi0 * (1.0 - kernel_apply(self.kernel, seg))

    def jacobian_at(self, seg):
        phi0 = np.asarray(seg(0.0), dtype=float).reshape(self.N)
        Lphi = kernel_apply(self.kernel, seg).reshape(self.N)
        part = self.kernel.scaled(left=np.diag(-self.b * phi0))
        return part.plus_atoms([(0.0, np.diag(self.b * (1.0 - Lphi)))])


def fisher_kpp_delay(b=1.0, tau=1.0, K=1.0, diffusion=None, box=None) -> LogisticDistributed:
    """Single-delay Fisher law ``f(phi) = b phi(0) (1 - phi(-tau) / K)``."""
    if not K > 0:
        raise ValueError("K must be positive")
    kern = DelayKernel(1, tau, atoms=[(-tau, 1.0 / K)])
    model = LogisticDistributed(b, kern, diffusion=diffusion, box=box, name="fisher_kpp_delay")
    model.params.update({"tau": float(tau), "K": float(K)})
    return model


def logistic_no_delay(b=1.0, tau=1.0) -> LogisticDistributed:
    """``f(phi) = b phi(0) (1 - phi(0))``; ``tau`` only sets the history length."""
    kern = DelayKernel(1, tau, atoms=[(0.0, 1.0)])
    return LogisticDistributed(b, kern, name="logistic")


class Chemostat(DelayModel):
    """Chemostat with delayed growth response in washout-shifted coordinates.

    State ``(s, u)`` with ``s = S0 - S``::

        s' = -D s(t) + F(S0 - s(t)) u(t)
        u' = exp(-D tau) F(S0 - s(t - tau)) u(t - tau) - D u(t)

    with Michaelis-Menten uptake ``F(S) = m S / (a + S)``.
    """

    name = "chemostat"

    def __init__(self, D=1.0, S0=1.0, tau=0.2, m=4.0, a=1.0, d1=1.0, d2=1.0, box=None):
        for key, val in dict(D=D, S0=S0, tau=tau, m=m, a=a).items():
            if not val > 0:
                raise ValueError(f"{key} must be positive")
        self.D, self.S0, self.m, self.a = float(D), float(S0), float(m), float(a)
        target = self.D * np.exp(self.D * tau)
        self.S_bar = self.uptake_inverse(target)
        if self.S_bar is None:
            K = None
        else:
            s_bar = self.S0 - self.S_bar
            K = np.array([s_bar, np.exp(-self.D * tau) * s_bar])
        params = dict(D=self.D, S0=self.S0, tau=float(tau), m=self.m, a=self.a, d1=float(d1), d2=float(d2))
        super().__init__(2, tau, K, params, [d1, d2], box)

    @property
    def box(self):
        if self._box is not None:
            return float(self._box)
        return self.S0

    def uptake(self, S):
        return self.m * S / (self.a + S)

    def uptake_prime(self, S):
        return self.m * self.a / (self.a + S) ** 2

    def uptake_inverse(self, y):
        """Solve ``F(S) = y``; ``None`` when ``y`` is outside the range of ``F``."""
        if not 0 <= y < self.m:
            return None
        return self.a * y / (self.m - y)

    def survival_condition(self) -> dict:
        lhs = self.uptake(self.S0)
        rhs = self.D * np.exp(self.D * self.tau)
        return {"F_S0": float(lhs), "D_exp_Dtau": float(rhs), "met": bool(lhs > rhs)}

    def f(self, seg):
        now = seg(0.0)
        past = seg(-self.tau)
        s0, u0 = now[..., 0], now[..., 1]
        sl, ul = past[..., 0], past[..., 1]
        g = np.exp(-self.D * self.tau)
        f1 = -self.D * s0 + self.uptake(self.S0 - s0) * u0
        f2 = g * self.uptake(self.S0 - sl) * ul - self.D * u0
        return np.stack([f1, f2], axis=-1)

    def jacobian_at(self, seg):
        s0, u0 = np.asarray(seg(0.0), dtype=float).reshape(2)
        sl, ul = np.asarray(seg(-self.tau), dtype=float).reshape(2)
        g = np.exp(-self.D * self.tau)
        W0 = np.array([[-self.D - self.uptake_prime(self.S0 - s0) * u0, self.uptake(self.S0 - s0)],
                       [0.0, -self.D]])
        Wt = np.array([[0.0, 0.0],
                       [-g * self.uptake_prime(self.S0 - sl) * ul, g * self.uptake(self.S0 - sl)]])
        return DelayKernel(2, self.tau, atoms=[(0.0, W0), (-self.tau, Wt)])

    def to_original(self, values):
        """Map shifted states ``(s, u)`` back to ``(S, u)``."""
        values = np.asarray(values, dtype=float)
        out = values.copy()
        out[..., 0] = self.S0 - values[..., 0]
        return out


# ---------------------------------------------------------------------------
# hypothesis checks

@dataclass
class H1Report:
    ok: bool
    residuals: dict
    K: list | None
    message: str = ""

    def to_dict(self):
        return {"ok": self.ok, "residuals": self.residuals, "K": self.K, "message": self.message}


def check_h1(model: DelayModel, tol: Tolerances = DEFAULT) -> H1Report:
    """Check ``f(0) = f(K) = 0`` with ``K > 0``.

    Violations are reported, never raised.
    """
    zero = np.zeros(model.N)
    r0 = float(np.max(np.abs(model.f(constant_segment(zero)))))
    if model.K is None or not np.all(np.isfinite(model.K)):
        return H1Report(False, {"zero": r0, "K": None}, None, "no positive equilibrium K")
    K = model.K
    fK = np.asarray(model.f(constant_segment(K)))
    rK = float(np.max(np.abs(fK)))
    # scale: size of the individual terms of f near K
    scale = 1.0 + float(np.max(np.abs(K))) * kernel_norm(model.linearization("K"))
    thr = tol.eval_tol * scale
    msgs = []
    if np.any(K <= 0):
        msgs.append("K is not componentwise positive")
    if r0 > thr:
        msgs.append(f"|f(0)| = {r0:.3g}")
    if rK > thr:
        msgs.append(f"|f(K)| = {rK:.3g}")
    ok = not msgs
    return H1Report(ok, {"zero": r0, "K": rK, "threshold": thr}, K.tolist(), "; ".join(msgs))


def sample_segments(N, tau, M, count, rng, grid_points=41):
    """Random segments with values in ``[0, M]``.

    Families, in equal shares: constants, monotone ramps, oscillations, and
    copies of each that vanish at ``theta = 0`` (the sharp case for (H2)).
    """
    theta = np.linspace(-tau, 0.0, grid_points)
    n_fam = 4
    per = int(np.ceil(count / n_fam))
    fams = []
    fams.append(np.broadcast_to(rng.uniform(0, M, (per, 1, N)), (per, grid_points, N)))
    ramps = np.sort(rng.uniform(0, M, (per, grid_points, N)), axis=1)
    flip = rng.random((per, 1, N)) < 0.5
    fams.append(np.where(flip, ramps[:, ::-1, :], ramps))
    k = rng.uniform(0.5, 6.0, (per, 1, N)) * 2 * np.pi / tau
    ph = rng.uniform(0, 2 * np.pi, (per, 1, N))
    mid = rng.uniform(0, M, (per, 1, N))
    amp = np.minimum(mid, M - mid) * rng.uniform(0, 1, (per, 1, N))
    fams.append(mid + amp * np.sin(k * theta[None, :, None] + ph))
    base = np.concatenate(fams, axis=0)
    vanish = base[rng.permutation(len(base))[:per]] * (-theta / tau)[None, :, None]
    vals = np.concatenate([base, vanish], axis=0)[:count]
    return SampledSegments(theta, np.clip(vals, 0.0, M))


def positivity_margin(model: DelayModel, M: float, tol: Tolerances = DEFAULT, seed: int = 0,
                      samples: int | None = None):
    """Smallest ``beta >= 0`` with ``f_i(phi) + beta phi_i(0) >= 0`` on sampled segments.

    The check is falsification only: segments with ``0 <= phi <= M`` are drawn
    at random and the required ``beta`` is the largest ratio
    ``-f_i(phi) / phi_i(0)``.  Returns ``None`` when a segment with
    ``phi_i(0) = 0`` already has ``f_i(phi) < 0`` or the requirement exceeds
    ``beta_max``.
    """
    if not M > 0:
        raise ValueError("M must be positive")
    rng = np.random.default_rng(seed)
    count = samples or tol.positivity_samples
    segs = sample_segments(model.N, model.tau, M, count, rng)
    fv = np.asarray(model.f(segs))
    phi0 = segs(0.0)
    thr = tol.eval_tol * (1.0 + M)
    zero = phi0 <= 0
    if np.any(zero & (fv < -thr)):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(zero, 0.0, -fv / np.where(zero, 1.0, phi0))
    beta = max(0.0, float(np.max(need)))
    if beta > tol.beta_max:
        return None
    return beta


def h3_evidence(model: DelayModel, tol: Tolerances = DEFAULT, seed: int = 0, samples=None,
                horizon=None, h=None) -> dict:
    """Integrate random positive histories and report convergence to ``K``."""
    from .dde import integrate_dde

    if model.K is None:
        return {"ok": False, "message": "no equilibrium K", "converged": 0, "samples": 0}
    rng = np.random.default_rng(seed)
    n = samples or tol.h3_samples
    T = horizon or tol.h3_horizon_factor * max(model.tau, 1.0)
    h = h or min(model.tau / 8.0, 0.05)
    M = float(np.max(model.K))
    segs = sample_segments(model.N, model.tau, M, n, rng)
    # keep phi(0) strictly positive so the state is off the invariant washout set
    vals = segs.values
    vals[:, -1, :] = np.maximum(vals[:, -1, :], rng.uniform(0.05, 1.0, (n, model.N)) * M)
    hist = SampledSegments(segs.theta_grid, vals)
    traj = integrate_dde(model, hist, T, h, blowup=tol.blowup, t0=0.0)
    final = traj.values[-1]
    dist = np.max(np.abs(final - model.K), axis=-1)
    ok = bool(np.all(dist <= tol.h3_tol * max(1.0, M)))
    return {"ok": ok, "samples": n, "horizon": T, "converged": int(np.sum(dist <= tol.h3_tol * max(1.0, M))),
            "max_distance": float(np.max(dist))}


# ---------------------------------------------------------------------------
# construction from plain dictionaries

def kernel_from_dict(data: dict, N: int, tau: float, quad_nodes: int = 8) -> DelayKernel:
    atoms = [(a[0], a[1]) for a in data.get("atoms", [])]
    dens = None
    if data.get("density"):
        d = data["density"]
        dens = PiecewiseDensity(d["breaks"], d["coeffs"])
    return DelayKernel(N, tau, atoms, dens, quad_nodes)


def kernel_to_dict(kernel: DelayKernel) -> dict:
    out = {"atoms": [[t, w.tolist()] for t, w in kernel.atoms]}
    if kernel.density is not None:
        out["density"] = {"breaks": kernel.density.breaks.tolist(), "coeffs": kernel.density.coeffs.tolist()}
    return out


def model_from_dict(data: dict, tol: Tolerances = DEFAULT) -> DelayModel:
    """Build a model from the JSON model definition."""
    builtin = data.get("builtin", "linear")
    p = dict(data.get("params", {}))
    diffusion = data.get("diffusion")
    box = data.get("box")
    if builtin == "fisher_kpp_delay":
        tau = p.pop("tau", data.get("tau", 1.0))
        return fisher_kpp_delay(b=p.get("b", 1.0), tau=tau, K=p.get("K", 1.0), diffusion=diffusion, box=box)
    if builtin == "chemostat":
        tau = p.pop("tau", data.get("tau", 0.2))
        return Chemostat(tau=tau, box=box, **p)
    N = int(data.get("N", 1))
    tau = float(data["tau"])
    kern = kernel_from_dict(data.get("kernel", {}), N, tau, tol.quad_nodes)
    if builtin == "logistic_distributed":
        model = LogisticDistributed(p.get("b", 1.0), kern, diffusion=diffusion, box=box)
        if not model.positive_kernel():
            raise ValueError("logistic_distributed needs a nonnegative, nonzero kernel L")
        return model
    if builtin == "linear":
        return LinearModel(kern, K=data.get("K"), diffusion=diffusion, box=box)
    raise ValueError(f"unknown builtin model {builtin!r}")
