"""Characteristic matrices, root counting and the dominant real root.

For a linearization ``L`` and ``eps = 1/c`` the characteristic matrix is

    Delta_eps(z) = eps^2 z^2 diag(d) - z I + L(e^{z.} I).

At ``eps = 0`` this is ``L(e^{z.} I) - z I``, the characteristic matrix of
``u' = L u_t``.  Both conventions share one determinant, :func:`charpoly`,
so root locations never depend on a sign choice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceFailure, HypothesisFailure
from .kernel import DelayKernel, kernel_exp_symbol, kernel_norm
from .settings import DEFAULT, Tolerances


@dataclass(frozen=True)
class CharProblem:
    """Characteristic problem for kernel ``L`` at ``eps >= 0``."""

    kernel: DelayKernel
    epsilon: float = 0.0
    diffusion: tuple | None = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def N(self) -> int:
        return self.kernel.N

    @property
    def d(self) -> np.ndarray:
        if self.diffusion is None:
            return np.ones(self.N)
        return np.asarray(self.diffusion, dtype=float).reshape(self.N)

    def at(self, epsilon) -> "CharProblem":
        return CharProblem(self.kernel, float(epsilon), self.diffusion)

    @property
    def norm(self) -> float:
        return kernel_norm(self.kernel)


Rect = tuple  # (xlo, xhi, ylo, yhi)


def char_matrix(problem: CharProblem, z) -> np.ndarray:
    """``eps^2 z^2 diag(d) - z I + L(e^{z.} I)``; ``z`` scalar or array."""
    z = np.asarray(z, dtype=complex)
    S = kernel_exp_symbol(problem.kernel, z)
    eye = np.eye(problem.N)
    quad = (problem.epsilon**2 * z**2)[..., None, None] * np.diag(problem.d)
    return quad - z[..., None, None] * eye + S


def char_matrix_derivative(problem: CharProblem, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    S1 = kernel_exp_symbol(problem.kernel, z, order=1)
    eye = np.eye(problem.N)
    return (2 * problem.epsilon**2 * z)[..., None, None] * np.diag(problem.d) - eye + S1


def charpoly(problem: CharProblem, z):
    """Canonical characteristic function ``det Delta_eps(z)``."""
    return np.linalg.det(char_matrix(problem, z))


def first_order_matrix(problem: CharProblem, s) -> np.ndarray:
    """``2N x 2N`` characteristic matrix of the first-order form of the profile equation.

    With ``y = (phi, phi')`` the profile equation reads
    ``phi'' = eps^{-2} diag(d)^{-1} (phi' - L phi_t)``, and

        D_eps(s) = [[s I, -I], [eps^{-2} d^{-1} L(e^{s.}), s I - eps^{-2} d^{-1}]].

    Then ``det Delta_eps(s) = eps^{2N} det(diag d) det D_eps(s)``.
    """
    eps = problem.epsilon
    if eps <= 0:
        raise ValueError("first-order form needs eps > 0")
    N = problem.N
    s = complex(s)
    dinv = np.diag(1.0 / problem.d)
    S = kernel_exp_symbol(problem.kernel, s)
    out = np.zeros((2 * N, 2 * N), dtype=complex)
    out[:N, :N] = s * np.eye(N)
    out[:N, N:] = -np.eye(N)
    out[N:, :N] = dinv @ S / eps**2
    out[N:, N:] = s * np.eye(N) - dinv / eps**2
    return out


# ---------------------------------------------------------------------------
# argument principle

def _contour(rect, density):
    xlo, xhi, ylo, yhi = rect
    corners = [complex(xlo, ylo), complex(xhi, ylo), complex(xhi, yhi), complex(xlo, yhi)]
    pts = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        n = max(8, int(math.ceil(abs(b - a) * density)))
        pts.append(a + (b - a) * np.arange(n) / n)
    pts = np.concatenate(pts)
    return np.append(pts, pts[0])


def _log_derivative(problem, z):
    A = char_matrix(problem, z)
    B = char_matrix_derivative(problem, z)
    return np.trace(np.linalg.solve(A, B), axis1=-2, axis2=-1), A


def _winding(problem, rect, tol: Tolerances):
    xlo, xhi, ylo, yhi = rect
    zmax = max(abs(complex(x, y)) for x in (xlo, xhi) for y in (ylo, yhi))
    density = 4.0 * max(1.0, problem.kernel.tau, problem.epsilon**2 * zmax) + 16.0 / max(1e-3, min(xhi - xlo, yhi - ylo))
    prev = None
    history = []
    while True:
        z = _contour(rect, density)
        if z.size > tol.winding_max_points:
            return None, {"levels": history, "reason": "winding integral did not settle"}
        with np.errstate(all="ignore"):
            g, A = _log_derivative(problem, z)
        if not np.all(np.isfinite(g)):
            return None, {"levels": history, "reason": "zero on boundary"}
        det = np.abs(np.linalg.det(A))
        rows = np.prod(np.linalg.norm(A, axis=-1), axis=-1)
        rel = float(np.min(det / np.where(rows > 0, rows, 1.0)))
        if rel < tol.boundary_zero_tol:
            return None, {"levels": history, "reason": "zero on boundary", "min_rel_det": rel}
        val = np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(z)) / (2j * np.pi)
        history.append([int(z.size), float(val.real), float(val.imag)])
        near = abs(val - round(val.real)) <= tol.winding_tol
        if near and prev is not None and round(prev.real) == round(val.real):
            return int(round(val.real)), {"levels": history, "min_rel_det": rel}
        prev = val if near else None
        density *= 2.0


def count_roots_rect(problem: CharProblem, rect, tol: Tolerances = DEFAULT, details=False):
    """Number of zeros of ``det Delta_eps`` inside ``rect``, with multiplicity.

    Parameters
    ----------
    rect : tuple
        ``(xlo, xhi, ylo, yhi)``.

    The winding number of the boundary image is computed by the trapezoid
    rule on ``tr(Delta^{-1} Delta')`` with the node spacing halved until two
    successive levels round to the same integer and sit within
    ``winding_tol`` of it.  If the boundary passes near a zero the rectangle
    is inflated by ``boundary_nudge`` (relative) and retried.
    """
    xlo, xhi, ylo, yhi = map(float, rect)
    if not (xhi > xlo and yhi > ylo):
        raise ValueError("degenerate rectangle")
    cur = (xlo, xhi, ylo, yhi)
    info = {}
    for attempt in range(tol.boundary_retries + 1):
        count, info = _winding(problem, cur, tol)
        if count is not None:
            info.update({"rect": list(cur), "attempts": attempt + 1})
            return (count, info) if details else count
        wx = tol.boundary_nudge * (cur[1] - cur[0])
        wy = tol.boundary_nudge * (cur[3] - cur[2])
        cur = (cur[0] - wx, cur[1] + wx, cur[2] - wy, cur[3] + wy)
    raise ConvergenceFailure(f"root count failed on {rect}: {info.get('reason')}", info)


# ---------------------------------------------------------------------------
# real roots

def _real_det(problem, x):
    return np.linalg.det(char_matrix(problem, np.asarray(x, dtype=float))).real


def _real_det_derivative(problem, x):
    step = 1e-20 * max(1.0, abs(x))
    return float(np.linalg.det(char_matrix(problem, complex(x, step))).imag / step)


def null_vector(A) -> np.ndarray:
    """Smallest right singular vector, scaled to unit max-norm with positive peak."""
    _, _, vh = np.linalg.svd(np.asarray(A))
    v = vh[-1].conj()
    v = v / v[np.argmax(np.abs(v))]
    return np.real_if_close(v, tol=1e6)


def _polish(problem, x, tol):
    for _ in range(30):
        d = _real_det_derivative(problem, x)
        if d == 0 or not np.isfinite(d):
            break
        step = _real_det(problem, x) / d
        x -= step
        if abs(step) <= tol.newton_tol * max(1.0, abs(x)):
            break
    return x


def dominant_real_root(problem: CharProblem, search=None, tol: Tolerances = DEFAULT):
    """Largest real zero of ``det Delta_0`` in ``search`` with certificates.

    Returns
    -------
    lam : float
    v : ndarray
        Null vector of ``Delta_0(lam)`` with unit max-norm.
    cert : dict
        ``simple``, ``dominant``, ``positive`` flags and the rectangles used.

    Raises
    ------
    HypothesisFailure
        No real zero in the search interval.
    """
    norm = problem.norm
    lo, hi = search if search is not None else (0.0, norm + 1.0)
    if lo < 0:
        raise ValueError("search interval must start at a nonnegative point")
    xs = np.linspace(lo, hi, tol.scan_points)
    F = _real_det(problem, xs)
    sign = np.sign(F)
    idx = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    if idx.size == 0:
        raise HypothesisFailure(f"no real zero of the characteristic function in [{lo}, {hi}]")
    i = idx[-1]
    if F[i + 1] == 0:
        lam = xs[i + 1]
    elif F[i] == 0:
        lam = xs[i]
    else:
        lam = brentq(lambda x: _real_det(problem, x), xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15)
    lam = float(_polish(problem, lam, tol))
    A = char_matrix(problem, lam)
    v = np.real(null_vector(A))
    scale = 1.0 + norm + abs(lam)
    deriv = _real_det_derivative(problem, lam)

    delta = tol.simple_radius_frac * lam if lam > 0 else tol.simple_radius_frac
    small = (lam - delta, lam + delta, -delta, delta)
    n_small = count_roots_rect(problem, small, tol)
    simple = bool(n_small == 1 and abs(deriv) > 1e-8 * scale ** problem.N)

    Y = 2.0 * norm + 1.0
    right = max((1 + tol.strip_right_frac) * lam, norm + 1.0)
    dom = (lam - tol.strip_left_frac * max(lam, 1e-3), right, -Y, Y)
    n_dom = count_roots_rect(problem, dom, tol)
    cert = {
        "simple": simple,
        "dominant": bool(n_dom == 1),
        "positive": bool(np.all(v > 0)),
        "residual": float(np.max(np.abs(A.real @ v))),
        "det_derivative": deriv,
        "strip_counts": [{"rect": list(small), "count": int(n_small)},
                         {"rect": list(dom), "count": int(n_dom)}],
    }
    return lam, v, cert


def strip_height(problem: CharProblem, xlo, xhi) -> float:
    """Imaginary-part bound for zeros with real part in ``[xlo, xhi]`` (``xlo > 0``), plus margin."""
    norm = problem.norm
    dmax = float(np.max(problem.d))
    e2 = problem.epsilon**2
    if e2 == 0:
        return 2.0 * norm + 1.0
    g = min(abs(2 * dmax * e2 * xlo - 1), abs(2 * dmax * e2 * xhi - 1))
    if 2 * dmax * e2 * xlo <= 1 <= 2 * dmax * e2 * xhi:
        g = 0.0
    if g <= 1e-3:
        return np.inf
    return 2.0 * norm / min(1.0, g) + 1.0


def root_continuation(problem: CharProblem, epsilon, lambda0, tol: Tolerances = DEFAULT,
                      seed=None, verify=True):
    """Continue the simple root ``lambda0`` of ``Delta_0`` to ``Delta_eps``.

    Newton's method on the real axis is applied along ``eps_k = k eps / n``
    so each solve starts close to its root.  With ``verify`` the strip
    ``[lambda0 - delta, lambda0 + delta1] x [-Y, Y]`` is checked to hold
    exactly one zero.

    Returns
    -------
    dict with ``epsilon``, ``lambda``, ``v``, ``residual``, ``strip``.
    """
    epsilon = float(epsilon)
    if not 0 < epsilon <= tol.eps_max:
        raise ValueError(f"epsilon must lie in (0, {tol.eps_max}]")
    n = 1 if seed is not None else max(1, int(math.ceil(epsilon / 0.02)))
    z = float(seed if seed is not None else lambda0)
    for k in range(1, n + 1):
        prob = problem.at(epsilon * k / n)
        for it in range(60):
            d = _real_det_derivative(prob, z)
            F = _real_det(prob, z)
            if F == 0:
                break
            if d == 0 or not np.isfinite(d):
                raise ConvergenceFailure(f"Newton stalled at eps={prob.epsilon}")
            step = F / d
            z -= step
            if abs(step) <= tol.newton_tol * max(1.0, abs(z)):
                break
        else:
            raise ConvergenceFailure(f"Newton did not converge at eps={prob.epsilon}")
        if not np.isfinite(z):
            raise ConvergenceFailure(f"Newton diverged at eps={prob.epsilon}")
    prob = problem.at(epsilon)
    A = char_matrix(prob, z)
    v = np.real(null_vector(A))
    out = {"epsilon": epsilon, "lambda": float(z), "v": v,
           "residual": float(np.max(np.abs(A.real @ v)))}
    if verify:
        xlo = lambda0 - tol.strip_left_frac * lambda0
        xhi = lambda0 + tol.strip_right_frac * lambda0
        Y = strip_height(prob, xlo, xhi)
        if not np.isfinite(Y) or not xlo < z < xhi:
            raise ConvergenceFailure(
                f"eps={epsilon}: root {z:.6g} not isolated in the validated strip; speed below validated range")
        rect = (xlo, xhi, -Y, Y)
        cnt = count_roots_rect(prob, rect, tol)
        out["strip"] = {"rect": list(rect), "count": int(cnt)}
        if cnt != 1:
            raise ConvergenceFailure(
                f"eps={epsilon}: {cnt} roots in the continuation strip; speed below validated range",
                out)
    return out


def weighted_exponent(problem: CharProblem, lambda0, tol: Tolerances = DEFAULT) -> float:
    """``mu`` near ``lambda0 / 2`` with no characteristic root real part within ``mu_gap_frac * lambda0``."""
    gap = tol.mu_gap_frac * lambda0
    for k in range(0, 5):
        for sgn in (1, -1) if k else (1,):
            mu = lambda0 * (0.5 + sgn * 0.1 * k)
            if not 0 < mu < lambda0:
                continue
            Y = 2.0 * problem.norm * math.exp(problem.kernel.tau * max(0.0, gap - mu)) + 1.0
            if count_roots_rect(problem.at(0.0), (mu - gap, mu + gap, -Y, Y), tol) == 0:
                return mu
    return 0.5 * lambda0


@dataclass
class SpectrumReport:
    lambda0: float
    v: np.ndarray
    simple: bool
    dominant: bool
    positive: bool
    norm_L: float
    strip_counts: list = field(default_factory=list)
    lambda_eps: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    residual: float = 0.0

    @property
    def certified(self) -> bool:
        return self.simple and self.dominant and self.positive

    def lookup(self, epsilon):
        for entry in self.lambda_eps:
            if abs(entry["epsilon"] - epsilon) <= 1e-14 * max(1.0, epsilon):
                return entry
        return None

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "eigvec": np.asarray(self.v).tolist(),
            "simple": self.simple,
            "dominant": self.dominant,
            "positive": self.positive,
            "norm_L": self.norm_L,
            "residual": self.residual,
            "strip_counts": self.strip_counts,
            "lambda_of_eps": [[e["epsilon"], e["lambda"], np.asarray(e["v"]).tolist()] for e in self.lambda_eps],
            "failures": self.failures,
        }


def analyze(model, speeds=(), tol: Tolerances = DEFAULT) -> SpectrumReport:
    """Dominant root at the zero state and its continuation to each speed."""
    problem = CharProblem(model.linearization("zero"), 0.0, tuple(model.diffusion))
    lam, v, cert = dominant_real_root(problem, tol=tol)
    report = SpectrumReport(lam, v, cert["simple"], cert["dominant"], cert["positive"],
                            problem.norm, list(cert["strip_counts"]), residual=cert["residual"])
    for c in sorted(set(float(c) for c in speeds), reverse=True):
        try:
            out = root_continuation(problem, 1.0 / c, lam, tol)
        except (ConvergenceFailure, ValueError) as exc:
            report.failures.append({"c": c, "epsilon": 1.0 / c, "error": str(exc)})
            continue
        report.lambda_eps.append(out)
        report.strip_counts.append(out["strip"])
    return report
