import math

import numpy as np
import pytest
from oracles import CHEMOSTAT

from wavefront.kernel import DelayKernel, HistorySegment, PiecewiseDensity, constant_segment, kernel_apply
from wavefront.models import (Chemostat, LinearModel, LogisticDistributed, check_h1, fisher_kpp_delay,
                              h3_evidence, kernel_from_dict, kernel_to_dict, model_from_dict,
                              positivity_margin)
from wavefront.settings import Tolerances


def distributed_logistic(b=1.0):
    dens = PiecewiseDensity([-1.0, 0.0], [[[[1.0]], [[-0.5]]]])  # 1 - (theta + 1)/2 on [-1, 0]
    return LogisticDistributed(b, DelayKernel(1, 1.0, atoms=[(-0.5, 0.4)], density=dens))


class TestH1:
    def test_fisher(self):
        rep = check_h1(fisher_kpp_delay())
        assert rep.ok and rep.K == [1.0]

    def test_chemostat_equilibrium(self):
        m = Chemostat()
        rep = check_h1(m)
        assert rep.ok
        assert rep.K == pytest.approx([CHEMOSTAT["s_bar"], CHEMOSTAT["u_bar"]], rel=1e-14)
        assert m.uptake(m.S_bar) == pytest.approx(m.D * math.exp(m.D * m.tau), rel=1e-10)
        assert m.K[1] == m.K[0] * math.exp(-m.D * m.tau)

    def test_violation_reported(self):
        m = LinearModel(DelayKernel.point(0.0, 1.0, 1.0), K=[0.5])
        rep = check_h1(m)
        assert not rep.ok and rep.residuals["K"] == pytest.approx(0.5)

    def test_nonpositive_K_reported(self):
        m = LinearModel(DelayKernel.point(0.0, 0.0, 1.0), K=[-1.0])
        assert not check_h1(m).ok

    def test_chemostat_without_survival_state(self):
        m = Chemostat(m=1.1)
        assert not m.survival_condition()["met"]
        rep = check_h1(m)
        assert not rep.ok and rep.K is None

    def test_distributed_logistic_equilibrium(self):
        m = distributed_logistic()
        assert check_h1(m).ok
        assert kernel_apply(m.kernel, constant_segment(m.K))[0] == pytest.approx(1.0)


class TestPositivityMargin:
    def test_logistic_bound(self):
        beta = positivity_margin(fisher_kpp_delay(), 2.0)
        # f >= phi(0) (1 - ||L|| M) = -phi(0), so beta = 1 is the sharp bound
        assert beta is not None and 0 < beta <= 1.0 + 1e-12
        assert beta > 0.9

    def test_linear_decay(self):
        a = 2.5
        beta = positivity_margin(LinearModel(DelayKernel.point(0.0, -a, 1.0)), 3.0)
        assert beta == pytest.approx(a, rel=1e-12)

    def test_counterexample(self):
        assert positivity_margin(LinearModel(DelayKernel.point(-1.0, -1.0, 1.0)), 1.0) is None

    def test_bad_box(self):
        with pytest.raises(ValueError):
            positivity_margin(fisher_kpp_delay(), 0.0)

    def test_seeded(self):
        m = distributed_logistic()
        assert positivity_margin(m, 2.0, seed=4) == positivity_margin(m, 2.0, seed=4)


def random_segments(N, tau, count, rng, lo=0.1, hi=1.5):
    out = []
    for _ in range(count):
        a = rng.uniform(lo, hi, N)
        w = rng.uniform(0.5, 4.0, N)
        ph = rng.uniform(0, 2 * np.pi, N)
        amp = rng.uniform(0, 0.5, N) * np.minimum(a - lo, hi - a)
        theta = np.linspace(-tau, 0.0, 401)
        vals = a + amp * np.sin(w * theta[:, None] + ph)
        ders = amp * w * np.cos(w * theta[:, None] + ph)
        out.append(HistorySegment(theta, vals, ders))
    return out


def shifted(seg, other, h):
    vals = seg.values + h * other.values
    return HistorySegment(seg.times, vals)


@pytest.mark.parametrize("model", [fisher_kpp_delay(), distributed_logistic(), Chemostat(),
                                   Chemostat(m=6.0, a=0.5, tau=0.5)], ids=["fisher", "distributed", "chemostat",
                                                                          "chemostat2"])
def test_jacobian_matches_finite_differences(model):
    rng = np.random.default_rng(11)
    segs = random_segments(model.N, model.tau, 20, rng)
    dirs = random_segments(model.N, model.tau, 20, rng, -1.0, 1.0)
    orders = []
    for phi, psi in zip(segs, dirs):
        lin = kernel_apply(model.jacobian_at(phi), psi)
        errs = []
        for h in (1e-3, 5e-4):
            plus = HistorySegment(phi.times, phi.values + h * psi.values)
            minus = HistorySegment(phi.times, phi.values - h * psi.values)
            fd = (np.asarray(model.f(plus)) - np.asarray(model.f(minus))) / (2 * h)
            errs.append(float(np.max(np.abs(fd - lin))))
        if errs[0] < 1e-10:
            # quadratic nonlinearity: the central difference is exact
            continue
        orders.append(math.log2(errs[0] / errs[1]))
    assert all(o >= 1.9 for o in orders)


class TestConstruction:
    def test_kernel_dict_roundtrip(self):
        k = DelayKernel(1, 1.0, atoms=[(-0.5, 0.4)],
                        density=PiecewiseDensity([-1.0, 0.0], [[[[1.0]], [[-0.5]]]]))
        k2 = kernel_from_dict(kernel_to_dict(k), 1, 1.0)
        assert np.allclose(k2.weights, k.weights)

    def test_builtins(self):
        m = model_from_dict({"builtin": "fisher_kpp_delay", "params": {"b": 2.0, "tau": 0.5}})
        assert m.tau == 0.5 and m.params["b"] == 2.0
        c = model_from_dict({"builtin": "chemostat", "params": {"D": 1.0, "tau": 0.2}})
        assert isinstance(c, Chemostat)

    def test_distributed_requires_positive_kernel(self):
        data = {"builtin": "logistic_distributed", "N": 1, "tau": 1.0, "params": {"b": 1.0},
                "kernel": {"atoms": [[-1.0, [[-1.0]]]]}}
        with pytest.raises(ValueError):
            model_from_dict(data)

    def test_delay_condition(self):
        assert fisher_kpp_delay(b=1.0, tau=1.0).delay_condition()["met"]
        assert not fisher_kpp_delay(b=1.0, tau=2.0).delay_condition()["met"]

    def test_tolerances(self):
        with pytest.raises(ValueError):
            Tolerances.from_dict({"no_such_knob": 1.0})
        with pytest.raises(ValueError):
            Tolerances.from_dict({"tol_fix": 0.0})
        assert Tolerances.from_dict({"k_max": 20.0}).k_max == 20


def test_h3_evidence_fisher():
    out = h3_evidence(fisher_kpp_delay(), seed=1)
    assert out["ok"] and out["converged"] == out["samples"] == 20
