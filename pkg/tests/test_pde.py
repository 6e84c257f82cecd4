import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavefront.errors import ConfigError
from wavefront.kernel import DelayKernel
from wavefront.models import LinearModel, fisher_kpp_delay, logistic_no_delay
from wavefront.pde import (FieldHistory, constant_history, front_position, laplacian_neumann, measure_speed,
                           profile_history, simulate, translation_error, trapezoid_mass, validate_profile)


def heat_model():
    return LinearModel(DelayKernel.point(0.0, 0.0, 1.0))


def bump(x, X):
    return np.exp(-((x - 0.4 * X) ** 2))[:, None]


class TestDiscretization:
    @given(st.integers(5, 60))
    def test_laplacian_annihilates_constants(self, n):
        u = np.full((n, 2), 3.7)
        assert np.max(np.abs(laplacian_neumann(u, 0.1))) == 0.0

    def test_laplacian_of_cosine(self):
        dx = np.pi / 300
        x = dx * np.arange(301)
        u = np.cos(x)[:, None]
        lap = laplacian_neumann(u, dx)
        assert np.max(np.abs(lap[:, 0] + np.cos(x))) <= 1e-4

    def test_summed_laplacian_vanishes(self):
        # zero-flux: the trapezoid sum of the discrete Laplacian is exactly zero
        rng = np.random.default_rng(0)
        u = rng.random((41, 1))
        assert abs(trapezoid_mass(laplacian_neumann(u, 0.1), 0.1)[0]) <= 1e-12


class TestSimulate:
    def test_heat_mass_conserved(self):
        X, dx = 20.0, 0.1
        x = dx * np.arange(int(round(X / dx)) + 1)
        u0 = bump(x, X)
        hist = simulate(heat_model(), constant_history(u0), 10.0, dx, x=x)
        mass = [trapezoid_mass(s, dx)[0] for s in hist.snapshots]
        assert np.max(np.abs(np.asarray(mass) - mass[0])) <= 1e-8

    def test_constant_K_stays(self):
        dx = 0.1
        x = dx * np.arange(201)
        hist = simulate(fisher_kpp_delay(), constant_history(np.ones((x.size, 1))), 5.0, dx, x=x)
        assert np.max(np.abs(hist.snapshots - 1.0)) <= 1e-10

    def test_step_dt_divides_snapshots(self):
        dx = 0.1
        x = dx * np.arange(51)
        hist = simulate(fisher_kpp_delay(), constant_history(np.zeros((x.size, 1))), 2.0, dx, x=x,
                        snapshot_dt=0.25)
        assert np.allclose(hist.times, 0.25 * np.arange(9))
        assert hist.dt <= 0.4 * dx * dx

    def test_cfl_violation(self):
        with pytest.raises(ConfigError):
            simulate(fisher_kpp_delay(), constant_history(np.zeros((11, 1))), 1.0, 0.1, X=1.0, dt=0.01)

    def test_missing_domain(self):
        with pytest.raises(ConfigError):
            simulate(fisher_kpp_delay(), constant_history(np.zeros((11, 1))), 1.0, 0.1)

    def test_positivity(self):
        dx = 0.1
        x = dx * np.arange(301)
        u0 = np.where(x < 3.0, 1.0, 0.0)[:, None]
        hist = simulate(fisher_kpp_delay(), constant_history(u0), 5.0, dx, x=x)
        assert hist.info["min_value"] >= -1e-10


class TestKPPSpeed:
    @staticmethod
    def speed(dx):
        X = 120.0
        x = dx * np.arange(int(round(X / dx)) + 1)
        u0 = np.where(x < 5.0, 1.0, 0.0)[:, None]
        hist = simulate(logistic_no_delay(), constant_history(u0), 50.0, dx, x=x, snapshot_dt=1.0)
        # the front moves right here: reflect so the crossing search runs from the invaded side
        flipped = FieldHistory(x, hist.times, hist.snapshots[:, ::-1], dx, hist.dt, hist.d)
        times, xf = front_position(flipped, 0.5)
        s, r2 = measure_speed(times, xf, t_from=25.0)
        return s, r2

    def test_minimal_speed(self):
        s1, r2 = self.speed(0.2)
        s2, _ = self.speed(0.1)
        assert s1 == pytest.approx(2.0, rel=0.05)
        assert r2 > 0.999
        assert abs(s1 - s2) <= 0.01 * s2


class TestFront:
    def test_translated_profile(self, fisher):
        prof, _ = fisher.profile(6.0)
        c, x0, dx = 6.0, 60.0, 0.05
        x = dx * np.arange(2401)
        times = np.array([0.0, 0.5, 1.0])
        snaps = np.stack([profile_history(prof, x, c, x0)(t) for t in times])
        hist = FieldHistory(x, times, snaps, dx, 0.01, np.ones(1))
        _, xf = front_position(hist, 0.5)
        assert np.allclose(xf, x0 - c * times, atol=1e-3)

    def test_stationary_field(self):
        x = 0.1 * np.arange(101)
        snap = np.clip(x / 5.0, 0, 1)[:, None]
        hist = FieldHistory(x, np.arange(4.0), np.stack([snap] * 4), 0.1, 0.01, np.ones(1))
        t, xf = front_position(hist, 0.5)
        assert np.allclose(xf, 2.5, atol=1e-12)
        assert measure_speed(t, xf)[0] == pytest.approx(0.0, abs=1e-12)

    def test_no_crossing(self):
        x = 0.1 * np.arange(11)
        hist = FieldHistory(x, np.zeros(1), np.zeros((1, 11, 1)), 0.1, 0.01, np.ones(1))
        with pytest.raises(ValueError):
            front_position(hist, 0.5)


@pytest.fixture(scope="module")
def run(fisher):
    prof, _ = fisher.profile(6.0)
    return validate_profile(fisher.model, prof, 6.0, t_end=5.0, dx=0.05)


class TestValidate:
    def test_speed_and_shape(self, run):
        report, _ = run
        assert report["pass"]
        assert report["speed"] == pytest.approx(6.0, rel=0.05)
        assert report["l2_rel_final"] <= 1e-2
        assert report["min_value"] >= -1e-10

    def test_zero_error_at_start(self, run, fisher):
        report, hist = run
        prof, _ = fisher.profile(6.0)
        err = translation_error(hist, prof, 6.0, 0.0, report["x0"])
        assert err["abs"] <= 1e-12

    def test_wrong_speed_worse(self, run, fisher):
        report, hist = run
        prof, _ = fisher.profile(6.0)
        good = translation_error(hist, prof, 6.0, 5.0, report["x0"])
        bad = translation_error(hist, prof, 6.6, 5.0, report["x0"], c_profile=6.0)
        assert bad["rel"] > 3 * good["rel"]

    def test_snapshot_write(self, run, tmp_path):
        _, hist = run
        small = FieldHistory(hist.x[:50], hist.times[:3], hist.snapshots[:3, :50], hist.dx, hist.dt, hist.d)
        small.write(tmp_path)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["files"] == ["snapshot_0000.csv", "snapshot_0001.csv", "snapshot_0002.csv"]
        assert man["bc"] == "neumann" and man["points"] == 50
        data = np.loadtxt(tmp_path / "snapshot_0001.csv", delimiter=",", skiprows=1)
        assert np.array_equal(data[:, 1], hist.snapshots[1, :50, 0])
        assert np.array_equal(hist.snapshot(hist.times[1]), hist.snapshots[1])
