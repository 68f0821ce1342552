import math

import numpy as np
import pytest

from alfven.geometry import MarkerCloud
from alfven.grid import Grid3
from alfven.initial_data import InitialDataSpec, make_initial_data
from alfven.scattering import (
    LineRecords,
    ScatteringRecord,
    accumulate,
    characteristic_identity_residual,
    fit_decay_exponent,
    label_cell,
    linearization_deviation,
    run_lines,
    sample_gradp_sup,
    scattering_field,
    weighted_label_norm,
    write_scattering_csv,
)
from alfven.solver import ElsasserState, StageFields


@pytest.fixture(scope="module")
def grid():
    return Grid3((16, 16, 16), (8 * np.pi,) * 3)


def _records(labels, z0, zs, tail=None):
    n = len(labels)
    tail = tail if tail is not None else {1: np.zeros(n), -1: np.zeros(n)}
    return ScatteringRecord(labels, z0, {1: np.zeros((n, 3)), -1: np.zeros((n, 3))}, zs,
                            {1: np.zeros((n, 3)), -1: np.zeros((n, 3))}, {}, tail, 1.0, 2.0, "ok")


class TestLines:
    def test_start_zero(self, grid):
        rec = LineRecords.start(ElsasserState.zeros(grid), np.zeros((5, 3)))
        assert len(rec) == 5
        assert all(np.all(v == 0) for d in (rec.z0, rec.j0, rec.gradp, rec.wedge) for v in d.values())

    def test_decoupled_identity_exact(self, grid):
        st = make_initial_data(InitialDataSpec("bump", 0.03, seed=2, sides="plus"), grid)
        T = 2 * grid.spacing[2]  # lines land on nodes
        sr, rec, cloud, fin = run_lines(st, T, T / 400, stride=4, history_every=100)
        res = characteristic_identity_residual(rec, fin, cloud)
        assert res["max"] <= 1e-8
        assert np.all(rec.gradp[1] == 0)
        assert np.allclose(cloud.pos_minus - cloud.labels, [0, 0, -T])

    def test_zero_data_stays_zero(self, grid):
        sr, rec, cloud, fin = run_lines(ElsasserState.zeros(grid), 0.5, 0.05, stride=8)
        for d in (rec.gradp, rec.wedge, sr.z_scatter, sr.curl_scatter):
            assert all(np.all(v == 0) for v in d.values())

    def test_decoupled_scatter_is_initial_data(self, grid):
        st = make_initial_data(InitialDataSpec("bump", 0.03, seed=2, sides="plus"), grid)
        sr, rec, cloud, fin = run_lines(st, 1.0, 0.05, stride=4)
        assert np.array_equal(sr.z_scatter[1], sr.z0[1])
        assert np.array_equal(sr.curl_scatter[1], sr.j0[1])
        assert np.abs(sr.z0[1]).max() > 0

    def test_coupled_identity(self):
        g = Grid3((32, 32, 32), (8 * np.pi,) * 3)
        st = make_initial_data(InitialDataSpec("bump", 0.01, seed=0), g)
        sr, rec, cloud, fin = run_lines(st, 1.0, 0.025, stride=4)
        res = characteristic_identity_residual(rec, fin, cloud)
        assert res["max"] <= 2e-3
        assert np.abs(rec.gradp[1]).max() > 0

    def test_viscous_rejected(self, grid):
        st = ElsasserState.zeros(grid, mu=0.1)
        rec = LineRecords.start(st, np.zeros((1, 3)))
        with pytest.raises(ValueError):
            characteristic_identity_residual(rec, st, MarkerCloud(np.zeros((1, 3))))

    def test_accumulate_step(self, grid):
        st = make_initial_data(InitialDataSpec("bump", 0.03, seed=3), grid)
        cloud = MarkerCloud.lattice(grid, 8)
        rec = LineRecords.start(st, cloud.labels)
        rec2, cloud2, st2 = accumulate(rec, st, cloud, 0.05)
        assert st2.t == pytest.approx(0.05) and rec2.t == pytest.approx(0.05)
        assert np.all(rec.gradp[1] == 0)  # input untouched
        gp = StageFields(grid, st.zp_hat, st.zm_hat, 0.0, st.b0).grad_p
        bound = 0.05 * 1.5 * float(np.max(np.linalg.norm(gp, axis=0)))
        assert 0 < np.linalg.norm(rec2.gradp[1], axis=1).max() <= bound
        assert max(sample_gradp_sup(st, cloud)) <= bound / 0.075

    def test_accumulate_time_mismatch(self, grid):
        st = ElsasserState.zeros(grid)
        rec = LineRecords.start(st, np.zeros((1, 3)))
        st.t = 1.0
        with pytest.raises(ValueError):
            accumulate(rec, st, MarkerCloud(np.zeros((1, 3))), 0.1)


class TestDecayFit:
    def test_power_law(self):
        t = np.linspace(0, 10, 50)
        assert fit_decay_exponent(t, 3.0 * (1 + t) ** -1.7) == pytest.approx(1.7, abs=1e-12)

    def test_too_few(self):
        assert math.isnan(fit_decay_exponent([0.0, 1.0], [1.0, 0.0]))


class TestScatteringField:
    def _lines(self, n=3, t=2.0, history=None):
        z = {1: np.ones((n, 3)), -1: np.zeros((n, 3))}
        g = {1: np.full((n, 3), 0.1), -1: np.zeros((n, 3))}
        return LineRecords(np.zeros((n, 3)), z, z, g, g, t=t, history=history or [])

    def test_truncation_and_tail(self):
        hist = [(t, (1 + t) ** -2.0, 0.5 * (1 + t) ** -2.0) for t in np.linspace(0, 2, 21)]
        r = self._lines(history=hist)
        gpT = {1: np.array([[0.0, 0.0, 0.3]] * 3), -1: np.zeros((3, 3))}
        sr = scattering_field(r, 2.0, gpT, accuracy=10.0)
        assert sr.omega_fit == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(sr.tail[1], 0.3 * 3.0 / 1.0)
        assert np.all(sr.tail[-1] == 0)
        assert np.allclose(sr.z_scatter[1], 0.9)
        assert sr.status == "ok"
        assert scattering_field(r, 2.0, gpT, accuracy=0.1).status == "warning"

    def test_slow_decay_gives_infinite_tail(self):
        hist = [(t, (1 + t) ** -0.5, 0.0) for t in np.linspace(0, 2, 21)]
        gpT = {1: np.ones((3, 3)), -1: np.zeros((3, 3))}
        sr = scattering_field(self._lines(history=hist), 2.0, gpT, accuracy=1.0)
        assert np.all(np.isinf(sr.tail[1])) and sr.status == "warning"

    def test_time_mismatch(self):
        with pytest.raises(ValueError):
            scattering_field(self._lines(t=1.0), 2.0)

    def test_csv(self, tmp_path):
        sr = scattering_field(self._lines(), 2.0)
        p = tmp_path / "s.csv"
        write_scattering_csv(p, sr)
        lines = p.read_text().splitlines()
        assert lines[0] == "side,y1,y2,u_label,z1_0,z2_0,z3_0,gp1,gp2,gp3,z1_T,z2_T,z3_T,tail_estimate"
        assert len(lines) == 7
        row = lines[1].split(",")
        assert row[0] == "+" and float(row[7]) == pytest.approx(0.1) and float(row[10]) == pytest.approx(0.9)


    def test_two_horizons(self, grid):
        """Extending the horizon from T to 2T moves the truncated field by less than the tail at T."""
        st = make_initial_data(InitialDataSpec("bump", 0.01, seed=0), grid)
        a = run_lines(st, 2.0, 0.05, stride=2)[0]
        b = run_lines(st, 4.0, 0.05, stride=2)[0]
        diff = {s: b.z_scatter[s] - a.z_scatter[s] for s in (1, -1)}
        for s in (1, -1):
            d, tail = np.linalg.norm(diff[s], axis=1).max(), a.tail[s].max()
            # the estimate bounds the change without being vacuous
            assert 0.05 * tail <= d <= tail
        dn = weighted_label_norm(a.labels, diff)
        tn = weighted_label_norm(a.labels, {s: a.tail[s][:, None] for s in (1, -1)})
        assert 0.05 * tn <= dn <= tn
        assert b.tail[1].max() < a.tail[1].max()


class TestLabelNorm:
    def test_cell(self, grid):
        y = MarkerCloud.lattice(grid, 4).labels
        assert label_cell(y) == pytest.approx((4 * grid.spacing[0]) ** 3)

    def test_norm(self):
        y = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
        v = {1: np.array([[1.0, 0, 0], [0, 1.0, 0]]), -1: np.zeros((2, 3))}
        # cell volume is 2 (only the u spacing is resolved)
        expect = math.sqrt(2.0 * (1.0**1.5 + 5.0**1.5))
        assert weighted_label_norm(y, v, R=1.0, omega=1.5) == pytest.approx(expect)


class TestLinearization:
    def test_quadratic_deviation(self):
        y = np.array([[0.0, 0.0, float(i)] for i in range(4)])
        recs = []
        amps = [0.02, 0.01, 0.005]
        for a in amps:
            z0 = {1: np.full((4, 3), a), -1: np.full((4, 3), -a)}
            zs = {s: z0[s] + a * a for s in (1, -1)}
            recs.append(_records(y, z0, zs))
        res = linearization_deviation(None, amps, records=recs)
        assert res.exponent == pytest.approx(2.0, abs=1e-12)
        assert res.ratios == pytest.approx([4.0, 4.0])
        assert res.tails == [0.0, 0.0, 0.0]

    def test_zero_amplitude(self, grid):
        st = make_initial_data(InitialDataSpec("bump", 1.0, seed=0), grid)
        res = linearization_deviation(st, [0.0], T=0.5, dt=0.05, stride=8)
        assert res.deviations == [0.0]

    def test_decoupled_base(self, grid):
        st = make_initial_data(InitialDataSpec("bump", 1.0, seed=0, sides="plus"), grid)
        res = linearization_deviation(st, [0.02, 0.01], T=1.0, dt=0.05, stride=4)
        assert res.deviations == [0.0, 0.0]

    def test_needs_inputs(self):
        with pytest.raises(ValueError):
            linearization_deviation(None, [0.1])

    def test_viscous_base_rejected(self, grid):
        with pytest.raises(ValueError):
            linearization_deviation(ElsasserState.zeros(grid, mu=0.1), [0.1], T=1.0, dt=0.1)
