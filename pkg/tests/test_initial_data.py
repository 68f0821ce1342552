import numpy as np
import pytest

from alfven.grid import Grid3, divergence
from alfven.initial_data import (
    DataContractError,
    InitialDataSpec,
    make_initial_data,
    sobolev_energies,
)
from alfven.io import write_checkpoint


@pytest.fixture(scope="module")
def grid():
    return Grid3((16, 16, 16), (8 * np.pi,) * 3)


class TestSpec:
    @pytest.mark.parametrize("kw", [
        {"family": "nope"},
        {"amplitude": -1.0},
        {"sides": "left"},
        {"band": (2.0, 1.0)},
        {"sigma": 0.0},
        {"family": "custom_checkpoint"},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            InitialDataSpec(**kw)


class TestFamilies:
    @pytest.mark.parametrize("family", ["bump", "random_band", "low_frequency", "oscillatory", "single_mode"])
    def test_div_free_and_deterministic(self, grid, family):
        spec = InitialDataSpec(family, 0.01, seed=7, band=(0.5, 1.5))
        a = make_initial_data(spec, grid)
        b = make_initial_data(spec, grid)
        assert np.array_equal(a.zp_hat, b.zp_hat) and np.array_equal(a.zm_hat, b.zm_hat)
        for z in (a.z_plus, a.z_minus):
            assert np.abs(divergence(grid, z)).max() <= 1e-12 * max(1e-300, np.abs(z).max()) + 1e-16

    def test_seed_changes_data(self, grid):
        a = make_initial_data(InitialDataSpec("random_band", 0.01, seed=1, band=(0.5, 1.5)), grid)
        b = make_initial_data(InitialDataSpec("random_band", 0.01, seed=2, band=(0.5, 1.5)), grid)
        assert not np.allclose(a.zp_hat, b.zp_hat)

    @pytest.mark.parametrize("family", ["bump", "random_band"])
    def test_sup_amplitude(self, grid, family):
        st = make_initial_data(InitialDataSpec(family, 0.02, seed=0, band=(0.5, 1.5)), grid)
        # sup normalization is done before the band projection, which can move it slightly
        assert max(st.max_abs()) == pytest.approx(0.02, rel=0.05)

    @pytest.mark.parametrize("family", ["low_frequency", "oscillatory"])
    def test_energy_normalized(self, family):
        g = Grid3((16, 16, 16), (40.0,) * 3)
        st = make_initial_data(InitialDataSpec(family, 0.03, seed=0, band=(0.9, 1.2)), g)
        assert sobolev_energies(st, 0)[0] == pytest.approx(0.03**2, rel=1e-12)

    @pytest.mark.parametrize("eps", [0.01, 0.005])
    def test_low_frequency_hierarchy(self, eps):
        # box grows like 1/eps so the envelope (radius 2.5/eps) stays inside it
        g = Grid3((48, 48, 48), (6.4 / eps,) * 3)
        E = sobolev_energies(make_initial_data(InitialDataSpec("low_frequency", eps), g), 2)
        assert E[1] / E[0] <= 10 * eps**2
        assert E[2] < 1e-2 * E[1]

    def test_oscillatory_flat_hierarchy(self):
        g = Grid3((32, 32, 32), (40.0,) * 3)
        E = sobolev_energies(make_initial_data(InitialDataSpec("oscillatory", 0.01), g), 2)
        assert np.all(np.abs(E / E[0] - 1) <= 0.10)

    def test_zero_family(self, grid):
        st = make_initial_data(InitialDataSpec("zero"), grid)
        assert np.abs(st.zp_hat).max() == 0 and np.abs(st.zm_hat).max() == 0

    def test_single_mode_sides(self, grid):
        st = make_initial_data(InitialDataSpec("single_mode", 0.01, mode=(1, 0, 2), sides="minus"), grid)
        assert np.abs(st.zp_hat).max() == 0
        assert max(st.max_abs()) == pytest.approx(0.01, rel=1e-12)
        with pytest.raises(ValueError):
            make_initial_data(InitialDataSpec("single_mode", 0.01, mode=(0, 0, 9)), grid)

    def test_bump_centres(self, grid):
        spec = InitialDataSpec("bump", 0.01, sigma=1.5, center_plus=(0, 0, -5.0), center_minus=(0, 0, 5.0))
        st = make_initial_data(spec, grid)
        x3 = grid.axes[2]
        prof_p = np.sum(st.z_plus**2, axis=(0, 1, 2))
        prof_m = np.sum(st.z_minus**2, axis=(0, 1, 2))
        assert x3[np.argmax(prof_p)] < 0 < x3[np.argmax(prof_m)]

    def test_empty_shell(self, grid):
        with pytest.raises(ValueError):
            make_initial_data(InitialDataSpec("oscillatory", 0.01, band=(0.01, 0.02)), grid)


class TestSobolev:
    def test_single_mode_values(self):
        g = Grid3((16, 16, 16))
        st = make_initial_data(InitialDataSpec("single_mode", 0.1, mode=(1, 2, 0), sides="plus"), g)
        E = sobolev_energies(st, 2)
        # |z|^2 averages to a^2/2 over the box
        e0 = 0.5 * 0.5 * 0.01 * g.volume
        assert E == pytest.approx([e0, 5 * e0, 25 * e0], rel=1e-12)


class TestContract:
    def test_accepts_short_run(self, grid):
        make_initial_data(InitialDataSpec("bump", 0.01), grid, t_final=5.0)

    def test_rejects_wrapping_run(self, grid):
        with pytest.raises(DataContractError):
            make_initial_data(InitialDataSpec("bump", 0.01), grid, t_final=20.0)

    def test_rejects_large_data(self, grid):
        with pytest.raises(DataContractError):
            make_initial_data(InitialDataSpec("bump", 0.6), grid, t_final=1.0)


class TestCheckpointFamily:
    def test_round_trip(self, tmp_path, grid):
        st = make_initial_data(InitialDataSpec("bump", 0.01, seed=9), grid)
        path = tmp_path / "c.bin"
        write_checkpoint(path, st)
        back = make_initial_data(InitialDataSpec("custom_checkpoint", path=str(path)), grid, mu=0.1)
        assert back.mu == 0.1
        assert np.abs(back.zp_hat - st.zp_hat).max() <= 1e-12 * np.abs(st.zp_hat).max()

    def test_grid_mismatch(self, tmp_path, grid):
        st = make_initial_data(InitialDataSpec("bump", 0.01), grid)
        path = tmp_path / "c.bin"
        write_checkpoint(path, st)
        with pytest.raises(ValueError):
            make_initial_data(InitialDataSpec("custom_checkpoint", path=str(path)), Grid3((8, 8, 8)))
