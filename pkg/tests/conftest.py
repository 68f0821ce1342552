import json
from pathlib import Path

import numpy as np
import pytest

from alfven.grid import Grid3

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracles.json").read_text())


def spectral_eval(grid: Grid3, fh: np.ndarray, points) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``fh`` at arbitrary points (exact)."""
    pts = np.asarray(points, float).reshape(-1, 3)
    k1, k2, k3 = (np.broadcast_to(k, grid.spectral_shape) for k in grid.k_odd)
    w = grid.rfft_weights
    o = np.asarray(grid.origin)
    lead = fh.shape[:-3]
    flat = fh.reshape((-1,) + grid.spectral_shape)
    out = np.empty((flat.shape[0], len(pts)))
    for j, p in enumerate(pts):
        d = p - o
        ph = np.exp(1j * (k1 * d[0] + k2 * d[1] + k3 * d[2]))
        out[:, j] = np.sum((w * flat * ph).real, axis=(1, 2, 3)) / grid.npoints
    return out.reshape(lead + (len(pts),))


def sym_field(grid: Grid3, exprs) -> np.ndarray:
    """Nodal samples of expressions in x1, x2, x3 (numpy syntax via sympy strings)."""
    import sympy as sp

    x = sp.symbols("x1 x2 x3", real=True)
    X = np.broadcast_arrays(*grid.coords)
    comps = []
    for e in exprs:
        f = sp.lambdify(x, sp.sympify(e), "numpy")
        comps.append(np.broadcast_to(np.asarray(f(*X), float), grid.shape).copy())
    return np.stack(comps) if len(comps) > 1 else comps[0]


@pytest.fixture
def grid16():
    return Grid3((16, 16, 16))


@pytest.fixture
def grid32_box():
    return Grid3((32, 32, 32), (8 * np.pi,) * 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def band_field(grid: Grid3, rng, ncomp: int = 3, frac: int = 3) -> np.ndarray:
    shape = ((ncomp,) if ncomp > 1 else ()) + grid.spectral_shape
    fh = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    keep = [np.abs(n) <= d // frac for n, d in zip(grid.index, grid.dims)]
    return grid.ifft(fh * (keep[0] & keep[1] & keep[2]))


# criterion -> one-line verdict, filled by test_acceptance.py and echoed at the end of the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=int):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
