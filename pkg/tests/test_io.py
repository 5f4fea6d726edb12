import json

import numpy as np

from smoothpaths.io import (load_density_matrix, read_metadata, read_table_csv,
                            read_wavefunction_csv, save_density_matrix, to_jsonable,
                            write_json, write_table_csv, write_wavefunction_csv)
from smoothpaths.states import density_from_mixture, gaussian


def test_wavefunction_round_trip(tmp_path, grid):
    psi = gaussian(grid, x0=0.5, k0=1.0)
    path = write_wavefunction_csv(tmp_path / "psi.csv", psi, {"label": "boosted"})
    back = read_wavefunction_csv(path)
    assert back.grid == grid
    assert np.array_equal(back.values, psi.values)
    assert read_metadata(path)["label"] == "boosted"


def test_density_matrix_round_trip(tmp_path, small_grid):
    rho = density_from_mixture([(0.5, gaussian(small_grid, x0=-1)),
                                (0.5, gaussian(small_grid, x0=1))])
    back = load_density_matrix(save_density_matrix(tmp_path / "rho.npz", rho))
    assert np.array_equal(back.kernel, rho.kernel) and back.grid == small_grid


def test_table_timestamp_toggle(tmp_path):
    rows = [{"a": 1, "b": 0.1}, {"a": 2, "b": 1e-17}]
    p1 = write_table_csv(tmp_path / "t1.csv", rows, {"k": "v"}, timestamp=False)
    p2 = write_table_csv(tmp_path / "t2.csv", rows, {"k": "v"}, timestamp=False)
    assert p1.read_bytes() == p2.read_bytes()
    p3 = write_table_csv(tmp_path / "t3.csv", rows, {"k": "v"}, timestamp=True)
    assert "written" in read_metadata(p3)
    back = read_table_csv(p1)
    assert [float(r["b"]) for r in back] == [0.1, 1e-17]


def test_json_handles_numpy(tmp_path):
    obj = {"x": np.arange(3), "f": np.float64(np.inf), "b": np.bool_(True), "i": np.int64(4)}
    data = json.loads(write_json(tmp_path / "r.json", obj).read_text())
    assert data == {"x": [0, 1, 2], "f": "inf", "b": True, "i": 4}
    assert to_jsonable((1.5,)) == [1.5]
