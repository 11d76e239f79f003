import json

import numpy as np
import pytest

from fgts.io import (load_container, load_data, load_series, save_container, save_panel, save_series,
                     write_rows, write_series_csv)
from fgts.simgen import make_coefficients, simulate, simulate_panel


def test_container_round_trip_bitwise(tmp_path, rng):
    a = rng.normal(size=(3, 4))
    save_container(tmp_path / "c.npz", {"a": a, "b": np.arange(3)}, {"note": "x"})
    arrays, meta = load_container(tmp_path / "c.npz")
    assert arrays["a"].tobytes() == a.tobytes() and arrays["b"].dtype == np.float64
    assert meta["note"] == "x" and meta["format_version"] == 1


def test_container_rejects_other_versions(tmp_path):
    np.savez(tmp_path / "bad.npz", __meta__=np.array(json.dumps({"format_version": 99})))
    with pytest.raises(ValueError, match="format_version"):
        load_container(tmp_path / "bad.npz")
    with pytest.raises(ValueError):
        save_container(tmp_path / "x.npz", {"__meta__": np.zeros(1)}, {})


def test_series_and_panel_round_trip(tmp_path):
    c = make_coefficients(3, p=4, seed=0)
    x = simulate(c, 12, seed=2)
    save_series(tmp_path / "s.npz", x, c)
    back = load_series(tmp_path / "s.npz")
    assert back.frames.tobytes() == x.frames.tobytes() and back.lag == 3 and back.seed == 2
    data, coeffs = load_data(tmp_path / "s.npz")
    assert np.array_equal(coeffs.phi2, c.phi2) and coeffs.case_id == "nonlinear3"
    panel = simulate_panel(make_coefficients(1, p=4), 3, 5, seed=1)
    save_panel(tmp_path / "p.npz", panel)
    data, coeffs = load_data(tmp_path / "p.npz")
    assert coeffs is None and data.n == 3
    assert all(np.array_equal(a.frames, b.frames) for a, b in zip(data.subjects, panel.subjects))
    with pytest.raises(ValueError):
        load_series(tmp_path / "p.npz")


def test_csv_writers(tmp_path):
    write_series_csv(tmp_path / "s.csv", np.arange(8.0).reshape(2, 2, 2))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,x0,x1,x2,x3" and lines[2] == "1,4.0,5.0,6.0,7.0"
    write_rows(tmp_path / "r.csv", ["a", "b"], [{"a": 1, "b": "x"}])
    assert (tmp_path / "r.csv").read_bytes() == b"a,b\n1,x\n"
