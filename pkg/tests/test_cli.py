import csv
import io
import json

import numpy as np
import pytest

from isotns import lattice as L
from isotns.cli import main


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def run(tmp_path, command, cfg, *extra):
    path = write(tmp_path, f"{command}.json", cfg)
    out = tmp_path / f"{command}.out"
    code = main([command, "--config", path, "--out", str(out), *extra])
    return code, (out.read_text() if out.exists() else None)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def bell_file(tmp_path):
    return write(tmp_path, "bell.json", L.bell_circuit().to_record())


def test_verify_depolarized(tmp_path):
    cfg = {"version": 1, "seed": 1, "lattice": {"family": "depolarized", "nx": 3, "ny": 3, "p": 0.04}}
    code, text = run(tmp_path, "verify", cfg)
    assert code == 0
    rep = json.loads(text)
    assert rep["ok"]
    assert rep["interior_delta"] == pytest.approx(0.1, abs=1e-9)
    assert rep["max_isometry_deviation"] < 1e-12
    assert rep["max_split_error"] < 1e-9
    assert len(rep["sites"]) == 9


def test_verify_w_lattice(tmp_path):
    cfg = {"version": 1, "seed": 1, "lattice": {"family": "w", "nx": 3, "ny": 3, "delta": 0.3}}
    code, text = run(tmp_path, "verify", cfg)
    assert code == 0
    assert json.loads(text)["interior_delta"] == pytest.approx(0.09, abs=1e-9)


def test_verify_non_injective_lattice_reports_zero(tmp_path):
    cfg = {"version": 1, "seed": 1, "lattice": {"family": "identity", "nx": 2, "ny": 2}}
    code, text = run(tmp_path, "verify", cfg)
    assert code == 0
    assert json.loads(text)["min_delta"] == 0


def test_expect_with_exact(tmp_path):
    cfg = {
        "version": 1,
        "seed": 4,
        "lattice": {"family": "depolarized", "nx": 3, "ny": 3, "p": 0.5},
        "observable": {"site": [2, 2], "pauli": "zi"},
        "eta": 0.5,
        "s_th": None,
        "n_samples": 2000,
    }
    code, text = run(tmp_path, "expect", cfg, "--exact")
    assert code == 0
    (row,) = rows(text)
    assert abs(float(row["estimate"]) - float(row["exact"])) < 4 * float(row["stderr"]) + 1e-12
    assert int(row["n_accepted"]) == 2000


def test_expect_embedded_bell(tmp_path, bell_file):
    lat = L.embed_brickwork(L.bell_circuit())
    (site, f0), (_, f1) = lat.readout
    cfg = {
        "version": 1,
        "seed": 0,
        "lattice": {"family": "embed", "circuit": bell_file},
        "observable": {"site": list(site), "pauli": "zz", "factors": [f0, f1]},
        "eta": 0.0,
        "n_samples": 10,
    }
    code, text = run(tmp_path, "expect", cfg, "--exact")
    assert code == 0
    (row,) = rows(text)
    assert float(row["estimate"]) == pytest.approx(1.0)
    assert float(row["exact"]) == pytest.approx(1.0)


def test_sample_deterministic_across_threads(tmp_path):
    cfg = {"version": 1, "seed": 3, "lattice": {"family": "random", "nx": 3, "ny": 3}, "n_samples": 600}
    code1, a = run(tmp_path, "sample", cfg, "--threads", "1")
    code2, b = run(tmp_path, "sample", cfg, "--threads", "4")
    assert code1 == code2 == 0
    assert a == b
    assert len(rows(a)) == 600


def test_sample_resets(tmp_path):
    cfg = {
        "version": 1,
        "seed": 3,
        "lattice": {"family": "w", "nx": 3, "ny": 3, "delta": 0.6},
        "sampler": "resets",
        "s_th": 5,
        "n_samples": 100,
    }
    code, text = run(tmp_path, "sample", cfg)
    assert code == 0
    table = rows(text)
    assert {r["accepted"] for r in table} <= {"0", "1"}
    assert all(r["outcome"] == "-" for r in table if r["accepted"] == "0")


def test_seed_override_changes_output(tmp_path):
    cfg = {"version": 1, "seed": 3, "lattice": {"family": "random", "nx": 2, "ny": 2}, "n_samples": 50}
    _, a = run(tmp_path, "sample", cfg)
    _, b = run(tmp_path, "sample", cfg, "--seed", "4")
    assert a != b


def test_scan_modes(tmp_path):
    survey = {"version": 1, "seed": 0, "mode": "survey", "dims": [6, 6], "eta_grid": [0.3, 0.8], "n_samples": 300}
    code, text = run(tmp_path, "scan", survey)
    assert code == 0
    table = rows(text)
    assert float(table[0]["mean_size"]) > float(table[1]["mean_size"])
    resets = {"version": 1, "seed": 0, "mode": "resets", "dims": [6, 6], "delta_grid": [0.3, 0.7], "n_samples": 300}
    code, text = run(tmp_path, "scan", resets)
    assert code == 0
    table = rows(text)
    assert float(table[0]["rejection_fraction"]) >= float(table[1]["rejection_fraction"])
    est = {
        "version": 1,
        "seed": 0,
        "mode": "estimate",
        "lattice": {"family": "depolarized", "nx": 3, "ny": 3, "p": 0.6},
        "observable": {"site": [2, 2], "pauli": "xi"},
        "eta_grid": [0.3, 0.6],
        "n_samples": 200,
        "s_th": 9,
    }
    code, text = run(tmp_path, "scan", est)
    assert code == 0
    assert [float(r["eta"]) for r in rows(text)] == [0.3, 0.6]


def test_embed_round_trip(tmp_path, bell_file):
    code, text = run(tmp_path, "embed", {"version": 1, "seed": 0, "circuit": bell_file})
    assert code == 0
    lat = L.IsoTnsLattice.from_record(json.loads(text))
    ref = L.embed_brickwork(L.bell_circuit())
    assert lat.readout == ref.readout
    for s in ref.positions():
        np.testing.assert_array_equal(lat[s].array, ref[s].array)


@pytest.mark.parametrize(
    "cfg",
    [
        {"version": 1, "lattice": {"family": "identity", "nx": 2, "ny": 2}, "n_samples": 5},
        {"version": 2, "seed": 0, "lattice": {"family": "identity", "nx": 2, "ny": 2}, "n_samples": 5},
        {"version": 1, "seed": 0, "lattice": {"family": "nope", "nx": 2, "ny": 2}, "n_samples": 5},
        {"version": 1, "seed": 0, "lattice": {"family": "w", "nx": 2, "ny": 2, "delta": 0.9}, "n_samples": 5},
        {"version": 1, "seed": 0, "lattice": {"family": "identity", "nx": 2, "ny": 2}, "n_samples": 0},
        {"version": 1, "seed": 0, "lattice": {"family": "identity", "nx": 2, "ny": 2}, "sampler": "resets", "s_th": 2, "n_samples": 5},
    ],
)
def test_config_errors_exit_2_without_output(tmp_path, cfg):
    code, text = run(tmp_path, "sample", cfg)
    assert code == 2
    assert text is None


def test_bad_observable_and_eta(tmp_path):
    base = {
        "version": 1,
        "seed": 0,
        "lattice": {"family": "depolarized", "nx": 2, "ny": 2, "p": 0.2},
        "observable": {"site": [1, 1], "pauli": "z"},
        "eta": 0.5,
        "n_samples": 10,
    }
    code, text = run(tmp_path, "expect", base)
    assert code == 2 and text is None  # eta above the admissible rate
    bad_site = dict(base, eta=0.1, observable={"site": [5, 5], "pauli": "z"})
    assert run(tmp_path, "expect", bad_site)[0] == 2
    bad_word = dict(base, eta=0.1, observable={"site": [1, 1], "pauli": "q"})
    assert run(tmp_path, "expect", bad_word)[0] == 2


def test_unreadable_config(tmp_path):
    assert main(["verify", "--config", str(tmp_path / "missing.json")]) == 2
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["verify", "--config", str(p)]) == 2


def test_all_rejected_exits_3(tmp_path):
    cfg = {
        "version": 1,
        "seed": 0,
        "lattice": {"family": "depolarized", "nx": 3, "ny": 3, "p": 0.5},
        "observable": {"site": [2, 2], "pauli": "z"},
        "eta": 0.0,
        "s_th": 1,
        "n_samples": 10,
    }
    code, text = run(tmp_path, "expect", cfg)
    assert code == 3 and text is None


def test_cap_exceeded_exits_4(tmp_path):
    cfg = {"version": 1, "seed": 0, "lattice": {"family": "random", "nx": 9, "ny": 9}, "n_samples": 1}
    code, text = run(tmp_path, "sample", cfg)
    assert code == 4 and text is None


def test_module_entry_point(tmp_path, capsys):
    path = write(tmp_path, "v.json", {"version": 1, "seed": 1, "lattice": {"family": "identity", "nx": 1, "ny": 1}})
    assert main(["verify", "--config", path]) == 0
    assert json.loads(capsys.readouterr().out)["nx"] == 1
