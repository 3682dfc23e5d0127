import json

import pandas as pd
import pytest

from cvqe.cli import EXIT_CAPACITY, EXIT_CONFIG, EXIT_OK, main
from cvqe.scan import CSV_COLUMNS
from tests.conftest import write_config

SMALL_SCAN = """
schema_version = 1

[model]
Q = 4
Ne = 2

[schedule]
ntau_list = [0, 5]
dtau_list = [0.2]

[sampling]
shots = 200
seeds = [0, 1]
selection = ["all", "top_k:2"]

[units]
t_hartree = 0.06666666666666667
"""


def _oracle_value(out: str) -> float:
    return float(out.split("E_exact = ", 1)[1].split()[0])


@pytest.fixture
def scan_config(tmp_path):
    return write_config(tmp_path / "scan.toml", SMALL_SCAN)


def test_scan_writes_rows_in_grid_order(scan_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["scan", "--config", str(scan_config), "--out", str(out)]) == EXIT_OK
    rows = pd.read_csv(out / "scan.csv", dtype={"config_hash": str})
    assert list(rows.columns) == CSV_COLUMNS + ["dE_Ha", "config_hash"]
    assert len(rows) == 2 * 2 * 2
    assert rows["ntau"].tolist() == [0] * 4 + [5] * 4
    assert rows["selection"].tolist()[:2] == ["all", "top_k:2"]
    assert (rows["dE"] >= -1e-10).all()
    assert rows["config_hash"].nunique() == 1

    summary = pd.read_csv(out / "summary.csv")
    assert len(summary) == 4
    assert (summary["n_seeds"] == 2).all()

    records = json.loads((out / "records.json").read_text())
    assert records["config_hash"] == rows["config_hash"].iloc[0]
    assert len(records["rows"]) == 8
    assert "scan.csv" in capsys.readouterr().out


def test_scan_is_deterministic_across_threads(scan_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["scan", "--config", str(scan_config), "--out", str(a), "--threads", "1"]) == EXIT_OK
    assert main(["scan", "--config", str(scan_config), "--out", str(b), "--threads", "2"]) == EXIT_OK
    assert (a / "scan.csv").read_bytes() == (b / "scan.csv").read_bytes()


def test_seeds_flag_overrides_config(scan_config, tmp_path):
    out = tmp_path / "run"
    assert main(["scan", "--config", str(scan_config), "--out", str(out), "--seeds", "3"]) == EXIT_OK
    rows = pd.read_csv(out / "scan.csv", dtype={"config_hash": str})
    assert sorted(rows["seed"].unique()) == [0, 1, 2]


def test_oracle_annotates_matching_scan(scan_config, tmp_path, capsys):
    out = tmp_path / "run"
    main(["scan", "--config", str(scan_config), "--out", str(out)])
    assert main(["oracle", "--config", str(scan_config), "--scan", str(out / "scan.csv"), "--out", str(out)]) == EXIT_OK
    annotated = pd.read_csv(out / "oracle.csv")
    original = pd.read_csv(out / "scan.csv", dtype={"config_hash": str})
    assert annotated["dE"].tolist() == pytest.approx(original["dE"].tolist(), abs=1e-12)
    assert "E_exact =" in capsys.readouterr().out


def test_oracle_rejects_scan_of_other_config(scan_config, tmp_path):
    out = tmp_path / "run"
    main(["scan", "--config", str(scan_config), "--out", str(out)])
    other = write_config(tmp_path / "other.toml", SMALL_SCAN.replace("Ne = 2", "Ne = 1"))
    assert main(["oracle", "--config", str(other), "--scan", str(out / "scan.csv")]) == EXIT_CONFIG

    rows = pd.read_csv(out / "scan.csv", dtype={"config_hash": str})
    rows.loc[0, "config_hash"] = "000000000000"
    mixed = tmp_path / "mixed.csv"
    rows.to_csv(mixed, index=False)
    assert main(["oracle", "--config", str(scan_config), "--scan", str(mixed)]) == EXIT_CONFIG


def test_oracle_values(tmp_path, capsys):
    dimer = write_config(tmp_path / "dimer.toml", """
[model]
Q = 2
Ne = 1
dmu = 0.0
V = 0.0

[schedule]
ntau_list = [1]
dtau_list = [0.1]
""")
    assert main(["oracle", "--config", str(dimer)]) == EXIT_OK
    line = capsys.readouterr().out
    assert "(free_fermion" in line
    assert _oracle_value(line) == pytest.approx(-1.0, abs=1e-12)

    empty = write_config(tmp_path / "empty.toml", """
[model]
Q = 6
Ne = 0

[schedule]
ntau_list = [1]
dtau_list = [0.1]
""")
    assert main(["oracle", "--config", str(empty)]) == EXIT_OK
    assert _oracle_value(capsys.readouterr().out) == 0.0


def test_oracle_capacity_exit(tmp_path):
    big = write_config(tmp_path / "big.toml", """
[model]
Q = 40
Ne = 20

[schedule]
ntau_list = [1]
dtau_list = [0.1]
""")
    assert main(["oracle", "--config", str(big)]) == EXIT_CAPACITY


def test_bad_config_exit(tmp_path):
    assert main(["scan", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    bad = write_config(tmp_path / "bad.toml", "[model]\nQ = 4\nNe = 9\n[schedule]\nntau_list = [1]\ndtau_list = [0.1]\n")
    assert main(["scan", "--config", str(bad)]) == EXIT_CONFIG
    negative = write_config(tmp_path / "seeds.toml", SMALL_SCAN.replace("seeds = [0, 1]", "seeds = [-1]"))
    assert main(["scan", "--config", str(negative)]) == EXIT_CONFIG


def test_compile_zero_steps_is_preparation_only(tmp_path):
    config = write_config(tmp_path / "c.toml", """
[model]
Q = 4
Ne = 2

[schedule]
ntau_list = [0, 2]
dtau_list = [0.1]
""")
    out = tmp_path / "qasm"
    assert main(["compile", "--config", str(config), "--out", str(out)]) == EXIT_OK
    resources = json.loads((out / "resources.json").read_text())
    zero = resources["evolution_ntau0_dtau0.1.qasm"]
    assert zero["cnot_count"] == 0 and zero["gate_count"] == 2
    lines = (out / "evolution_ntau0_dtau0.1.qasm").read_text().splitlines()
    assert lines[4:] == ["x q[0];", "x q[1];", "measure q -> c;"]
    two = resources["evolution_ntau2_dtau0.1.qasm"]
    # per step: three XX/YY pairs and three ZZ strings, two CNOTs each
    assert two["n_steps"] == 2 and two["cnot_count"] == 2 * (3 * 2 * 2 + 3 * 2)


def test_compile_q50_census(tmp_path):
    config = write_config(tmp_path / "q50.toml", """
[model]
Q = 50
Ne = 25
dmu = 0.2
V = 0.0

[schedule]
ntau_list = [1]
dtau_list = [0.06666666666666667]
""")
    out = tmp_path / "q50"
    assert main(["compile", "--config", str(config), "--out", str(out)]) == EXIT_OK
    (entry,) = json.loads((out / "resources.json").read_text()).values()
    assert entry["cnot_count"] == 196
    assert (out / "evolution_ntau1_dtau0.0666667.qasm").read_text().startswith("OPENQASM 2.0;\n")


def test_compare_methods_json(tmp_path, capsys):
    config = write_config(tmp_path / "m.toml", """
[model]
Q = 4
Ne = 2

[schedule]
ntau_list = [20]
dtau_list = [0.1]

[sampling]
shots = 1000
seeds = [3]

[methods]
budget = 2600
epsilon = 1e-3
""")
    out = tmp_path / "methods"
    assert main(["compare-methods", "--config", str(config), "--out", str(out)]) == EXIT_OK
    data = json.loads((out / "methods.json").read_text())
    assert data["L"] == 13 and data["budget"] == 2600
    assert all(t["shots"] == 200 for t in data["per_term"])
    assert json.loads(capsys.readouterr().out) == data


def test_converge_json(tmp_path):
    config = write_config(tmp_path / "c.toml", """
[model]
Q = 4
Ne = 2

[schedule]
ntau_list = [1, 5, 10, 20]
dtau_list = [0.1]

[sampling]
shots = "exact"
selection = ["all"]
""")
    out = tmp_path / "conv"
    assert main(["converge", "--config", str(config), "--out", str(out)]) == EXIT_OK
    payload = json.loads((out / "converge.json").read_text())
    assert list(payload) == ["all"]
    best = payload["all"]["best"]["E_B"]
    assert best == min(p["E_B"] for p in payload["all"]["trace"])


def test_weights_export(tmp_path, capsys):
    assert main(["weights", "--order", "2", "--out", str(tmp_path)]) == EXIT_OK
    table = pd.read_csv(tmp_path / "weights_order2.csv")
    assert table["pattern"].tolist() == ["H0H0", "H0H1", "H1H0", "H1H1"]
    assert "H1H0" in capsys.readouterr().out
    assert main(["weights", "--order", "9"]) == EXIT_CAPACITY


def test_scan_in_units_of_t(tmp_path):
    unit = write_config(tmp_path / "unit.toml", SMALL_SCAN)
    scaled = write_config(tmp_path / "scaled.toml", SMALL_SCAN.replace("Ne = 2", "Ne = 2\ndmu = 1.5\nt = 2.0\nV = 2.0"))
    assert main(["scan", "--config", str(unit), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["scan", "--config", str(scaled), "--out", str(tmp_path / "b")]) == EXIT_OK
    a = pd.read_csv(tmp_path / "a" / "scan.csv", dtype={"config_hash": str})
    b = pd.read_csv(tmp_path / "b" / "scan.csv", dtype={"config_hash": str})
    for column in ["E_guiding", "E_B", "E_exact", "dE", "dE_Ha"]:
        assert b[column].tolist() == pytest.approx(a[column].tolist(), abs=1e-9)
    assert (a["B_size"] == b["B_size"]).all()
