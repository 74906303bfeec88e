import csv
import dataclasses
import io
import json

import numpy as np
import pytest

import specgap.cli as cli
from specgap.chain import chain_to_json, direct_product, new_chain, random_reversible
from specgap.decomposition import Partition, partition_to_json
from specgap.permutations import unbiased_adjacent_chain
from specgap.serialize import dumps, format_float


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def records(text):
    return {r["name"]: r for r in json.loads(text)["records"]}


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return path

    return write


def test_format_float_digits():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(2.0) == "2.0"
    assert float(format_float(1 / 3)) == 1 / 3
    assert dumps({"x": [1.0, 0.5], "y": None}) == '{\n  "x": [1.0, 0.5],\n  "y": null\n}'


def test_gap_two_state(files, capsys):
    ch = new_chain(["a", "b"], [[0.5, 0.5], [0.5, 0.5]])
    code, out, _ = run(["gap", files("c.json", chain_to_json(ch))], capsys)
    assert code == 0
    assert records(out)["gap"]["value"] == pytest.approx(1.0, abs=1e-12)


def test_gap_s3(files, capsys):
    code, out, _ = run(["gap", files("s3.json", chain_to_json(unbiased_adjacent_chain(3)))], capsys)
    assert code == 0
    assert records(out)["gap"]["value"] == pytest.approx(0.25, abs=1e-12)


def test_malformed_json(files, capsys):
    code, out, err = run(["gap", files("bad.json", '{"labels": ["a",\n  "P": }')], capsys)
    assert code == 2
    assert out == ""
    assert "bad.json:2:" in err


def test_missing_field(files, capsys):
    code, _, err = run(["gap", files("c.json", '{"labels": ["a"]}')], capsys)
    assert code == 2 and "missing field" in err


def test_non_stochastic_input(files, capsys):
    code, _, err = run(["gap", files("c.json", '{"labels": ["a", "b"], "P": [[0.5, 0.4], [0.5, 0.5]]}')], capsys)
    assert code == 2 and "NonStochastic" in err


def _product_fixture(files):
    c1 = random_reversible(3, 1.0, seed=1)
    c2 = random_reversible(4, 1.0, seed=2)
    prod = direct_product([c1, c2], [0.5, 0.5])
    part = Partition(np.arange(12) // 4, 3)
    return files("prod.json", chain_to_json(prod)), files("part.json", partition_to_json(part))


def test_verify_product_fixture(files, capsys):
    chain_path, part_path = _product_fixture(files)
    code, out, _ = run(["verify", chain_path, part_path, "--vectors", 20], capsys)
    assert code == 0
    rec = records(out)
    assert rec["epsilon_exact"]["value"] <= 1e-10
    t3 = rec["theorem3_sound"]["value"]
    assert t3["value"] == pytest.approx(min(rec["gamma_hat_min"]["value"], rec["gamma_tilde_min"]["value"]), abs=1e-9)
    assert all(r["pass"] for r in rec.values())


def test_verify_is_byte_deterministic(files, capsys):
    ch = random_reversible(15, 0.5, seed=1)
    part = Partition.from_labels(np.arange(15) % 4)
    c, p = files("c.json", chain_to_json(ch)), files("p.json", partition_to_json(part))
    first = run(["verify", c, p, "--seed", 1], capsys)
    second = run(["verify", c, p, "--seed", 1], capsys)
    assert first[0] == 0
    assert first[1] == second[1]
    assert "wall_clock" not in first[1]


def test_timing_flag_adds_wall_clock(files, capsys):
    ch = new_chain(["a", "b"], [[0.5, 0.5], [0.5, 0.5]])
    _, out, _ = run(["gap", files("c.json", chain_to_json(ch)), "--timing"], capsys)
    assert json.loads(out)["wall_clock_seconds"] >= 0


def test_verify_corrupted_tilde_fails(files, capsys, monkeypatch):
    real = cli.decompose

    def corrupted(chain, partition):
        b = real(chain, partition)
        bump = np.zeros_like(b.A_tilde)
        bump[0, 1] = bump[1, 0] = 1e-3
        return dataclasses.replace(b, A_tilde=b.A_tilde + bump)

    monkeypatch.setattr(cli, "decompose", corrupted)
    ch = random_reversible(8, 0.8, seed=3)
    part = Partition.from_labels([0, 0, 1, 1, 2, 2, 3, 3])
    code, out, _ = run(["verify", files("c.json", chain_to_json(ch)), files("p.json", partition_to_json(part))], capsys)
    assert code == 1
    rec = records(out)
    assert not rec["matrix_identity_residual"]["pass"]
    assert json.loads(out)["passed"] is False


def test_csv_format(files, capsys):
    ch = new_chain(["a", "b"], [[0.5, 0.5], [0.5, 0.5]])
    code, out, _ = run(["gap", files("c.json", chain_to_json(ch)), "--format", "csv"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert rows[0].keys() >= {"name", "pass", "value", "slack"}
    assert any(r["name"] == "gap" for r in rows)


def test_out_file(files, capsys, tmp_path):
    ch = new_chain(["a", "b"], [[0.5, 0.5], [0.5, 0.5]])
    target = tmp_path / "report.json"
    code, out, _ = run(["gap", files("c.json", chain_to_json(ch)), "--out", target], capsys)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["command"] == "gap"


def test_product_command(files, capsys):
    a = files("a.json", chain_to_json(unbiased_adjacent_chain(2)))
    b = files("b.json", chain_to_json(random_reversible(3, 1.0, seed=4)))
    code, out, _ = run(["product", a, b, "--probs", 0.4, 0.6], capsys)
    assert code == 0
    assert records(out)["epsilon_first_coordinate"]["pass"]


def test_perm_certificate(files, capsys):
    k = files("k.json", json.dumps({"class_sizes": [2, 2, 2], "p_constant": 2 / 3}))
    code, out, _ = run(["perm", k, "--certificate"], capsys)
    assert code == 0
    cert = records(out)["iterated_certificate"]
    assert cert["value"]["value"] <= cert["value"]["exact_gap"] + 1e-9


def test_perm_level_uniform(files, capsys):
    k = files("k.json", json.dumps({"class_sizes": [3, 3], "p_constant": 0.5}))
    code, out, _ = run(["perm", k, "--level", 1], capsys)
    assert code == 0
    assert records(out)["level1.epsilon_max"]["value"] <= 1e-10


def test_perm_level_with_override(files, capsys):
    k = files("k.json", json.dumps({"class_sizes": [2, 2, 2], "p_constant": 2 / 3}))
    code, out, _ = run(["perm", k, "--level", 1, "--nstar", 1], capsys)
    assert code == 0
    rec = records(out)
    assert rec["level1[______].exclusion_match"]["pass"]
    assert rec["level1[______].good_pairs_residual"]["pass"]


def test_perm_overflow(files, capsys):
    k = files("k.json", json.dumps({"class_sizes": [5, 5, 5], "p_constant": 2 / 3}))
    code, out, err = run(["perm", k, "--certificate"], capsys)
    assert code == 2 and out == ""
    assert "756756" in err and "10080" in err


def test_perm_cap_from_environment(files, capsys, monkeypatch):
    monkeypatch.setenv("SPECGAP_CAP", "50")
    k = files("k.json", json.dumps({"class_sizes": [2, 2, 2], "p_constant": 2 / 3}))
    code, _, err = run(["perm", k], capsys)
    assert code == 2 and "SizeOverflow" in err


def test_partition_bound(capsys):
    code, out, _ = run(["partition-bound", "--q", 0.5, "--n", 8], capsys)
    assert code == 0
    rec = records(out)
    assert rec["n_star"]["value"]["value"] == pytest.approx(71.4845, abs=1e-4)
    assert rec["tail_certified"]["pass"]
    code, _, _ = run(["partition-bound", "--q", 0.5, "--n", 8, "--nstar", 1], capsys)
    assert code == 1


def test_mixing_command_curve(files, capsys, tmp_path):
    ch = new_chain(["a", "b"], [[0.75, 0.25], [0.25, 0.75]])
    curve = tmp_path / "curve.csv"
    code, out, _ = run(["mixing", files("c.json", chain_to_json(ch)), "--eps", 0.125, 0.25, "--curve", curve], capsys)
    assert code == 0
    assert records(out)["eps=0.125.tau"]["value"]["tau"] == 2
    assert curve.read_text().splitlines()[0] == "t,tv"


def test_compare_command(files, capsys):
    k = files("k.json", json.dumps({"class_sizes": [1, 1, 1], "p_constant": 2 / 3}))
    code, out, _ = run(["compare", k], capsys)
    assert code == 0
    assert records(out)["comparison_sound"]["pass"]
