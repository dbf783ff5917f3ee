import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vm_auctions import io as vio
from vm_auctions.cli import main

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE = ROOT / "instances" / "example.json"
SLOT = ROOT / "instances" / "slot.json"


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


class TestParse:
    def test_example_parses(self):
        inst = vio.parse_instance(EXAMPLE.read_text())
        assert inst.kind == "general"
        assert inst.outcomes == ("o1", "o2", "o3")
        assert len(inst.values) == 4

    def test_alpha_not_descending(self):
        text = '{"kind":"slot","alpha":[0.5,1.0],"beta":[1,1],"bids":[1,2]}'
        with pytest.raises(vio.InstanceError, match="alpha not strictly descending") as exc:
            vio.parse_instance(text)
        assert exc.value.pointer == "/alpha"

    def test_empty_outcomes(self):
        with pytest.raises(vio.InstanceError) as exc:
            vio.parse_instance('{"kind":"general","outcomes":[],"values":[[]]}')
        assert exc.value.pointer == "/outcomes"

    def test_row_length(self):
        text = '{"kind":"general","outcomes":["a","b"],"values":[[1,2],[3]]}'
        with pytest.raises(vio.InstanceError) as exc:
            vio.parse_instance(text)
        assert exc.value.pointer == "/values/1"

    def test_negative_value(self):
        with pytest.raises(vio.InstanceError) as exc:
            vio.parse_instance('{"kind":"general","outcomes":["a"],"values":[[-1]]}')
        assert exc.value.pointer == "/values/0/0"

    def test_nan_rejected(self):
        with pytest.raises(vio.InstanceError):
            vio.parse_instance('{"kind":"general","outcomes":["a"],"values":[[NaN]]}')

    def test_unknown_kind(self):
        with pytest.raises(vio.InstanceError):
            vio.parse_instance('{"kind":"mystery"}')

    def test_not_json(self):
        with pytest.raises(vio.InstanceError):
            vio.parse_instance("{")


reals = st.floats(0, 1e6, allow_nan=False, allow_infinity=False)


@given(st.integers(1, 4).flatmap(lambda k: st.tuples(
    st.just(k), st.lists(st.lists(reals, min_size=k, max_size=k), min_size=1, max_size=4))))
def test_general_round_trip(case):
    k, rows = case
    inst = vio.InstanceFile("general", tuple(f"o{j}" for j in range(k)), tuple(map(tuple, rows)), id="x")
    assert vio.parse_instance(vio.serialize(inst)) == inst


@given(st.integers(0, 2**32 - 1))
def test_slot_round_trip(seed):
    for inst in vio.generate("slot-lognormal", 3, seed):
        assert vio.parse_instance(vio.serialize(inst)) == inst


class TestGenerate:
    def test_deterministic(self):
        a = [vio.serialize(x) for x in vio.generate("slot-lognormal", 100, 42)]
        b = [vio.serialize(x) for x in vio.generate("slot-lognormal", 100, 42)]
        assert a == b

    def test_seed_matters(self):
        assert vio.generate("uniform-general", 5, 1) != vio.generate("uniform-general", 5, 2)

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            vio.generate("nope", 1, 0)

    def test_gemini_ranges(self):
        for inst in vio.generate("gemini-like", 200, 3):
            assert 0.5 < inst.alpha[0] <= 1.0
            ratios = np.asarray(inst.alpha[1:]) / np.asarray(inst.alpha[:-1])
            assert ((ratios >= 0.3) & (ratios <= 0.6)).all()
            assert 3 <= len(inst.bids) <= 12 and 1 <= len(inst.alpha) <= 4

    def test_ids(self):
        assert vio.generate("gemini-like", 2, 9)[1].id == "gemini-like-9-000001"

    def test_gamma_grid(self):
        g = vio.parse_gamma_grid("0:3:0.05")
        assert len(g) == 61 and g[0] == 0.0 and g[-1] == 3.0


class TestCLI:
    def test_run_example(self):
        code, out, err = run_cli("run", "--mechanism", "lexi", "--instance", str(EXAMPLE))
        assert code == 0
        assert out.strip() == '{"outcome":"o1","payments":[0,0,1,0]}'
        assert "run_config" in err

    def test_run_slot(self):
        code, out, _ = run_cli("run", "--mechanism", "gsp", "--instance", str(SLOT))
        assert json.loads(out)["per_click_price"] == [6, 4, 0]

    def test_verify_gsp(self, tmp_path):
        target = tmp_path / "r.csv"
        code, _, _ = run_cli(
            "verify", "--mechanism", "gsp", "--model", "simple-vm", "--instance", str(SLOT), "--out", str(target)
        )
        assert code == 0
        rows = list(csv.DictReader(target.open()))
        assert len(rows) == 3 and all(r["profitable"] == "0" for r in rows)

    def test_verify_reports_deviation(self, tmp_path):
        path = tmp_path / "adv.json"
        path.write_text('{"kind":"general","outcomes":["a","b"],"values":[[1.0,0.7],[0.0,0.7]]}')
        code, _, _ = run_cli(
            "verify", "--mechanism", "lp", "--alpha", "2", "--model", "quasilinear", "--instance", str(path)
        )
        assert code == 3

    def test_robustness(self, tmp_path):
        data, curve, per = tmp_path / "d.jsonl", tmp_path / "c.csv", tmp_path / "p.csv"
        assert run_cli("generate", "--preset", "gemini-like", "--count", "20", "--seed", "7", "--out", str(data))[0] == 0
        code, _, _ = run_cli(
            "robustness", "--dataset", str(data), "--gammas", "0:3:0.05", "--out", str(curve), "--per-auction", str(per)
        )
        assert code == 0
        rows = list(csv.DictReader(curve.open()))
        assert len(rows) == 61
        assert list(rows[0]) == ["gamma", "fraction", "excluded_count"]
        fracs = [float(r["fraction"]) for r in rows]
        assert fracs == sorted(fracs)
        ids = [r["id"] for r in csv.DictReader(per.open())]
        assert ids == sorted(ids)

    def test_generate_zero(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        assert run_cli("generate", "--preset", "slot-lognormal", "--count", "0", "--out", str(path))[0] == 0
        assert path.read_text() == ""

    def test_price_slot(self):
        code, out, _ = run_cli("price", "--instance", str(SLOT))
        assert json.loads(out)["per_click_price"] == pytest.approx([6, 4, 0], abs=1e-8)

    def test_price_rejects_other_outcome(self):
        code, _, err = run_cli("price", "--mechanism", "lexi", "--outcome", "o2", "--instance", str(EXAMPLE))
        assert code == 2

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"mechanism": "lp", "alpha_param": 1.0, "instance": str(EXAMPLE)}))
        code, out, err = run_cli("run", "--config", str(cfg), "--alpha", "inf")
        assert code == 0
        assert json.loads(out)["payments"] == [0, 0, 1, 0]
        assert json.loads(err.splitlines()[0])["run_config"]["alpha_param"] == "inf"

    def test_usage_error(self):
        assert run_cli("frobnicate")[0] == 1
        assert run_cli("run", "--instance", str(EXAMPLE))[0] == 1

    def test_input_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"kind":"slot","alpha":[0.5,1.0],"beta":[1,1],"bids":[1,2]}')
        code, _, err = run_cli("run", "--mechanism", "gsp", "--instance", str(bad))
        assert code == 2
        assert "alpha not strictly descending" in err

    def test_missing_file(self):
        assert run_cli("run", "--mechanism", "lexi", "--instance", "/no/such/file.json")[0] == 2

    def test_wrong_kind(self):
        assert run_cli("run", "--mechanism", "gsp", "--instance", str(EXAMPLE))[0] == 2

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("VM_AUCTIONS_THREADS", "3")
        _, _, err = run_cli("run", "--mechanism", "lexi", "--instance", str(EXAMPLE))
        assert json.loads(err.splitlines()[0])["run_config"]["threads"] == 3
