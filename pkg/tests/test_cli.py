import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from cfgle import presets
from cfgle.cli import ConfigError, main, parse_config, problem_spec, serialize_config
from cfgle.harness import load_reference

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def dump(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


class TestParse:
    def test_example1_preset(self):
        cfg = parse_config(b'{"command": "solve", "problem": {"case": "example1", "alpha": 1.5},'
                           b' "mesh": {"M": 64, "N": 64}}')
        spec = problem_spec(cfg.problem, 1.5)
        assert spec.u_coeffs == presets.EXAMPLE1_U and spec.v_coeffs == presets.EXAMPLE1_V
        assert (spec.u_coeffs.upsilon, spec.u_coeffs.eta, spec.u_coeffs.kappa) == (1.0, 1.0, -1.0)
        assert (spec.v_coeffs.eta, spec.v_coeffs.beta, spec.v_coeffs.gamma) == (-1.0, -1.0, -1.0)
        assert spec.source_terms is not None and spec.domain == (0.0, 1.0)

    def test_negative_upsilon(self):
        doc = {"command": "solve", "problem": {
            "case": "custom", "alpha": 1.5, "u": {"upsilon": -0.1}, "v": {"upsilon": 1.0},
            "domain": [0, 1], "T": 1, "initial": {"u": {"type": "zero"}, "v": {"type": "zero"}}}}
        with pytest.raises(ConfigError, match="υ must be positive"):
            parse_config(json.dumps(doc))

    def test_example2_kappa(self):
        doc = {"command": "solve", "problem": {"case": "example2", "alpha": 1.5,
                                               "u": {"upsilon": 0.3}}}
        spec = problem_spec(parse_config(json.dumps(doc)).problem, 1.5)
        ups = 0.3
        kappa = -ups * (3 * math.sqrt(1 + 4 * ups**2) - 1) / (2 * (2 + 9 * ups**2))
        assert spec.u_coeffs.kappa == pytest.approx(kappa, rel=1e-15)
        assert spec.u_coeffs.delta == pytest.approx(kappa, rel=1e-15)
        assert kappa == pytest.approx(-0.13338, abs=1e-5)  # 0.3 * 2.49862 / 5.62
        assert (spec.u_coeffs.zeta, spec.u_coeffs.beta, spec.u_coeffs.gamma) == (-1.0, -1.0, 0.0)
        assert (spec.u_coeffs.eta, spec.v_coeffs.eta) == (0.5, 0.6)

    def test_example2_rejects_derived_keys(self):
        doc = {"command": "solve", "problem": {"case": "example2", "alpha": 1.5,
                                               "u": {"upsilon": 0.3, "kappa": 1.0}}}
        with pytest.raises(ConfigError, match="kappa"):
            parse_config(json.dumps(doc))

    def test_unknown_keys_listed(self):
        with pytest.raises(ConfigError, match="bogus, zeta"):
            parse_config(b'{"command": "solve", "bogus": 1, "zeta": 2}')
        with pytest.raises(ConfigError, match="mesh: unknown keys Q"):
            parse_config(b'{"command": "solve", "problem": {"alpha": 1.5}, "mesh": {"Q": 3}}')

    @pytest.mark.parametrize("raw", [b"{", b"[]", b'{"problem": {}}', b'{"command": "dance"}'])
    def test_malformed(self, raw):
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_alpha_range(self):
        with pytest.raises(ConfigError, match="alpha"):
            parse_config(b'{"command": "solve", "problem": {"alpha": 2.5}}')

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.name)
    def test_round_trip(self, path):
        cfg = parse_config(path.read_bytes())
        again = parse_config(json.dumps(serialize_config(cfg)))
        assert serialize_config(again) == serialize_config(cfg)
        assert again == cfg


class TestMain:
    def test_missing_config(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_nonexistent_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.json")]) == 1

    def test_invalid_config(self, tmp_path, capsys):
        p = dump(tmp_path, {"command": "solve", "problem": {"alpha": 1.5}, "mesh": {"M": 1}})
        assert main(["--config", str(p)]) == 1
        assert "mesh" in capsys.readouterr().err

    def test_bad_flag(self):
        with pytest.raises(SystemExit) as err:
            main(["--solver", "magic"])
        assert err.value.code == 1

    def test_solver_failure(self, tmp_path, capsys):
        doc = {"command": "solve", "problem": {"case": "example2", "alpha": 1.5},
               "mesh": {"M": 3000, "N": 8}, "solver": {"mode": "krylov", "max_iter": 1, "tol": 1e-14}}
        p = dump(tmp_path, doc)
        assert main(["--config", str(p), "--out", str(tmp_path / "o")]) == 2
        assert "best residual" in capsys.readouterr().err

    def test_solve_outputs(self, tmp_path):
        doc = {"command": "solve", "problem": {"case": "example1", "alpha": 2.0},
               "mesh": {"M": 32, "N": 32}, "output": {"snapshot_levels": [0, 10]}}
        out = tmp_path / "o"
        assert main(["--config", str(dump(tmp_path, doc)), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["err_u_inf"] == pytest.approx(3.14e-6, rel=0.1)
        final = load_reference(out / "final.bin")
        assert final.meta["M"] == 32 and final.field.u.shape == (31,)
        assert (out / "snapshot_000010.bin").exists()
        hist = np.loadtxt(out / "history.csv", delimiter=",", skiprows=1)
        assert hist.shape == (33, 3)

    def test_solve_fourth_order_custom(self, tmp_path):
        doc = json.loads((CONFIGS / "custom_gaussian.json").read_text())
        doc["mesh"] = {"M": 80, "N": 20}
        out = tmp_path / "o"
        assert main(["--config", str(dump(tmp_path, doc)), "--out", str(out)]) == 0
        assert json.loads((out / "summary.json").read_text())["richardson"] is True

    def test_flag_overrides(self, tmp_path):
        doc = {"command": "solve", "problem": {"case": "example1", "alpha": 1.5},
               "mesh": {"M": 16, "N": 8}}
        out = tmp_path / "o"
        assert main(["--config", str(dump(tmp_path, doc)), "--out", str(out), "--solver", "krylov",
                     "--tol", "1e-11", "--workers", "2"]) == 0
        assert main(["--config", str(dump(tmp_path, doc)), "--tol", "-1"]) == 1

    def test_example1_order2_config(self, tmp_path):
        doc = json.loads((CONFIGS / "example1_order2.json").read_text())
        doc["study"]["resolutions"] = doc["study"]["resolutions"][:3]
        cfg = dump(tmp_path, doc)
        out = tmp_path / "o"
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        with open(out / "report.csv") as fh:
            rows = list(csv.DictReader(fh))
        by = {(float(r["alpha"]), round(1 / float(r["h"]))): r for r in rows}
        assert float(by[(2.0, 32)]["err_u_inf"]) == pytest.approx(3.14e-6, rel=0.1)
        assert float(by[(1.2, 128)]["err_v_inf"]) == pytest.approx(2.06e-6, rel=0.1)
        assert float(by[(2.0, 128)]["order_u"]) == pytest.approx(2.0, abs=0.05)
        first = (out / "report.csv").read_bytes()
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "report.csv").read_bytes() == first

    def test_reference_and_sweep(self, tmp_path):
        ref = {"command": "reference", "problem": {"case": "example2", "alpha": 1.5},
               "mesh": {"M": 120, "N": 8}}
        out = tmp_path / "o"
        assert main(["--config", str(dump(tmp_path, ref)), "--out", str(out)]) == 0
        snap = load_reference(out / "reference_alpha1.5_M120_N8_o2.bin")
        assert snap.meta["spec_hash"] == presets.example2(1.5).spec_hash()
        sweep = {"command": "sweep", "problem": {"alpha": 1.5},
                 "sweep": {"tau": 0.1, "h_list": [0.125, 0.0625]}}
        assert main(["--config", str(dump(tmp_path, sweep, "s.json")), "--out", str(out)]) == 0
        assert len((out / "sweep.csv").read_text().splitlines()) == 3
