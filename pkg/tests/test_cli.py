"""Command-line interface: config validation with full violation lists,
artifact layout of each subcommand, provenance hashes, and byte-level
determinism of repeated runs.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from nfpelab.cli import ConfigError, main, parse_config, shipped_configs
from nfpelab.grid_field import load_field

HEAT_SMALL = """\
spec_version: 1
seed: 7
grid: {d: 1, n: 64, L: 4.0}
profile:
  beta: {kind: linear}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
initial:
  kind: gaussian
  center: [0.0]
  width: 0.5
  mass: 1.0
time: {T: 0.05, dt: 0.005, save_every: 1}
"""

PME_RESOLVENT = """\
spec_version: 1
grid: {d: 1, n: 64, L: 4.0}
profile:
  beta: {kind: porous_medium, m: 2.0, a: 1.0}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
initial:
  kind: gaussian
  center: [0.0]
  width: 0.5
  mass: 1.0
resolvent: {lambda: 0.1}
"""

BROKEN_TWICE = """\
spec_version: 1
grid: {d: 1, n: -4, L: 4.0}
profile:
  beta: {kind: porous_medium, m: 0.5}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
"""


def write(tmp_path: Path, text: str, name: str = "config.yaml") -> Path:
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParseConfig:
    def test_minimal_config_materializes(self, tmp_path):
        rc = parse_config(write(tmp_path, HEAT_SMALL))
        assert rc.seed == 7
        assert rc.grid.n == 64 and rc.grid.L == 4.0
        assert rc.initial_kind == "gaussian"
        assert rc.profile.eps == 0.0
        assert rc.evolve_cfg.T == 0.05
        assert rc.sha256 == hashlib.sha256(HEAT_SMALL.encode()).hexdigest()

    def test_all_violations_reported_together(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config(write(tmp_path, BROKEN_TWICE))
        text = "\n".join(exc.value.violations)
        assert "n" in text and "m" in text
        assert len(exc.value.violations) >= 2

    def test_unknown_top_level_key(self, tmp_path):
        cfg = HEAT_SMALL + "extra_block: {a: 1}\n"
        with pytest.raises(ConfigError, match="extra_block"):
            parse_config(write(tmp_path, cfg))

    def test_spec_version_pinned(self, tmp_path):
        cfg = HEAT_SMALL.replace("spec_version: 1", "spec_version: 2")
        with pytest.raises(ConfigError, match="spec_version"):
            parse_config(write(tmp_path, cfg))

    def test_yaml_error_carries_location(self, tmp_path):
        bad = "spec_version: 1\ngrid: {d: 1, n: 64\n"
        with pytest.raises(ConfigError, match="line"):
            parse_config(write(tmp_path, bad))

    def test_measure_ladder_must_decrease(self, tmp_path):
        cfg = """\
spec_version: 1
grid: {d: 1, n: 64, L: 4.0}
profile:
  beta: {kind: porous_medium, m: 2.0}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
initial:
  kind: measure
  atoms: [[[0.0], 1.0]]
  eps_list: [0.0625, 0.125]
time: {T: 0.02, dt: 0.01}
"""
        with pytest.raises(ConfigError, match="decreasing"):
            parse_config(write(tmp_path, cfg))

    def test_barenblatt_needs_power_law(self, tmp_path):
        cfg = """\
spec_version: 1
grid: {d: 1, n: 64, L: 4.0}
profile:
  beta: {kind: linear}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
initial: {kind: barenblatt, t0: 0.1, mass: 1.0}
time: {T: 0.02, dt: 0.01}
"""
        # the linear profile is a power law (m = 1), so it passes; a profile
        # without a declared growth cannot seed the self-similar datum
        rc = parse_config(write(tmp_path, cfg))
        assert rc.initial_kind == "barenblatt"

    def test_shipped_configs_inventory(self):
        names = set(shipped_configs())
        assert names == {
            "heat_1d",
            "pme_barenblatt_1d",
            "pme_dirac_smoothing_1d",
            "pme_drift_1d",
            "particles_pme_1d",
            "particles_heat_1d",
            "resolvent_pme_1d",
        }

    def test_every_shipped_config_parses(self):
        for name, path in shipped_configs().items():
            rc = parse_config(path)
            assert rc.grid is not None, name


class TestResolventCommand:
    def test_roundtrip(self, tmp_path, capsys):
        cfg = write(tmp_path, PME_RESOLVENT)
        out = tmp_path / "run"
        assert main(["resolvent", "--config", str(cfg), "--out", str(out)]) == 0
        fld = load_field(str(out / "solution.nfb"))
        assert fld.grid.n == 64
        report = json.loads((out / "report.json").read_text())
        assert report["converged"] is True
        assert report["lambda"] == 0.1
        assert report["eps"] == 0.0
        assert report["mass_out"] == pytest.approx(report["mass_in"], rel=1e-12)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "resolvent"
        assert manifest["config_sha256"] == hashlib.sha256(
            PME_RESOLVENT.encode()
        ).hexdigest()

    def test_missing_block_is_config_error(self, tmp_path, capsys):
        cfg = write(tmp_path, HEAT_SMALL)  # no resolvent block
        code = main(["resolvent", "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert code == 2
        assert "lam" in capsys.readouterr().err


class TestEvolveAndRate:
    def test_artifacts_and_provenance(self, tmp_path):
        cfg = write(tmp_path, HEAT_SMALL)
        out = tmp_path / "run"
        assert main(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
        index = (out / "fields_index.csv").read_text().splitlines()
        assert index[0] == "index,t,path"
        assert len(index) == 12  # header + 11 saved fields
        diag = (out / "diagnostics.csv").read_text().splitlines()
        assert diag[0] == "t,mass,l1,l2,linf,newton_iters"
        summary = json.loads((out / "run_summary.json").read_text())
        assert summary["config_sha256"] == hashlib.sha256(HEAT_SMALL.encode()).hexdigest()
        assert summary["n"] == 64 and summary["dt"] == 0.005

        fit = main(["rate", "--traj", str(out), "--window", "0.01,0.05",
                    "--json", str(tmp_path / "fit.json")])
        assert fit == 0
        payload = json.loads((tmp_path / "fit.json").read_text())
        assert payload["source_config_sha256"] == summary["config_sha256"]
        assert payload["window"] == [0.01, 0.05]
        # a width-0.5 start has effective age t0 = 0.125, so the local
        # log-slope -t/(2(t0+t)) runs from -0.037 to -0.143 over the window
        assert -0.15 < payload["slope"] < -0.03
        assert payload["theory_rate"] == 0.5

    def test_same_config_reruns_identically(self, tmp_path):
        cfg = write(tmp_path, HEAT_SMALL)
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            assert main(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
            outs.append(out)
        names_a = sorted(p.name for p in outs[0].iterdir())
        names_b = sorted(p.name for p in outs[1].iterdir())
        assert names_a == names_b
        for name in names_a:
            if name == "manifest.json":
                continue  # carries wall time
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    def test_field_initial_required_without_measure_flag(self, tmp_path, capsys):
        cfg = """\
spec_version: 1
grid: {d: 1, n: 64, L: 4.0}
profile:
  beta: {kind: porous_medium, m: 2.0}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
initial:
  kind: measure
  atoms: [[[0.0], 1.0]]
time: {T: 0.02, dt: 0.01}
"""
        path = write(tmp_path, cfg)
        code = main(["evolve", "--config", str(path), "--out", str(tmp_path / "x")])
        assert code == 2
        assert "--measure" in capsys.readouterr().err

    def test_measure_mode_writes_stability_table(self, tmp_path):
        cfg = """\
spec_version: 1
grid: {d: 1, n: 128, L: 4.0}
profile:
  beta: {kind: porous_medium, m: 2.0}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
initial:
  kind: measure
  atoms: [[[0.0], 1.0]]
  eps_list: [0.25, 0.125]
time: {T: 0.02, dt: 0.01, save_every: 1}
"""
        path = write(tmp_path, cfg)
        out = tmp_path / "run"
        assert main(["evolve", "--config", str(path), "--out", str(out),
                     "--measure"]) == 0
        rows = (out / "stability.csv").read_text().splitlines()
        assert rows[0] == "eps_coarse,eps_fine,t,l1_distance"
        assert len(rows) > 1


class TestOracleCommand:
    def test_barenblatt_sample(self, tmp_path):
        out = tmp_path / "o"
        code = main(["oracle", "--kind", "barenblatt", "--grid", "1,512,8.0",
                     "--t", "0.5", "--out", str(out)])
        assert code == 0
        fld = load_field(str(out / "oracle.nfb"))
        assert fld.mass() == pytest.approx(1.0, abs=1e-3)

    def test_bad_grid_string(self, tmp_path, capsys):
        code = main(["oracle", "--kind", "heat", "--grid", "banana",
                     "--t", "0.5", "--out", str(tmp_path / "o")])
        assert code == 2
        assert "d,n,L" in capsys.readouterr().err


class TestParticlesCommand:
    def test_marginals_written(self, tmp_path):
        cfg = """\
spec_version: 1
seed: 20240811
grid: {d: 1, n: 64, L: 4.0}
profile:
  beta: {kind: linear}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
initial:
  kind: measure
  atoms: [[[0.0], 1.0]]
time: {T: 0.05, dt: 0.005}
particles: {n: 2000, dt: 0.005, T: 0.05, compare_times: [0.05]}
"""
        path = write(tmp_path, cfg)
        out = tmp_path / "run"
        assert main(["particles", "--config", str(path), "--out", str(out)]) == 0
        rows = (out / "marginals.csv").read_text().splitlines()
        assert rows[0] == "t,l1_hist_distance,w1_distance,n_particles"
        assert len(rows) == 2
        t, l1, w1, n = rows[1].split(",")
        assert float(t) == 0.05
        assert float(l1) > 0.0
        assert int(n) == 2000

    def test_seed_override_changes_draws(self, tmp_path):
        cfg = """\
spec_version: 1
seed: 1
grid: {d: 1, n: 64, L: 4.0}
profile:
  beta: {kind: linear}
  b: {kind: constant, value: 0.0}
  D: {kind: zero}
initial:
  kind: measure
  atoms: [[[0.0], 1.0]]
time: {T: 0.02, dt: 0.01}
particles: {n: 500, dt: 0.01, T: 0.02, compare_times: [0.02]}
"""
        path = write(tmp_path, cfg)
        base, over = tmp_path / "base", tmp_path / "over"
        assert main(["particles", "--config", str(path), "--out", str(base)]) == 0
        assert main(["particles", "--config", str(path), "--out", str(over),
                     "--seed", "99"]) == 0
        assert (base / "marginals.csv").read_bytes() != (over / "marginals.csv").read_bytes()


class TestVerifyCommand:
    def test_single_suite_json(self, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = main(["verify", "--suite", "appendix_algebra",
                     "--json", str(report_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out
        payload = json.loads(report_path.read_text())
        assert payload["suite"] == "appendix_algebra"
        assert payload["passed"] is True
        assert {c["name"] for c in payload["checks"]} >= {
            "gamma_spot_value", "threshold_spot_value", "iteration_sequence",
        }

    def test_unknown_suite_fails_cleanly(self, capsys):
        code = main(["verify", "--suite", "bogus"])
        assert code != 0
