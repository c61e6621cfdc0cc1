from __future__ import annotations

import json
from pathlib import Path

import pytest

from crowdsim import cli
from crowdsim.errors import ParseError, ValidationError
from crowdsim.scenario import dumps_canonical, load_scenario, scenario_from_dict

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
SQUARE = SCENARIO_DIR / "square_obstacle.json"
HALFPLANE = SCENARIO_DIR / "halfplane_walker.json"


def minimal_doc() -> dict:
    return {
        "geometry": {
            "outer": [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            "exits": [[3, 0.3, 0.7, 0.05]],
            "sphere_radius": 0.05,
        },
        "model": {"crowd": {"passive": [[0.5, 0.5]]}},
    }


class TestScenarioLoading:
    def test_sample_scenarios_load(self):
        scn = load_scenario(SQUARE)
        assert len(scn.initial.active) == 5
        assert len(scn.initial.passive) == 5
        assert scn.scheme.absorb_at_exit is True
        assert scn.scheme.n == 8
        walker = load_scenario(HALFPLANE)
        assert walker.initial.n_active == 0
        assert walker.scheme.absorb_at_exit is False
        assert walker.scheme.record_stride == 1024

    def test_defaults_materialized(self, tmp_path):
        scn = scenario_from_dict(minimal_doc(), base_dir=tmp_path)
        diam = scn.domain.diameter
        assert scn.params.discomfort_radius == pytest.approx(0.2 * diam)
        assert scn.params.p_max == pytest.approx(1.0)  # one pedestrian, unit area
        assert scn.nav_spacing == pytest.approx(diam / 64)
        assert scn.nav_varsigma == pytest.approx(0.02 * diam)
        assert scn.scheme.n == 8 and scn.scheme.T == 1.0 and scn.scheme.seed == 0
        assert scn.scheme.absorb_at_exit is True  # exits present
        norm = scn.normalized
        assert norm["model"]["navigation"]["varsigma"] == pytest.approx(0.02 * diam)
        assert norm["scheme"]["ensemble_size"] == 1

    def test_round_trip_identity(self, tmp_path):
        scn = load_scenario(SQUARE)
        out = tmp_path / "norm"
        scn.write_normalized(out)
        again = load_scenario(out / "scenario.normalized.json")
        assert again.normalized == scn.normalized
        assert dumps_canonical(again.normalized) == dumps_canonical(scn.normalized)

    def test_overrides_echoed_in_normalized(self, tmp_path):
        scn = load_scenario(SQUARE, seed=99, level=5, ensemble=3)
        assert scn.scheme.seed == 99
        assert scn.scheme.n == 5
        assert scn.scheme.ensemble_size == 3
        assert scn.normalized["scheme"]["seed"] == 99
        assert scn.normalized["scheme"]["n"] == 5

    def test_negative_parameter_names_field(self, tmp_path):
        doc = minimal_doc()
        doc["model"]["params"] = {"ell_attract": -0.5}
        with pytest.raises(ValidationError, match="ell_attract"):
            scenario_from_dict(doc, base_dir=tmp_path)

    def test_unknown_key_rejected(self, tmp_path):
        doc = minimal_doc()
        doc["geometry"]["wibble"] = 1
        with pytest.raises(ValidationError, match="wibble"):
            scenario_from_dict(doc, base_dir=tmp_path)

    def test_missing_crowd_rejected(self, tmp_path):
        doc = minimal_doc()
        doc["model"]["crowd"] = {}
        with pytest.raises(ValidationError, match="crowd"):
            scenario_from_dict(doc, base_dir=tmp_path)

    def test_pedestrian_outside_room_named(self, tmp_path):
        doc = minimal_doc()
        doc["model"]["crowd"]["passive"] = [[0.5, 0.5], [1.5, 0.5]]
        with pytest.raises(ValidationError, match=r"passive\[1\]"):
            scenario_from_dict(doc, base_dir=tmp_path)

    def test_active_crowd_requires_exit(self, tmp_path):
        doc = minimal_doc()
        del doc["geometry"]["exits"]
        doc["model"]["crowd"] = {"active": [[0.5, 0.5]]}
        with pytest.raises(ValidationError, match="exit"):
            scenario_from_dict(doc, base_dir=tmp_path)

    def test_grid_spacing_vs_obstacle_feature(self, tmp_path):
        doc = minimal_doc()
        doc["geometry"]["obstacles"] = [
            [[0.45, 0.45], [0.45, 0.55], [0.55, 0.55], [0.55, 0.45]]
        ]
        doc["model"]["crowd"] = {"passive": [[0.2, 0.2]]}
        doc["model"]["navigation"] = {"h": 0.05}  # edge 0.1, needs h < 0.025
        with pytest.raises(ValidationError, match="navigation.h"):
            scenario_from_dict(doc, base_dir=tmp_path)

    def test_discomfort_radius_below_diameter(self, tmp_path):
        doc = minimal_doc()
        doc["model"]["params"] = {"discomfort_radius": 5.0}
        with pytest.raises(ValidationError, match="discomfort_radius"):
            scenario_from_dict(doc, base_dir=tmp_path)

    def test_parse_error_carries_position(self, tmp_path):
        bad = tmp_path / "broken.json"
        bad.write_text('{\n  "geometry": ,\n}')
        with pytest.raises(ParseError, match="line 2"):
            load_scenario(bad)

    def test_top_level_must_be_object(self, tmp_path):
        bad = tmp_path / "list.json"
        bad.write_text("[1, 2, 3]")
        with pytest.raises(ParseError, match="object"):
            load_scenario(bad)

    def test_smoke_grid_rows_validated(self, tmp_path):
        doc = minimal_doc()
        doc["model"]["smoke"] = {
            "kind": "user_grid",
            "origin": [0.0, 0.0],
            "spacing": 0.5,
            "values": [[0.0, 1.0], [1.0]],
        }
        with pytest.raises(ValidationError, match="values"):
            scenario_from_dict(doc, base_dir=tmp_path)


class TestCli:
    def run_ok(self, args: list[str]) -> None:
        assert cli.main(args) == 0

    def test_simulate_artifacts(self, tmp_path):
        out = tmp_path / "run"
        self.run_ok([
            "simulate", "--scenario", str(SQUARE),
            "--ensemble", "2", "--level", "5", "--out", str(out),
        ])
        assert (out / "scenario.normalized.json").is_file()
        assert (out / "metadata.json").is_file()
        lines = (out / "trajectories.csv").read_text().splitlines()
        assert lines[0] == "member,step,time,pedestrian,kind,x,y,tv,evacuated"
        # 2 members x 33 records x 10 pedestrians
        assert len(lines) == 1 + 2 * 33 * 10
        meta = json.loads((out / "metadata.json").read_text())
        for key in ("seed", "level", "kappa", "version", "ensemble_size",
                    "scale_groups", "scale_kappa"):
            assert key in meta
        assert len(meta["scale_groups"]) == 4
        assert meta["level"] == 5
        assert meta["failed_members"] == []
        assert "evacuation" in meta  # absorb_at_exit on

    def test_simulate_worker_invariance(self, tmp_path):
        base = ["simulate", "--scenario", str(SQUARE), "--ensemble", "3", "--level", "4"]
        self.run_ok(base + ["--out", str(tmp_path / "a"), "--workers", "1"])
        self.run_ok(base + ["--out", str(tmp_path / "b"), "--workers", "3"])
        for name in ("trajectories.csv", "metadata.json", "scenario.normalized.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_rerun_from_normalized_copy(self, tmp_path):
        base = ["simulate", "--ensemble", "2", "--level", "4"]
        self.run_ok(base + ["--scenario", str(SQUARE), "--out", str(tmp_path / "a")])
        self.run_ok([
            "simulate",
            "--scenario", str(tmp_path / "a" / "scenario.normalized.json"),
            "--out", str(tmp_path / "b"),
        ])
        for name in ("trajectories.csv", "metadata.json", "scenario.normalized.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_navfield_command(self, tmp_path):
        out = tmp_path / "nf"
        self.run_ok(["navfield", "--scenario", str(SQUARE), "--out", str(out)])
        lines = (out / "navfield.csv").read_text().splitlines()
        assert lines[0] == "i,j,x,y,node,phi,grad_x,grad_y"
        assert len(lines) == 1 + 33 * 33  # h = 1/32 on the unit square

    def test_nondim_command(self, capsys):
        self.run_ok(["nondim", "--scenario", str(SQUARE)])
        text = capsys.readouterr().out
        for label in ("crowd:", "local:", "pair:", "gate:", "kappa:"):
            assert label in text

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        doc = minimal_doc()
        doc["model"]["params"] = {"eta": -2.0}
        bad.write_text(json.dumps(doc))
        assert cli.main(["simulate", "--scenario", str(bad)]) == 1
        assert "eta" in capsys.readouterr().err

    def test_parse_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        assert cli.main(["simulate", "--scenario", str(bad)]) == 1
        err = capsys.readouterr().err
        assert "line 1" in err

    def test_verify_threshold_failure_is_exit_2(self, capsys):
        # 50 samples cannot match the half-normal law to 0.02 in KS distance
        rc = cli.main(["verify-reflect", "--ensemble", "50", "--level", "5"])
        assert rc == 2
        assert "FAIL" in capsys.readouterr().out

    def test_missing_scenario_flag_rejected(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["simulate"])
