import csv
import hashlib
import json
import math
from pathlib import Path

import pytest

from corrsounder.cli import main as cli_main, shipped_scenario_path
from corrsounder.errors import AnalysisError, ConfigError
from corrsounder.scenario_io import (
    CampaignSpec,
    emit_plot_data,
    load_scenario,
    run_campaign,
    save_scenario,
)

MINI_SCENARIO = """
name: mini
carrier_hz: 73.5e+9
tx:
  position_m: [0.0, 0.0, 5.0]
  power_dbm: 14.6
  pointing_deg: {az: 0.0, el: 0.0}
rx:
  default_height_m: 5.0
  locations:
    - {id: A, position_m: [20.0, 0.0], label: los, group: near}
    - {id: B, position_m: [25.0, 0.0], label: los, group: near}
    - {id: C, position_m: [45.0, 0.0], label: los, group: far}
    - {id: D, position_m: [50.0, 0.0], label: far-ish, group: far}
environment: {}
"""


@pytest.fixture()
def mini_path(tmp_path):
    path = tmp_path / "mini.yaml"
    path.write_text(MINI_SCENARIO.replace("label: far-ish", "label: los"))
    return path


class TestLoadScenario:
    def test_shipped_route(self):
        sc = load_scenario(shipped_scenario_path("corner_route"))
        assert len(sc.rx_locations) == 16
        labels = [rx.label for rx in sc.rx_locations]
        assert labels.count("los") == 5
        assert labels.count("nlos") == 11
        assert sc.carrier_hz == 73.5e9
        assert sc.tx_position_m[2] == 4.0
        assert sc.rx_locations[0].position_m[2] == 1.5

    def test_shipped_clusters(self):
        sc = load_scenario(shipped_scenario_path("corner_clusters"))
        groups = {}
        for rx in sc.rx_locations:
            groups.setdefault(rx.group, []).append(rx)
        assert set(groups) == {"los-cluster", "nlos-cluster"}
        for members in groups.values():
            assert len(members) == 5
            for a, b in zip(members, members[1:]):
                assert math.dist(a.position_m, b.position_m) == pytest.approx(5.0, abs=1e-9)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        with pytest.raises(ConfigError, match="empty"):
            load_scenario(path)

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text(MINI_SCENARIO.replace("carrier_hz", "carrier_ghz"))
        with pytest.raises(ConfigError, match="unknown keys.*carrier_ghz"):
            load_scenario(path)

    def test_unknown_nested_key_path_reported(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text(MINI_SCENARIO.replace("power_dbm", "power_watts"))
        with pytest.raises(ConfigError, match="tx: unknown keys"):
            load_scenario(path)

    def test_bad_label_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text(MINI_SCENARIO)
        with pytest.raises(ConfigError, match="label"):
            load_scenario(path)

    def test_defaults_applied(self, mini_path):
        sc = load_scenario(mini_path)
        assert sc.rx_pattern.boresight_gain_dbi == 20.0
        assert sc.tx_pattern.hpbw_az_deg == 7.0
        assert sc.noise_figure_db == 5.0

    def test_round_trip(self, tmp_path):
        sc = load_scenario(shipped_scenario_path("corner_clusters"))
        out = tmp_path / "copy.yaml"
        save_scenario(sc, out)
        assert load_scenario(out) == sc


@pytest.fixture(scope="module")
def mini_campaign(tmp_path_factory):
    base = tmp_path_factory.mktemp("campaign")
    scenario = base / "mini.yaml"
    scenario.write_text(MINI_SCENARIO.replace("label: far-ish", "label: los"))
    spec = CampaignSpec(
        scenario_path=str(scenario), kind="route", out_dir=str(base / "out"),
        step_deg=90.0, sweeps=2, seed=5,
    )
    return spec, run_campaign(spec)


class TestRunCampaign:
    def test_route_report_structure(self, mini_campaign):
        _, bundle = mini_campaign
        route_csv = bundle.out_dir / "route.csv"
        with open(route_csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [row["los_flag"] for row in rows] == ["los"] * 4
        positions = [float(row["position_m"]) for row in rows]
        assert positions == sorted(positions)
        distances = [float(row["distance_m"]) for row in rows]
        assert distances == pytest.approx([20.0, 25.0, 45.0, 50.0])

    def test_fit_and_fading_present(self, mini_campaign):
        _, bundle = mini_campaign
        assert "los" in bundle.fits
        assert bundle.fits["los"].point_count == 4
        assert bundle.fading_db_per_s == pytest.approx(bundle.fading_db_per_m * 35.0)
        assert (bundle.out_dir / "fits.txt").exists()

    def test_angular_files_per_location(self, mini_campaign):
        _, bundle = mini_campaign
        names = sorted(p.name for p in (bundle.out_dir / "angular").iterdir())
        assert names == ["A.csv", "B.csv", "C.csv", "D.csv"]
        with open(bundle.out_dir / "angular" / "A.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["azimuth_deg", "power_dBm"]
        assert len(rows) == 1 + 4  # header + 360/90 angles

    def test_manifest_reflects_inputs(self, mini_campaign):
        spec, bundle = mini_campaign
        manifest = json.loads((bundle.out_dir / "manifest.json").read_text())
        assert manifest["seed"] == 5
        assert manifest["kind"] == "route"
        scenario_bytes = Path(spec.scenario_path).read_bytes()
        assert manifest["scenario_sha256"] == hashlib.sha256(scenario_bytes).hexdigest()

    def test_manifest_hash_changes_only_with_config(self, mini_campaign, tmp_path):
        spec, bundle = mini_campaign
        base_hash = bundle.manifest["config_hash"]
        from dataclasses import replace

        same = run_campaign(replace(spec, out_dir=str(tmp_path / "again")))
        assert same.manifest["config_hash"] == base_hash
        reseeded = run_campaign(replace(spec, seed=6, out_dir=str(tmp_path / "seed")))
        assert reseeded.manifest["config_hash"] != base_hash

    def test_manifest_hash_tracks_scenario_content(self, mini_campaign, tmp_path):
        spec, bundle = mini_campaign
        from dataclasses import replace

        edited = tmp_path / "edited.yaml"
        edited.write_text(
            Path(spec.scenario_path).read_text().replace("power_dbm: 14.6", "power_dbm: 10.0")
        )
        other = run_campaign(
            replace(spec, scenario_path=str(edited), out_dir=str(tmp_path / "ed"))
        )
        assert other.manifest["config_hash"] != bundle.manifest["config_hash"]

    def test_worker_pool_matches_serial_results(self, mini_campaign, tmp_path):
        spec, bundle = mini_campaign
        from dataclasses import replace

        parallel = run_campaign(
            replace(spec, workers=3, out_dir=str(tmp_path / "par"))
        )
        assert [loc.omni_dbm for loc in parallel.locations] == [
            loc.omni_dbm for loc in bundle.locations
        ]
        serial_doc = (bundle.out_dir / "bundle.json").read_text()
        parallel_doc = (parallel.out_dir / "bundle.json").read_text()
        assert serial_doc == parallel_doc

    def test_single_kind_requires_rx_index(self, mini_campaign):
        spec, _ = mini_campaign
        from dataclasses import replace

        with pytest.raises(ConfigError, match="rx_index"):
            replace(spec, kind="single", rx_index=None)

    def test_cluster_kind(self, tmp_path, mini_campaign):
        spec, _ = mini_campaign
        from dataclasses import replace

        bundle = run_campaign(
            replace(spec, kind="cluster", out_dir=str(tmp_path / "cl"))
        )
        assert set(bundle.power_std_db) == {"near", "far"}
        with open(bundle.out_dir / "cluster.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {row["group"]: int(row["count"]) for row in rows} == {"near": 2, "far": 2}


class TestEmitPlotData:
    def test_polar_rows(self, mini_campaign):
        _, bundle = mini_campaign
        written = emit_plot_data(bundle, "polar")
        assert len(written) == 4
        with open(written[0], newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 4  # all grid angles, sentinel rows included

    def test_pathloss_contains_fit_lines(self, mini_campaign):
        _, bundle = mini_campaign
        (path,) = emit_plot_data(bundle, "pathloss")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        fit_rows = [row for row in rows if row["series"] == "fit-los"]
        point_rows = [row for row in rows if row["series"] == "point-los"]
        assert len(fit_rows) == 50
        assert len(point_rows) == 4
        logd = [float(row["log10_distance"]) for row in fit_rows]
        assert logd == sorted(logd)

    def test_route_ordered_by_position(self, mini_campaign):
        _, bundle = mini_campaign
        (path,) = emit_plot_data(bundle, "route")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        positions = [float(row["position_m"]) for row in rows]
        assert positions == sorted(positions)

    def test_missing_bundle_rejected(self, tmp_path):
        with pytest.raises(AnalysisError, match="bundle.json"):
            emit_plot_data(tmp_path, "route")

    def test_unknown_kind_rejected(self, mini_campaign):
        _, bundle = mini_campaign
        with pytest.raises(ConfigError):
            emit_plot_data(bundle, "histogram")


class TestCli:
    def test_pn_summary(self, capsys):
        assert cli_main(["pn", "--order", "7"]) == 0
        out = capsys.readouterr().out
        assert "length 127" in out
        assert "64 x +1 / 63 x -1" in out

    def test_budget_table1(self, capsys):
        assert cli_main(["budget", "--table1"]) == 0
        out = capsys.readouterr().out
        assert "EIRP: 41.60 dBm" in out
        assert "max measurable path loss: 185" in out

    def test_info(self, capsys):
        assert cli_main(["info", "--preset", "full"]) == 0
        out = capsys.readouterr().out
        assert "slide factor: 8000" in out
        assert "32.752 ms" in out

    def test_fit_csv(self, tmp_path, capsys):
        from corrsounder.channel import fspl

        path = tmp_path / "points.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["distance_m", "path_loss_db"])
            for d in (10.0, 30.0, 90.0):
                writer.writerow([d, fspl(1.0, 73.5e9) + 10 * 2.5 * math.log10(d)])
        assert cli_main(["fit", str(path)]) == 0
        assert "ple = 2.5000" in capsys.readouterr().out

    def test_config_error_exit_code(self, tmp_path):
        missing = tmp_path / "nope.yaml"
        assert cli_main(["campaign", "--scenario", str(missing), "--kind", "route", "--out", str(tmp_path / "o")]) == 2

    def test_emit_error_exit_code(self, tmp_path):
        assert cli_main(["emit", "--bundle", str(tmp_path), "--kind", "route"]) == 4

    def test_simulate_smoke(self, tmp_path, capsys):
        scenario = tmp_path / "mini.yaml"
        scenario.write_text(MINI_SCENARIO.replace("label: far-ish", "label: los"))
        out = tmp_path / "sim"
        assert cli_main([
            "simulate", "--scenario", str(scenario), "--rx-index", "0",
            "--out", str(out), "--dump-waveform",
        ]) == 0
        assert (out / "cir.csv").exists()
        assert (out / "pdp.csv").exists()
        assert (out / "received.bin").exists()
        text = capsys.readouterr().out
        assert "direct" in text
        # single dominant path: calibrated total tracks the peak
        line = next(l for l in text.splitlines() if "peak" in l)
        peak = float(line.split("peak ")[1].split(" dBm")[0])
        total = float(line.split("total ")[1].split(" dBm")[0])
        assert total == pytest.approx(peak, abs=0.7)

    def test_sweep_smoke(self, tmp_path, capsys):
        scenario = tmp_path / "mini.yaml"
        scenario.write_text(MINI_SCENARIO.replace("label: far-ish", "label: los"))
        assert cli_main([
            "sweep", "--scenario", str(scenario), "--rx-index", "1",
            "--step-deg", "90", "--sweeps", "1",
        ]) == 0
        assert "omni" in capsys.readouterr().out
