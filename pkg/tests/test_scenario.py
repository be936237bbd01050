import pytest

from iodsim.cli import main
from iodsim.ledger import load_and_verify
from iodsim.scenario import (
    ParseError,
    SchemaViolation,
    builtin_scenario,
    builtin_scenario_names,
    load_scenario,
    save_scenario,
)


class TestLoadScenario:
    def test_minimal_file_gets_defaults(self, tmp_path):
        path = tmp_path / "mini.toml"
        path.write_text('[[clusters]]\nname = "c0"\n')
        scenario = load_scenario(path)
        assert scenario.name == "mini"
        assert scenario.master_seed == 42
        assert scenario.clusters[0].smalls == 4
        assert scenario.policy.min_accuracy == 0.9
        assert scenario.ledger.orderers == 3

    def test_unknown_key_named_in_error(self, tmp_path):
        path = tmp_path / "typo.toml"
        path.write_text('[fleet]\nspped = 10.0\n')
        with pytest.raises(SchemaViolation, match="spped"):
            load_scenario(path)

    def test_unknown_top_level_key(self, tmp_path):
        path = tmp_path / "typo.toml"
        path.write_text('mystery = 1\n')
        with pytest.raises(SchemaViolation, match="mystery"):
            load_scenario(path)

    def test_bad_toml_is_parse_error(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("this is not toml ===")
        with pytest.raises(ParseError):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(tmp_path / "nope.toml")

    def test_sub_area_outside_area_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(
            '[area]\nwidth = 100.0\nheight = 100.0\n'
            '[[clusters]]\nname = "c0"\nsub_area = [0.0, 0.0, 200.0, 100.0]\n')
        with pytest.raises(SchemaViolation, match="sub_area"):
            load_scenario(path)

    def test_bad_rule_vocabulary_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('[policy]\nrules = [["on_rainy_day", "store"]]\n'
                        '[[clusters]]\nname = "c0"\n')
        with pytest.raises(Exception):
            load_scenario(path)


class TestBundledScenarios:
    def test_names_present(self):
        names = builtin_scenario_names()
        assert "paper-baseline" in names
        assert "paper-baseline-outage" in names
        assert "two-cluster-relay" in names

    def test_paper_baseline_shape(self):
        scenario = builtin_scenario("paper-baseline")
        assert len(scenario.clusters) == 1
        assert scenario.clusters[0].smalls == 4
        assert scenario.ledger.orderers == 3
        assert scenario.ledger.peers == 3
        assert scenario.ledger.batch_timeout_ms == 2000
        assert scenario.ledger.batch_max_messages == 10
        assert scenario.ledger.batch_max_bytes == 99_000_000

    def test_unknown_bundled_name(self):
        with pytest.raises(ParseError):
            builtin_scenario("not-a-scenario")


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        original = builtin_scenario("two-cluster-relay")
        path = tmp_path / "saved.toml"
        save_scenario(original, path)
        reloaded = load_scenario(path)
        assert reloaded == original

    def test_round_trip_with_overrides(self, tmp_path):
        from iodsim.scenario import ProfilesSpec, FaultSpec
        scenario = builtin_scenario("paper-baseline")
        scenario.profiles = ProfilesSpec(small_hover_w=250.0,
                                         accuracies={"YOLOv4": 0.95,
                                                     "YOLOv3-tiny": 0.7})
        scenario.faults = [FaultSpec(10.0, "c0-leader", "boat", False)]
        scenario.boat.track = [[0.0, 300.0, -150.0], [600.0, 400.0, -150.0]]
        path = tmp_path / "saved.toml"
        save_scenario(scenario, path)
        assert load_scenario(path) == scenario


class TestCli:
    def test_simulate_and_verify_and_report(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["simulate", "--scenario", "paper-baseline", "--until", "60",
                     "--out", str(out), "--format", "csv"])
        assert code == 0
        assert (out / "report.json").is_file()
        assert (out / "trace.csv").is_file()
        assert (out / "ledger.bin").is_file()
        assert load_and_verify(out / "ledger.bin", out / "ledger.index.json").ok

        code = main(["verify-chain", "--ledger", str(out / "ledger.bin")])
        assert code == 0

        code = main(["report", "--in", str(out), "--tables", "offload,link,ledger"])
        assert code == 0
        printed = capsys.readouterr().out
        assert "3.7 ms" in printed and "5.6 ms" in printed
        assert "975" in printed

    def test_verify_chain_detects_tamper(self, tmp_path, capsys):
        out = tmp_path / "run"
        main(["simulate", "--scenario", "paper-baseline", "--until", "90",
              "--out", str(out)])
        data = bytearray((out / "ledger.bin").read_bytes())
        data[len(data) // 2] ^= 0x10
        (out / "ledger.bin").write_bytes(bytes(data))
        code = main(["verify-chain", "--ledger", str(out / "ledger.bin")])
        assert code == 2

    def test_sweep_runs_each_seed(self, capsys):
        code = main(["sweep", "--scenario", "paper-baseline", "--seeds", "1..3",
                     "--until", "30"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 4  # header + 3 seeds

    def test_scenario_file_path_accepted(self, tmp_path):
        path = tmp_path / "tiny.toml"
        path.write_text(
            'duration_s = 20.0\ngrace_s = 60.0\n'
            '[[clusters]]\nname = "c0"\nsmalls = 1\n'
            '[victims]\ncount = 1\n')
        code = main(["simulate", "--scenario", str(path)])
        assert code == 0

    def test_error_exit_code(self, capsys):
        code = main(["simulate", "--scenario", "does-not-exist"])
        assert code == 1
