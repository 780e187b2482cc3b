"""Tests for the command-line interface, its configuration and the exporters."""

import json
import math
import os
import unittest
from types import SimpleNamespace
from unittest import mock

import numpy as np
import pytest

from cli.config import Config, load_config, parse_grid
from cli.main import command_name, config_from_args, main, parse_args
from expanderlab.export import (
    read_csv,
    read_json,
    run_tables,
    write_csv,
    write_json,
    write_manifest,
    write_snapshots,
)
from expanderlab.models import (
    ConfigError,
    NoBracket,
    Pole,
    RunManifest,
    VerificationFailure,
)
from expanderlab.utils import THREADS_ENV

pytestmark = pytest.mark.area_cli_io


class TestParseArgs(unittest.TestCase):
    """Test command line argument parsing."""

    def test_defaults_are_left_to_the_config(self):
        args = parse_args(["profile"])
        self.assertEqual(args.command, "profile")
        self.assertIsNone(args.d)
        self.assertIsNone(args.alpha)
        self.assertEqual(args.out, "expanderlab-out")
        self.assertEqual(args.error_format, "text")
        self.assertFalse(args.debug)

    def test_nested_commands(self):
        args = parse_args(["pde", "pair", "--t-span", "1e-3,1e-2", "--d", "4"])
        self.assertEqual(command_name(args), "pde pair")
        self.assertEqual(args.t_span, [1e-3, 1e-2])
        self.assertEqual(args.d, 4)

    def test_comma_lists(self):
        args = parse_args(["gl", "--epsilon-seq", "0.04,0.02,0.01"])
        self.assertEqual(args.epsilon_seq, [0.04, 0.02, 0.01])

    def test_bad_comma_list_is_a_usage_error(self):
        with self.assertRaises(SystemExit):
            parse_args(["scan", "--alpha-range", "0,ten"])

    def test_flags_override_config(self):
        args = parse_args(["scan", "--alpha-range", "0,10", "--n", "20"])
        config = config_from_args(args)
        self.assertEqual(config.alpha_range, (0.0, 10.0))
        self.assertEqual(config.scan_points, 20)
        self.assertEqual(config.d, Config().d)


@pytest.mark.type_basic
class TestConfig:
    def test_file_sits_between_defaults_and_flags(self, tmp_path):
        path = tmp_path / "lab.json"
        path.write_text(json.dumps({"d": 5, "tol": 1e-9, "t_span": [0.01, 0.1]}))
        args = parse_args(["pde", "expander", "--config", str(path), "--d", "4"])
        config = config_from_args(args)
        assert config.d == 4
        assert config.tol == 1e-9
        assert config.t_span == (0.01, 0.1)

    @pytest.mark.parametrize(
        "payload",
        [
            pytest.param('{"dimension": 3}', id="unknown-key"),
            pytest.param("[3, 4]", id="not-an-object"),
            pytest.param("{d: 3", id="malformed"),
        ],
    )
    def test_bad_config_files(self, tmp_path, payload):
        path = tmp_path / "lab.json"
        path.write_text(payload)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_manifest_is_accepted_as_config(self, tmp_path):
        written = Config(d=5, alpha=1.25, epsilon_seq=(0.1, 0.05))
        manifest = RunManifest(command="profile", parameters=written.to_dict())
        path = write_manifest(tmp_path, manifest)
        loaded = load_config(path)
        assert loaded.d == 5 and loaded.alpha == 1.25
        assert loaded.epsilon_seq == (0.1, 0.05)
        assert loaded.to_dict() == written.to_dict()

    def test_manifest_without_parameter_object(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"schema": 1, "parameters": [3]}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    @pytest.mark.parametrize(
        "overrides",
        [
            pytest.param({"d": 2}, id="low-d"),
            pytest.param({"ell": math.pi}, id="ell-at-pi"),
            pytest.param({"tol": 1e-3}, id="loose-tol"),
            pytest.param({"rho_max": 5.0}, id="short-domain"),
            pytest.param({"epsilon_seq": (0.01, 0.02)}, id="increasing-eps"),
            pytest.param({"t_span": (1.0, 0.5)}, id="reversed-span"),
            pytest.param({"threads": 0}, id="no-threads"),
            pytest.param({"grid": "mesh:3"}, id="bad-grid"),
        ],
    )
    def test_validation(self, overrides):
        with pytest.raises(ConfigError):
            Config().with_overrides(**overrides).validate()

    def test_lists_become_tuples(self):
        config = Config().with_overrides(epsilon_seq=[0.1, 0.05], d=None)
        assert config.epsilon_seq == (0.1, 0.05)
        assert config.d == 3

    def test_threads_are_exported(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            Config(threads=2).apply_threads()
            assert os.environ[THREADS_ENV] == "2"

    def test_threads_do_not_override_environment(self):
        with mock.patch.dict(os.environ, {THREADS_ENV: "5"}, clear=True):
            Config(threads=2).apply_threads()
            assert os.environ[THREADS_ENV] == "5"


@pytest.mark.type_basic
class TestParseGrid:
    def test_uniform(self):
        grid = parse_grid("uniform:2:40")
        assert len(grid.nodes) == 41 and grid.r_dom == 2.0

    def test_graded_with_first_spacing(self):
        grid = parse_grid("graded:3:0.002")
        assert grid.nodes[1] == pytest.approx(0.002)
        assert grid.r_dom == 3.0

    @pytest.mark.parametrize("spec", ["uniform:2", "uniform:a:b", "mesh:1", ""])
    def test_rejects_malformed(self, spec):
        with pytest.raises(ConfigError):
            parse_grid(spec)


@pytest.mark.type_basic
class TestExport:
    def test_csv_keeps_full_precision(self, tmp_path):
        values = np.array([math.pi, 1 / 3, -2.5e-17])
        path = write_csv(tmp_path / "nested" / "series.csv", {"x": values, "y": values})
        assert path.read_text().splitlines()[0] == "x,y"
        np.testing.assert_array_equal(read_csv(path)["x"], values)

    def test_csv_rejects_ragged_columns(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "bad.csv", {"x": [1.0, 2.0], "y": [1.0]})

    def test_json_handles_numpy_and_enums(self, tmp_path):
        payload = {"limit": np.float64(1.25), "nodes": np.arange(3), "pole": Pole.SOUTH}
        data = read_json(write_json(tmp_path / "out.json", payload))
        assert data == {"limit": 1.25, "nodes": [0, 1, 2], "pole": "south"}

    def test_snapshots_get_one_file_each(self, tmp_path):
        nodes = np.array([0.0, 0.5, 1.0])
        run = SimpleNamespace(
            grid=SimpleNamespace(nodes=nodes),
            snapshots=[
                SimpleNamespace(time=0.1, values=np.array([0.0, 0.2, 0.4])),
                SimpleNamespace(time=0.2, values=np.array([0.0, 0.1, 0.3])),
            ],
        )
        paths = write_snapshots(tmp_path / "north", run_tables(run), label="north")
        assert [p.name for p in paths] == [
            "snapshot_0000.csv",
            "snapshot_0001.csv",
            "snapshots.json",
        ]
        second = read_csv(paths[1])
        assert list(second) == ["r", "h"]
        np.testing.assert_array_equal(second["h"], [0.0, 0.1, 0.3])
        index = read_json(paths[-1])
        assert index["schema"] == 1
        assert index["times"] == [0.1, 0.2]
        assert index["label"] == "north"

    def test_manifest_records_constants(self, tmp_path):
        manifest = RunManifest(command="critical", parameters={"d": 3})
        manifest.add_constant("alpha0", 1.5, 1e-8)
        data = read_json(write_manifest(tmp_path, manifest))
        assert data["command"] == "critical"
        assert data["derived_constants"]["alpha0"] == {"value": 1.5, "tol": 1e-8}


class TestMain:
    """Exit codes and artifacts of full command runs."""

    def run(self, tmp_path, *argv):
        return main([*argv, "--out", str(tmp_path)])

    def test_version(self):
        assert main(["--version"]) == 0

    def test_missing_command_is_usage_error(self):
        assert main([]) == 1

    def test_bad_dimension_is_usage_error(self, tmp_path):
        assert self.run(tmp_path, "profile", "--d", "2") == 1
        assert not (tmp_path / "manifest.json").exists()

    def test_bad_grid_reports_json(self, tmp_path, capsys):
        argv = ["pde", "pair", "--grid", "mesh:1", "--error-format", "json"]
        code = self.run(tmp_path, *argv)
        assert code == 1
        error = json.loads(capsys.readouterr().err)
        assert error["error_type"] == "USAGE"

    def test_profile_writes_artifacts(self, tmp_path):
        assert self.run(tmp_path, "profile", "--d", "3", "--alpha", "0.5") == 0
        manifest = read_json(tmp_path / "manifest.json")
        assert manifest["command"] == "profile"
        assert manifest["parameters"]["d"] == 3
        assert str(tmp_path / "profile.csv") in manifest["artifacts"]
        assert 0 < manifest["derived_constants"]["psi_inf"]["value"] < math.pi / 2
        columns = read_csv(tmp_path / "profile.csv")
        assert set(columns) == {"rho", "psi", "dpsi"}

    @pytest.mark.type_acceptance
    def test_profile_csv_is_reproducible(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        for out in (first, second):
            assert self.run(out, "profile", "--d", "4", "--alpha", "1.5") == 0
        csv_a = (first / "profile.csv").read_bytes()
        csv_b = (second / "profile.csv").read_bytes()
        assert csv_a == csv_b

    def test_numerical_failure_exit_code(self, tmp_path):
        with mock.patch("cli.main.solve_profile", side_effect=NoBracket("no root")):
            assert self.run(tmp_path, "profile") == 2
        manifest = read_json(tmp_path / "manifest.json")
        assert manifest["artifacts"] == []

    def test_verification_failure_exit_code(self, tmp_path, mocker):
        failure = VerificationFailure("ordering lost")
        mocker.patch("cli.main.comparison_suite", side_effect=failure)
        assert self.run(tmp_path, "verify", "comparison") == 3

    def test_pair_without_separation_fails_verification(self, tmp_path, mocker):
        close = SimpleNamespace(summary={"zeta": 0.2, "separation": 0.5})
        mocker.patch("cli.main.nonuniqueness_pair", return_value=(close, close))
        mocker.patch("cli.main._write_run")
        mocker.patch("cli.main._energy_margin", return_value=0.0)
        assert self.run(tmp_path, "pde", "pair") == 3

    def test_pair_energy_margin_fails_verification(self, tmp_path, mocker):
        apart = SimpleNamespace(summary={"zeta": 0.2, "separation": 2.5})
        mocker.patch("cli.main.nonuniqueness_pair", return_value=(apart, apart))
        mocker.patch("cli.main._write_run")
        mocker.patch("cli.main._energy_margin", return_value=-0.01)
        assert self.run(tmp_path, "pde", "pair") == 3

    def test_pair_passes(self, tmp_path, mocker):
        apart = SimpleNamespace(summary={"zeta": 0.2, "separation": 2.5})
        mocker.patch("cli.main.nonuniqueness_pair", return_value=(apart, apart))
        mocker.patch("cli.main._write_run")
        mocker.patch("cli.main._energy_margin", return_value=-1e-4)
        assert self.run(tmp_path, "pde", "pair") == 0

    @pytest.mark.parametrize("rate, code", [(0.48, 0), (0.2, 3), (0.75, 3)])
    def test_selfsim_decay_rate(self, tmp_path, mocker, rate, code):
        mocker.patch("cli.main.cached_profile")
        mocker.patch("cli.main.evolve_selfsimilar")
        mocker.patch("cli.main._write_run")
        mocker.patch("cli.main.decay_rate", return_value=(rate, 1e-3))
        mocker.patch("cli.main.weighted_growth", return_value=1.0)
        assert self.run(tmp_path, "pde", "selfsim") == code

    @pytest.mark.parametrize(
        "monotone, within, code",
        [(True, True, 0), (True, False, 3), (False, True, 3)],
    )
    def test_gl_selection_criteria(self, tmp_path, mocker, monotone, within, code):
        row = {
            "epsilon": 0.01,
            "distance": 1e-3,
            "min_v": 0.1,
            "sphere_defect": 1e-4,
            "max_modulus_sq": 1.0,
            "budget": 1.0,
            "branch": "north",
        }
        report = {
            "rows": [row],
            "monotone": monotone,
            "defect_exponent": 1.0,
            "reference_error": 1e-3,
            "within_reference_error": within,
            "runs": [],
        }
        mocker.patch("cli.main.gl_select", return_value=report)
        assert self.run(tmp_path, "gl") == code
