"""
Unit tests for the command line, its configuration and the run log.

Tests cover:
- RunConfig validation and parsing of points, level ranges and lists
- Precedence of flags, config files and environment variables
- Run records, digests and history
- Every command end to end, including exit codes and output echoes
"""

import csv
import json
import math
import sys
from pathlib import Path

import pytest
from pydantic import ValidationError

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent.parent))

from src import __version__
from src.cli import main as cli
from src.cli.config import RunConfig, build_config, env_values, file_values
from src.cli.run_log import RunRecord, record_digest
from src.errors import DegenerateEstimateError, DomainError
from src.gaussian.sampling import BINARY_MAGIC, read_binary, read_csv


def data_rows(path):
    """CSV rows below the header, comment lines skipped."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def load(path):
    return json.loads(Path(path).read_text())


class TestRunConfig:
    """Tests for RunConfig validation."""

    def test_defaults_are_valid(self):
        """A bare command validates with the built-in defaults."""
        config = RunConfig(command="simulate")
        assert config.model == "sibm"
        assert config.reps == 1
        assert config.format == "csv"

    def test_hurst_above_half_rejected(self):
        """H must lie in (0, 0.5]."""
        with pytest.raises(ValidationError, match=r"H must lie in \(0, 0\.5\]"):
            RunConfig(command="simulate", model="sifbm", H=0.7)

    def test_hurst_half_accepted(self):
        """H = 1/2 is the upper end of the range."""
        assert RunConfig(command="simulate", model="sifbm", H=0.5).cov_model().H == 0.5

    def test_negative_sigma_rejected(self):
        """SIOU scales must be positive."""
        with pytest.raises(ValidationError):
            RunConfig(command="simulate", model="siou", sigma=-1.0)

    def test_cells_power_of_two(self):
        """k must be a power of two."""
        assert RunConfig(command="demo-unbounded", cells=1).cells == 1
        with pytest.raises(ValidationError, match="power of 2"):
            RunConfig(command="demo-unbounded", cells=1000)

    def test_level_range_parsing(self):
        """lo:hi strings become integer pairs."""
        config = RunConfig(command="estimate", levels="3:7")
        assert config.levels == (3, 7)
        assert config.level_list() == [3, 4, 5, 6, 7]

    def test_level_range_order(self):
        """Empty or reversed ranges are rejected."""
        with pytest.raises(ValidationError):
            RunConfig(command="estimate", levels="7:3")
        with pytest.raises(ValidationError):
            RunConfig(command="estimate", levels="5")

    def test_point_parsing(self):
        """Comma-separated points parse into float tuples."""
        config = RunConfig(command="estimate", center="0.6,0.6", t="0.37, 0.61")
        assert config.center == (0.6, 0.6)
        assert config.t == (0.37, 0.61)

    def test_point_dimension_checked(self):
        """Points must have dim coordinates."""
        with pytest.raises(ValidationError, match="coordinates"):
            RunConfig(command="estimate", dim=2, center="0.6,0.6,0.6")

    def test_point_inside_cube(self):
        """Coordinates outside (0, 1] are rejected."""
        with pytest.raises(ValidationError):
            RunConfig(command="estimate", t="0.0,0.5")

    def test_unknown_kind_rejected(self):
        """Exponent kinds are checked against the known list."""
        with pytest.raises(ValidationError, match="unknown exponent kinds"):
            RunConfig(command="estimate", kinds="pointwise,holder")

    def test_unknown_collection_rejected(self):
        """Only rectangles and lower layers are checked."""
        assert RunConfig(command="check", collection="lower_layers").collection == "lower-layers"
        with pytest.raises(ValidationError):
            RunConfig(command="check", collection="triangles")

    def test_unknown_field_rejected(self):
        """Typos in config files are errors, not silently ignored."""
        with pytest.raises(ValidationError):
            RunConfig(command="simulate", replicates=10)

    def test_radii_are_dyadic_below_rho_max(self):
        """scales radii halving from rho_max."""
        config = RunConfig(command="estimate", rho_max=0.25, scales=4)
        assert config.radii() == (0.25, 0.125, 0.0625, 0.03125)

    def test_echo_round_trips(self):
        """The echoed config validates back to the same config."""
        config = RunConfig(command="estimate", kinds="pc", t="0.37,0.61", levels="3:7")
        assert RunConfig(**config.echo()) == config


class TestPrecedence:
    """Tests for merging flags, config files and the environment."""

    def test_environment_values(self):
        """SIDX_* variables map onto config fields."""
        values = env_values({"SIDX_SEED": "11", "SIDX_LOG_LEVEL": "debug", "OTHER": "x"})
        assert values == {"seed": "11", "log_level": "debug"}

    def test_flags_over_file_over_env(self, tmp_path):
        """Flags beat the config file, which beats the environment."""
        config_file = tmp_path / "run.json"
        config_file.write_text(json.dumps({"seed": 5, "reps": 7}))
        config = build_config(
            "simulate",
            {"seed": 9},
            str(config_file),
            environ={"SIDX_SEED": "1", "SIDX_REPS": "2", "SIDX_THREADS": "3"},
        )
        assert config.seed == 9
        assert config.reps == 7
        assert config.threads == 3

    def test_missing_flags_do_not_override(self):
        """None flag values leave lower sources in place."""
        config = build_config("simulate", {"seed": None}, environ={"SIDX_SEED": "4"})
        assert config.seed == 4

    def test_echoed_output_accepted_as_config(self, tmp_path):
        """An output file's embedded config can be fed back with --config."""
        output = tmp_path / "out.json"
        output.write_text(json.dumps({"version": "x", "config": {"seed": 13, "reps": 3}}))
        assert file_values(str(output)) == {"seed": 13, "reps": 3}

    def test_missing_config_file(self, tmp_path):
        """A missing config file is a usage error."""
        with pytest.raises(DomainError, match="not found"):
            file_values(str(tmp_path / "absent.json"))


class TestRunLogger:
    """Tests for the run log."""

    def test_log_run_returns_digest(self, run_logger):
        """The digest is a SHA-256 hex string stored with the record."""
        digest = run_logger.log_run(__version__, "simulate", {"seed": 1}, ["paths.csv"], {"n": 3})
        assert len(digest) == 64
        files = list(run_logger.log_dir.glob("*.json"))
        assert len(files) == 1
        assert load(files[0])["digest"] == digest

    def test_digest_excludes_timestamp(self):
        """Two records differing only by time share a digest."""
        a = RunRecord("0.1.0", "check", {"dim": 2}, [], {}, timestamp=1.0)
        b = RunRecord("0.1.0", "check", {"dim": 2}, [], {}, timestamp=2.0)
        assert record_digest(a) == record_digest(b)

    def test_verify_record(self, run_logger):
        """Stored records verify; altered ones do not."""
        digest = run_logger.log_run(__version__, "entropy", {"dim": 1}, [], {"dudley": 0.5})
        record = run_logger.get_run_history()[0]
        assert run_logger.verify_record(record, digest)
        record.summary["dudley"] = 0.6
        assert not run_logger.verify_record(record, digest)

    def test_history_filter(self, run_logger):
        """History can be filtered by command and limited."""
        for command in ("simulate", "check", "simulate"):
            run_logger.log_run(__version__, command, {}, [], {})
        assert len(run_logger.get_run_history()) == 3
        assert len(run_logger.get_run_history(command="simulate")) == 2
        assert len(run_logger.get_run_history(limit=1)) == 1

    def test_run_report(self, run_logger):
        """The report counts runs per command and distinct configs."""
        run_logger.log_run(__version__, "simulate", {"seed": 1}, [], {})
        run_logger.log_run(__version__, "simulate", {"seed": 1}, [], {})
        run_logger.log_run(__version__, "check", {"dim": 2}, [], {})
        report = run_logger.generate_run_report(output_file="report.json")
        assert report["total_runs"] == 3
        assert report["command_counts"] == {"simulate": 2, "check": 1}
        assert report["distinct_runs"] == 2
        assert (run_logger.log_dir / "report.json").exists()


class TestOutputSet:
    """Tests for partial output removal."""

    def test_discard_removes_written_files(self, tmp_path):
        """Files written before a failure are removed."""
        outputs = cli.OutputSet(str(tmp_path / "out"))
        first = outputs.write_text("a.json", "{}")
        second = outputs.path("b.csv")
        assert first.exists()
        outputs.discard()
        assert not first.exists()
        assert not second.exists()

    def test_failed_command_leaves_no_files(self, clean_env, monkeypatch):
        """A numeric failure exits with 1 and removes its partial output."""
        out = clean_env / "out"

        def failing(config, outputs):
            outputs.write_text("partial.csv", "x\n")
            raise DegenerateEstimateError("pc at (0.5, 0.5): no usable levels")

        monkeypatch.setitem(cli.COMMANDS, "simulate", failing)
        assert cli.main(["simulate", "--out", str(out)]) == 1
        assert not (out / "partial.csv").exists()


class TestParsing:
    """Tests for argument parsing and usage errors."""

    def test_no_command(self, clean_env):
        """A bare invocation is a usage error."""
        assert cli.main([]) == 2

    def test_unknown_command(self, clean_env):
        """argparse rejects unknown commands with exit code 2."""
        assert cli.main(["plot"]) == 2

    def test_bad_hurst_message(self, clean_env, capsys):
        """--H 0.7 is rejected with the range in the message."""
        code = cli.main(["simulate", "--model", "sifbm", "--H", "0.7", "--out", "o"])
        assert code == 2
        assert "H must lie in (0, 0.5]" in capsys.readouterr().err

    def test_global_flags_before_command(self, clean_env):
        """Global flags are accepted before the subcommand too."""
        config, code = cli.parse_config(["--seed", "3", "demo-unbounded", "--reps", "4"])
        assert code == 0
        assert config.seed == 3
        assert config.reps == 4

    def test_absent_flags_use_defaults(self, clean_env):
        """Flags not given fall through to RunConfig defaults."""
        config, _ = cli.parse_config(["check"])
        assert config.collection == "rectangles"
        assert config.metric is None


class TestSimulate:
    """Tests for the simulate command."""

    ARGS = ["simulate", "--model", "sifbm", "--H", "0.3", "--dim", "2", "--design", "ball",
            "--center", "0.6,0.6", "--rho-max", "0.25", "--seed", "7", "--reps", "50"]

    def test_ball_csv_has_one_row_per_replicate(self, clean_env):
        """50 replicates give 50 data rows."""
        out = clean_env / "out"
        assert cli.main(self.ARGS + ["--out", str(out)]) == 0
        text = (out / "paths.csv").read_text()
        rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
        assert len(rows) == 1 + 50

    def test_output_echoes_version_and_config(self, clean_env):
        """The CSV comment lines carry the tool version and merged config."""
        out = clean_env / "out"
        cli.main(self.ARGS + ["--out", str(out)])
        comments = [ln for ln in (out / "paths.csv").read_text().splitlines()
                    if ln.startswith("#")]
        assert comments[0] == f"# sidx {__version__}"
        config = json.loads(comments[1][len("# config "):])
        assert config["H"] == 0.3
        assert config["seed"] == 7
        assert config["center"] == [0.6, 0.6]

    def test_rerun_is_byte_identical(self, clean_env):
        """The same command twice writes the same bytes."""
        out = clean_env / "out"
        cli.main(self.ARGS + ["--out", str(out)])
        first = (out / "paths.csv").read_bytes()
        cli.main(self.ARGS + ["--out", str(out)])
        assert (out / "paths.csv").read_bytes() == first

    def test_embedded_config_reproduces_values(self, clean_env):
        """Feeding an output back through --config reproduces the sample."""
        first, second = clean_env / "a", clean_env / "b"
        args = ["simulate", "--design", "pc", "--t", "0.37,0.61", "--levels", "3:6",
                "--reps", "3", "--seed", "5", "--format", "json"]
        assert cli.main(args + ["--out", str(first)]) == 0
        assert cli.main(["simulate", "--config", str(first / "paths.json"),
                         "--out", str(second)]) == 0
        assert load(first / "paths.json")["values"] == load(second / "paths.json")["values"]

    def test_grid_design(self, clean_env):
        """The grid design samples the non-degenerate sets of A_n."""
        out = clean_env / "out"
        assert cli.main(["simulate", "--design", "grid", "--grid-level", "2", "--out",
                         str(out), "--format", "json"]) == 0
        assert len(load(out / "paths.json")["sets"]) == 16

    def test_run_record_written(self, clean_env):
        """Each successful run leaves one verifiable run record."""
        out = clean_env / "out"
        cli.main(["simulate", "--design", "grid", "--grid-level", "1", "--out", str(out)])
        records = list((out / "runs").glob("*.json"))
        assert len(records) == 1
        data = load(records[0])
        assert data["command"] == "simulate"
        assert record_digest(data) == data["digest"]

    def test_binary_matches_csv(self, clean_env):
        """The binary path holds the CSV values bit for bit, plus model and config."""
        args = ["simulate", "--design", "pc", "--t", "0.37,0.61", "--levels", "3:6",
                "--reps", "3", "--seed", "5"]
        assert cli.main(args + ["--out", str(clean_env / "text")]) == 0
        assert cli.main(args + ["--format", "binary", "--out", str(clean_env / "bin")]) == 0
        target = clean_env / "bin" / "paths.sidx"
        assert target.read_bytes().startswith(BINARY_MAGIC)
        binary = read_binary(target)
        text = read_csv(clean_env / "text" / "paths.csv")
        assert binary.sets == text.sets
        assert (binary.values == text.values).all()
        assert binary.model.kind == "sibm"
        assert binary.seed == 5


class TestEstimate:
    """Tests for the estimate command."""

    def test_siou_local_and_pointwise(self, clean_env):
        """SIOU reports carry the target 1/2."""
        out = clean_env / "out"
        code = cli.main(["estimate", "--kind", "local,pointwise", "--model", "siou",
                         "--reps", "2", "--out", str(out)])
        assert code == 0
        reports = load(out / "estimates.json")["reports"]
        assert [r["kind"] for r in reports] == ["local", "pointwise"]
        assert all(r["target"] == 0.5 for r in reports)
        rows = data_rows(out / "estimates.csv")
        assert len(rows) == 4
        assert {row["kind"] for row in rows} == {"local", "pointwise"}

    def test_pc_sibm(self, clean_env):
        """pc at t = (0.37, 0.61) over levels 3..7 targets 1/2."""
        out = clean_env / "out"
        code = cli.main(["estimate", "--kind", "pc", "--model", "sibm", "--t", "0.37,0.61",
                         "--levels", "3:7", "--reps", "5", "--out", str(out)])
        assert code == 0
        (report,) = load(out / "estimates.json")["reports"]
        assert report["kind"] == "pc"
        assert report["target"] == 0.5
        assert math.isfinite(report["estimate"])

    def test_deterministic_kinds(self, clean_env):
        """detPointwise of SIFBM(0.3) is 0.3 without sampling."""
        out = clean_env / "out"
        code = cli.main(["estimate", "--kind", "detPointwise,detPc", "--model", "sifbm",
                         "--H", "0.3", "--out", str(out)])
        assert code == 0
        reports = {r["kind"]: r for r in load(out / "estimates.json")["reports"]}
        assert reports["detPointwise"]["estimate"] == pytest.approx(0.3, abs=0.02)
        assert reports["detPc"]["target"] == pytest.approx(0.15)

    def test_estimate_from_simulated_input(self, clean_env):
        """estimate reads a path written by simulate."""
        sim = clean_env / "sim"
        assert cli.main(["simulate", "--model", "sibm", "--reps", "2", "--out", str(sim)]) == 0
        out = clean_env / "out"
        code = cli.main(["estimate", "--kind", "pointwise", "--input", str(sim / "paths.csv"),
                         "--out", str(out)])
        assert code == 0
        (report,) = load(out / "estimates.json")["reports"]
        assert report["replicates"] == 2
        assert report["target"] is None

    def test_estimate_from_binary_input(self, clean_env):
        """estimate detects a binary path and keeps its model's target."""
        sim = clean_env / "sim"
        assert cli.main(["simulate", "--model", "sibm", "--reps", "2", "--format", "binary",
                         "--out", str(sim)]) == 0
        out = clean_env / "out"
        code = cli.main(["estimate", "--kind", "pointwise", "--input", str(sim / "paths.sidx"),
                         "--out", str(out)])
        assert code == 0
        (report,) = load(out / "estimates.json")["reports"]
        assert report["replicates"] == 2
        assert report["target"] == 0.5

    def test_binary_format_is_simulate_only(self, clean_env):
        """Only simulate writes binary output."""
        code = cli.main(["estimate", "--format", "binary", "--out", str(clean_env / "out")])
        assert code == 2

    def test_missing_input(self, clean_env):
        """A missing input path is a usage error."""
        out = clean_env / "out"
        code = cli.main(["estimate", "--input", "absent.csv", "--out", str(out)])
        assert code == 2
        assert not (out / "estimates.csv").exists()


class TestCheck:
    """Tests for the check command."""

    @pytest.mark.slow
    def test_rectangles_dim_2(self, clean_env, capsys):
        """Rectangles of [0,1]^2 satisfy the assumptions with q close to 2."""
        out = clean_env / "out"
        code = cli.main(["check", "--collection", "rectangles", "--dim", "2",
                         "--samples", "1000", "--out", str(out)])
        assert code == 0
        report = load(out / "check.json")["report"]
        assert report["verdict"] == "SATISFIED"
        assert report["q_fit"] == pytest.approx(2.0, rel=0.1)
        assert "verdict: SATISFIED" in capsys.readouterr().out
        rows = data_rows(out / "check.csv")
        assert [int(r["level"]) for r in rows] == report["levels"]

    def test_lower_layers(self, clean_env, capsys):
        """Lower layers violate the discretization assumption."""
        out = clean_env / "out"
        code = cli.main(["check", "--collection", "lower-layers", "--samples", "200",
                         "--out", str(out)])
        assert code == 0
        report = load(out / "check.json")["report"]
        assert report["verdict"] == "VIOLATED"
        assert report["witness"]
        assert "verdict: VIOLATED" in capsys.readouterr().out

    def test_unknown_collection(self, clean_env):
        """An unknown collection is a usage error."""
        assert cli.main(["check", "--collection", "triangles", "--out", "o"]) == 2

    def test_lower_layers_need_d_m(self, clean_env):
        """Lower layers are only checked under d_m."""
        code = cli.main(["check", "--collection", "lower-layers", "--metric", "d_hausdorff",
                         "--out", "o"])
        assert code == 2


class TestFlow:
    """Tests for the flow command."""

    def test_sifbm_projection_matches_fbm(self, clean_env):
        """SIFBM(0.35) projected along a linear flow is fractional Brownian motion."""
        out = clean_env / "out"
        code = cli.main(["flow", "--model", "sifbm", "--H", "0.35", "--flow-points", "16",
                         "--format", "json", "--out", str(out)])
        assert code == 0
        data = load(out / "flow.json")
        assert len(data["rows"]) == 16 * 16
        assert data["max_absdiff"] <= 1e-12

    def test_sibm_column_is_min(self, clean_env):
        """For SIBM the projected covariance is min(s, t)."""
        out = clean_env / "out"
        assert cli.main(["flow", "--model", "sibm", "--flow-points", "8", "--out", str(out)]) == 0
        for row in data_rows(out / "flow.csv"):
            s, t = float(row["s"]), float(row["t"])
            assert float(row["projected"]) == pytest.approx(min(s, t), abs=1e-12)

    def test_sampled_paths(self, clean_env):
        """--sample-paths adds a long table with one row per replicate and time."""
        out = clean_env / "out"
        code = cli.main(["flow", "--flow-points", "8", "--sample-paths", "--reps", "3",
                         "--out", str(out)])
        assert code == 0
        assert len(data_rows(out / "flow_paths.csv")) == 3 * 8

    def test_flow_file(self, clean_env):
        """A JSON flow descriptor is loaded from --flow."""
        flow_file = clean_env / "flow.json"
        flow_file.write_text(json.dumps({"breakpoints": [
            {"t": 0.0, "corner": [0.0, 1.0]},
            {"t": 1.0, "corner": [1.0, 1.0]},
        ]}))
        out = clean_env / "out"
        code = cli.main(["flow", "--model", "sifbm", "--H", "0.2", "--flow", str(flow_file),
                         "--flow-points", "8", "--format", "json", "--out", str(out)])
        assert code == 0
        assert load(out / "flow.json")["max_absdiff"] <= 1e-12

    def test_missing_flow_file(self, clean_env):
        """A missing flow file is a usage error."""
        assert cli.main(["flow", "--flow", "absent.json", "--out", "o"]) == 2


class TestDemoUnbounded:
    """Tests for the demo-unbounded command."""

    def test_default_report(self, clean_env):
        """k = 4096, h = 0.01: mean W_C close to sqrt(k h / (2 pi))."""
        out = clean_env / "out"
        code = cli.main(["demo-unbounded", "--reps", "50", "--no-growth", "--out", str(out)])
        assert code == 0
        report = load(out / "unbounded.json")["report"]
        assert report["cells"] == 4096
        assert report["theoretical_mean"] == pytest.approx(math.sqrt(40.96 / (2 * math.pi)))
        assert report["mean_wc"] == pytest.approx(report["theoretical_mean"], rel=0.05)

    def test_growth_table(self, clean_env):
        """The growth table spans k = 2^6 .. 2^12."""
        out = clean_env / "out"
        assert cli.main(["demo-unbounded", "--reps", "20", "--out", str(out)]) == 0
        growth = load(out / "unbounded.json")["growth"]
        assert [row["cells"] for row in growth["rows"]] == [2 ** p for p in range(6, 13)]
        assert len(data_rows(out / "unbounded.csv")) == 7

    def test_cells_not_power_of_two(self, clean_env):
        """k = 1000 is a usage error."""
        assert cli.main(["demo-unbounded", "--cells", "1000", "--out", "o"]) == 2


class TestEntropy:
    """Tests for the entropy command."""

    def test_covering_table(self, clean_env):
        """Covering numbers grow as eps shrinks and the integral is finite."""
        out = clean_env / "out"
        code = cli.main(["entropy", "--dim", "1", "--epsilons", "0.5,0.25,0.125,0.0625",
                         "--out", str(out)])
        assert code == 0
        report = load(out / "entropy.json")["report"]
        covering = report["covering"]
        assert covering == sorted(covering)
        assert report["dudley"] > 0 and math.isfinite(report["dudley"])
        assert len(data_rows(out / "entropy.csv")) == 4

    def test_scale_out_of_range(self, clean_env):
        """eps above 1/2 is a usage error."""
        assert cli.main(["entropy", "--epsilons", "0.9,0.5", "--out", "o"]) == 2
