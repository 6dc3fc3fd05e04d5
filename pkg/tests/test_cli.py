"""Tests for vqsim.cli module."""

import json

import pytest

from vqsim import __version__
from vqsim.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_PASS, EXIT_TOLERANCE, main, output_root
from vqsim.config import parse_config
from vqsim.errors import NumericalInvariantError
from vqsim.run_manager import RunManager


def test_verb_without_action_prints_help(capsys):
    """A verb group with no action lists the verbs and exits as a usage error."""
    assert main(["decoherence"]) == EXIT_CONFIG
    out = capsys.readouterr().out
    for verb in ("kernels", "evolve", "eom", "decoherence", "run", "runs"):
        assert verb in out


def test_version_names_package(capsys):
    with pytest.raises(SystemExit) as exc_info:
        main(["--version"])
    assert exc_info.value.code == 0
    assert capsys.readouterr().out.strip() == f"vqsim {__version__}"


def test_runs_verify_rejects_unknown_experiment():
    """Experiment names are checked by the parser."""
    with pytest.raises(SystemExit) as exc_info:
        main(["runs", "verify", "harmonic"])
    assert exc_info.value.code == 2


def _finished_run(root):
    manager = RunManager(root)
    manifest = manager.create_run("vem-cancel", __version__, 'experiment = "vem-cancel"\n', {}, {"epsilon": 1.0})
    data = manager.run_dir("vem-cancel") / "vem_cancel.csv"
    data.write_text("epsilon,residual\n1,0\n", encoding="utf-8")
    manager.finalize(manifest, "completed", files=[data])
    return data


def test_runs_list(tmp_path, capsys):
    assert main(["runs", "list", "--output-dir", str(tmp_path)]) == EXIT_PASS
    assert "No runs found." in capsys.readouterr().out
    _finished_run(tmp_path)
    assert main(["runs", "list", "--output-dir", str(tmp_path)]) == EXIT_PASS
    out = capsys.readouterr().out
    assert "Found 1 runs:" in out
    assert "vem-cancel" in out and "Status: completed" in out


def test_runs_verify_detects_changed_file(tmp_path, capsys):
    """Verification passes on an untouched run and fails once a data file changes."""
    data = _finished_run(tmp_path)
    assert main(["runs", "verify", "vem-cancel", "--output-dir", str(tmp_path)]) == EXIT_PASS
    assert "ok  vem_cancel.csv" in capsys.readouterr().out
    data.write_text("epsilon,residual\n1,1\n", encoding="utf-8")
    assert main(["runs", "verify", "vem-cancel", "--output-dir", str(tmp_path)]) == EXIT_TOLERANCE
    assert "CHANGED  vem_cancel.csv" in capsys.readouterr().out


def test_runs_verify_missing_run(tmp_path):
    assert main(["runs", "verify", "free-particle", "--output-dir", str(tmp_path)]) == EXIT_CONFIG


def test_kernels_dump_stdout(capsys):
    """The dump goes to stdout with τ in units of ε."""
    assert main(["kernels", "dump", "--points", "4"]) == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "tau,noise,dissipation,n1,n2"
    assert len(lines) == 5
    assert float(lines[1].split(",")[0]) == pytest.approx(0.1)
    assert float(lines[-1].split(",")[0]) == pytest.approx(1e3)


def test_kernels_dump_file(tmp_path):
    output = tmp_path / "kernels.csv"
    assert main(["kernels", "dump", "--points", "10", "--omega-max", "2.0", "--output", str(output)]) == EXIT_PASS
    lines = output.read_text().splitlines()
    assert len(lines) == 11
    assert float(lines[1].split(",")[0]) == pytest.approx(0.1)


def test_decoherence_length(capsys):
    """At t = ε the coherence length already equals its plateau value."""
    assert main(["decoherence", "length", "--tmin", "1", "--tmax", "100", "--points", "3"]) == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,l_x,l_x_k_max"
    assert float(lines[1].split(",")[2]) == pytest.approx(25.41, abs=0.01)


def test_decoherence_factor(capsys):
    assert main(["decoherence", "factor", "--separation", "0", "--points", "2"]) == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert [float(line.split(",")[1]) for line in lines[1:]] == [1.0, 1.0]


def test_decoherence_switch_constant(capsys):
    """Without a ramp the switched and unswitched N₂ agree."""
    argv = ["decoherence", "switch", "--ramp-kind", "constant", "--ramp-durations", "10", "20"]
    assert main(argv) == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "ramp_duration,epsilon,n2_switched,n2_unswitched,ratio,analytic_limit"
    assert [float(line.split(",")[4]) for line in lines[1:]] == pytest.approx([1.0, 1.0], rel=1e-8)


def test_run_all_reports_worst_exit_code(monkeypatch, tmp_path):
    ran = []

    def fake_preset(name, root, debug=False):
        ran.append(name)
        return name, EXIT_TOLERANCE if name == "vem-cancel" else EXIT_PASS

    monkeypatch.setattr("vqsim.cli.run_preset", fake_preset)
    assert main(["run", "--all", "--output-dir", str(tmp_path)]) == EXIT_TOLERANCE
    assert len(ran) == 8


def test_run_all_rejects_zero_jobs(tmp_path):
    assert main(["run", "--all", "--jobs", "0", "--output-dir", str(tmp_path)]) == EXIT_CONFIG


def test_invalid_tmin_is_config_error():
    assert main(["decoherence", "length", "--tmin", "5", "--tmax", "1"]) == EXIT_CONFIG


def test_eom_classical_summary(tmp_path):
    """The literal integration reports the runaway rate 1/t0."""
    summary = tmp_path / "runaway.json"
    output = tmp_path / "classical.csv"
    assert main(["eom", "classical", "--summary", str(summary), "--output", str(output)]) == EXIT_PASS
    record = json.loads(summary.read_text())
    assert record["kind"] == "classical"
    assert record["relative_error"] < 0.01
    assert output.read_text().splitlines()[0] == "t,x,v,a"


def test_eom_quantum_without_runaway(tmp_path):
    summary = tmp_path / "quantum.json"
    args = ["eom", "quantum", "--t-end", "200", "--a0", "0.01", "--summary", str(summary), "--output", str(tmp_path / "q.csv")]
    assert main(args) == EXIT_PASS
    assert json.loads(summary.read_text())["fitted_rate"] is None


def test_evolve_markov(capsys):
    assert main(["evolve", "--markov", "--dt", "0.25", "--steps", "5"]) == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("t,x_mean,p_mean")
    assert len(lines) == 7
    assert float(lines[1].split(",")[1]) == pytest.approx(1.0, rel=1e-10)


def test_run_without_config():
    """A bare ``run`` is a usage error."""
    assert main(["run"]) == EXIT_CONFIG


def test_run_bad_config(tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text('experiment = "coherence-length"\nphysics.omega_max = -1\n', encoding="utf-8")
    assert main(["run", str(config)]) == EXIT_CONFIG


def test_run_missing_config(tmp_path):
    assert main(["run", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG


def test_run_config_uses_env_output_dir(tmp_path, monkeypatch):
    """VQS_OUTPUT_DIR places the run directory when --output-dir is absent."""
    root = tmp_path / "env-root"
    monkeypatch.setenv("VQS_OUTPUT_DIR", str(root))
    config = tmp_path / "coherence.cfg"
    config.write_text('experiment = "coherence-length"\n', encoding="utf-8")
    assert main(["run", str(config)]) == EXIT_PASS
    manifest = json.loads((root / "coherence-length" / "manifest.json").read_text())
    assert manifest["status"] == "completed"


def test_output_root_precedence(monkeypatch):
    config = parse_config('experiment = "vem-cancel"\noutput_dir = "from-config"\n')
    monkeypatch.delenv("VQS_OUTPUT_DIR", raising=False)
    assert output_root(None, None) == "runs"
    assert output_root(None, config) == "from-config"
    monkeypatch.setenv("VQS_OUTPUT_DIR", "from-env")
    assert output_root(None, config) == "from-env"
    assert output_root("from-flag", config) == "from-flag"


def test_numerical_invariant_exit_code(monkeypatch):
    def broken(*args, **kwargs):
        raise NumericalInvariantError("trace drift exceeded tolerance", step=3, residual=1e-6)

    monkeypatch.setattr("vqsim.cli.kernel_table", broken)
    assert main(["kernels", "dump"]) == EXIT_INVARIANT


def test_keyboard_interrupt_exit_code(monkeypatch):
    def interrupted(*args, **kwargs):
        raise KeyboardInterrupt

    monkeypatch.setattr("vqsim.cli.kernel_table", interrupted)
    assert main(["kernels", "dump"]) == 130
