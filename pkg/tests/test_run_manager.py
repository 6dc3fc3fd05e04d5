"""Tests for run bookkeeping, the CSV writer and the package logger."""

import json
import logging

import pytest

from vqsim.logger import Logger
from vqsim.output import format_number, write_csv, write_json, write_yaml
from vqsim.run_manager import MANIFEST_NAME, RunManager, sha256_file


@pytest.fixture
def manager(tmp_path):
    return RunManager(tmp_path / "runs")


def _create(manager, experiment="vem-cancel"):
    return manager.create_run(experiment, "0.3.0", 'experiment = "vem-cancel"\n', {"jobs": 1}, {"hbar": 1.0})


class TestOutput:
    def test_number_format(self):
        """17 significant digits round-trip a double."""
        assert format_number(0.1) == "0.10000000000000001"
        assert float(format_number(1.0 / 3.0)) == 1.0 / 3.0
        assert format_number(2) == "2"

    def test_csv_layout(self, tmp_path):
        path = write_csv(tmp_path / "out" / "table.csv", ("t", "x"), [(0.0, 1.5), (0.5, -2e-20)])
        assert path.read_bytes() == b"t,x\n0,1.5\n0.5,-2e-20\n"

    def test_csv_is_deterministic(self, tmp_path):
        rows = [(float(i), i / 7.0) for i in range(20)]
        first = write_csv(tmp_path / "a.csv", ("i", "v"), rows)
        second = write_csv(tmp_path / "b.csv", ("i", "v"), rows)
        assert first.read_bytes() == second.read_bytes()

    def test_row_width_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "bad.csv", ("t", "x"), [(0.0,)])

    def test_json_and_yaml(self, tmp_path):
        data = {"experiment": "kernels-dump", "metrics": {"n2": 0.5}}
        assert json.loads(write_json(tmp_path / "s.json", data).read_text()) == data
        assert "experiment: kernels-dump" in write_yaml(tmp_path / "s.yaml", data).read_text()


class TestRunManager:
    """Manifest lifecycle and checksum verification."""

    def test_manifest_written_before_data(self, manager):
        manifest = _create(manager)
        on_disk = json.loads((manager.run_dir("vem-cancel") / MANIFEST_NAME).read_text())
        assert on_disk["status"] == "in_progress"
        assert on_disk["config"]["text"].startswith("experiment")
        assert manifest.constants == {"hbar": 1.0}

    def test_finalize_records_checksums(self, manager):
        manifest = _create(manager)
        run_dir = manager.run_dir("vem-cancel")
        data = write_csv(run_dir / "vem_cancel.csv", ("a",), [(1.0,)])
        summary = write_json(run_dir / "summary.json", {"status": "pass"})
        manager.finalize(manifest, "completed", files=[data], summary_file=summary)

        loaded = manager.load_manifest("vem-cancel")
        assert loaded.status == "completed"
        assert loaded.summary_file == "summary.json"
        assert loaded.files["vem_cancel.csv"] == sha256_file(data)
        assert all(manager.verify(loaded).values())

    def test_tampering_is_detected(self, manager):
        manifest = _create(manager)
        data = write_csv(manager.run_dir("vem-cancel") / "vem_cancel.csv", ("a",), [(1.0,)])
        manager.finalize(manifest, "completed", files=[data])
        data.write_text("a\n2\n", encoding="utf-8")
        assert manager.verify(manager.load_manifest("vem-cancel")) == {"vem_cancel.csv": False}

    def test_status_update(self, manager):
        manifest = _create(manager)
        manager.update_status(manifest, "interrupted")
        assert manager.load_manifest("vem-cancel").status == "interrupted"

    def test_list_runs(self, manager):
        _create(manager, "vem-cancel")
        _create(manager, "kernels-dump")
        assert {m.experiment for m in manager.list_runs()} == {"vem-cancel", "kernels-dump"}

    def test_missing_run(self, manager):
        with pytest.raises(FileNotFoundError):
            manager.load_manifest("free-particle")


class TestLogger:
    def test_run_log_file(self, tmp_path):
        log = Logger(debug=True, run_dir=str(tmp_path))
        try:
            logging.getLogger("vqsim.tests").debug("kernel table written")
        finally:
            log.close()
        assert "kernel table written" in (tmp_path / "Main.log").read_text(encoding="utf-8")

    def test_reinitialization_replaces_handlers(self, tmp_path):
        first = Logger(run_dir=str(tmp_path))
        second = Logger(run_dir=str(tmp_path))
        try:
            assert len(second.logger.handlers) == 2
            assert first.logger is second.logger
        finally:
            second.close()
