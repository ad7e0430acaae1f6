"""
Tests for the environment preflight checks.
"""

import os
from unittest.mock import MagicMock, patch

import requests

from skillbench.constants import API_KEY_ENV
from skillbench.preflight import check_module, endpoint_reachable, load_env_file, main, run_checks


class TestPreflight:
    """Test module, key and endpoint checks."""

    def test_check_module(self):
        """Test present and missing modules."""
        assert check_module("json") == "ok"
        assert check_module("definitely_not_a_real_module_xyz") == "missing"

    @patch('skillbench.preflight.requests.get')
    def test_endpoint_reachable(self, mock_get, monkeypatch):
        """Test the models route is probed with the bearer token."""
        monkeypatch.setenv(API_KEY_ENV, "secret")
        mock_get.return_value = MagicMock(status_code=200)
        probe = endpoint_reachable("http://localhost:8000/v1/")
        assert probe == {"url": "http://localhost:8000/v1/models", "ok": True, "status": 200}
        assert mock_get.call_args.kwargs["headers"] == {"Authorization": "Bearer secret"}

    @patch('skillbench.preflight.requests.get')
    def test_endpoint_unreachable(self, mock_get):
        """Test connection errors are reported, not raised."""
        mock_get.side_effect = requests.ConnectionError("refused")
        results = run_checks("http://localhost:9/v1")
        assert results["network"]["endpoint"]["ok"] is False
        assert not results["summary"]["ok"]
        assert any("endpoint not reachable" in e for e in results["summary"]["errors"])

    def test_env_file(self, tmp_path, monkeypatch):
        """Test .env values load without overriding the environment."""
        monkeypatch.setenv(API_KEY_ENV, "placeholder")
        monkeypatch.delenv(API_KEY_ENV)
        env = tmp_path / ".env"
        env.write_text(f"{API_KEY_ENV}=from-file\n", encoding="utf-8")

        results = run_checks(env_file=str(env))
        assert results["keys"] == {"checked": API_KEY_ENV, "present": True}
        assert os.environ[API_KEY_ENV] == "from-file"

        monkeypatch.setenv(API_KEY_ENV, "from-shell")
        load_env_file(str(env))
        assert os.environ[API_KEY_ENV] == "from-shell"

    def test_missing_env_file(self, tmp_path):
        """Test a missing .env file is not an error."""
        assert load_env_file(str(tmp_path / ".env")) is False

    @patch('skillbench.preflight.requests.get')
    def test_main(self, mock_get, capsys):
        """Test the JSON report and exit code."""
        mock_get.return_value = MagicMock(status_code=503)
        assert main(["--endpoint", "http://localhost:8000/v1"]) == 1
        out = capsys.readouterr().out
        assert '"endpoint not reachable: http://localhost:8000/v1/models"' in out
