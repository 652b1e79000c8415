"""Tests for logging setup."""

import logging
from pathlib import Path

from deep_value_nets.utils.logging import resolve_logging, setup_logging


def test_command_line_beats_environment_beats_config(monkeypatch):
    """Test the precedence of level and file sources."""
    monkeypatch.delenv("DVN_LOG_LEVEL", raising=False)
    monkeypatch.delenv("DVN_LOG_FILE", raising=False)
    assert resolve_logging("warn", "cfg.log") == ("WARN", Path("cfg.log"))

    monkeypatch.setenv("DVN_LOG_LEVEL", "error")
    monkeypatch.setenv("DVN_LOG_FILE", "env.log")
    assert resolve_logging("WARN", "cfg.log") == ("ERROR", Path("env.log"))
    assert resolve_logging("WARN", "cfg.log", "debug", "cli.log") == ("DEBUG", Path("cli.log"))


def test_no_file_by_default(monkeypatch):
    """Test that logging goes to stderr only unless a file is named."""
    monkeypatch.delenv("DVN_LOG_LEVEL", raising=False)
    monkeypatch.delenv("DVN_LOG_FILE", raising=False)
    assert resolve_logging() == ("INFO", None)


def test_setup_logging_writes_file(tmp_path):
    """Test that a log file is created with its parent directory."""
    path = tmp_path / "logs" / "run.log"
    setup_logging("DEBUG", path)
    logging.getLogger("deep_value_nets.test").debug("hello")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert "hello" in path.read_text()
    setup_logging("INFO")
