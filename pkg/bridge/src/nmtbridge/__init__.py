"""Scorer child process speaking the alignkit wire protocol (v1)."""

__version__ = "0.1.0"
