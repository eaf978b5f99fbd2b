"""Shared error types, mapped to CLI exit codes (usage 1, data 2, numeric 3)."""

from __future__ import annotations


class UsageError(Exception):
    """Bad command-line arguments or option combinations."""


class DataError(Exception):
    """Missing, malformed, or inconsistent input data."""


class NumericError(Exception):
    """Non-finite values where finite numbers are required."""
