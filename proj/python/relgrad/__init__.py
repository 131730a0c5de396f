# Copyright (c) 2026 The relgrad Authors
# SPDX-License-Identifier: Apache-2.0
"""Reverse-mode differentiation of relational query plans."""

from ._core import (
    Plan,
    RelgradError,
    diagnostics,
    fixture_names,
    kernel_names,
    pretty_print,
    run_cli,
    write_fixture,
)

__all__ = [
    "Plan",
    "RelgradError",
    "diagnostics",
    "fixture_names",
    "kernel_names",
    "pretty_print",
    "run_cli",
    "write_fixture",
]
__version__ = "0.1.0"
