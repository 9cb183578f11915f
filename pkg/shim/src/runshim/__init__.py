"""Measurement shim run inside the execution sandbox.

Loads one candidate program, runs the task harness against it, and prints
line-delimited JSON records on stdout: a single result record in
correctness mode, plus per-line profile records and a trailer in profile
mode.  The orchestrating process owns timeouts and record parsing; the shim
itself never retries and never caches.
"""

__version__ = "0.1.0"

from .core import run_correctness, run_profile, shim_run

__all__ = ["run_correctness", "run_profile", "shim_run"]
