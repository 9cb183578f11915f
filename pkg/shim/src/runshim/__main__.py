"""Entry point: runshim <mode> <candidate-file> <harness-file>."""

import argparse
import sys

from .core import shim_run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="runshim",
        description="Run a candidate program against a task harness and "
                    "emit timing/profile records on stdout",
    )
    parser.add_argument("mode", choices=["correctness", "profile"])
    parser.add_argument("candidate_file")
    parser.add_argument("harness_file")
    args = parser.parse_args(argv)
    return shim_run(args.mode, args.candidate_file, args.harness_file)


if __name__ == "__main__":
    sys.exit(main())
