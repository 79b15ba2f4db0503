"""
Command-line entry point: ``sbelab <experiment> --config FILE``
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from sbelab import __version__
from sbelab.common.errors import ConfigError, GateFailure, SbelabError
from sbelab.common.utils import RunAuditLogger
from sbelab.harness.config import parse_config
from sbelab.harness.experiments import COMMANDS
from sbelab.harness.output import RunWriter
from sbelab.models.schemas import ExperimentKind, ExperimentSpec

audit_logger = RunAuditLogger("harness")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbelab",
        description="Spectral Galerkin experiments for stochastic Burgers-type equations",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("experiment", choices=[kind.value for kind in ExperimentKind])
    parser.add_argument("--config", required=True, type=Path, help="key = value experiment file")
    parser.add_argument("--seed", type=int, default=None, help="overrides the file's seed")
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides the file)")
    return parser


def run(spec: ExperimentSpec) -> RunWriter:
    """Run one experiment, write its tables and manifest; raises GateFailure on a failed gate"""
    writer = RunWriter(spec)
    audit_logger.log_event(writer.run_id, spec.experiment.value, "started", {
        "model": spec.config.model.value, "N": spec.config.N, "paths": spec.paths, "out": spec.out,
    })
    COMMANDS[spec.experiment](spec, writer)
    manifest = writer.finish()
    failed = writer.failed_gates
    audit_logger.log_event(writer.run_id, spec.experiment.value, "completed", {
        "manifest": manifest, "gates": len(writer.gates), "failed": failed,
    })
    if failed:
        raise GateFailure(f"gates failed: {', '.join(failed)}", detail={"gates": failed})
    return writer


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    run_id = f"{args.experiment}-{args.seed}"
    try:
        spec = parse_config(args.config, experiment=args.experiment, overrides={"seed": args.seed, "out": args.out})
        run(spec)
    except ValidationError as e:
        error = ConfigError(str(e.errors()[0]["msg"]))
        audit_logger.log_event(run_id, args.experiment, "failed", {"error": str(error)}, level=logging.ERROR)
        print(f"sbelab: error: {error}", file=sys.stderr)
        return error.exit_code
    except SbelabError as e:
        audit_logger.log_event(
            run_id, args.experiment, "failed",
            {"error": str(e), "type": type(e).__name__, **e.detail}, level=logging.ERROR,
        )
        print(f"sbelab: error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
