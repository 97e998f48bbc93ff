"""
Command line.

    federated-qnn federate --synthetic --weights 5:5:4 --seed 42 --out runs/demo
    federated-qnn serve --listen 127.0.0.1:7800 --weights 5:5:4 --out runs/server
    federated-qnn client --connect 127.0.0.1:7800 --client-id c1 --synthetic --out runs/c1
    federated-qnn evaluate --model runs/demo/models/round_04_global.json --data test.csv

Exit status: 0 success, 1 configuration error, 2 runtime error,
3 protocol error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from src.fednet.messages import ProtocolError
from src.optim.optimizers import OptimizerKind
from src.qnn.models import Entanglement

from .config import ConfigError, Mode, resolve_config
from .runner import EXIT_CONFIG, EXIT_PROTOCOL, EXIT_RUNTIME, run

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="federated-qnn",
        description="Federated variational quantum classifier for retinal image patches",
    )
    parser.add_argument("mode", choices=[m.value for m in Mode], help="What to run")
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="Run directory")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    circuit = parser.add_argument_group("circuit")
    circuit.add_argument("--qubits", type=int)
    circuit.add_argument("--layers", type=int)
    circuit.add_argument("--entanglement", choices=[e.value for e in Entanglement])

    training = parser.add_argument_group("training")
    training.add_argument("--optimizer", choices=[k.value for k in OptimizerKind])
    training.add_argument("--lr", type=float)
    training.add_argument("--momentum", type=float)
    training.add_argument("--beta1", type=float)
    training.add_argument("--beta2", type=float)
    training.add_argument("--epsilon", type=float)
    training.add_argument("--bias-correction", action="store_true", default=None,
                          help="Use bias-corrected Adam moments")
    training.add_argument("--epochs", type=int, help="Max local epochs per round")
    training.add_argument("--patience", type=int)
    training.add_argument("--no-shuffle", dest="shuffle", action="store_false", default=None)

    federation = parser.add_argument_group("federation")
    federation.add_argument("--rounds", type=int)
    federation.add_argument("--clients", type=int)
    federation.add_argument("--weights", help="Aggregation weights, e.g. 5:5:4")
    federation.add_argument("--target-accuracy", type=float)
    federation.add_argument("--parallel", action="store_true", default=None)

    data = parser.add_argument_group("data")
    data.add_argument("--data", help="Patch CSV")
    data.add_argument("--client-data", nargs="+", help="One patch CSV per client")
    data.add_argument("--train", help="Client training CSV (client mode)")
    data.add_argument("--validation", help="Client validation CSV (client mode)")
    data.add_argument("--synthetic", action="store_true", default=None)
    data.add_argument("--synthetic-per-class", type=int)
    data.add_argument("--train-fraction", type=float)
    data.add_argument("--model", help="Model JSON (evaluate mode)")
    data.add_argument("--image", help="P6 fundus image (extract-patches mode)")
    data.add_argument("--mask", help="P5 lesion mask (extract-patches mode)")
    data.add_argument("--per-class", type=int)

    network = parser.add_argument_group("network")
    network.add_argument("--listen", help="host:port to serve on")
    network.add_argument("--connect", help="host:port of the server")
    network.add_argument("--client-id")
    network.add_argument("--weight", type=float, help="This client's aggregation weight")
    network.add_argument("--timeout", type=float, help="Round timeout in seconds")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = vars(build_parser().parse_args(argv))
    config_path = args.pop("config")

    try:
        config = resolve_config(args, config_path)
    except ConfigError as exc:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
        logger.error("Invalid configuration: %s", exc)
        return EXIT_CONFIG

    logging.basicConfig(level=getattr(logging, config.log_level.upper(), logging.INFO), format=LOG_FORMAT)
    try:
        return run(config)
    except ProtocolError as exc:
        logger.error("Protocol error: %s", exc)
        return EXIT_PROTOCOL
    except Exception as exc:
        logger.error("%s failed: %s", config.mode.value, exc)
        logger.debug("traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
