"""
Federated client over TCP.

Holds its own train/validation patches, which never leave the process:
only parameters, scalar training curves and confusion counts go on the
wire.  The client's random stream is created once from its seed and carried
across rounds, exactly as in the in-process federation.
"""
from __future__ import annotations

import asyncio
import logging
from typing import Optional

import numpy as np

from src.data.models import PatchDataset
from src.fed.models import ClientConfig
from src.fed.training import train_client
from src.qnn.circuit import evaluate
from src.qnn.models import CircuitSpec, ModelParams

from .messages import (
    MAX_LINE_BYTES,
    PROTOCOL_VERSION,
    ConnectionLost,
    Done,
    Error,
    Evaluate,
    Global,
    Hello,
    MalformedMessage,
    Message,
    Metrics,
    ProtocolError,
    RemoteError,
    Transcript,
    Update,
    VersionMismatch,
    Welcome,
    decode_message,
    encode_message,
)
from .server import parse_address

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 2
EXIT_PROTOCOL = 3


class _Connection:
    def __init__(
        self,
        reader: asyncio.StreamReader,
        writer: asyncio.StreamWriter,
        client_id: str,
        transcript: Optional[Transcript],
    ):
        self.reader = reader
        self.writer = writer
        self.client_id = client_id
        self.transcript = transcript

    async def send(self, message: Message) -> None:
        data = encode_message(message)
        logger.debug("[client %s] -> %s", self.client_id, data.rstrip()[:200])
        if self.transcript is not None:
            self.transcript.record("sent", "server", data)
        try:
            self.writer.write(data)
            await self.writer.drain()
        except (ConnectionError, OSError) as exc:
            raise ConnectionLost(f"sending {message.type}: {exc}") from exc

    async def receive(self) -> Message:
        try:
            line = await self.reader.readline()
        except ValueError as exc:
            raise MalformedMessage(f"line exceeds {MAX_LINE_BYTES} bytes") from exc
        except (ConnectionError, OSError) as exc:
            raise ConnectionLost(str(exc)) from exc
        if not line:
            raise ConnectionLost("server closed the connection")
        logger.debug("[client %s] <- %s", self.client_id, line.rstrip()[:200])
        if self.transcript is not None:
            self.transcript.record("received", "server", line)
        try:
            return decode_message(line)
        except ProtocolError as exc:
            code = "version" if isinstance(exc, VersionMismatch) else "malformed"
            await self.send(Error(code=code, detail=str(exc)))
            raise

    async def close(self) -> None:
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


def _params_for(circuit: CircuitSpec, values: list[float], kind: str) -> ModelParams:
    if len(values) != circuit.parameter_count():
        raise MalformedMessage(
            f"{kind} carries {len(values)} parameters, circuit needs {circuit.parameter_count()}"
        )
    return ModelParams.from_vector(values)


async def client_session(
    host: str,
    port: int,
    client_id: str,
    train_set: PatchDataset,
    validation_set: PatchDataset,
    rng_seed: int,
    weight: Optional[float] = None,
    transcript: Optional[Transcript] = None,
) -> int:
    """
    Take part in one federation; returns after ``done``.

    Raises a ``ProtocolError`` subclass on anything the server or the
    transport gets wrong.
    """
    try:
        reader, writer = await asyncio.open_connection(host, port, limit=MAX_LINE_BYTES + 1)
    except OSError as exc:
        raise ConnectionLost(f"cannot reach {host}:{port}: {exc}") from exc
    conn = _Connection(reader, writer, client_id, transcript)
    try:
        await conn.send(Hello(protocol_version=PROTOCOL_VERSION, client_id=client_id))
        welcome = await conn.receive()
        if isinstance(welcome, Error):
            if welcome.code == "version":
                raise VersionMismatch(welcome.detail)
            raise RemoteError(welcome.code, welcome.detail)
        if not isinstance(welcome, Welcome):
            await conn.send(Error(code="expected_welcome", detail=welcome.type))
            raise MalformedMessage(f"expected welcome, got {welcome.type}")

        circuit = welcome.circuit
        client = ClientConfig(
            client_id=client_id,
            aggregation_weight=weight if weight is not None else welcome.aggregation_weight,
            train_set=train_set,
            validation_set=validation_set,
            rng_seed=rng_seed,
        )
        validation = validation_set.to_examples()
        rng = np.random.default_rng(rng_seed)
        logger.info("[client %s] joined: %d round(s), weight %s",
                    client_id, welcome.round_total, client.aggregation_weight)

        while True:
            message = await conn.receive()
            if isinstance(message, Global):
                try:
                    init = _params_for(circuit, message.params, "global")
                except MalformedMessage as exc:
                    await conn.send(Error(code="malformed", detail=str(exc)))
                    raise
                logger.info("[client %s] round %d: training", client_id, message.round)
                result = await asyncio.to_thread(
                    train_client, client, circuit, init, welcome.training, rng
                )
                await conn.send(
                    Update(
                        round=message.round,
                        client_id=client_id,
                        params=result.best_params.to_vector().tolist(),
                        weight=client.aggregation_weight,
                        val_accuracy=result.best_validation_accuracy,
                        epochs_run=result.epochs_run,
                        history=result.history,
                        local_confusion=result.local_confusion,
                    )
                )
            elif isinstance(message, Evaluate):
                try:
                    params = _params_for(circuit, message.params, "evaluate")
                except MalformedMessage as exc:
                    await conn.send(Error(code="malformed", detail=str(exc)))
                    raise
                cm = evaluate(circuit, params, validation)
                await conn.send(
                    Metrics(round=message.round, client_id=client_id,
                            tp=cm.tp, tn=cm.tn, fp=cm.fp, fn=cm.fn)
                )
            elif isinstance(message, Done):
                logger.info("[client %s] done: %s", client_id, message.reason)
                return EXIT_OK
            elif isinstance(message, Error):
                raise RemoteError(message.code, message.detail)
            else:
                await conn.send(Error(code="unexpected_message", detail=message.type))
                raise MalformedMessage(f"unexpected {message.type} from server")
    finally:
        await conn.close()


def client_run(
    server_address: str,
    client_id: str,
    train_set: PatchDataset,
    validation_set: PatchDataset,
    rng_seed: int,
    weight: Optional[float] = None,
    transcript: Optional[Transcript] = None,
) -> int:
    """Blocking client entry point; returns a process exit status."""
    host, port = parse_address(server_address)
    try:
        return asyncio.run(
            client_session(host, port, client_id, train_set, validation_set,
                           rng_seed, weight, transcript)
        )
    except ProtocolError as exc:
        logger.error("[client %s] %s", client_id, exc)
        return EXIT_PROTOCOL
    except Exception as exc:
        logger.error("[client %s] failed: %s", client_id, exc)
        return EXIT_RUNTIME
