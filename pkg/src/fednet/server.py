"""
Aggregation server for federated training over TCP.

The server knows only the roster (client ids and aggregation weights), the
circuit shape and the training settings.  Clients connect, say ``hello``
and are answered with ``welcome``.  Once the whole roster is connected the
rounds run:

    global(r)  ->  every client trains locally  ->  update(r)
    aggregate in client-id order
    evaluate(r) -> every client scores the new model -> metrics(r)

and finally ``done``.  The ``RoundRecord`` list returned by ``run`` is the
same one ``run_federation`` produces for the same clients in one process.
"""
from __future__ import annotations

import asyncio
import logging
from typing import Optional

from src.fed.federation import aggregate
from src.fed.models import (
    ClientEvaluation,
    ClientRoundResult,
    FederationPlan,
    RoundRecord,
)
from src.qnn.models import ModelParams

from .messages import (
    MAX_LINE_BYTES,
    PROTOCOL_VERSION,
    Done,
    DuplicateClient,
    Error,
    Evaluate,
    Global,
    Hello,
    MalformedMessage,
    Message,
    Metrics,
    OversizeLine,
    ProtocolError,
    RemoteError,
    RoundTimeout,
    Transcript,
    TransportFailure,
    Update,
    VersionMismatch,
    WeightMismatch,
    Welcome,
    decode_message,
    encode_message,
)

logger = logging.getLogger(__name__)

DEFAULT_ROUND_TIMEOUT = 300.0


def parse_address(address: str) -> tuple[str, int]:
    """
    Split ``host:port``; a bare ``:port`` means all interfaces.

    IPv6 hosts go in brackets: ``[::1]:7800``.
    """
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {address!r}")
    if host.startswith("["):
        if not host.endswith("]") or len(host) < 3:
            raise ValueError(f"unterminated IPv6 host in {address!r}")
        return host[1:-1], int(port)
    if ":" in host:
        raise ValueError(f"IPv6 hosts need brackets, got {address!r}")
    return (host or "0.0.0.0"), int(port)


async def read_line(reader: asyncio.StreamReader) -> bytes:
    """Next raw line from *reader*; empty at end of stream."""
    try:
        return await reader.readline()
    except ValueError as exc:
        # StreamReader raises ValueError once a line outgrows its limit
        raise OversizeLine(str(exc)) from exc


class FederationServer:
    """
    Runs one federation for the clients named in *plan*.

    Parameters
    ----------
    plan : FederationPlan
        Roster, round budget, target accuracy, circuit and training config.
    host, port : str, int
        Listen address; port 0 binds an ephemeral port (see ``start``).
    round_timeout : float
        Seconds to wait for every client's reply in each phase of a round.
    transcript : Transcript, optional
        Records every line sent and received.
    """

    def __init__(
        self,
        plan: FederationPlan,
        host: str = "127.0.0.1",
        port: int = 0,
        round_timeout: float = DEFAULT_ROUND_TIMEOUT,
        transcript: Optional[Transcript] = None,
    ):
        self.plan = plan
        self.host = host
        self.port = port
        self.round_timeout = round_timeout
        self.transcript = transcript
        self._roster = {c.client_id: c.aggregation_weight for c in plan.clients}
        self._writers: dict[str, asyncio.StreamWriter] = {}
        self._inbox: asyncio.Queue[tuple[str, Optional[Message]]] = asyncio.Queue()
        self._all_connected = asyncio.Event()
        self._server: Optional[asyncio.AbstractServer] = None
        self._finished = False

    # ------------------------------------------------------------------
    # Lifecycle
    # ------------------------------------------------------------------

    async def start(self) -> int:
        """Begin listening; returns the bound port."""
        self._server = await asyncio.start_server(
            self._handle_connection, self.host, self.port, limit=MAX_LINE_BYTES + 1
        )
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info("[server] listening on %s:%d for %s", self.host, self.port,
                    ", ".join(self.plan.client_ids()))
        return self.port

    async def close(self) -> None:
        self._finished = True
        for writer in self._writers.values():
            writer.close()
        for writer in self._writers.values():
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def run(self) -> list[RoundRecord]:
        """Wait for the roster, run all rounds and send ``done``."""
        if self._server is None:
            await self.start()
        try:
            await self._wait_for_roster()
            records = await self._run_rounds()
        except ProtocolError as exc:
            logger.error("[server] aborting: %s", exc)
            await self._broadcast(Error(code="aborted", detail=str(exc)), best_effort=True)
            raise
        finally:
            await self.close()
        return records

    # ------------------------------------------------------------------
    # Connections
    # ------------------------------------------------------------------

    async def _send_raw(self, writer: asyncio.StreamWriter, peer: str, message: Message) -> None:
        data = encode_message(message)
        logger.debug("[server] -> %s %s", peer, data.rstrip()[:200])
        if self.transcript is not None:
            self.transcript.record("sent", peer, data)
        writer.write(data)
        await writer.drain()

    async def _reject(self, writer: asyncio.StreamWriter, peer: str, code: str, detail: str) -> None:
        logger.warning("[server] rejecting %s: %s (%s)", peer, code, detail)
        try:
            await self._send_raw(writer, peer, Error(code=code, detail=detail))
        except (ConnectionError, OSError):
            pass
        writer.close()

    async def _handle_connection(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        peer = "%s:%s" % writer.get_extra_info("peername", ("?", "?"))[:2]
        line = b""
        try:
            line = await read_line(reader)
            hello = decode_message(line) if line else None
        except VersionMismatch as exc:
            self._record_received(peer, line)
            await self._reject(writer, peer, "version", str(exc))
            return
        except ProtocolError as exc:
            self._record_received(peer, line)
            await self._reject(writer, peer, "malformed", str(exc))
            return
        except (ConnectionError, OSError):
            writer.close()
            return
        if hello is None:
            writer.close()
            return
        self._record_received(hello.client_id if isinstance(hello, Hello) else peer, line)
        if not isinstance(hello, Hello):
            await self._reject(writer, peer, "expected_hello", f"got {hello.type}")
            return

        client_id = hello.client_id
        if client_id not in self._roster:
            await self._reject(writer, peer, "unknown_client", client_id)
            return
        if client_id in self._writers or self._finished:
            await self._reject(writer, peer, "duplicate_client", str(DuplicateClient(client_id)))
            return

        await self._send_raw(
            writer,
            client_id,
            Welcome(
                protocol_version=PROTOCOL_VERSION,
                round_total=self.plan.rounds_max,
                circuit=self.plan.circuit,
                training=self.plan.training,
                aggregation_weight=self._roster[client_id],
            ),
        )
        self._writers[client_id] = writer
        logger.info("[server] %s connected (%d/%d)", client_id, len(self._writers), len(self._roster))
        if len(self._writers) == len(self._roster):
            self._all_connected.set()
        await self._pump(client_id, reader, writer)

    def _record_received(self, peer: str, line: bytes) -> None:
        if self.transcript is not None and line:
            self.transcript.record("received", peer, line)

    async def _pump(
        self, client_id: str, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        """Forward a registered client's messages to the coordinator."""
        while True:
            try:
                line = await reader.readline()
            except ValueError:
                await self._reject(writer, client_id, "oversize", f"line exceeds {MAX_LINE_BYTES} bytes")
                break
            except (ConnectionError, OSError):
                break
            if not line:
                break
            logger.debug("[server] <- %s %s", client_id, line.rstrip()[:200])
            if self.transcript is not None:
                self.transcript.record("received", client_id, line)
            try:
                message = decode_message(line)
            except MalformedMessage as exc:
                await self._send(client_id, Error(code="malformed", detail=str(exc)), best_effort=True)
                continue
            except ProtocolError as exc:
                await self._send(client_id, Error(code="version", detail=str(exc)), best_effort=True)
                continue
            await self._inbox.put((client_id, message))
        await self._inbox.put((client_id, None))

    async def _send(self, client_id: str, message: Message, best_effort: bool = False) -> None:
        writer = self._writers[client_id]
        try:
            await self._send_raw(writer, client_id, message)
        except (ConnectionError, OSError) as exc:
            if not best_effort:
                raise TransportFailure(client_id, str(exc)) from exc

    async def _broadcast(self, message: Message, best_effort: bool = False) -> None:
        for client_id in sorted(self._writers):
            await self._send(client_id, message, best_effort=best_effort)

    # ------------------------------------------------------------------
    # Coordinator
    # ------------------------------------------------------------------

    async def _wait_for_roster(self) -> None:
        try:
            await asyncio.wait_for(self._all_connected.wait(), self.round_timeout)
        except asyncio.TimeoutError:
            missing = sorted(set(self._roster) - set(self._writers))
            raise RoundTimeout(missing, "hello") from None

    async def _collect(self, round_index: int, kind: type) -> dict[str, Message]:
        """Gather one *kind* message for *round_index* from every client."""
        loop = asyncio.get_running_loop()
        deadline = loop.time() + self.round_timeout
        pending = set(self._roster)
        received: dict[str, Message] = {}
        while pending:
            remaining = deadline - loop.time()
            try:
                if remaining <= 0:
                    raise asyncio.TimeoutError
                client_id, message = await asyncio.wait_for(self._inbox.get(), remaining)
            except asyncio.TimeoutError:
                raise RoundTimeout(sorted(pending), kind.__name__.lower()) from None

            if message is None:
                raise TransportFailure(client_id)
            if isinstance(message, Error):
                raise RemoteError(message.code, f"{client_id}: {message.detail}")
            if not isinstance(message, (Update, Metrics)):
                await self._send(client_id, Error(code="unexpected_message", detail=message.type))
                continue
            if message.round != round_index:
                logger.warning("[server] %s sent %s for round %d during round %d; discarded",
                               client_id, message.type, message.round, round_index)
                await self._send(client_id, Error(code="stale_round", detail=str(message.round)))
                continue
            if not isinstance(message, kind) or client_id not in pending:
                await self._send(client_id, Error(code="duplicate_update", detail=message.type))
                continue
            if message.client_id != client_id:
                await self._send(client_id, Error(code="client_mismatch", detail=message.client_id))
                continue
            if isinstance(message, Update):
                await self._check_update(client_id, message)
            received[client_id] = message
            pending.discard(client_id)
        return received

    async def _check_update(self, client_id: str, update: Update) -> None:
        expected = self._roster[client_id]
        if update.weight != expected:
            await self._send(
                client_id, Error(code="weight_mismatch", detail=str(expected)), best_effort=True
            )
            raise WeightMismatch(
                f"{client_id} reported weight {update.weight}, roster says {expected}"
            )
        if len(update.params) != self.plan.circuit.parameter_count():
            raise MalformedMessage(
                f"{client_id} sent {len(update.params)} parameters, "
                f"expected {self.plan.circuit.parameter_count()}"
            )

    async def _run_rounds(self) -> list[RoundRecord]:
        global_params = ModelParams.zeros(self.plan.circuit)
        ids = self.plan.client_ids()
        records: list[RoundRecord] = []
        reason = "rounds_exhausted"

        for round_index in range(self.plan.rounds_max):
            logger.info("[server] round %d: broadcasting global model", round_index)
            await self._broadcast(Global(round=round_index, params=global_params.to_vector().tolist()))
            updates = await self._collect(round_index, Update)

            aggregated = aggregate([(updates[cid].params, self._roster[cid]) for cid in ids])
            global_params = ModelParams.from_vector(aggregated)

            await self._broadcast(Evaluate(round=round_index, params=global_params.to_vector().tolist()))
            metrics = await self._collect(round_index, Metrics)

            record = RoundRecord(
                round_index=round_index,
                clients=[
                    ClientRoundResult(
                        client_id=cid,
                        best_params=ModelParams.from_vector(updates[cid].params),
                        best_validation_accuracy=updates[cid].val_accuracy,
                        epochs_run=updates[cid].epochs_run,
                        history=updates[cid].history,
                        local_confusion=updates[cid].local_confusion,
                    )
                    for cid in ids
                ],
                global_params=global_params,
                global_evaluations=[
                    ClientEvaluation(client_id=cid, confusion=metrics[cid].confusion())
                    for cid in ids
                ],
            )
            records.append(record)
            logger.info(
                "[server] round %d aggregated; global validation accuracy %s",
                round_index,
                ", ".join(f"{e.client_id}={e.accuracy:.4f}" for e in record.global_evaluations),
            )
            if record.reached(self.plan.target_accuracy):
                logger.info("[server] target accuracy %.4f reached", self.plan.target_accuracy)
                reason = "target_reached"
                break

        await self._broadcast(Done(reason=reason))
        return records


def serve(
    plan: FederationPlan,
    listen_address: str,
    round_timeout: float = DEFAULT_ROUND_TIMEOUT,
    transcript: Optional[Transcript] = None,
) -> list[RoundRecord]:
    """Blocking entry point: listen on *listen_address* and run one federation."""
    host, port = parse_address(listen_address)

    async def _main() -> list[RoundRecord]:
        server = FederationServer(plan, host, port, round_timeout, transcript)
        return await server.run()

    return asyncio.run(_main())
