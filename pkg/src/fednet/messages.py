"""
Wire protocol, version 1.

Every message is one line of UTF-8 JSON terminated by ``\\n`` with a
``type`` field selecting the variant:

    hello     client -> server   protocol_version, client_id
    welcome   server -> client   protocol_version, round_total, circuit,
                                 training, aggregation_weight
    global    server -> client   round, params
    update    client -> server   round, client_id, params, weight,
                                 val_accuracy, epochs_run, history,
                                 local_confusion
    evaluate  server -> client   round, params (the freshly aggregated model)
    metrics   client -> server   round, client_id, tp, tn, fp, fn
    done      server -> client   reason
    error     either way         code, detail

Floats are written in shortest round-trip form and parse back to the same
double.  No variant has a field that could carry feature vectors: only
parameters, counts and scalar training curves leave a client.

The NDJSON ``Transcript`` records every line a peer sent or received.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError

from src.fed.models import EpochRecord, TrainingConfig
from src.metrics.classification import ConfusionMatrix
from src.qnn.models import CircuitSpec

PROTOCOL_VERSION = 1
MAX_LINE_BYTES = 1 << 20


class ProtocolError(RuntimeError):
    """Base class for wire protocol and transport failures."""


class MalformedMessage(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class OversizeLine(ProtocolError):
    pass


class RoundTimeout(ProtocolError):
    def __init__(self, client_ids: list[str], what: str = "update"):
        super().__init__(f"timed out waiting for {what} from {', '.join(client_ids)}")
        self.client_ids = client_ids


class DuplicateClient(ProtocolError):
    pass


class TransportFailure(ProtocolError):
    def __init__(self, client_id: str, detail: str = "connection lost"):
        super().__init__(f"client {client_id!r}: {detail}")
        self.client_id = client_id


class ConnectionLost(ProtocolError):
    pass


class WeightMismatch(ProtocolError):
    pass


class RemoteError(ProtocolError):
    """The peer answered with an ``error`` message."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"peer reported {code}: {detail}" if detail else f"peer reported {code}")
        self.code = code


# ---------------------------------------------------------------------------
# Message variants
# ---------------------------------------------------------------------------

class _Message(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Hello(_Message):
    type: Literal["hello"] = "hello"
    protocol_version: int
    client_id: str = Field(..., min_length=1)


class Welcome(_Message):
    type: Literal["welcome"] = "welcome"
    protocol_version: int
    round_total: int = Field(..., ge=1)
    circuit: CircuitSpec
    training: TrainingConfig
    aggregation_weight: float = Field(..., gt=0)


class Global(_Message):
    type: Literal["global"] = "global"
    round: int = Field(..., ge=0)
    params: list[float]


class Update(_Message):
    type: Literal["update"] = "update"
    round: int = Field(..., ge=0)
    client_id: str
    params: list[float]
    weight: float
    val_accuracy: float
    epochs_run: int = Field(..., ge=0)
    history: list[EpochRecord] = Field(default_factory=list)
    local_confusion: ConfusionMatrix = Field(default_factory=ConfusionMatrix)


class Evaluate(_Message):
    type: Literal["evaluate"] = "evaluate"
    round: int = Field(..., ge=0)
    params: list[float]


class Metrics(_Message):
    type: Literal["metrics"] = "metrics"
    round: int = Field(..., ge=0)
    client_id: str
    tp: int = Field(..., ge=0)
    tn: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)

    def confusion(self) -> ConfusionMatrix:
        return ConfusionMatrix(tp=self.tp, tn=self.tn, fp=self.fp, fn=self.fn)


class Done(_Message):
    type: Literal["done"] = "done"
    reason: str


class Error(_Message):
    type: Literal["error"] = "error"
    code: str
    detail: str = ""


Message = Annotated[
    Union[Hello, Welcome, Global, Update, Evaluate, Metrics, Done, Error],
    Field(discriminator="type"),
]

_MESSAGE_ADAPTER: TypeAdapter[Message] = TypeAdapter(Message)


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------

def encode_message(message: Message) -> bytes:
    """Serialize *message* to one newline-terminated JSON line."""
    return message.model_dump_json().encode("utf-8") + b"\n"


def decode_message(line: bytes) -> Message:
    """Parse one line produced by ``encode_message``."""
    if len(line) > MAX_LINE_BYTES:
        raise OversizeLine(f"line of {len(line)} bytes exceeds {MAX_LINE_BYTES}")
    body = line[:-1] if line.endswith(b"\n") else line
    if b"\n" in body:
        raise MalformedMessage("message contains an interior newline")
    try:
        message = _MESSAGE_ADAPTER.validate_json(body)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise MalformedMessage(f"{where}: {first['msg']}" if where else first["msg"]) from exc
    if isinstance(message, (Hello, Welcome)) and message.protocol_version != PROTOCOL_VERSION:
        raise VersionMismatch(
            f"protocol version {message.protocol_version} is not {PROTOCOL_VERSION}"
        )
    return message


# ---------------------------------------------------------------------------
# Transcript
# ---------------------------------------------------------------------------

class TranscriptEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    direction: Literal["sent", "received"]
    peer: str
    line: str


class Transcript:
    """Ordered log of protocol lines, written out as NDJSON."""

    def __init__(self) -> None:
        self.entries: list[TranscriptEntry] = []

    def record(self, direction: str, peer: str, line: bytes) -> None:
        self.entries.append(
            TranscriptEntry(
                direction=direction, peer=peer, line=line.decode("utf-8", "replace").rstrip("\n")
            )
        )

    def messages(self, direction: str | None = None) -> list[dict]:
        """Decoded JSON bodies, optionally filtered by direction."""
        return [
            json.loads(e.line)
            for e in self.entries
            if direction is None or e.direction == direction
        ]

    def write(self, path: str | Path) -> int:
        """
        Write the transcript as NDJSON to *path*.

        Returns the number of entries written.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(entry.model_dump_json())
                fh.write("\n")
        return len(self.entries)
