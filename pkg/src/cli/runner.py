"""
Mode dispatch and run-directory artifacts.

Run directory layout (federate / serve / compare-optimizers write the round
artifacts; every mode writes ``config.snapshot``):

    config.snapshot                 resolved RunConfig, indented JSON
    data/<client>_train.csv         client datasets actually used
    data/<client>_validation.csv
    models/round_00_global.json     aggregated model after each round
    models/round_00_c1_best.json    each client's best local checkpoint
    curves/round_00_c1.csv          per-epoch loss and accuracies
    curves/round_00_c1_params.csv   per-epoch angles and bias
    metrics.json                    before-FL and after-FL metrics per round
    transcript.ndjson               wire lines (networked modes)

Nothing written depends on wall-clock time, so two runs with the same
config produce identical directories.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from src.data.extraction import extract_patches
from src.data.images import load_image, load_mask, save_image, save_mask
from src.data.models import PatchDataset
from src.data.patch_file import read_patch_file, write_patch_file
from src.data.splitting import partition_clients, split
from src.data.synthetic import PatchSynthesizer
from src.fed.federation import run_federation
from src.fed.models import ClientConfig, ClientRoundResult, RoundRecord
from src.fed.training import train_client
from src.fednet.client import client_run
from src.fednet.messages import Transcript
from src.fednet.server import serve
from src.metrics.classification import ConfusionMatrix, MetricsReport, compute_metrics
from src.metrics.curves import write_curves, write_trajectory
from src.optim.optimizers import OptimizerKind
from src.qnn.circuit import evaluate
from src.qnn.model_file import load_model, save_model
from src.qnn.models import ModelParams

from .config import Mode, RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PROTOCOL = 3


# ---------------------------------------------------------------------------
# Report documents
# ---------------------------------------------------------------------------

class Evaluation(BaseModel):
    model_config = ConfigDict(frozen=True)

    confusion: ConfusionMatrix
    metrics: MetricsReport

    @classmethod
    def of(cls, cm: ConfusionMatrix) -> "Evaluation":
        return cls(confusion=cm, metrics=compute_metrics(cm).rounded(6))


class ClientReport(BaseModel):
    client_id: str
    epochs_run: int
    before_fl: Evaluation
    after_fl: Evaluation


class RoundReport(BaseModel):
    round: int
    clients: list[ClientReport]


class FederationReport(BaseModel):
    rounds: list[RoundReport]
    target_reached: bool


class EvaluationReport(BaseModel):
    model: str
    data: str
    evaluation: Evaluation


class OptimizerOutcome(BaseModel):
    rounds_run: int
    epochs_run: dict[str, list[int]] = Field(description="client -> epochs per round")
    final_accuracy: dict[str, float]


class Comparison(BaseModel):
    optimizers: dict[str, OptimizerOutcome]


def federation_report(records: list[RoundRecord], target: Optional[float]) -> FederationReport:
    rounds = []
    for record in records:
        after = {e.client_id: e.confusion for e in record.global_evaluations}
        rounds.append(
            RoundReport(
                round=record.round_index,
                clients=[
                    ClientReport(
                        client_id=c.client_id,
                        epochs_run=c.epochs_run,
                        before_fl=Evaluation.of(c.local_confusion),
                        after_fl=Evaluation.of(after[c.client_id]),
                    )
                    for c in record.clients
                ],
            )
        )
    return FederationReport(
        rounds=rounds, target_reached=bool(records) and records[-1].reached(target)
    )


def _write_json(path: Path, document: BaseModel) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def write_round_artifacts(out: Path, config: RunConfig, records: list[RoundRecord]) -> None:
    circuit = config.circuit()
    for record in records:
        tag = f"round_{record.round_index:02d}"
        save_model(out / "models" / f"{tag}_global.json", circuit, record.global_params)
        for client in record.clients:
            save_model(out / "models" / f"{tag}_{client.client_id}_best.json", circuit, client.best_params)
            write_curves(client.history, out / "curves" / f"{tag}_{client.client_id}.csv")
            write_trajectory(client.history, out / "curves" / f"{tag}_{client.client_id}_params.csv")
    _write_json(out / "metrics.json", federation_report(records, config.target_accuracy))


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def _pool(config: RunConfig) -> PatchDataset:
    if config.synthetic:
        return PatchSynthesizer(config.seed).generate(config.synthetic_per_class)
    return read_patch_file(config.data)


def client_datasets(config: RunConfig) -> list[tuple[PatchDataset, PatchDataset]]:
    """(train, validation) per client, in roster order."""
    k = config.client_count()
    if config.client_data:
        shares = [read_patch_file(p) for p in config.client_data]
    else:
        shares = partition_clients(_pool(config), k, config.seed)
    return [split(share, config.train_fraction, config.client_seed(i)) for i, share in enumerate(shares)]


def local_clients(config: RunConfig, out: Path) -> list[ClientConfig]:
    clients = []
    for i, (entry, (train, validation)) in enumerate(zip(config.roster(), client_datasets(config))):
        write_patch_file(train, out / "data" / f"{entry.client_id}_train.csv")
        write_patch_file(validation, out / "data" / f"{entry.client_id}_validation.csv")
        clients.append(
            ClientConfig(
                client_id=entry.client_id,
                aggregation_weight=entry.aggregation_weight,
                train_set=train,
                validation_set=validation,
                rng_seed=config.client_seed(i),
            )
        )
    return clients


def _own_datasets(config: RunConfig) -> tuple[PatchDataset, PatchDataset]:
    """A networked client's (train, validation)."""
    if config.train and config.validation:
        return read_patch_file(config.train), read_patch_file(config.validation)
    ids = config.client_ids()
    if config.client_id not in ids:
        raise ValueError(f"client id {config.client_id!r} is not one of {ids}")
    return client_datasets(config)[ids.index(config.client_id)]


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------

def _train_local(config: RunConfig, out: Path) -> int:
    circuit = config.circuit()
    pool = _pool(config) if config.synthetic or config.data else read_patch_file(config.client_data[0])
    train, validation = split(pool, config.train_fraction, config.seed)
    write_patch_file(train, out / "data" / "local_train.csv")
    write_patch_file(validation, out / "data" / "local_validation.csv")
    client = ClientConfig(
        client_id="local", train_set=train, validation_set=validation, rng_seed=config.seed
    )
    result = train_client(client, circuit, ModelParams.zeros(circuit), config.training())
    save_model(out / "models" / "local_best.json", circuit, result.best_params)
    write_curves(result.history, out / "curves" / "local.csv")
    write_trajectory(result.history, out / "curves" / "local_params.csv")
    _write_json(
        out / "metrics.json",
        EvaluationReport(
            model="models/local_best.json",
            data="data/local_validation.csv",
            evaluation=Evaluation.of(result.local_confusion),
        ),
    )
    return EXIT_OK


def _federate(config: RunConfig, out: Path) -> int:
    clients = local_clients(config, out)
    records = run_federation(config.plan(clients))
    write_round_artifacts(out, config, records)
    return EXIT_OK


def _serve(config: RunConfig, out: Path) -> int:
    transcript = Transcript()
    try:
        records = serve(config.plan(), config.listen, config.timeout, transcript)
    finally:
        transcript.write(out / "transcript.ndjson")
    write_round_artifacts(out, config, records)
    return EXIT_OK


def _client(config: RunConfig, out: Path) -> int:
    train, validation = _own_datasets(config)
    ids = config.client_ids()
    seed = config.client_seed(ids.index(config.client_id)) if config.client_id in ids else config.seed
    transcript = Transcript()
    try:
        return client_run(
            config.connect, config.client_id, train, validation, seed, config.weight, transcript
        )
    finally:
        transcript.write(out / f"transcript_{config.client_id}.ndjson")


def _evaluate(config: RunConfig, out: Path) -> int:
    circuit, params = load_model(config.model)
    dataset = read_patch_file(config.data)
    cm = evaluate(circuit, params, dataset.to_examples())
    report = EvaluationReport(model=str(config.model), data=str(config.data), evaluation=Evaluation.of(cm))
    _write_json(out / "metrics.json", report)
    logger.info("Evaluated %s on %d patch(es): accuracy %.4f", config.model, len(dataset), cm.accuracy)
    return EXIT_OK


def _extract(config: RunConfig, out: Path) -> int:
    image = load_image(config.image)
    mask = load_mask(config.mask)
    dataset = extract_patches(image, mask, config.per_class, config.seed)
    write_patch_file(dataset, out / "patches.csv")
    return EXIT_OK


def _split(config: RunConfig, out: Path) -> int:
    train, test = split(read_patch_file(config.data), config.train_fraction, config.seed)
    write_patch_file(train, out / "train.csv")
    write_patch_file(test, out / "test.csv")
    logger.info("Split %s into %d train / %d test", config.data, len(train), len(test))
    return EXIT_OK


def _synthesize(config: RunConfig, out: Path) -> int:
    synthesizer = PatchSynthesizer(config.seed)
    write_patch_file(synthesizer.generate(config.synthetic_per_class), out / "patches.csv")
    image, mask = synthesizer.fundus(lesions=max(config.per_class, 3))
    save_image(image, out / "fundus.ppm")
    save_mask(mask, out / "fundus_mask.pgm")
    return EXIT_OK


def _result_of(record: RoundRecord, client_id: str) -> ClientRoundResult:
    return next(c for c in record.clients if c.client_id == client_id)


def _compare_optimizers(config: RunConfig, out: Path) -> int:
    clients = local_clients(config, out)
    outcomes: dict[str, OptimizerOutcome] = {}
    for kind in OptimizerKind:
        logger.info("Federating with optimizer %s", kind.value)
        records = run_federation(config.plan(clients, kind))
        outcomes[kind.value] = OptimizerOutcome(
            rounds_run=len(records),
            epochs_run={
                c.client_id: [_result_of(rec, c.client_id).epochs_run for rec in records]
                for c in clients
            },
            final_accuracy={
                e.client_id: round(e.accuracy, 6) for e in records[-1].global_evaluations
            },
        )
        write_round_artifacts(out / kind.value, config, records)

    _write_json(out / "comparison.json", Comparison(optimizers=outcomes))
    return EXIT_OK


_MODES = {
    Mode.TRAIN_LOCAL: _train_local,
    Mode.FEDERATE: _federate,
    Mode.SERVE: _serve,
    Mode.CLIENT: _client,
    Mode.EVALUATE: _evaluate,
    Mode.EXTRACT_PATCHES: _extract,
    Mode.SPLIT: _split,
    Mode.SYNTHESIZE: _synthesize,
    Mode.COMPARE_OPTIMIZERS: _compare_optimizers,
}


def run(config: RunConfig) -> int:
    """Execute *config* and return the mode's exit status."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.snapshot").write_text(config.snapshot() + "\n", encoding="utf-8")
    logger.info("Running %s into %s (seed %d)", config.mode.value, out, config.seed)
    return _MODES[config.mode](config, out)
