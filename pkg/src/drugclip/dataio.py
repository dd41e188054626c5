"""File formats: trial and drug TSVs, checkpoints, metric CSVs."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .encoders import MpnnConfig, graph_arrays
from .errors import (
    CorruptCheckpoint,
    DuplicateDrugId,
    DuplicateTrialId,
    InvalidCodeFormat,
    MalformedRow,
    SmilesError,
    UnparseableDate,
    UnsupportedVersion,
)
from .molgraph import feature_schema, parse_smiles
from .ontology import DiseaseCode, Ontology, normalize

log = logging.getLogger(__name__)

TRIAL_HEADER = ["trial_id", "date", "drug_id", "smiles", "icd_codes"]
DRUG_HEADER = ["drug_id", "smiles", "first_tested_date"]
CHECKPOINT_FORMAT = "drugclip-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    date: dt.date
    drug_id: str
    smiles: str
    codes: tuple  # sorted, de-duplicated DiseaseCode

    @property
    def code_key(self) -> tuple:
        return tuple(c.canonical for c in self.codes)


@dataclass(frozen=True)
class DrugEntry:
    drug_id: str
    smiles: str
    first_tested: dt.date


def parse_date(text, context: str = "") -> dt.date:
    if isinstance(text, dt.date):
        return text
    try:
        return dt.date.fromisoformat(str(text).strip())
    except ValueError:
        where = f"{context}: " if context else ""
        raise UnparseableDate(f"{where}not an ISO-8601 date: {text!r}") from None


def make_trial(trial_id, date, drug_id, smiles, codes) -> TrialRecord:
    """Build a record from loose values, normalizing codes and the date."""
    if isinstance(codes, str):
        codes = [c for c in codes.split(";") if c.strip()]
    normalized = sorted({normalize(c).canonical for c in codes})
    if not normalized:
        raise MalformedRow(f"trial {trial_id}: no disease codes")
    return TrialRecord(
        trial_id=trial_id,
        date=parse_date(date, f"trial {trial_id}"),
        drug_id=drug_id,
        smiles=smiles,
        codes=tuple(DiseaseCode(c) for c in normalized),
    )


def _read_tsv(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        first = next(reader, None)
        if first is None or first != header:
            raise MalformedRow(f"{path}: row 1: expected header {'<TAB>'.join(header)}, got {first!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRow(
                    f"{path}: row {reader.line_num}: expected {len(header)} columns, got {len(row)}")
            yield reader.line_num, row


def load_trials(path) -> list:
    """Read the trial TSV. Row numbers in errors count the header as row 1."""
    trials, seen = [], set()
    for row_no, (trial_id, date, drug_id, smiles, codes) in _read_tsv(path, TRIAL_HEADER):
        where = f"{path}: row {row_no}"
        if trial_id in seen:
            raise DuplicateTrialId(f"{where}: duplicate trial id {trial_id!r}")
        seen.add(trial_id)
        if not codes.strip() or not trial_id or not drug_id or not smiles:
            raise MalformedRow(f"{where}: empty field")
        try:
            trials.append(make_trial(trial_id, parse_date(date, where), drug_id, smiles, codes))
        except InvalidCodeFormat as exc:
            raise InvalidCodeFormat(f"{where}: {exc}") from None
        except MalformedRow as exc:
            raise MalformedRow(f"{where}: {exc}") from None
    return trials


def load_drug_db(path) -> dict:
    """Read the drug TSV into ``{drug_id: DrugEntry}`` preserving file order."""
    drugs = {}
    for row_no, (drug_id, smiles, date) in _read_tsv(path, DRUG_HEADER):
        where = f"{path}: row {row_no}"
        if drug_id in drugs:
            raise DuplicateDrugId(f"{where}: duplicate drug id {drug_id!r}")
        if not drug_id or not smiles or not date:
            raise MalformedRow(f"{where}: empty field")
        drugs[drug_id] = DrugEntry(drug_id, smiles, parse_date(date, where))
    return drugs


def write_trials(path, trials) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", quoting=csv.QUOTE_NONE, lineterminator="\n")
        w.writerow(TRIAL_HEADER)
        for t in trials:
            w.writerow([t.trial_id, t.date.isoformat(), t.drug_id, t.smiles,
                        ";".join(c.display for c in t.codes)])


def write_drug_db(path, drugs) -> None:
    entries = drugs.values() if isinstance(drugs, dict) else drugs
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", quoting=csv.QUOTE_NONE, lineterminator="\n")
        w.writerow(DRUG_HEADER)
        for d in entries:
            w.writerow([d.drug_id, d.smiles, d.first_tested.isoformat()])


def write_code_table(path, codes) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "description"])
        for c in codes:
            w.writerow([c.display, c.description])


# --- datasets -----------------------------------------------------------------

@dataclass
class Dataset:
    """Trials whose SMILES parsed, with their graph arrays."""

    trials: list
    graphs: list = field(repr=False)

    def __len__(self) -> int:
        return len(self.trials)


def build_dataset(trials, ontology: Ontology | None = None):
    """Parse every trial's SMILES and make sure all codes are in the ontology.

    Trials with unparseable SMILES are dropped with a warning. Returns
    ``(dataset, ontology)``; the ontology is extended with any codes it lacked.
    """
    kept, graphs, cache = [], [], {}
    for trial in trials:
        if trial.smiles not in cache:
            try:
                cache[trial.smiles] = graph_arrays(parse_smiles(trial.smiles))
            except SmilesError as exc:
                cache[trial.smiles] = exc
        arrays = cache[trial.smiles]
        if isinstance(arrays, Exception):
            log.warning("dropping trial %s: %s", trial.trial_id, arrays)
            continue
        kept.append(trial)
        graphs.append(arrays)
    all_codes = [c for t in kept for c in t.codes]
    ontology = Ontology(all_codes) if ontology is None else ontology.extended(all_codes)
    return Dataset(kept, graphs), ontology


# --- checkpoints --------------------------------------------------------------

def schema_hash() -> str:
    return hashlib.sha256(feature_schema().encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    format_version: int
    config: MpnnConfig
    seed: int
    store: dc.ParameterStore
    ontology: Ontology
    schema_hash: str


def save_checkpoint(path, store: dc.ParameterStore, config: MpnnConfig,
                    ontology: Ontology, seed: int) -> None:
    """Write a JSON checkpoint. Floats are written with shortest round-trip repr."""
    params = {}
    for name in sorted(store):
        arr = store[name]
        params[name] = {"kind": store.kind(name), "shape": list(arr.shape),
                        "values": [float(x) for x in arr.reshape(-1)]}
    doc = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "config": {"dim": config.dim, "depth": config.depth, "readout": config.readout, "seed": seed},
        "ontology": [[c.canonical, c.description] for c in ontology],
        "drug_feature_schema": schema_hash(),
        "parameters": params,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"{path}: byte {exc.pos}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"{path}: not a drugclip checkpoint")
    version = doc.get("format_version")
    if not isinstance(version, int) or version > CHECKPOINT_VERSION or version < 1:
        raise UnsupportedVersion(f"{path}: format_version {version!r} (supported: {CHECKPOINT_VERSION})")
    try:
        cfg = doc["config"]
        config = MpnnConfig(depth=int(cfg["depth"]), dim=int(cfg["dim"]), readout=cfg["readout"])
        ontology = Ontology(DiseaseCode(c, d) for c, d in doc["ontology"])
        if [c.canonical for c in ontology] != [c for c, _ in doc["ontology"]]:
            raise CorruptCheckpoint(f"{path}: ontology ids are not in canonical order")
        store = dc.ParameterStore()
        for name, entry in doc["parameters"].items():
            shape = tuple(entry["shape"])
            values = np.array(entry["values"], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise CorruptCheckpoint(
                    f"{path}: parameter {name}: {values.size} values for shape {shape}")
            store.register(name, shape, entry["kind"])
            store[name] = values.reshape(shape)
        digest = doc["drug_feature_schema"]
        seed = int(cfg["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorruptCheckpoint):
            raise
        raise CorruptCheckpoint(f"{path}: {exc!r}") from None
    if digest != schema_hash():
        raise CorruptCheckpoint(f"{path}: drug feature schema does not match this version")
    return Checkpoint(version, config, seed, store, ontology, digest)


# --- CSV outputs --------------------------------------------------------------

def write_loss_history(path, history) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(history, start=1):
            w.writerow([epoch, repr(float(loss))])


def write_metrics(path, rows) -> None:
    """``rows``: iterable of (k_percent, hit_rate, n_queries)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k_percent", "hit_rate", "n_queries"])
        for k, rate, n in rows:
            w.writerow([_fmt_k(k), repr(float(rate)), n])


def write_audit(path, rows) -> None:
    """``rows``: iterable of (trial_id, rank, db_size)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_id", "rank", "db_size"])
        for trial_id, rank, n in rows:
            w.writerow([trial_id, rank, n])


def _fmt_k(k) -> str:
    k = float(k)
    return str(int(k)) if k.is_integer() else repr(k)
