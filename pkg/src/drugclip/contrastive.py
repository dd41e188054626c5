"""Contrastive drug/disease objective and training loop.

Within a batch of B trials, every drug is scored against every trial's
disease set by cosine similarity. Pairs seen together in a training trial
are labelled 1 and all other in-batch pairs 0; the loss is the mean binary
cross-entropy of ``sigmoid(similarity)`` against those labels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .dataio import Dataset, TrialRecord, build_dataset
from .encoders import (
    MpnnConfig,
    canonical_set,
    encode_disease_sets,
    graph_arrays,
    mpnn_encode_batch,
    register_gram_params,
    register_mpnn_params,
)
from .errors import EmptyDataset, NumericalError, ShapeMismatch, SmilesError
from .molgraph import parse_smiles
from .ontology import Ontology

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass
class DrugClipModel:
    """Both encoders plus the parameters and ontology they share."""

    config: MpnnConfig
    ontology: Ontology
    store: dc.ParameterStore
    seed: int = 42

    @classmethod
    def initialize(cls, ontology: Ontology, config: MpnnConfig | None = None, seed: int = 42):
        config = config or MpnnConfig()
        store = dc.ParameterStore()
        register_mpnn_params(store, config)
        register_gram_params(store, len(ontology), config.dim)
        dc.glorot_init(store, seed)
        return cls(config, ontology, store, seed)

    @classmethod
    def from_checkpoint(cls, ckpt):
        return cls(ckpt.config, ckpt.ontology, ckpt.store, ckpt.seed)

    def encode_drugs(self, graphs: Sequence) -> dc.Tensor:
        """Rows of drug embeddings for MolGraphs or precomputed GraphArrays."""
        return mpnn_encode_batch(graphs, self.store, self.config)

    def encode_disease_sets(self, code_sets: Sequence) -> dc.Tensor:
        return encode_disease_sets(code_sets, self.ontology, self.store)


def similarity_matrix(drug_embs, disease_embs) -> dc.Tensor:
    """``S[i, j]`` = cosine of drug ``i`` and disease set ``j``."""
    return dc.cosine_matrix(drug_embs, disease_embs)


def bce_loss(S, Y) -> dc.Tensor:
    """Mean binary cross-entropy of ``sigmoid(S)`` against 0/1 labels ``Y``."""
    S = dc.as_tensor(S)
    Y = np.asarray(Y, dtype=np.float64)
    if S.shape != Y.shape:
        raise ShapeMismatch(f"bce_loss: scores {S.shape} vs labels {Y.shape}")
    p = dc.sigmoid(S)
    log_p = dc.log(p, floor=LOG_FLOOR)
    log_q = dc.log(dc.sub(1.0, p), floor=LOG_FLOOR)
    ll = dc.add(dc.mul(Y, log_p), dc.mul(1.0 - Y, log_q))
    return dc.neg(dc.reduce_mean(ll))


def disease_set_key(codes) -> str:
    return ";".join(canonical_set(codes))


class PositiveIndex:
    """Known treating (drug id, disease set) pairs."""

    def __init__(self, pairs=()):
        self._pairs = set()
        for drug_id, codes in pairs:
            self.add(drug_id, codes)

    @classmethod
    def from_trials(cls, trials):
        return cls((t.drug_id, t.code_key) for t in trials)

    def add(self, drug_id: str, codes) -> None:
        self._pairs.add((drug_id, disease_set_key(codes)))

    def __contains__(self, pair) -> bool:
        drug_id, codes = pair
        return (drug_id, disease_set_key(codes)) in self._pairs

    def __len__(self) -> int:
        return len(self._pairs)


@dataclass
class Batch:
    trials: list
    drug_embeddings: dc.Tensor
    disease_embeddings: dc.Tensor
    labels: np.ndarray


def label_matrix(trials: Sequence[TrialRecord], positive_index: PositiveIndex) -> np.ndarray:
    n = len(trials)
    keys = [disease_set_key(t.code_key) for t in trials]
    Y = np.eye(n)
    for i, ti in enumerate(trials):
        for j in range(n):
            if i != j and (ti.drug_id, keys[j]) in positive_index._pairs:
                Y[i, j] = 1.0
    return Y


def build_batch(trials: Sequence[TrialRecord], positive_index: PositiveIndex,
                model: DrugClipModel, graphs: Sequence | None = None) -> Batch:
    """Encode a batch of trials and label every in-batch (drug, disease set) pair.

    ``graphs`` may carry precomputed GraphArrays aligned with ``trials``;
    otherwise each trial's SMILES is parsed here.
    """
    trials = list(trials)
    if not trials:
        raise EmptyDataset("empty batch")
    if graphs is None:
        graphs = []
        for t in trials:
            try:
                graphs.append(graph_arrays(parse_smiles(t.smiles)))
            except SmilesError as exc:
                raise type(exc)(f"trial {t.trial_id}: {exc}") from exc
    drug_embs = model.encode_drugs(graphs)
    disease_embs = model.encode_disease_sets([t.code_key for t in trials])
    return Batch(trials, drug_embs, disease_embs, label_matrix(trials, positive_index))


def batch_loss(batch: Batch) -> dc.Tensor:
    return bce_loss(similarity_matrix(batch.drug_embeddings, batch.disease_embeddings), batch.labels)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    # Sigmoid over raw cosine cannot separate one positive from many in-batch
    # negatives: with large batches the optimum pushes everything apart and
    # ranking collapses. Two trials per batch keeps the positive term dominant.
    batch_size: int = 2
    lr: float = 1e-3
    seed: int = 42
    dim: int = 64
    depth: int = 3
    readout: str = "sum"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def mpnn(self) -> MpnnConfig:
        return MpnnConfig(depth=self.depth, dim=self.dim, readout=self.readout)


def train(dataset, config: TrainConfig, ontology: Ontology | None = None,
          model: DrugClipModel | None = None):
    """Fit a model; returns ``(model, history)`` with one mean loss per epoch.

    ``dataset`` is a :class:`Dataset` or a list of TrialRecord. Each epoch
    shuffles the trials with a generator derived from ``config.seed`` and
    visits them in batches of ``config.batch_size`` (the last one may be
    shorter). The epoch loss is the unweighted mean of the batch losses.
    """
    if not isinstance(dataset, Dataset):
        dataset, ontology = build_dataset(list(dataset), ontology)
    elif ontology is None:
        ontology = Ontology(c for t in dataset.trials for c in t.codes)
    if len(dataset) == 0:
        raise EmptyDataset("no trials to train on")
    if model is None:
        model = DrugClipModel.initialize(ontology, config.mpnn, config.seed)

    positives = PositiveIndex.from_trials(dataset.trials)
    rng = dc.named_rng(config.seed, "train.shuffle")
    state = dc.AdamState()
    history = []
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            trials = [dataset.trials[i] for i in idx]
            graphs = [dataset.graphs[i] for i in idx]
            try:
                with dc.Tape():
                    loss = batch_loss(build_batch(trials, positives, model, graphs))
                grads = dc.backward(loss, model.store)
                dc.adam_step(model.store, grads, state, lr=config.lr)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {b}: {exc}") from exc
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
        log.info("epoch %d/%d mean loss %.6f", epoch, config.epochs, history[-1])
    return model, history
