"""Temporal evaluation: split, rank the whole drug database, hit@k%."""

from __future__ import annotations

import datetime as dt
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .dataio import TrialRecord, parse_date
from .encoders import canonical_set, graph_arrays
from .errors import EmptyDrugDb, EmptyTestSet, InvalidDateRange, InvalidK, SmilesError
from .molgraph import parse_smiles

log = logging.getLogger(__name__)


@dataclass
class TemporalSplit:
    train: list
    test: list
    drug_db: dict  # drug_id -> smiles, in first-seen order
    cutoff: dt.date
    cutoff_end: dt.date
    n_dropped: int = 0  # test-window trials removed because their drug was unseen

    @property
    def drug_ids(self) -> list:
        return list(self.drug_db)


def temporal_split(trials: Sequence[TrialRecord], cutoff, cutoff_end,
                   drug_table: dict | None = None) -> TemporalSplit:
    """Train on trials before ``cutoff``; test on ``[cutoff, cutoff_end)``.

    The drug database holds every drug that appears in a training trial,
    plus any ``drug_table`` entry first tested before ``cutoff``. Test trials
    whose drug is not in the database are dropped. Trials on or after
    ``cutoff_end`` are ignored.
    """
    cutoff = parse_date(cutoff, "cutoff")
    cutoff_end = parse_date(cutoff_end, "cutoff_end")
    if not cutoff < cutoff_end:
        raise InvalidDateRange(f"cutoff {cutoff} must precede cutoff_end {cutoff_end}")
    dated = [(parse_date(t.date, f"trial {t.trial_id}"), t) for t in trials]
    dated.sort(key=lambda pair: pair[0])

    train, window = [], []
    for date, t in dated:
        if date < cutoff:
            train.append(t)
        elif date < cutoff_end:
            window.append(t)

    drug_db: dict[str, str] = {}
    for t in train:
        drug_db.setdefault(t.drug_id, t.smiles)
    if drug_table:
        for entry in sorted(drug_table.values(), key=lambda e: (e.first_tested, e.drug_id)):
            if entry.first_tested < cutoff:
                drug_db.setdefault(entry.drug_id, entry.smiles)
        for drug_id in drug_db:
            if drug_id in drug_table:
                drug_db[drug_id] = drug_table[drug_id].smiles

    test = [t for t in window if t.drug_id in drug_db]
    return TemporalSplit(train, test, drug_db, cutoff, cutoff_end, len(window) - len(test))


# --- ranking ------------------------------------------------------------------

def pessimistic_rank(scores, target: int) -> int:
    """1 + (# strictly higher scores) + (# other items with an equal score)."""
    scores = np.asarray(scores)
    return int(np.count_nonzero(scores >= scores[target]))


def hit_threshold(n: int, k_percent) -> int:
    if not 0 < float(k_percent) <= 100:
        raise InvalidK(f"k must be in (0, 100], got {k_percent!r}")
    return math.ceil(Fraction(str(k_percent)) * n / 100)


def hit_at_k(rank: int, n: int, k_percent) -> bool:
    """Is ``rank`` within the first ``ceil(k% * n)`` positions?"""
    threshold = hit_threshold(n, k_percent)
    if not 1 <= rank <= n:
        raise ValueError(f"rank {rank} outside 1..{n}")
    return rank <= threshold


@dataclass
class RankedResult:
    query: tuple
    drug_ids: list
    scores: np.ndarray
    ground_truth: str
    rank: int

    @property
    def db_size(self) -> int:
        return len(self.drug_ids)

    def top(self, n: int) -> list:
        """(drug_id, score) pairs by descending score, ties broken by drug id."""
        return top_drugs(self.drug_ids, self.scores, n)


def top_drugs(drug_ids, scores, n: int) -> list:
    order = sorted(range(len(drug_ids)), key=lambda i: (-scores[i], drug_ids[i]))
    return [(drug_ids[i], float(scores[i])) for i in order[:n]]


# --- scorers ------------------------------------------------------------------
# A scorer is called as scorer(codes, drug_ids, query_id) and returns one
# score per drug id.

class ModelScorer:
    """Cosine scores from a trained model; drug embeddings are cached.

    Query codes the model never saw have no embedding. They are left out of
    the query's mean with a warning; a query with no known code scores every
    drug 0, which ranks the ground truth last.
    """

    def __init__(self, model, drug_db: dict, chunk: int = 256):
        if not drug_db:
            raise EmptyDrugDb("drug database is empty")
        self.model = model
        self.drug_ids = list(drug_db)
        graphs = []
        for drug_id, smiles in drug_db.items():
            try:
                graphs.append(graph_arrays(parse_smiles(smiles)))
            except SmilesError as exc:
                raise type(exc)(f"drug {drug_id}: {exc}") from exc
        rows = [model.encode_drugs(graphs[i:i + chunk]).value for i in range(0, len(graphs), chunk)]
        self.drug_embeddings = np.concatenate(rows)
        self._pos = {d: i for i, d in enumerate(self.drug_ids)}

    def __call__(self, codes, drug_ids, query_id=None) -> np.ndarray:
        known = [c for c in canonical_set(codes) if c in self.model.ontology]
        if len(known) < len(canonical_set(codes)):
            log.warning("query %s: codes unknown to the model ignored: %s", query_id,
                        sorted(set(canonical_set(codes)) - set(known)))
        if not known:
            return np.zeros(len(drug_ids))
        query = self.model.encode_disease_sets([known])
        S = dc.cosine_matrix(self.drug_embeddings, query).value[:, 0]
        if list(drug_ids) == self.drug_ids:
            return S
        return S[[self._pos[d] for d in drug_ids]]


class RandomScorer:
    """Uniform random scores, reproducible per (seed, query id)."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def __call__(self, codes, drug_ids, query_id=None) -> np.ndarray:
        key = query_id if query_id is not None else ";".join(canonical_set(codes))
        rng = dc.named_rng(self.seed, f"random-scorer:{key}")
        return rng.uniform(size=len(drug_ids))


class PopularityScorer:
    """Scores each drug by how many training trials tested it."""

    def __init__(self, train_trials: Sequence[TrialRecord]):
        self.counts: dict[str, int] = {}
        for t in train_trials:
            self.counts[t.drug_id] = self.counts.get(t.drug_id, 0) + 1

    def __call__(self, codes, drug_ids, query_id=None) -> np.ndarray:
        return np.array([float(self.counts.get(d, 0)) for d in drug_ids])


class ConstantScorer:
    def __call__(self, codes, drug_ids, query_id=None) -> np.ndarray:
        return np.zeros(len(drug_ids))


def rank_drugs(scorer, codes, drug_db, ground_truth: str, query_id=None) -> RankedResult:
    drug_ids = list(drug_db)
    if not drug_ids:
        raise EmptyDrugDb("drug database is empty")
    scores = np.asarray(scorer(codes, drug_ids, query_id), dtype=np.float64)
    target = drug_ids.index(ground_truth)
    return RankedResult(canonical_set(codes), drug_ids, scores, ground_truth,
                        pessimistic_rank(scores, target))


# --- evaluation ---------------------------------------------------------------

@dataclass
class Evaluation:
    ks: list
    hit_rates: dict  # k -> fraction of queries hit
    ranks: list  # (trial_id, rank, db_size), test-set order

    @property
    def n_queries(self) -> int:
        return len(self.ranks)

    @property
    def mean_rank(self) -> float:
        return float(np.mean([r for _, r, _ in self.ranks]))

    def metric_rows(self) -> list:
        return [(k, self.hit_rates[k], self.n_queries) for k in self.ks]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DRUGCLIP_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(scorer, split: TemporalSplit, ks=(10, 30), threads: int | None = None) -> Evaluation:
    """Rank the drug database for every test trial and average hit@k%."""
    ks = list(ks)
    for k in ks:
        hit_threshold(1, k)
    if not split.test:
        raise EmptyTestSet("no test trials left after the repurposing filter")
    if not split.drug_db:
        raise EmptyDrugDb("drug database is empty")

    def one(trial):
        res = rank_drugs(scorer, trial.code_key, split.drug_db, trial.drug_id, trial.trial_id)
        return trial.trial_id, res.rank, res.db_size

    threads = threads or _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ranks = list(pool.map(one, split.test))
    else:
        ranks = [one(t) for t in split.test]
    rates = {k: float(np.mean([hit_at_k(r, n, k) for _, r, n in ranks])) for k in ks}
    return Evaluation(ks, rates, ranks)
