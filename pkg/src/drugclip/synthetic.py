"""A small synthetic drug/disease world with planted structure.

Drugs and disease sets are generated in matched cells: a latent class picks
the ring scaffold of the drug and the ICD-10 category of the disease codes; a
subgroup picks a substituent and a subcategory. Drug ``k`` is only ever tested
against disease set ``k``, so a model that recovers (class, subgroup) ranks
the right drug among its handful of cell-mates.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

from .dataio import DrugEntry, make_trial
from .diffcore import named_rng
from .ontology import DiseaseCode, Ontology

SCAFFOLDS = (
    "c1ccccc1",
    "c1ccncc1",
    "C1CCCCC1",
    "c1ccsc1",
    "c1ccoc1",
    "C1CCNCC1",
    "c1ccc2ccccc2c1",
    "O=C1CCCC1",
)
CATEGORIES = ("C34", "G44", "D41", "E11", "I25", "J45", "K50", "M05")
SUBSTITUENTS = ("C(F)(F)F", "S(=O)(=O)N", "C(=O)O", "C#N", "[N+](=O)[O-]")
LINKERS = ("", "C", "CC", "C(C)", "CCC")


@dataclass
class SyntheticWorld:
    trials: list
    drugs: dict  # drug_id -> DrugEntry
    ontology: Ontology
    cutoff: dt.date
    cutoff_end: dt.date


def _random_date(rng, start: dt.date, end: dt.date) -> dt.date:
    return start + dt.timedelta(days=int(rng.integers(0, (end - start).days)))


def make_world(seed: int = 0, n_classes: int = 8, subgroups: int = 5, variants: int = 5,
               trials_before: int = 2, trials_after: int = 2,
               cutoff=dt.date(2018, 1, 1), cutoff_end=dt.date(2021, 1, 1),
               start=dt.date(2005, 1, 1)) -> SyntheticWorld:
    """Generate ``n_classes * subgroups * variants`` drug/disease-set pairs.

    Each pair is tested ``trials_before`` times before ``cutoff`` and
    ``trials_after`` times inside ``[cutoff, cutoff_end)``. The defaults give
    200 drugs, 200 disease sets and 800 trials in 8 classes.
    """
    if n_classes > len(SCAFFOLDS) or subgroups > len(SUBSTITUENTS) or variants > len(LINKERS):
        raise ValueError("world larger than the built-in scaffold/substituent tables")
    rng = named_rng(seed, "synthetic-world")
    pairs = []
    for c in range(n_classes):
        for s in range(subgroups):
            for v in range(variants):
                smiles = SCAFFOLDS[c] + LINKERS[v] + SUBSTITUENTS[s]
                leaf = f"{CATEGORIES[c]}.{s + 1}{v + 1}"
                codes = [leaf, f"{CATEGORIES[c]}.{s + 1}"] if v % 2 == 0 else [leaf]
                pairs.append((f"DRUG{len(pairs):03d}", smiles, codes))

    rows = []
    for drug_id, smiles, codes in pairs:
        for _ in range(trials_before):
            rows.append((_random_date(rng, start, cutoff), drug_id, smiles, codes))
        for _ in range(trials_after):
            rows.append((_random_date(rng, cutoff, cutoff_end), drug_id, smiles, codes))
    rows.sort(key=lambda r: (r[0], r[1]))

    trials = [make_trial(f"SYN{i:04d}", date, drug_id, smiles, codes)
              for i, (date, drug_id, smiles, codes) in enumerate(rows)]
    first = {}
    for t in trials:
        first.setdefault(t.drug_id, t.date)
    drugs = {d: DrugEntry(d, smi, first[d]) for d, smi, _ in pairs}
    ontology = Ontology(DiseaseCode(c.canonical, f"synthetic {c.display}")
                        for t in trials for c in t.codes)
    return SyntheticWorld(trials, drugs, ontology, cutoff, cutoff_end)
