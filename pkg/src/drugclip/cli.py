"""Command-line entry point: ``drugclip {train,eval,rank,parse-smiles}``.

Exit codes: 0 success, 2 bad input or usage, 3 numerical failure,
4 empty result (no test trials left after filtering).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dataio
from .contrastive import DrugClipModel, TrainConfig, train
from .errors import DrugClipError, InvalidK
from .evalrank import (
    ModelScorer,
    PopularityScorer,
    RandomScorer,
    evaluate,
    hit_threshold,
    temporal_split,
    top_drugs,
)
from .molgraph import parse_smiles
from .ontology import Ontology, load_code_table

DEFAULT_SEED = 42


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _k_list(text):
    ks = []
    for part in text.split(","):
        try:
            k = float(part)
            hit_threshold(1, k)
        except (ValueError, InvalidK):
            raise argparse.ArgumentTypeError(f"InvalidK: {part!r} is not in (0, 100]") from None
        ks.append(int(k) if k.is_integer() else k)
    return ks


def _sidecar(path, suffix):
    path = Path(path)
    return path.with_name(path.stem + suffix)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drugclip", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--trials", required=True, help="trial TSV")
    p.add_argument("--icd", help="ICD-10 code table CSV (code,description)")
    p.add_argument("--drugs", help="drug TSV; its SMILES override the trial file's")
    p.add_argument("--before", help="only train on trials dated before this ISO date")
    p.add_argument("--dim", type=_positive_int, default=64)
    p.add_argument("--depth", type=_positive_int, default=3)
    p.add_argument("--readout", choices=("sum", "mean"), default="sum")
    p.add_argument("--epochs", type=_non_negative_int, default=10)
    p.add_argument("--batch", type=_positive_int, default=2)
    p.add_argument("--lr", type=_positive_float, default=1e-3)
    p.add_argument("--seed", type=_non_negative_int, default=None)
    p.add_argument("--out", required=True, help="checkpoint path; loss CSV goes next to it")

    p = sub.add_parser("eval", help="temporal hit@k%% evaluation")
    p.add_argument("--model", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--drugs", help="drug TSV; drugs first tested before --cutoff join the database")
    p.add_argument("--icd", help="accepted for symmetry with train; the checkpoint's code table is used")
    p.add_argument("--cutoff", required=True)
    p.add_argument("--cutoff-end", required=True)
    p.add_argument("--k", type=_k_list, default=[10, 30], help="comma-separated percents")
    p.add_argument("--scorer", choices=("model", "random", "popularity"), default="model")
    p.add_argument("--seed", type=_non_negative_int, default=None, help="seed for --scorer random")
    p.add_argument("--out", required=True, help="metrics CSV; per-trial audit CSV goes next to it")

    p = sub.add_parser("rank", help="rank the drug database for a set of codes")
    p.add_argument("--model", required=True)
    p.add_argument("--codes", required=True, help='semicolon-separated, e.g. "C34.91;G44.311"')
    p.add_argument("--drugs", required=True)
    p.add_argument("--top", type=_positive_int, default=20)

    p = sub.add_parser("parse-smiles", help="print the molecular graph of a SMILES string")
    p.add_argument("smiles")
    return parser


def cmd_train(args) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    print(f"seed: {seed}")
    trials = dataio.load_trials(args.trials)
    if args.drugs:
        table = dataio.load_drug_db(args.drugs)
        trials = [dataio.TrialRecord(t.trial_id, t.date, t.drug_id,
                                     table[t.drug_id].smiles if t.drug_id in table else t.smiles,
                                     t.codes) for t in trials]
    if args.before:
        before = dataio.parse_date(args.before, "--before")
        trials = [t for t in trials if t.date < before]
    ontology = load_code_table(args.icd) if args.icd else Ontology()
    dataset, ontology = dataio.build_dataset(trials, ontology)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr, seed=seed,
                         dim=args.dim, depth=args.depth, readout=args.readout)
    model, history = train(dataset, config, ontology)
    dataio.save_checkpoint(args.out, model.store, model.config, model.ontology, seed)
    loss_path = _sidecar(args.out, ".loss.csv")
    dataio.write_loss_history(loss_path, history)
    print(f"trained on {len(dataset)} trials, {len(ontology)} codes, "
          f"{model.store.n_parameters()} parameters")
    if history:
        print(f"final epoch loss: {history[-1]:.6f}")
    print(f"checkpoint: {args.out}\nloss history: {loss_path}")
    return 0


def cmd_eval(args) -> int:
    trials = dataio.load_trials(args.trials)
    table = dataio.load_drug_db(args.drugs) if args.drugs else None
    split = temporal_split(trials, args.cutoff, args.cutoff_end, table)
    if args.scorer == "model":
        model = DrugClipModel.from_checkpoint(dataio.load_checkpoint(args.model))
        scorer = ModelScorer(model, split.drug_db)
    elif args.scorer == "random":
        scorer = RandomScorer(DEFAULT_SEED if args.seed is None else args.seed)
    else:
        scorer = PopularityScorer(split.train)
    result = evaluate(scorer, split, args.k)
    dataio.write_metrics(args.out, result.metric_rows())
    audit = _sidecar(args.out, ".audit.csv")
    dataio.write_audit(audit, result.ranks)

    print(f"test trials: {result.n_queries} (dropped {split.n_dropped} with unseen drugs), "
          f"drug database: {len(split.drug_db)}")
    print(f"{'k%':>6}  {'hit rate':>9}")
    for k, rate, _ in result.metric_rows():
        print(f"{k:>6}  {100 * rate:>8.1f}%")
    print(f"mean rank: {result.mean_rank:.2f}")
    print(f"metrics: {args.out}\naudit: {audit}")
    return 0


def cmd_rank(args) -> int:
    codes = [c for c in args.codes.split(";") if c.strip()]
    if not codes:
        raise DrugClipError("--codes is empty")
    model = DrugClipModel.from_checkpoint(dataio.load_checkpoint(args.model))
    for code in codes:
        model.ontology.id_of(code)
    drugs = dataio.load_drug_db(args.drugs)
    db = {d.drug_id: d.smiles for d in drugs.values()}
    scores = ModelScorer(model, db)(codes, list(db))
    for pos, (drug_id, score) in enumerate(top_drugs(list(db), scores, args.top), start=1):
        print(f"{pos}\t{drug_id}\t{score:.6f}")
    return 0


def cmd_parse_smiles(args) -> int:
    graph = parse_smiles(args.smiles)
    print(f"{graph.n_atoms} atoms, {graph.n_bonds} bonds")
    for i, a in enumerate(graph.atoms):
        flag = "aromatic" if a.aromatic else "aliphatic"
        print(f"atom {i}: {a.element} {flag} charge={a.formal_charge:+d} degree={a.degree}")
    for b in graph.bonds:
        print(f"bond ({b.begin},{b.end},{b.code})")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "rank": cmd_rank,
    "parse-smiles": cmd_parse_smiles,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DrugClipError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
