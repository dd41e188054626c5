"""Train on a synthetic world, then rank held-out trials against baselines.

Run with ``python3 demos/synthetic_repurposing.py`` (under a minute on one core).
"""

from drugclip.contrastive import TrainConfig, train
from drugclip.evalrank import (
    ModelScorer,
    PopularityScorer,
    RandomScorer,
    evaluate,
    temporal_split,
    top_drugs,
)
from drugclip.synthetic import make_world

world = make_world(seed=0)
split = temporal_split(world.trials, world.cutoff, world.cutoff_end)
print(f"{len(split.train)} training trials before {world.cutoff}, "
      f"{len(split.test)} test trials, {len(split.drug_db)} candidate drugs")

config = TrainConfig(epochs=30, batch_size=2, lr=1e-3, seed=42, dim=32, depth=2)
model, history = train(split.train, config, world.ontology)
print("loss per epoch:", " ".join(f"{x:.3f}" for x in history[::5]), "...", f"{history[-1]:.3f}")

scorers = {"model": ModelScorer(model, split.drug_db),
           "random": RandomScorer(seed=42),
           "popularity": PopularityScorer(split.train)}
for name, scorer in scorers.items():
    result = evaluate(scorer, split, ks=[10, 30])
    rates = ", ".join(f"hit@{k}% = {100 * r:5.1f}" for k, r in result.hit_rates.items())
    print(f"{name:10s} {rates}   mean rank {result.mean_rank:.1f}")

query = split.test[0]
scores = ModelScorer(model, split.drug_db)(query.codes, split.drug_ids)
codes = ", ".join(c.display for c in query.codes)
print(f"\nquery {query.trial_id} [{codes}], drug actually tested: {query.drug_id}")
for drug_id, score in top_drugs(split.drug_ids, scores, 5):
    print(f"  {drug_id}  {score:+.3f}")
