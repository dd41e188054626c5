"""Compare backprop gradients of the contrastive loss with finite differences.

Run with ``python3 demos/gradient_check.py``.
"""

from drugclip import diffcore as dc
from drugclip.contrastive import DrugClipModel, PositiveIndex, batch_loss, build_batch
from drugclip.dataio import make_trial
from drugclip.encoders import MpnnConfig
from drugclip.ontology import Ontology

trials = [
    make_trial("T1", "2015-01-01", "ethanol", "CCO", "G44.311"),
    make_trial("T2", "2015-02-01", "furan", "c1ccoc1", "D41.20;J45"),
    make_trial("T3", "2015-03-01", "acetamide", "CC(=O)N", "C34.91"),
]
ontology = Ontology(c for t in trials for c in t.codes)
model = DrugClipModel.initialize(ontology, MpnnConfig(depth=2, dim=8), seed=1)
index = PositiveIndex.from_trials(trials)


def loss(store):
    model.store = store
    return batch_loss(build_batch(trials, index, model))


print(f"loss at initialization: {loss(model.store).item():.6f}")
print(f"parameters: {model.store.n_parameters()}")
err = dc.check_gradients(loss, model.store, epsilon=1e-4)
print(f"max relative error, analytic vs central differences: {err:.2e}")
