"""Walk the ICD-10 hierarchy and the attention weights GRAM puts on it.

Run with ``python3 demos/icd_attention.py``.
"""

import numpy as np

from drugclip import diffcore as dc
from drugclip.encoders import encode_disease_set, gram_attention, register_gram_params
from drugclip.ontology import Ontology, ancestors

for code in ["G44.311", "D41.20", "J45.9", "J45"]:
    print(f"{code:8s} ancestors: {[c.display for c in ancestors(code)]}")

ontology = Ontology(["G44.311", "D41.20", "J45.9"])
print(f"\nontology after closure ({len(ontology)} codes):", [c.display for c in ontology])

store = dc.ParameterStore()
register_gram_params(store, len(ontology), dim=8)
dc.glorot_init(store, seed=0)

# weights over ancestors(code) + [code]; they always sum to one
code = "G44.311"
chain = [c.display for c in ancestors(code)] + [code]
alpha = gram_attention(code, ontology, store)
for c, a in zip(chain, alpha):
    print(f"  alpha[{c}] = {a:.4f}")
print(f"  sum = {alpha.sum():.15f}")

# a disease set is the mean of its code embeddings
emb = encode_disease_set(["G44.311", "J45.9"], ontology, store).value
print("\ndisease-set embedding:", np.round(emb, 3))
