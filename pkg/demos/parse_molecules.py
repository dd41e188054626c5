"""Parse a few SMILES strings and look at the resulting graphs.

Run with ``python3 demos/parse_molecules.py``.
"""

from drugclip.errors import SmilesError
from drugclip.molgraph import atom_features, parse_smiles

BOND_NAMES = {1: "single", 2: "double", 3: "triple", 4: "aromatic"}

for name, smiles in [("aspirin", "CC(=O)Oc1ccccc1C(=O)O"),
                     ("nitromethane", "C[N+](=O)[O-]"),
                     ("cubane", "C12C3C4C1C5C2C3C45")]:
    g = parse_smiles(smiles)
    hist = {BOND_NAMES[k]: v for k, v in g.bond_histogram().items() if v}
    print(f"{name:13s} {smiles:24s} atoms={g.n_atoms:2d} bonds={g.n_bonds:2d} {hist}")

# each atom becomes a fixed-length one-hot feature vector
g = parse_smiles("C[N+](=O)[O-]")
print("\nnitrogen features:", atom_features(g.atoms[1]).astype(int))

# malformed input is rejected with a specific error class
for bad in ["C1CC", "C(C", "Xx"]:
    try:
        parse_smiles(bad)
    except SmilesError as exc:
        print(f"{bad!r:8s} -> {type(exc).__name__}: {exc}")
