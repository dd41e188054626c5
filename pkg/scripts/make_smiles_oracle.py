"""Regenerate tests/fixtures/smiles_oracle.json with RDKit.

Run once, offline, whenever the fixture list changes:

    pip install rdkit
    python scripts/make_smiles_oracle.py

RDKit is not a dependency of the package. Molecules are read with
``sanitize=False`` so that bonds keep the types written in the SMILES (no
aromaticity perception or kekulization), which is what the package's own
parser models.
"""

import json
from collections import Counter
from pathlib import Path

from rdkit import Chem

BOND_CODES = {"SINGLE": 1, "DOUBLE": 2, "TRIPLE": 3, "AROMATIC": 4}

MOLECULES = {
    "methane": "C",
    "formaldehyde": "C=O",
    "ethanol": "CCO",
    "acetylene": "C#C",
    "benzene": "c1ccccc1",
    "kekule_benzene": "C1=CC=CC=C1",
    "cyclohexane": "C1CCCCC1",
    "pyridine": "c1ccncc1",
    "pyrrole": "[nH]1cccc1",
    "thiophene": "c1ccsc1",
    "furan": "c1ccoc1",
    "naphthalene": "c1ccc2ccccc2c1",
    "biphenyl_explicit": "c1ccccc1-c1ccccc1",
    "biphenyl_implicit": "c1ccc(cc1)c1ccccc1",
    "aspirin": "CC(=O)Oc1ccccc1C(=O)O",
    "caffeine": "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "ibuprofen": "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "paracetamol": "CC(=O)Nc1ccc(O)cc1",
    "nicotine": "CN1CCC[C@H]1c1cccnc1",
    "metformin": "CN(C)C(=N)NC(=N)N",
    "penicillin_g": "CC1(C)S[C@@H]2[C@H](NC(=O)Cc3ccccc3)C(=O)N2[C@H]1C(=O)O",
    "diazepam": "CN1C(=O)CN=C(c2ccccc2)c2cc(Cl)ccc21",
    "fluoxetine": "CNCCC(Oc1ccc(cc1)C(F)(F)F)c1ccccc1",
    "omeprazole": "COc1ccc2[nH]c(nc2c1)S(=O)Cc1ncc(C)c(OC)c1C",
    "sildenafil": "CCCc1nn(C)c2c1nc([nH]c2=O)-c1cc(ccc1OCC)S(=O)(=O)N1CCN(C)CC1",
    "atorvastatin_core": "CC(C)c1c(C(=O)Nc2ccccc2)c(-c2ccccc2)c(-c2ccc(F)cc2)n1CC[C@@H](O)C[C@@H](O)CC(=O)O",
    "ciprofloxacin": "OC(=O)c1cn(C2CC2)c2cc(N3CCNCC3)c(F)cc2c1=O",
    "warfarin": "CC(=O)CC(c1ccccc1)c1c(O)c2ccccc2oc1=O",
    "serotonin": "NCCc1c[nH]c2ccc(O)cc12",
    "glucose_open": "OC[C@H](O)[C@@H](O)[C@H](O)[C@@H](O)C=O",
    "trans_difluoroethene": "F/C=C/F",
    "cis_dichloroethene": "Cl/C=C\\Cl",
    "ammonium": "[NH4+]",
    "quaternary_ammonium": "C[N+](C)(C)C",
    "nitro_methane": "C[N+](=O)[O-]",
    "acetate": "CC(=O)[O-]",
    "double_charge": "[O-2]",
    "carbanion_pair": "[CH2-][CH2+]",
    "chlorobromomethane": "ClCBr",
    "iodoform": "IC(I)I",
    "phosphate": "OP(=O)(O)O",
    "boronic_acid": "OB(O)c1ccccc1",
    "selenophene": "c1cc[se]c1",
    "cisplatin_fragment": "N[Pt](N)(Cl)Cl",
    "isotope_label": "[13CH3]O",
    "ring_percent": "C%10CCCCC%10",
    "bicyclo": "C1CC2CCC1C2",
    "cubane": "C12C3C4C1C5C2C3C45",
    "ring_bond_symbol": "C=1CCCCC=1",
    "adamantane": "C1C2CC3CC1CC(C2)C3",
}


def oracle(smiles):
    mol = Chem.MolFromSmiles(smiles, sanitize=False)
    hist = Counter(BOND_CODES[str(b.GetBondType())] for b in mol.GetBonds())
    return {
        "smiles": smiles,
        "atoms": mol.GetNumAtoms(),
        "bonds": mol.GetNumBonds(),
        "histogram": {str(code): hist.get(code, 0) for code in range(1, 5)},
    }


def main():
    out = {name: oracle(smi) for name, smi in MOLECULES.items()}
    path = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "smiles_oracle.json"
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(out)} molecules to {path}")


if __name__ == "__main__":
    main()
