"""Write the synthetic world to TSV/CSV files the command-line tool can read.

Run with ``python3 demos/write_synthetic_files.py [outdir]`` (default ``data/``).
"""

import sys
from pathlib import Path

from drugclip.dataio import write_code_table, write_drug_db, write_trials
from drugclip.synthetic import make_world

out = Path(sys.argv[1] if len(sys.argv) > 1 else "data")
out.mkdir(parents=True, exist_ok=True)
world = make_world(seed=0)
write_trials(out / "trials.tsv", world.trials)
write_drug_db(out / "drugs.tsv", world.drugs.values())
write_code_table(out / "icd.csv", world.ontology)
print(f"wrote {len(world.trials)} trials, {len(world.drugs)} drugs and "
      f"{len(world.ontology)} codes to {out}/")
