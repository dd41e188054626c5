import json
import re
from pathlib import Path

import pytest

from drugclip.contrastive import DrugClipModel
from drugclip.encoders import MpnnConfig
from drugclip.ontology import Ontology

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance = {}


@pytest.fixture(scope="session")
def smiles_oracle():
    return json.loads((FIXTURES / "smiles_oracle.json").read_text())


@pytest.fixture
def small_ontology():
    return Ontology(["G44.311", "D41.20", "C34.91", "E11.9", "J45"])


@pytest.fixture
def tiny_model(small_ontology):
    return DrugClipModel.initialize(small_ontology, MpnnConfig(depth=2, dim=8), seed=3)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        # parametrized cases of one criterion are merged: it passes only if all pass
        name, outcomes, details = _acceptance.setdefault(int(m.group(1)), (m.group(2), [], []))
        outcomes.append(report.outcome)
        if detail:
            details.append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        name, outcomes, details = _acceptance[n]
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        detail = "; ".join(details)
        line = f"[{verdict}] criterion {n}: {name.replace('_', ' ')}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
