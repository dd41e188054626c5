"""ICD-10-CM codes and their prefix hierarchy."""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import InvalidCodeFormat, MalformedRow, UnknownCode

log = logging.getLogger(__name__)

CODE_PATTERN = re.compile(r"^[A-Z][0-9][0-9A-Z][0-9A-Z]{0,4}$")
CATEGORY_LENGTH = 3


@dataclass(frozen=True, order=True)
class DiseaseCode:
    canonical: str
    description: str = field(default="", compare=False)

    @property
    def display(self) -> str:
        c = self.canonical
        return c if len(c) <= CATEGORY_LENGTH else f"{c[:3]}.{c[3:]}"

    def __str__(self) -> str:
        return self.display


def normalize(text: str, description: str = "") -> DiseaseCode:
    """Normalize a raw code string such as ``"g44.311"`` to ``G44311``.

    A dot, if present, must sit right after the 3-character category.
    """
    if isinstance(text, DiseaseCode):
        return text
    raw = text.strip().upper()
    if "." in raw:
        head, _, tail = raw.partition(".")
        if len(head) != CATEGORY_LENGTH or "." in tail or not tail:
            raise InvalidCodeFormat(f"misplaced dot in ICD-10 code {text!r}")
        raw = head + tail
    if not CODE_PATTERN.match(raw):
        raise InvalidCodeFormat(f"not an ICD-10 code: {text!r}")
    return DiseaseCode(raw, description)


def ancestors(code) -> list:
    """The code's category and its immediate parent, shortest first.

    The category is the 3-character prefix; the parent is the code with its
    last character dropped. Both coincide for 4-character codes and a bare
    category has no ancestors. Intermediate prefixes between the two are not
    ancestors: G44.311 has exactly G44 and G44.31.

    >>> [c.display for c in ancestors(normalize("G44.311"))]
    ['G44', 'G44.31']
    >>> [c.display for c in ancestors(normalize("D41.20"))]
    ['D41', 'D41.2']
    """
    canonical = normalize(code).canonical
    if len(canonical) <= CATEGORY_LENGTH:
        return []
    chain = [canonical[:CATEGORY_LENGTH]]
    if len(canonical) > CATEGORY_LENGTH + 1:
        chain.append(canonical[:-1])
    return [DiseaseCode(c) for c in chain]


class Ontology:
    """An ancestor-closed set of codes with dense ids in sorted canonical order."""

    def __init__(self, codes: Iterable = ()):
        table: dict[str, DiseaseCode] = {}
        for code in codes:
            code = normalize(code)
            old = table.get(code.canonical)
            if old is None or (not old.description and code.description):
                table[code.canonical] = code
        # close under ancestors; parents have parents of their own
        pending = list(table)
        while pending:
            for anc in ancestors(pending.pop()):
                if anc.canonical not in table:
                    table[anc.canonical] = anc
                    pending.append(anc.canonical)
        self.codes = {c: table[c] for c in sorted(table)}
        self.index = {c: i for i, c in enumerate(self.codes)}
        self._by_id = list(self.codes.values())

    def __len__(self) -> int:
        return len(self.codes)

    def __contains__(self, code) -> bool:
        try:
            return normalize(code).canonical in self.codes
        except InvalidCodeFormat:
            return False

    def __iter__(self):
        return iter(self._by_id)

    def __repr__(self) -> str:
        return f"Ontology({len(self)} codes)"

    def __getitem__(self, code) -> DiseaseCode:
        canonical = normalize(code).canonical
        try:
            return self.codes[canonical]
        except KeyError:
            raise UnknownCode(f"code {canonical} is not in the ontology") from None

    def id_of(self, code) -> int:
        canonical = normalize(code).canonical
        try:
            return self.index[canonical]
        except KeyError:
            raise UnknownCode(f"code {canonical} is not in the ontology") from None

    def code_at(self, idx: int) -> DiseaseCode:
        return self._by_id[idx]

    def attention_ids(self, code) -> list:
        """Ids of the code's ancestors followed by the code itself."""
        canonical = normalize(code).canonical
        return [self.id_of(a) for a in ancestors(canonical)] + [self.id_of(canonical)]

    def extended(self, codes: Iterable) -> Ontology:
        """Copy of the ontology with any missing codes inserted.

        Used while loading noisy trial data; each inserted code is logged.
        """
        missing = sorted({normalize(c).canonical for c in codes} - set(self.codes))
        if not missing:
            return self
        for canonical in missing:
            log.warning("code %s not in code table; inserted with empty description",
                        DiseaseCode(canonical).display)
        return Ontology(list(self.codes.values()) + [DiseaseCode(c) for c in missing])


def load_code_table(path) -> Ontology:
    """Read a ``code,description`` CSV (RFC 4180 quoting) into an Ontology."""
    path = Path(path)
    codes = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return Ontology()
        if [h.strip() for h in header] != ["code", "description"]:
            raise MalformedRow(f"{path}: row 1: expected header 'code,description', got {header!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise MalformedRow(
                    f"{path}: row {reader.line_num}: expected 2 columns, got {len(row)}")
            try:
                codes.append(normalize(row[0], row[1]))
            except InvalidCodeFormat as exc:
                raise InvalidCodeFormat(f"{path}: row {reader.line_num}: {exc}") from None
    return Ontology(codes)
