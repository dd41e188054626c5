"""SMILES parsing into typed molecular graphs.

Only heavy atoms (and explicit bracket hydrogens) become nodes. Bonds carry
an integer code: 1 single, 2 double, 3 triple, 4 aromatic. Code 0 means "no
bond" and never appears in a bond list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DuplicateBond,
    EmptyInput,
    InvalidBondCode,
    MultiFragment,
    RingBondConflict,
    UnbalancedParen,
    UnclosedRing,
    UnknownToken,
)

ELEMENT_SLOTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I", "H", "other")
CHARGE_RANGE = (-2, 2)
MAX_DEGREE = 5
N_ATOM_FEATURES = len(ELEMENT_SLOTS) + 1 + 5 + (MAX_DEGREE + 1)
N_BOND_FEATURES = 4

BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, ":": 4}

_ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "I"}
_ORGANIC_TWO = {"Cl", "Br"}
_AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}
_AROMATIC_BRACKET = {"b", "c", "n", "o", "p", "s", "se", "as", "te"}

# fmt: off
_PERIODIC = {
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al",
    "Si", "P", "S", "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe",
    "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr",
    "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm",
    "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
    "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf",
    "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
}
# fmt: on


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    degree: int = 0


@dataclass(frozen=True)
class Bond:
    begin: int
    end: int
    code: int

    @property
    def endpoints(self) -> frozenset:
        return frozenset((self.begin, self.end))


@dataclass(frozen=True)
class MolGraph:
    atoms: tuple
    bonds: tuple
    source: str = ""

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def bond_histogram(self) -> dict:
        """Count of bonds per code, always with keys 1..4."""
        hist = {code: 0 for code in range(1, 5)}
        for bond in self.bonds:
            hist[bond.code] += 1
        return hist

    def neighbors(self, index: int) -> list:
        out = []
        for bond in self.bonds:
            if bond.begin == index:
                out.append(bond.end)
            elif bond.end == index:
                out.append(bond.begin)
        return out

    def relabel(self, perm) -> MolGraph:
        """Return the same graph with atom ``i`` moved to position ``perm[i]``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.n_atoms)):
            raise ValueError("perm must be a permutation of the atom indices")
        atoms = [None] * self.n_atoms
        for old, new in enumerate(perm):
            atoms[new] = self.atoms[old]
        bonds = tuple(Bond(perm[b.begin], perm[b.end], b.code) for b in self.bonds)
        return MolGraph(tuple(atoms), bonds, self.source)


def _element_slot(symbol: str) -> str:
    return symbol if symbol in ELEMENT_SLOTS else "other"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[dict] = []
        self.bonds: list[list[int]] = []
        self.pairs: set = set()
        self.prev: int | None = None
        self.pending: str | None = None
        self.branches: list[tuple[int, int]] = []
        self.rings: dict[int, tuple[int, str | None]] = {}

    def fail(self, cls, message):
        raise cls(f"{message} at position {self.pos} in {self.text!r}")

    def peek(self, offset=0):
        i = self.pos + offset
        return self.text[i] if i < len(self.text) else ""

    def parse(self) -> MolGraph:
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch == "C" and self.peek(1) == "l" or ch == "B" and self.peek(1) == "r":
                self.add_atom(ch + self.peek(1), aromatic=False)
                self.pos += 2
            elif ch in _ORGANIC:
                self.add_atom(ch, aromatic=False)
                self.pos += 1
            elif ch in _AROMATIC_ORGANIC:
                self.add_atom(ch.upper(), aromatic=True)
                self.pos += 1
            elif ch == "[":
                self.bracket_atom()
            elif ch in BOND_SYMBOLS:
                if self.prev is None:
                    self.fail(UnknownToken, f"bond {ch!r} without a preceding atom")
                if self.pending is not None:
                    self.fail(UnknownToken, f"consecutive bond symbols {self.pending!r}{ch!r}")
                self.pending = ch
                self.pos += 1
            elif ch in "/\\":
                # directional single bond; stereo is not modelled
                self.pos += 1
            elif ch == "(":
                if self.prev is None or self.pending is not None:
                    self.fail(UnknownToken, "branch must follow an atom")
                self.branches.append((self.prev, len(self.atoms)))
                self.pos += 1
            elif ch == ")":
                if not self.branches:
                    self.fail(UnbalancedParen, "unmatched ')'")
                if self.pending is not None:
                    self.fail(UnknownToken, "dangling bond before ')'")
                anchor, n_before = self.branches.pop()
                if len(self.atoms) == n_before:
                    self.fail(UnknownToken, "empty branch")
                self.prev = anchor
                self.pos += 1
            elif ch.isdigit():
                self.ring_closure(int(ch))
                self.pos += 1
            elif ch == "%":
                digits = text[self.pos + 1:self.pos + 3]
                if len(digits) != 2 or not digits.isdigit():
                    self.fail(UnknownToken, "'%' must be followed by two digits")
                self.ring_closure(int(digits))
                self.pos += 3
            elif ch == ".":
                self.fail(MultiFragment, "disconnected fragments are not supported")
            else:
                self.fail(UnknownToken, f"unexpected character {ch!r}")

        if self.rings:
            opened = ", ".join(str(n) for n in sorted(self.rings))
            raise UnclosedRing(f"ring bond(s) {opened} never closed in {text!r}")
        if self.branches:
            raise UnbalancedParen(f"unclosed '(' in {text!r}")
        if self.pending is not None:
            raise UnknownToken(f"dangling bond {self.pending!r} at end of {text!r}")

        degree = [0] * len(self.atoms)
        for i, j, _ in self.bonds:
            degree[i] += 1
            degree[j] += 1
        atoms = tuple(
            Atom(a["element"], a["aromatic"], a["charge"], degree[k])
            for k, a in enumerate(self.atoms)
        )
        bonds = tuple(Bond(i, j, code) for i, j, code in self.bonds)
        return MolGraph(atoms, bonds, text)

    def bond_code(self, symbol, i, j) -> int:
        if symbol is not None:
            return BOND_SYMBOLS[symbol]
        if self.atoms[i]["aromatic"] and self.atoms[j]["aromatic"]:
            return 4
        return 1

    def connect(self, i, j, symbol):
        if i == j:
            self.fail(DuplicateBond, "ring closure bonds an atom to itself")
        key = (min(i, j), max(i, j))
        if key in self.pairs:
            self.fail(DuplicateBond, f"atoms {key[0]} and {key[1]} bonded twice")
        self.pairs.add(key)
        self.bonds.append([key[0], key[1], self.bond_code(symbol, i, j)])

    def add_atom(self, symbol, aromatic, charge=0):
        lo, hi = CHARGE_RANGE
        self.atoms.append({
            "element": _element_slot(symbol),
            "aromatic": aromatic,
            "charge": max(lo, min(hi, charge)),
        })
        new = len(self.atoms) - 1
        if self.prev is not None:
            self.connect(self.prev, new, self.pending)
        self.prev = new
        self.pending = None

    def ring_closure(self, number):
        if self.prev is None:
            self.fail(UnknownToken, "ring bond without a preceding atom")
        if number in self.rings:
            start, symbol = self.rings.pop(number)
            if symbol is not None and self.pending is not None and symbol != self.pending:
                self.fail(RingBondConflict, f"ring {number} bond given as {symbol!r} and {self.pending!r}")
            self.connect(start, self.prev, self.pending or symbol)
        else:
            self.rings[number] = (self.prev, self.pending)
        self.pending = None

    def bracket_atom(self):
        text = self.text
        end = text.find("]", self.pos)
        if end < 0:
            self.fail(UnknownToken, "unterminated '['")
        body = text[self.pos + 1:end]
        k = 0
        while k < len(body) and body[k].isdigit():  # isotope
            k += 1

        symbol, aromatic = None, False
        two, one = body[k:k + 2], body[k:k + 1]
        if one.isupper():
            if two in _PERIODIC and len(two) == 2 and two[1].islower():
                symbol = two
            elif one in _PERIODIC:
                symbol = one
        elif one.islower():
            if two in _AROMATIC_BRACKET and len(two) == 2:
                symbol, aromatic = two.capitalize(), True
            elif one in _AROMATIC_BRACKET:
                symbol, aromatic = one.upper(), True
        if symbol is None:
            self.fail(UnknownToken, f"unknown bracket atom [{body}]")
        k += len(symbol)

        if body[k:k + 1] == "@":
            while body[k:k + 1] == "@":
                k += 1
            if body[k:k + 2] in ("TH", "AL", "SP", "TB", "OH"):
                k += 2
                while k < len(body) and body[k].isdigit():
                    k += 1
        if body[k:k + 1] == "H":
            k += 1
            while k < len(body) and body[k].isdigit():
                k += 1

        charge = 0
        if body[k:k + 1] in ("+", "-"):
            sign = 1 if body[k] == "+" else -1
            k += 1
            digits = ""
            while k < len(body) and body[k].isdigit():
                digits += body[k]
                k += 1
            if digits:
                charge = sign * int(digits)
            else:
                count = 1
                while body[k:k + 1] == body[k - 1:k] and body[k:k + 1] in ("+", "-"):
                    count += 1
                    k += 1
                charge = sign * count
        if body[k:k + 1] == ":":
            k += 1
            while k < len(body) and body[k].isdigit():
                k += 1
        if k != len(body):
            self.fail(UnknownToken, f"cannot parse bracket atom [{body}]")

        self.add_atom(symbol, aromatic, charge)
        self.pos = end + 1


def parse_smiles(text: str) -> MolGraph:
    """Parse a single-fragment SMILES string.

    Atoms are numbered in reading order. Implicit hydrogens are not added as
    nodes and stereo markers are skipped.

    Raises:
        EmptyInput, UnknownToken, UnclosedRing, UnbalancedParen,
        MultiFragment: on malformed input.
    """
    if not text:
        raise EmptyInput("empty SMILES string")
    if not text.isascii():
        raise UnknownToken(f"non-ASCII character in {text!r}")
    return _Parser(text).parse()


def atom_features(atom: Atom) -> np.ndarray:
    """One-hot atom featurization of length 24.

    Layout: element (12) | aromatic flag (1) | formal charge -2..+2 (5) |
    degree 0..5, capped (6).
    """
    vec = np.zeros(N_ATOM_FEATURES)
    vec[ELEMENT_SLOTS.index(_element_slot(atom.element))] = 1.0
    offset = len(ELEMENT_SLOTS)
    vec[offset] = 1.0 if atom.aromatic else 0.0
    offset += 1
    lo, hi = CHARGE_RANGE
    vec[offset + max(lo, min(hi, atom.formal_charge)) - lo] = 1.0
    offset += hi - lo + 1
    vec[offset + min(atom.degree, MAX_DEGREE)] = 1.0
    return vec


def bond_feature(code: int) -> np.ndarray:
    if code not in (1, 2, 3, 4):
        raise InvalidBondCode(f"bond code must be 1..4, got {code!r}")
    vec = np.zeros(N_BOND_FEATURES)
    vec[code - 1] = 1.0
    return vec


def feature_schema() -> str:
    """Text description of the featurization, hashed into checkpoints."""
    return (
        f"atoms:elements={','.join(ELEMENT_SLOTS)};aromatic;"
        f"charge={CHARGE_RANGE[0]}..{CHARGE_RANGE[1]};degree=0..{MAX_DEGREE}|"
        f"bonds:onehot=1,2,3,4"
    )
