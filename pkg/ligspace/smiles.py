"""SMILES parsing into molecular graphs and tokenization for the decoder.

Supported grammar: organic-subset atoms ``B C N O P S F Cl Br I``, aromatic
``b c n o p s``, bracket atoms with H count and charge, ring closures
(``1``-``9`` and ``%nn``), branches and the bond symbols ``- = # :``.
Stereo marks, isotopes and dot-disconnected fragments are rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum

from ligspace.errors import SmilesError

ELEMENTS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga",
    "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd",
    "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm",
    "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os",
    "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa",
    "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg",
    "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
)
ATOMIC_NUMBERS = {symbol: z for z, symbol in enumerate(ELEMENTS, start=1)}

ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_SUBSET = ("b", "c", "n", "o", "p", "s")
BRACKET_AROMATIC = ("se", "as", "b", "c", "n", "o", "p", "s")

_STANDARD_VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}
_MAX_VALENCE = {"B": 3, "C": 4, "N": 5, "O": 2, "P": 5, "S": 6, "F": 1, "Cl": 1, "Br": 1, "I": 3}

_BRACKET_RE = re.compile(
    r"^(?P<sym>se|as|[bcnops]|[A-Z][a-z]?)(?P<h>H\d?)?(?P<chg>\+\+|--|[+-]\d?)?$",
    re.ASCII,
)

_DIGITS = "0123456789"
SINGLE_CHAR_TOKENS = frozenset("BCNOPSFIbcnops()=#-:0123456789")


def _is_label(text: str) -> bool:
    return bool(text) and all(ch in _DIGITS for ch in text)


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


_BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE, ":": BondOrder.AROMATIC}


@dataclass(frozen=True)
class Atom:
    symbol: str
    charge: int = 0
    aromatic: bool = False
    h_count: int = 0
    bracket: bool = False

    @property
    def atomic_number(self) -> int:
        return ATOMIC_NUMBERS[self.symbol]


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder


@dataclass(frozen=True)
class MolGraph:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]

    def neighbors(self) -> list[list[tuple[int, BondOrder]]]:
        adj: list[list[tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return adj

    def degree(self, index: int) -> int:
        return sum(1 for b in self.bonds if index in (b.a, b.b))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

@dataclass
class _RawAtom:
    symbol: str
    charge: int
    aromatic: bool
    h_count: int
    bracket: bool
    offset: int


def _parse_bracket(text: str, start: int) -> tuple[_RawAtom, int]:
    end = text.find("]", start)
    if end < 0:
        raise SmilesError("unmatched '['", start)
    body = text[start + 1:end]
    match = _BRACKET_RE.match(body)
    if not match:
        raise SmilesError(f"unsupported bracket atom '[{body}]'", start)
    sym = match.group("sym")
    aromatic = sym in BRACKET_AROMATIC and sym.islower()
    symbol = sym.capitalize() if aromatic else sym
    if symbol not in ATOMIC_NUMBERS:
        raise SmilesError(f"unknown element '{sym}'", start + 1)
    h = match.group("h")
    h_count = 0 if h is None else (int(h[1:]) if len(h) > 1 else 1)
    chg = match.group("chg")
    if chg is None:
        charge = 0
    elif chg in ("++", "--"):
        charge = 2 if chg == "++" else -2
    else:
        magnitude = int(chg[1:]) if len(chg) > 1 else 1
        charge = magnitude if chg[0] == "+" else -magnitude
    return _RawAtom(symbol, charge, aromatic, h_count, True, start), end + 1


def _default_order(a: _RawAtom, b: _RawAtom) -> BondOrder:
    return BondOrder.AROMATIC if a.aromatic and b.aromatic else BondOrder.SINGLE


def parse_smiles(text: str) -> MolGraph:
    """Parse SMILES *text* into a :class:`MolGraph`.

    Aromatic atoms and bonds are kept as written (no kekulization).

    Raises:
        SmilesError: On unknown symbols, unmatched parentheses or ring
            digits, duplicate bonds, impossible valences; the error carries
            the byte offset
    """
    if not text:
        raise SmilesError("empty SMILES", 0)

    atoms: list[_RawAtom] = []
    bonds: dict[frozenset[int], tuple[int, int, BondOrder]] = {}
    branch_stack: list[tuple[int, int]] = []
    rings: dict[int, tuple[int, str | None, int]] = {}
    prev: int | None = None
    pending: tuple[str, int] | None = None
    last = "start"

    def add_bond(a: int, b: int, order: BondOrder, offset: int) -> None:
        if a == b:
            raise SmilesError("ring closure bonds an atom to itself", offset)
        key = frozenset((a, b))
        if key in bonds:
            raise SmilesError("duplicate bond", offset)
        bonds[key] = (a, b, order)

    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "(":
            if last not in ("atom", "ring", "close"):
                raise SmilesError("branch must follow an atom", i)
            branch_stack.append((prev, i))
            last = "open"
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesError("unmatched ')'", i)
            if last not in ("atom", "ring", "close"):
                raise SmilesError("empty branch or dangling bond", i)
            prev, _ = branch_stack.pop()
            last = "close"
            i += 1
        elif ch in _BOND_SYMBOLS:
            if last not in ("atom", "ring", "close", "open"):
                raise SmilesError(f"bond symbol '{ch}' must follow an atom", i)
            pending = (ch, i)
            last = "bond"
            i += 1
        elif ch in _DIGITS or ch == "%":
            if last not in ("atom", "ring", "bond"):
                raise SmilesError("ring closure must follow an atom", i)
            if ch == "%":
                digits = text[i + 1:i + 3]
                if len(digits) != 2 or not _is_label(digits):
                    raise SmilesError("'%' must be followed by two digits", i)
                label, width = int(digits), 3
            else:
                label, width = int(ch), 1
            bond_sym = pending[0] if pending else None
            if label in rings:
                open_atom, open_sym, open_offset = rings.pop(label)
                if open_sym and bond_sym and open_sym != bond_sym:
                    raise SmilesError(f"conflicting bond symbols on ring closure {label}", i)
                sym = open_sym or bond_sym
                order = _BOND_SYMBOLS[sym] if sym else _default_order(atoms[open_atom], atoms[prev])
                add_bond(open_atom, prev, order, i)
            else:
                rings[label] = (prev, bond_sym, i)
            pending = None
            last = "ring"
            i += width
        else:
            if ch == "[":
                raw, i_next = _parse_bracket(text, i)
            elif text.startswith(("Cl", "Br"), i):
                raw, i_next = _RawAtom(text[i:i + 2], 0, False, 0, False, i), i + 2
            elif ch in ORGANIC_SUBSET:
                raw, i_next = _RawAtom(ch, 0, False, 0, False, i), i + 1
            elif ch in AROMATIC_SUBSET:
                raw, i_next = _RawAtom(ch.upper(), 0, True, 0, False, i), i + 1
            else:
                raise SmilesError(f"unknown symbol '{ch}'", i)
            atoms.append(raw)
            index = len(atoms) - 1
            if prev is not None:
                order = _BOND_SYMBOLS[pending[0]] if pending else _default_order(atoms[prev], raw)
                add_bond(prev, index, order, raw.offset)
            prev = index
            pending = None
            last = "atom"
            i = i_next

    if pending is not None:
        raise SmilesError(f"dangling bond '{pending[0]}'", pending[1])
    if branch_stack:
        raise SmilesError("unmatched '('", branch_stack[-1][1])
    if rings:
        label, (_, _, offset) = min(rings.items(), key=lambda kv: kv[1][2])
        raise SmilesError(f"unmatched ring closure {label}", offset)

    bond_list = tuple(Bond(a, b, order) for a, b, order in bonds.values())
    valence = [0] * len(atoms)
    aromatic_valence = [0.0] * len(atoms)
    for bond in bond_list:
        counted = 1 if bond.order == BondOrder.AROMATIC else int(bond.order)
        weighted = 1.5 if bond.order == BondOrder.AROMATIC else float(bond.order)
        for idx in (bond.a, bond.b):
            valence[idx] += counted
            aromatic_valence[idx] += weighted

    final: list[Atom] = []
    for idx, raw in enumerate(atoms):
        _check_valence(raw, valence[idx])
        h = raw.h_count if raw.bracket else _implicit_h(raw, valence[idx], aromatic_valence[idx])
        final.append(Atom(raw.symbol, raw.charge, raw.aromatic, h, raw.bracket))
    return MolGraph(tuple(final), bond_list)


def _check_valence(raw: _RawAtom, bond_valence: int) -> None:
    base = _MAX_VALENCE.get(raw.symbol)
    if base is None:
        return
    if raw.symbol in ("N", "O", "S", "P"):
        limit = base + raw.charge
    elif raw.symbol == "B":
        limit = base - raw.charge
    else:
        limit = base - abs(raw.charge)
    used = bond_valence + (raw.h_count if raw.bracket else 0)
    if used > limit:
        raise SmilesError(f"valence {used} impossible for {raw.symbol}", raw.offset)


def _implicit_h(raw: _RawAtom, counted: int, weighted: float) -> int:
    if raw.aromatic:
        return max(0, 3 - counted) if raw.symbol == "C" else 0
    for valence in _STANDARD_VALENCES.get(raw.symbol, ()):
        if valence >= weighted:
            return int(valence - weighted)
    return 0


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

def tokenize_smiles(text: str) -> list[str]:
    """Split SMILES into tokens by greedy longest match.

    ``Cl``/``Br``, whole bracket expressions and ``%nn`` labels are single
    tokens; everything else is one character per token.

    Raises:
        SmilesError: For characters outside the token table
    """
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "[":
            end = text.find("]", i)
            if end < 0:
                raise SmilesError("unmatched '['", i)
            tokens.append(text[i:end + 1])
            i = end + 1
        elif ch == "%":
            label = text[i + 1:i + 3]
            if len(label) != 2 or not _is_label(label):
                raise SmilesError("'%' must be followed by two digits", i)
            tokens.append(text[i:i + 3])
            i += 3
        elif text.startswith(("Cl", "Br"), i):
            tokens.append(text[i:i + 2])
            i += 2
        elif ch in SINGLE_CHAR_TOKENS:
            tokens.append(ch)
            i += 1
        else:
            raise SmilesError(f"character '{ch}' outside token table", i)
    return tokens


def detokenize(tokens: list[str]) -> str:
    return "".join(tokens)


def is_aromatic_token(token: str) -> bool:
    if token in AROMATIC_SUBSET:
        return True
    return token.startswith("[") and len(token) > 1 and token[1].islower()


def has_aromatic_token(text: str) -> bool:
    try:
        return any(is_aromatic_token(t) for t in tokenize_smiles(text))
    except SmilesError:
        return False


def is_valid_smiles(text: str) -> bool:
    try:
        parse_smiles(text)
    except SmilesError:
        return False
    return True


__all__ = [
    "ELEMENTS",
    "ATOMIC_NUMBERS",
    "BondOrder",
    "Atom",
    "Bond",
    "MolGraph",
    "parse_smiles",
    "tokenize_smiles",
    "detokenize",
    "is_aromatic_token",
    "has_aromatic_token",
    "is_valid_smiles",
]
