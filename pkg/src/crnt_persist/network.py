"""Reaction networks: representation, DSL/JSON input and output, structural invariants.

A network is the triple (species, complexes, reactions) with a rate constant
attached to every reaction.  Complexes are stored as tuples of non-negative
integer stoichiometric coefficients, kept in lexicographic order so that
indices (and therefore every report) are stable for a given input.

DSL, one statement per line::

    # comment
    @species A B C          optional, fixes the species order
    @inactive               optional, allow species that appear in no complex
    A + B -> 2 C ; k=1.5
    C <-> 0 ; kf=2, kr=0.5

``0`` is the zero complex; an omitted coefficient means 1.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import (
    DuplicateRate,
    InactiveSpecies,
    NegativeDeficiency,
    NetworkError,
    NonPositiveRate,
    ParseError,
    TrivialReaction,
)
from .exact import exact_rank, nullspace, primitive_integer

SCHEMA_NETWORK = "crnt-persist/network@1"

# singular values below RANK_RTOL * sigma_max count as zero
RANK_RTOL = 1e-9

Complex = tuple[int, ...]


@dataclass(frozen=True)
class Reaction:
    source: int
    product: int
    rate: float

    def __post_init__(self):
        if self.source == self.product:
            raise TrivialReaction(f"reaction {self.source} -> {self.product} is trivial")
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise NonPositiveRate(f"rate constant must be positive and finite, got {self.rate!r}")


@dataclass(frozen=True)
class ReactionNetwork:
    """Immutable (S, C, R, K) quadruple.

    ``complexes`` may be in any order when built directly; networks built via
    :meth:`from_reactions` or the parsers use lexicographic order.
    """

    species: tuple[str, ...]
    complexes: tuple[Complex, ...]
    reactions: tuple[Reaction, ...]
    inactive_species_allowed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "complexes", tuple(tuple(int(v) for v in c) for c in self.complexes))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        self._validate()

    def _validate(self) -> None:
        n_sp = len(self.species)
        if len(set(self.species)) != n_sp:
            raise NetworkError("species names must be unique")
        if not self.reactions:
            raise NetworkError("a network needs at least one reaction")
        for c in self.complexes:
            if len(c) != n_sp:
                raise NetworkError(f"complex {c} has {len(c)} entries, expected {n_sp}")
            if any(v < 0 for v in c):
                raise NetworkError(f"complex {c} has a negative coefficient")
        if len(set(self.complexes)) != len(self.complexes):
            raise NetworkError("complexes must be pairwise distinct")
        used = set()
        pairs = set()
        for r in self.reactions:
            for idx in (r.source, r.product):
                if not 0 <= idx < len(self.complexes):
                    raise NetworkError(f"reaction refers to unknown complex {idx}")
            if (r.source, r.product) in pairs:
                raise DuplicateRate(f"reaction {r.source} -> {r.product} given twice")
            pairs.add((r.source, r.product))
            used.update((r.source, r.product))
        if len(used) != len(self.complexes):
            missing = sorted(set(range(len(self.complexes))) - used)
            raise NetworkError(f"complexes {missing} take part in no reaction")
        if not self.inactive_species_allowed:
            idle = self.inactive_species
            if idle:
                raise InactiveSpecies(
                    "species " + ", ".join(idle) + " appear in no complex "
                    "(set the inactive flag to allow this)"
                )

    # -- construction -----------------------------------------------------

    @classmethod
    def from_reactions(
        cls,
        species: Sequence[str],
        reactions: Iterable[tuple[Sequence[int], Sequence[int], float]],
        inactive_species_allowed: bool = False,
    ) -> "ReactionNetwork":
        """Build a canonical network from (source vector, product vector, rate) triples."""
        triples = [(tuple(int(v) for v in s), tuple(int(v) for v in p), float(k)) for s, p, k in reactions]
        for s, p, _ in triples:
            if s == p:
                raise TrivialReaction(f"trivial reaction {s} -> {p}")
        complexes = sorted({c for s, p, _ in triples for c in (s, p)})
        index = {c: i for i, c in enumerate(complexes)}
        rxns = tuple(Reaction(index[s], index[p], k) for s, p, k in triples)
        return cls(tuple(species), tuple(complexes), rxns, inactive_species_allowed)

    # -- array views ------------------------------------------------------

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_complexes(self) -> int:
        return len(self.complexes)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @cached_property
    def inactive_species(self) -> tuple[str, ...]:
        return tuple(
            name for i, name in enumerate(self.species) if all(c[i] == 0 for c in self.complexes)
        )

    @cached_property
    def complex_matrix(self) -> np.ndarray:
        """(n_complexes, n_species) integer matrix."""
        return _frozen(np.array(self.complexes, dtype=np.int64).reshape(self.n_complexes, self.n_species))

    @cached_property
    def source_index(self) -> np.ndarray:
        return _frozen(np.array([r.source for r in self.reactions], dtype=np.intp))

    @cached_property
    def product_index(self) -> np.ndarray:
        return _frozen(np.array([r.product for r in self.reactions], dtype=np.intp))

    @cached_property
    def source_matrix(self) -> np.ndarray:
        """(n_reactions, n_species) source complex vectors as floats."""
        return _frozen(self.complex_matrix[self.source_index].astype(float))

    @cached_property
    def product_matrix(self) -> np.ndarray:
        return _frozen(self.complex_matrix[self.product_index].astype(float))

    @cached_property
    def reaction_vectors(self) -> np.ndarray:
        """(n_reactions, n_species) rows y' - y."""
        return _frozen(self.product_matrix - self.source_matrix)

    @cached_property
    def rates(self) -> np.ndarray:
        return _frozen(np.array([r.rate for r in self.reactions], dtype=float))

    def complex_label(self, idx: int) -> str:
        return format_complex(self.complexes[idx], self.species)

    def reaction_label(self, k: int) -> str:
        r = self.reactions[k]
        return f"{self.complex_label(r.source)} -> {self.complex_label(r.product)}"

    def with_rates(self, rates: Sequence[float]) -> "ReactionNetwork":
        if len(rates) != self.n_reactions:
            raise ValueError("one rate per reaction required")
        rxns = tuple(Reaction(r.source, r.product, float(k)) for r, k in zip(self.reactions, rates))
        return ReactionNetwork(self.species, self.complexes, rxns, self.inactive_species_allowed)

    # -- serialization ----------------------------------------------------

    def to_dsl(self) -> str:
        lines = ["@species " + " ".join(self.species)]
        if self.inactive_species_allowed:
            lines.append("@inactive")
        for k, r in enumerate(self.reactions):
            lines.append(f"{self.reaction_label(k)} ; k={r.rate!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_NETWORK,
            "species": list(self.species),
            "complexes": [list(c) for c in self.complexes],
            "reactions": [{"source": r.source, "product": r.product, "rate": r.rate} for r in self.reactions],
            "inactive_species_allowed": self.inactive_species_allowed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ReactionNetwork":
        try:
            if doc.get("schema", SCHEMA_NETWORK) != SCHEMA_NETWORK:
                raise ParseError(f"unsupported schema {doc.get('schema')!r}")
            rxns = tuple(Reaction(int(r["source"]), int(r["product"]), float(r["rate"])) for r in doc["reactions"])
            return cls(
                tuple(doc["species"]),
                tuple(tuple(c) for c in doc["complexes"]),
                rxns,
                bool(doc.get("inactive_species_allowed", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed network document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ReactionNetwork":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
        return cls.from_dict(doc)

    @cached_property
    def digest(self) -> str:
        """sha256 of the canonical JSON document; identifies the network in reports."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def format_complex(coeffs: Sequence[int], species: Sequence[str]) -> str:
    terms = []
    for c, name in zip(coeffs, species):
        if c == 1:
            terms.append(name)
        elif c > 1:
            terms.append(f"{c} {name}")
    return " + ".join(terms) if terms else "0"


# -- DSL parser ------------------------------------------------------------

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_TERM = re.compile(r"\s*(?:(\d+)\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*\Z")


def parse_network(text: str, allow_inactive: bool = False) -> ReactionNetwork:
    """Parse DSL text into a validated :class:`ReactionNetwork`.

    Raises
    ------
    ParseError
        With 1-based line/column of the offending token.  The subclasses
        :class:`TrivialReaction`, :class:`DuplicateRate` and
        :class:`NonPositiveRate` single out the common mistakes.
    """
    species: list[str] = []
    declared = False
    inactive = allow_inactive
    raw: list[tuple[dict[str, int], dict[str, int], float, int]] = []
    seen: dict[tuple, int] = {}

    def add_species(name: str) -> None:
        if name not in species:
            species.append(name)

    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        stripped = body.strip()
        if stripped.startswith("@"):
            directive, _, rest = stripped.partition(" ")
            col = body.index("@") + 1
            if directive == "@species":
                if raw or declared:
                    raise ParseError("@species must come once, before any reaction", lineno, col)
                for name in rest.replace(",", " ").split():
                    if not _NAME.match(name):
                        raise ParseError(f"bad species name {name!r}", lineno, col)
                    if name in species:
                        raise ParseError(f"species {name!r} declared twice", lineno, col)
                    species.append(name)
                declared = True
            elif directive == "@inactive":
                inactive = True
            else:
                raise ParseError(f"unknown directive {directive}", lineno, col)
            continue

        lhs_rhs, semi, rate_part = body.partition(";")
        if "<->" in lhs_rhs:
            arrow, reversible = "<->", True
        elif "->" in lhs_rhs:
            arrow, reversible = "->", False
        else:
            raise ParseError("expected '->' or '<->'", lineno, len(body) - len(body.lstrip()) + 1)
        arrow_col = lhs_rhs.index(arrow)
        left, right = lhs_rhs[:arrow_col], lhs_rhs[arrow_col + len(arrow):]
        src = _parse_complex(left, lineno, 1)
        prod = _parse_complex(right, lineno, arrow_col + len(arrow) + 1)
        for name in list(src) + list(prod):
            if declared and name not in species:
                raise ParseError(f"species {name!r} not in @species list", lineno, body.find(name) + 1)
            add_species(name)
        if src == prod:
            raise TrivialReaction("source and product complexes are identical", lineno, 1)
        if not semi:
            raise ParseError("missing rate assignment ('; k=...')", lineno, len(body.rstrip()) + 1)
        rates = _parse_rates(rate_part, lineno, len(lhs_rhs) + 2)
        wanted = ("kf", "kr") if reversible else ("k",)
        unknown = set(rates) - set(wanted)
        if unknown:
            raise ParseError(f"unexpected rate key(s) {sorted(unknown)} for '{arrow}'", lineno, len(lhs_rhs) + 2)
        for key in wanted:
            if key not in rates:
                raise ParseError(f"missing rate '{key}'", lineno, len(lhs_rhs) + 2)
        pairs = [(src, prod, rates["kf" if reversible else "k"])]
        if reversible:
            pairs.append((prod, src, rates["kr"]))
        for s, p, k in pairs:
            key = (tuple(sorted(s.items())), tuple(sorted(p.items())))
            if key in seen:
                raise DuplicateRate(
                    f"reaction already defined on line {seen[key]}", lineno, len(lhs_rhs) + 2
                )
            seen[key] = lineno
            raw.append((s, p, k, lineno))

    if not raw:
        raise ParseError("no reactions found", 1, 1)

    def vec(terms: dict[str, int]) -> tuple[int, ...]:
        return tuple(terms.get(name, 0) for name in species)

    try:
        return ReactionNetwork.from_reactions(
            species, [(vec(s), vec(p), k) for s, p, k, _ in raw], inactive_species_allowed=inactive
        )
    except InactiveSpecies as exc:
        raise ParseError(str(exc), 1, 1) from exc


def _parse_complex(text: str, lineno: int, col0: int) -> dict[str, int]:
    if not text.strip():
        raise ParseError("empty complex (use 0 for the zero complex)", lineno, col0)
    if text.strip() == "0":
        return {}
    out: dict[str, int] = {}
    offset = 0
    for part in text.split("+"):
        col = col0 + offset + (len(part) - len(part.lstrip()))
        m = _TERM.match(part)
        if not m:
            raise ParseError(f"cannot read term {part.strip()!r}", lineno, col)
        coeff = int(m.group(1)) if m.group(1) else 1
        if coeff == 0:
            raise ParseError("zero coefficient", lineno, col)
        out[m.group(2)] = out.get(m.group(2), 0) + coeff
        offset += len(part) + 1
    return out


def _parse_rates(text: str, lineno: int, col0: int) -> dict[str, float]:
    rates: dict[str, float] = {}
    offset = 0
    for item in re.split(r"[,\s]+", text):
        if not item:
            continue
        col = col0 + text.find(item, offset)
        offset = text.find(item, offset) + len(item)
        key, eq, val = item.partition("=")
        if not eq or not key:
            raise ParseError(f"expected key=value, got {item!r}", lineno, col)
        if key in rates:
            raise DuplicateRate(f"rate {key!r} assigned twice", lineno, col)
        try:
            value = float(val)
        except ValueError:
            raise ParseError(f"not a number: {val!r}", lineno, col) from None
        if not (math.isfinite(value) and value > 0):
            raise NonPositiveRate(f"rate {key}={val} must be positive", lineno, col)
        rates[key] = value
    return rates


def load_network(path) -> ReactionNetwork:
    """Read a ``.json`` network document or DSL text from disk."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if str(path).endswith(".json"):
        return ReactionNetwork.from_json(text)
    return parse_network(text)


# -- structural invariants -------------------------------------------------


def reaction_graph(net: ReactionNetwork) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(net.n_complexes))
    g.add_edges_from((r.source, r.product) for r in net.reactions)
    return g


def linkage_classes(net: ReactionNetwork) -> list[list[int]]:
    """Connected components of the undirected reaction diagram, ordered by smallest member."""
    comps = [sorted(c) for c in nx.weakly_connected_components(reaction_graph(net))]
    return sorted(comps, key=lambda c: c[0])


def is_weakly_reversible(net: ReactionNetwork) -> bool:
    # strong components refine linkage classes; equal counts means every class is strongly connected
    g = reaction_graph(net)
    return nx.number_strongly_connected_components(g) == nx.number_weakly_connected_components(g)


@dataclass(frozen=True)
class StoichiometricSubspace:
    dimension: int
    basis: np.ndarray
    conservation_basis: np.ndarray
    singular_values: np.ndarray = field(repr=False)


def stoichiometric_subspace(net: ReactionNetwork) -> StoichiometricSubspace:
    """Dimension and orthonormal bases of S = span{y' - y} and of its orthogonal complement."""
    gamma = np.asarray(net.reaction_vectors, dtype=float)
    _, sv, vt = np.linalg.svd(gamma, full_matrices=True)
    s = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
    return StoichiometricSubspace(s, _frozen(vt[:s].copy()), _frozen(vt[s:].copy()), _frozen(sv))


def exact_stoichiometric_rank(net: ReactionNetwork) -> int:
    return exact_rank(net.complex_matrix[net.product_index] - net.complex_matrix[net.source_index])


def integer_conservation_laws(net: ReactionNetwork) -> list[list[int]]:
    """Primitive integer basis of the orthogonal complement of S (exact arithmetic)."""
    gamma = (net.complex_matrix[net.product_index] - net.complex_matrix[net.source_index]).tolist()
    return [primitive_integer(v) for v in nullspace(gamma, net.n_species)]


def deficiency(net: ReactionNetwork) -> int:
    d = net.n_complexes - len(linkage_classes(net)) - stoichiometric_subspace(net).dimension
    if d < 0:
        raise NegativeDeficiency(f"n - l - s = {d} < 0")
    return d


@dataclass(frozen=True)
class StructuralSummary:
    n: int
    l: int  # noqa: E741
    s: int
    deficiency: int
    weakly_reversible: bool
    linkage_class_membership: tuple[int, ...]
    conservation_basis: tuple[tuple[float, ...], ...]
    integer_conservation_laws: tuple[tuple[int, ...], ...]
    exact_s: int

    def to_dict(self) -> dict:
        return {
            "n_complexes": self.n,
            "n_linkage_classes": self.l,
            "stoichiometric_dimension": self.s,
            "deficiency": self.deficiency,
            "weakly_reversible": self.weakly_reversible,
            "linkage_class_membership": list(self.linkage_class_membership),
            "conservation_basis": [list(v) for v in self.conservation_basis],
            "integer_conservation_laws": [list(v) for v in self.integer_conservation_laws],
            "exact_stoichiometric_dimension": self.exact_s,
        }


def structural_summary(net: ReactionNetwork) -> StructuralSummary:
    classes = linkage_classes(net)
    membership = [0] * net.n_complexes
    for ci, members in enumerate(classes):
        for m in members:
            membership[m] = ci
    sub = stoichiometric_subspace(net)
    n, l, s = net.n_complexes, len(classes), sub.dimension
    exact_s = exact_stoichiometric_rank(net)
    if exact_s != s:
        # float and exact ranks disagree only for badly scaled input; trust the exact one
        s = exact_s
    if n - l - s < 0:
        raise NegativeDeficiency(f"n - l - s = {n - l - s} < 0")
    return StructuralSummary(
        n=n,
        l=l,
        s=s,
        deficiency=n - l - s,
        weakly_reversible=is_weakly_reversible(net),
        linkage_class_membership=tuple(membership),
        conservation_basis=tuple(tuple(float(x) for x in row) for row in sub.conservation_basis),
        integer_conservation_laws=tuple(tuple(v) for v in integer_conservation_laws(net)),
        exact_s=exact_s,
    )
