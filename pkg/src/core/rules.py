"""
Atomic rules, the rule universe and the bit-vector encoding

A composite rule is a conjunction of atoms. Its encoding is the characteristic
vector of its conjunct set, so conjunction of rules becomes bitwise OR.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError, UniverseMismatchError
from ..utils import format_number, sha256_bytes

if TYPE_CHECKING:
    from .cohort import Cohort, Schema


DEFAULT_QUANTILES: Tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))
IDENTITY_TEXT = "TRUE (no filtering)"


class PredicateKind(str, Enum):
    LE = "le"
    GT = "gt"
    EQ = "eq"


@dataclass(frozen=True)
class AtomicRule:
    """A boolean predicate over one record field"""
    id: int
    field_name: str
    kind: PredicateKind
    threshold: Optional[float] = None
    level: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind is PredicateKind.EQ:
            if self.level is None:
                raise ValueError(f"Category atom {self.id} needs a level")
        else:
            if self.threshold is None or not np.isfinite(self.threshold):
                raise ValueError(f"Numeric atom {self.id} needs a finite threshold")

    @property
    def is_categorical(self) -> bool:
        return self.kind is PredicateKind.EQ

    @property
    def parameter(self) -> str:
        if self.kind is PredicateKind.EQ:
            return str(self.level)
        return repr(float(self.threshold))  # type: ignore[arg-type]

    def describe(self) -> str:
        if self.kind is PredicateKind.EQ:
            return f"{self.field_name} = {self.level}"
        op = "<=" if self.kind is PredicateKind.LE else ">"
        return f"{self.field_name} {op} {format_number(self.threshold)}"


def numeric_le(id: int, field_name: str, threshold: float) -> AtomicRule:
    return AtomicRule(id, field_name, PredicateKind.LE, threshold=float(threshold))


def numeric_gt(id: int, field_name: str, threshold: float) -> AtomicRule:
    return AtomicRule(id, field_name, PredicateKind.GT, threshold=float(threshold))


def category_eq(id: int, field_name: str, level: str) -> AtomicRule:
    return AtomicRule(id, field_name, PredicateKind.EQ, level=str(level))


@dataclass(frozen=True)
class RuleUniverse:
    """Ordered, finite set of atoms; atom ids equal their positions"""
    atoms: Tuple[AtomicRule, ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise ValueError("A rule universe needs at least one atom")
        for position, atom in enumerate(self.atoms):
            if atom.id != position:
                raise ValueError(f"Atom id {atom.id} does not match its position {position}")

    @property
    def n(self) -> int:
        return len(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __getitem__(self, index: int) -> AtomicRule:
        return self.atoms[index]

    def find(self, field_name: str, level: Optional[str] = None,
             kind: Optional[PredicateKind] = None) -> List[AtomicRule]:
        """Atoms on a field, optionally narrowed to a level or predicate kind"""
        return [
            a for a in self.atoms
            if a.field_name == field_name
            and (level is None or a.level == level)
            and (kind is None or a.kind is kind)
        ]

    def categorical_groups(self) -> List[List[int]]:
        """Atom ids of category atoms, grouped by field in universe order"""
        groups: List[List[int]] = []
        seen = {}
        for atom in self.atoms:
            if not atom.is_categorical:
                continue
            if atom.field_name not in seen:
                seen[atom.field_name] = len(groups)
                groups.append([])
            groups[seen[atom.field_name]].append(atom.id)
        return groups

    def ids_from_labels(self, labels: Iterable[str]) -> List[int]:
        """Resolve 'Field=level' or exact atom descriptions to atom ids"""
        by_text = {a.describe(): a.id for a in self.atoms}
        ids = []
        for label in labels:
            key = label.strip()
            if "=" in key and "<=" not in key and " = " not in key:
                field, level = key.split("=", 1)
                key = f"{field.strip()} = {level.strip()}"
            if key not in by_text:
                raise UniverseMismatchError(f"No atom matches '{label}'")
            ids.append(by_text[key])
        return sorted(ids)


@dataclass(frozen=True)
class BitRule:
    """Packed characteristic vector: bit i set iff atom i is a conjunct"""
    value: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("Bit rules need a positive length")
        if self.value < 0 or self.value >> self.n:
            raise UniverseMismatchError(f"Value {self.value} does not fit in {self.n} bits")

    @classmethod
    def identity(cls, n: int) -> "BitRule":
        return cls(0, n)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "BitRule":
        value = 0
        for i, b in enumerate(bits):
            if b:
                value |= 1 << i
        return cls(value, len(bits))

    @classmethod
    def from_string(cls, text: str) -> "BitRule":
        return cls.from_bits([1 if ch == "1" else 0 for ch in text.strip()])

    @property
    def bits(self) -> Tuple[int, ...]:
        return tuple((self.value >> i) & 1 for i in range(self.n))

    @property
    def conjuncts(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n) if (self.value >> i) & 1)

    @property
    def is_identity(self) -> bool:
        return self.value == 0

    def popcount(self) -> int:
        return bin(self.value).count("1")

    def to_array(self) -> np.ndarray:
        return np.fromiter(self.bits, dtype=np.uint8, count=self.n)

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def __or__(self, other: "BitRule") -> "BitRule":
        return compose(self, other)


def _check_lengths(r1: BitRule, r2: BitRule) -> None:
    if r1.n != r2.n:
        raise UniverseMismatchError(f"Bit rules of length {r1.n} and {r2.n} cannot be combined")


def encode(conjuncts: Iterable[int], universe: Union[RuleUniverse, int]) -> BitRule:
    """Characteristic vector of a set of atom ids"""
    n = universe if isinstance(universe, int) else universe.n
    value = 0
    for atom_id in conjuncts:
        if not 0 <= atom_id < n:
            raise UniverseMismatchError(f"Atom id {atom_id} outside universe of size {n}")
        value |= 1 << atom_id
    return BitRule(value, n)


def compose(r1: BitRule, r2: BitRule) -> BitRule:
    """Conjunction of two rules: bitwise OR of their encodings"""
    _check_lengths(r1, r2)
    return BitRule(r1.value | r2.value, r1.n)


def hamming(r1: BitRule, r2: BitRule) -> int:
    _check_lengths(r1, r2)
    return bin(r1.value ^ r2.value).count("1")


def decode(rule: BitRule, universe: RuleUniverse) -> str:
    """Human-readable conjunction, atoms in id order"""
    if rule.n != universe.n:
        raise UniverseMismatchError(f"Rule length {rule.n} does not match universe size {universe.n}")
    if rule.is_identity:
        return IDENTITY_TEXT
    return " AND ".join(universe.atoms[i].describe() for i in rule.conjuncts)


def bit_matrix(rules: Sequence[BitRule], n: int) -> np.ndarray:
    """Stack bit rules into a (len(rules), n) uint8 matrix"""
    out = np.zeros((len(rules), n), dtype=np.uint8)
    for row, rule in enumerate(rules):
        if rule.n != n:
            raise UniverseMismatchError(f"Rule length {rule.n} does not match {n}")
        out[row] = rule.to_array()
    return out


def subset_matrix(start: int, stop: int, n: int) -> np.ndarray:
    """Bit matrix of the subsets with integer codes in [start, stop)"""
    codes = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n, dtype=np.int64)
    return ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


# Universe construction and serialisation

def build_universe(schema: "Schema", cohort: Optional["Cohort"] = None,
                   quantiles: Optional[Sequence[float]] = DEFAULT_QUANTILES,
                   include_numeric: bool = True) -> RuleUniverse:
    """Categorical atoms by field in schema order, then numeric atoms on a quantile grid

    Thresholds come from the observed values of ``cohort`` when given, otherwise
    from the declared [min, max] range of each numeric field.
    """
    atoms: List[AtomicRule] = []
    for field in schema.categorical_fields:
        for level in field.levels:
            atoms.append(category_eq(len(atoms), field.name, level))

    if include_numeric and quantiles:
        for field in schema.numeric_fields:
            for threshold in numeric_grid(schema, field.name, cohort, quantiles):
                atoms.append(numeric_le(len(atoms), field.name, threshold))
                atoms.append(numeric_gt(len(atoms), field.name, threshold))

    return RuleUniverse(tuple(atoms))


def numeric_grid(schema: "Schema", field_name: str, cohort: Optional["Cohort"],
                 quantiles: Sequence[float]) -> List[float]:
    """Distinct ascending thresholds for one numeric field"""
    if cohort is not None:
        values = cohort.numeric_column(field_name)
        values = values[np.isfinite(values)]
    else:
        values = np.array([])
    if values.size:
        grid = np.quantile(values, list(quantiles))
    else:
        field = schema.numeric_field(field_name)
        grid = field.minimum + np.asarray(list(quantiles)) * (field.maximum - field.minimum)
    return sorted({float(t) for t in grid})


UNIVERSE_HEADER = "# id\tfield\tkind\tparameter"


def universe_to_text(universe: RuleUniverse) -> str:
    lines = [UNIVERSE_HEADER]
    for atom in universe.atoms:
        lines.append(f"{atom.id}\t{atom.field_name}\t{atom.kind.value}\t{atom.parameter}")
    return "\n".join(lines) + "\n"


def write_universe(universe: RuleUniverse, path: Union[str, Path]) -> None:
    """One atom per line: id, field, predicate kind, parameter"""
    with open(path, "w", encoding="utf-8") as f:
        f.write(universe_to_text(universe))


def read_universe(path: Union[str, Path]) -> RuleUniverse:
    atoms: List[AtomicRule] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"Malformed universe line {line_no} in {path}", detail=line)
            atom_id, field_name, kind, parameter = parts
            kind_enum = PredicateKind(kind)
            if kind_enum is PredicateKind.EQ:
                atoms.append(AtomicRule(int(atom_id), field_name, kind_enum, level=parameter))
            else:
                atoms.append(AtomicRule(int(atom_id), field_name, kind_enum, threshold=float(parameter)))
    return RuleUniverse(tuple(atoms))


def universe_hash(universe: RuleUniverse) -> str:
    return sha256_bytes(universe_to_text(universe).encode("utf-8"))
