"""
Bit-exact linear algebra over GF(2).

Vectors are packed into Python ints with coordinate x_1 in bit 0. A subspace
keeps its basis in reduced row-echelon form where the pivot of a row is its
lowest set bit and pivots ascend, so two subspaces are equal exactly when
their bases are equal.

Provides:
- F2Vector / F2Matrix containers and canonicalization (RREF + rank)
- Subspace / AffineSubspace / DualBasis with membership and enumeration
- dual spaces, sums, intersections, coset maps and the independence test
- uniform random subspaces (sequential rejection of dependent vectors)
- the subspace-intersection bound and the affine avoidance dichotomy
- Gaussian-binomial counting and canonical enumeration of all subspaces
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from larclab.core.errors import (
    CapExceededError,
    DimensionMismatchError,
    InvalidDualBasisError,
    ParameterError,
    PropertyViolationError,
)
from larclab.utils.rng import RandomSource, as_rng, random_bits
from larclab.utils.serialization import bits_to_hex, hex_to_bits

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATE_CAP = 26

_enumerate_cap = DEFAULT_ENUMERATE_CAP

VectorLike = Union['F2Vector', int]


def parity(x: int) -> int:
    return bin(x).count('1') & 1


def _bits(x: VectorLike) -> int:
    return x.bits if isinstance(x, F2Vector) else int(x)


def _check_width(bits: int, n: int, what: str = "vector"):
    if bits < 0 or bits >> n:
        raise DimensionMismatchError(n, bits.bit_length(), what)


@dataclass(frozen=True)
class F2Vector:
    """A vector of F_2^n packed into an int."""
    ambient_dim: int
    bits: int = 0

    def __post_init__(self):
        if self.ambient_dim < 0:
            raise ParameterError("ambient dimension must be non-negative")
        _check_width(self.bits, self.ambient_dim)

    @classmethod
    def from_string(cls, text: str) -> 'F2Vector':
        """Parse '1100' with the first character as x_1."""
        text = text.strip()
        if any(ch not in '01' for ch in text):
            raise ValueError(f"not a bit string: {text!r}")
        bits = sum(1 << i for i, ch in enumerate(text) if ch == '1')
        return cls(len(text), bits)

    @classmethod
    def from_hex(cls, text: str, n: int) -> 'F2Vector':
        return cls(n, hex_to_bits(text, n))

    def to_string(self) -> str:
        return ''.join('1' if (self.bits >> i) & 1 else '0' for i in range(self.ambient_dim))

    def to_hex(self) -> str:
        return bits_to_hex(self.bits, self.ambient_dim)

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.ambient_dim:
            raise IndexError(i)
        return (self.bits >> i) & 1

    def __len__(self) -> int:
        return self.ambient_dim

    def __xor__(self, other: 'F2Vector') -> 'F2Vector':
        if other.ambient_dim != self.ambient_dim:
            raise DimensionMismatchError(self.ambient_dim, other.ambient_dim)
        return F2Vector(self.ambient_dim, self.bits ^ other.bits)

    __add__ = __xor__

    def dot(self, other: VectorLike) -> int:
        """The standard bilinear form: parity of the AND."""
        if isinstance(other, F2Vector) and other.ambient_dim != self.ambient_dim:
            raise DimensionMismatchError(self.ambient_dim, other.ambient_dim)
        return parity(self.bits & _bits(other))

    @property
    def weight(self) -> int:
        return bin(self.bits).count('1')

    def __str__(self) -> str:
        return self.to_string()


@dataclass(frozen=True)
class F2Matrix:
    """Ordered rows sharing one ambient dimension."""
    ambient_dim: int
    rows: Tuple[int, ...] = ()

    def __post_init__(self):
        for row in self.rows:
            _check_width(row, self.ambient_dim, "matrix row")

    @classmethod
    def from_vectors(cls, vectors: Sequence[VectorLike], ambient_dim: Optional[int] = None) -> 'F2Matrix':
        dims = {v.ambient_dim for v in vectors if isinstance(v, F2Vector)}
        if ambient_dim is None:
            if len(dims) != 1:
                raise ParameterError("ambient dimension is ambiguous; pass ambient_dim")
            ambient_dim = dims.pop()
        for d in dims:
            if d != ambient_dim:
                raise DimensionMismatchError(ambient_dim, d, "matrix row")
        return cls(ambient_dim, tuple(_bits(v) for v in vectors))

    @classmethod
    def from_strings(cls, texts: Sequence[str]) -> 'F2Matrix':
        return cls.from_vectors([F2Vector.from_string(t) for t in texts])

    def vectors(self) -> List[F2Vector]:
        return [F2Vector(self.ambient_dim, r) for r in self.rows]

    def to_strings(self) -> List[str]:
        return [v.to_string() for v in self.vectors()]

    def __len__(self) -> int:
        return len(self.rows)


# --- elimination kernels -------------------------------------------------------

def _reduce(x: int, pivots: Dict[int, int]) -> int:
    """Clear every pivot bit of x using an RREF pivot table {pivot bit: row}."""
    for p, row in pivots.items():
        if x & p:
            x ^= row
    return x


def _insert(x: int, pivots: Dict[int, int]) -> bool:
    """Add x to an RREF pivot table; False when x is already in the span."""
    x = _reduce(x, pivots)
    if not x:
        return False
    p = x & -x
    for q, row in pivots.items():
        if row & p:
            pivots[q] = row ^ x
    pivots[p] = x
    return True


def _rref(rows: Iterable[int]) -> Tuple[int, ...]:
    pivots: Dict[int, int] = {}
    for row in rows:
        _insert(row, pivots)
    return tuple(pivots[p] for p in sorted(pivots))


def _pivot_table(basis: Sequence[int]) -> Dict[int, int]:
    return {row & -row: row for row in basis}


def canonicalize(matrix: F2Matrix) -> Tuple[F2Matrix, int]:
    """RREF of the row space (pivots ascending, zero rows dropped) and its rank."""
    rows = _rref(matrix.rows)
    return F2Matrix(matrix.ambient_dim, rows), len(rows)


def rank(rows: Iterable[int]) -> int:
    return len(_rref(rows))


# --- subspaces -----------------------------------------------------------------

@dataclass(frozen=True)
class Subspace:
    """A linear subspace of F_2^n held by its canonical basis."""
    ambient_dim: int
    basis: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.ambient_dim < 0:
            raise ParameterError("ambient dimension must be non-negative")
        for row in self.basis:
            _check_width(row, self.ambient_dim, "basis vector")
        object.__setattr__(self, 'basis', _rref(self.basis))

    @classmethod
    def span(cls, n: int, vectors: Iterable[VectorLike]) -> 'Subspace':
        vectors = list(vectors)
        for v in vectors:
            if isinstance(v, F2Vector) and v.ambient_dim != n:
                raise DimensionMismatchError(n, v.ambient_dim, "spanning vector")
        return cls(n, tuple(_bits(v) for v in vectors))

    @classmethod
    def from_strings(cls, texts: Sequence[str], n: Optional[int] = None) -> 'Subspace':
        vectors = [F2Vector.from_string(t) for t in texts]
        if n is None:
            if not vectors:
                raise ParameterError("cannot infer n from an empty list")
            n = vectors[0].ambient_dim
        return cls.span(n, vectors)

    @classmethod
    def full(cls, n: int) -> 'Subspace':
        return cls(n, tuple(1 << i for i in range(n)))

    @classmethod
    def zero(cls, n: int) -> 'Subspace':
        return cls(n, ())

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.dim

    @property
    def size(self) -> int:
        return 1 << self.dim

    @property
    def basis_matrix(self) -> F2Matrix:
        return F2Matrix(self.ambient_dim, self.basis)

    def reduce(self, x: VectorLike) -> int:
        return _reduce(_bits(x), _pivot_table(self.basis))

    def contains(self, x: VectorLike) -> bool:
        if isinstance(x, F2Vector) and x.ambient_dim != self.ambient_dim:
            raise DimensionMismatchError(self.ambient_dim, x.ambient_dim)
        return self.reduce(x) == 0

    __contains__ = contains

    def elements(self, cap: Optional[int] = None) -> Iterator[int]:
        """All 2^dim elements in Gray-code order."""
        _check_enumeration(self.dim, cap)
        x = 0
        yield x
        for i in range(1, 1 << self.dim):
            x ^= self.basis[(i & -i).bit_length() - 1]
            yield x

    def element_array(self, cap: Optional[int] = None) -> np.ndarray:
        """Elements as an int64 array (ambient_dim <= 62)."""
        _check_enumeration(self.dim, cap)
        if self.ambient_dim > 62:
            raise CapExceededError("element_array ambient dimension", self.ambient_dim, 62)
        arr = np.zeros(1, dtype=np.int64)
        for row in self.basis:
            arr = np.concatenate([arr, arr ^ np.int64(row)])
        return arr

    def __add__(self, other: 'Subspace') -> 'Subspace':
        return subspace_sum(self, other)

    def __and__(self, other: 'Subspace') -> 'Subspace':
        return intersect(self, other)

    def to_strings(self) -> List[str]:
        return self.basis_matrix.to_strings()

    def to_json(self) -> Dict[str, Any]:
        return {"n": self.ambient_dim, "basis": [bits_to_hex(r, self.ambient_dim) for r in self.basis]}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'Subspace':
        n = int(data["n"])
        return cls(n, tuple(hex_to_bits(h, n) for h in data.get("basis", [])))

    def __repr__(self) -> str:
        return f"Subspace(n={self.ambient_dim}, basis={self.to_strings()})"


def configure_enumerate_cap(cap: int) -> int:
    """Set the largest subspace dimension enumerated when no cap is passed."""
    global _enumerate_cap
    if cap < 0:
        raise ParameterError(f"enumeration cap must be non-negative, got {cap}")
    _enumerate_cap = cap
    return _enumerate_cap


def get_enumerate_cap() -> int:
    return _enumerate_cap


def _check_enumeration(dim: int, cap: Optional[int]):
    if cap is None:
        cap = _enumerate_cap
    if dim > cap:
        raise CapExceededError("enumeration of 2^dim elements", dim, cap,
                               hint=f"raise caps.enumerate_dim to at least {dim}")


def _same_dim(S: Subspace, T: Subspace):
    if S.ambient_dim != T.ambient_dim:
        raise DimensionMismatchError(S.ambient_dim, T.ambient_dim, "subspace")


def dual_space(S: Subspace) -> Subspace:
    """{l : <l, x> = 0 for all x in S}; dim = n - dim(S)."""
    pivots = _pivot_table(S.basis)
    pivot_mask = 0
    for p in pivots:
        pivot_mask |= p
    lines = []
    for j in range(S.ambient_dim):
        bit = 1 << j
        if bit & pivot_mask:
            continue
        v = bit
        for p, row in pivots.items():
            if row & bit:
                v |= p
        lines.append(v)
    return Subspace(S.ambient_dim, tuple(lines))


def subspace_sum(S: Subspace, T: Subspace) -> Subspace:
    _same_dim(S, T)
    return Subspace(S.ambient_dim, S.basis + T.basis)


def intersect(S: Subspace, T: Subspace) -> Subspace:
    _same_dim(S, T)
    return dual_space(subspace_sum(dual_space(S), dual_space(T)))


def member(x: VectorLike, space: Union[Subspace, 'AffineSubspace']) -> bool:
    return space.contains(x)


def enumerate_elements(space: Union[Subspace, 'AffineSubspace'],
                       cap: Optional[int] = None) -> Iterator[int]:
    return space.elements(cap)


def independent(S: Subspace, T: Subspace) -> bool:
    """Coset maps of S and T are independent, i.e. their duals meet only at 0."""
    _same_dim(S, T)
    dS, dT = dual_space(S), dual_space(T)
    return rank(dS.basis + dT.basis) == dS.dim + dT.dim


# --- affine subspaces ----------------------------------------------------------

@dataclass(frozen=True)
class AffineSubspace:
    """shift + space, with shift the lexicographically least coset element.

    Lexicographic order reads the vector as the string x_1 x_2 ... x_n; the
    least element is the one with every pivot bit cleared.
    """
    space: Subspace
    shift: int = 0

    def __post_init__(self):
        shift = _bits(self.shift)
        _check_width(shift, self.space.ambient_dim, "shift")
        object.__setattr__(self, 'shift', self.space.reduce(shift))

    @classmethod
    def linear(cls, space: Subspace) -> 'AffineSubspace':
        return cls(space, 0)

    @classmethod
    def from_constraints(cls, n: int, lines: Sequence[VectorLike],
                         values: Sequence[int]) -> Optional['AffineSubspace']:
        """{x : <l_i, x> = a_i for all i}, or None when the system is inconsistent."""
        if len(lines) != len(values):
            raise ParameterError("need one value per constraint line")
        pivots: Dict[int, Tuple[int, int]] = {}
        for line, value in zip(lines, values):
            line = _bits(line)
            _check_width(line, n, "constraint line")
            value &= 1
            for p, (row, val) in pivots.items():
                if line & p:
                    line ^= row
                    value ^= val
            if not line:
                if value:
                    return None
                continue
            p = line & -line
            for q, (row, val) in list(pivots.items()):
                if row & p:
                    pivots[q] = (row ^ line, val ^ value)
            pivots[p] = (line, value)
        shift = 0
        for p, (_, val) in pivots.items():
            if val:
                shift |= p
        space = dual_space(Subspace(n, tuple(row for row, _ in pivots.values())))
        return cls(space, shift)

    @property
    def ambient_dim(self) -> int:
        return self.space.ambient_dim

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def codim(self) -> int:
        return self.space.codim

    @property
    def size(self) -> int:
        return self.space.size

    @property
    def is_linear(self) -> bool:
        return self.shift == 0

    def contains(self, x: VectorLike) -> bool:
        if isinstance(x, F2Vector) and x.ambient_dim != self.ambient_dim:
            raise DimensionMismatchError(self.ambient_dim, x.ambient_dim)
        return self.space.reduce(_bits(x) ^ self.shift) == 0

    __contains__ = contains

    def elements(self, cap: Optional[int] = None) -> Iterator[int]:
        for x in self.space.elements(cap):
            yield x ^ self.shift

    def element_array(self, cap: Optional[int] = None) -> np.ndarray:
        return self.space.element_array(cap) ^ np.int64(self.shift)

    def constraints(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Canonical (lines, values) with <line_i, x> = value_i on this set."""
        lines = dual_space(self.space).basis
        return lines, tuple(parity(line & self.shift) for line in lines)

    def to_json(self) -> Dict[str, Any]:
        data = self.space.to_json()
        data["shift"] = bits_to_hex(self.shift, self.ambient_dim)
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'AffineSubspace':
        space = Subspace.from_json(data)
        return cls(space, hex_to_bits(data.get("shift", "00"), space.ambient_dim))

    def __repr__(self) -> str:
        shift = F2Vector(self.ambient_dim, self.shift).to_string()
        return f"AffineSubspace(shift={shift}, basis={self.space.to_strings()})"


def affine_intersection(V: AffineSubspace, W: AffineSubspace) -> Optional[AffineSubspace]:
    """Exact V ∩ W, or None when empty."""
    n = V.ambient_dim
    if W.ambient_dim != n:
        raise DimensionMismatchError(n, W.ambient_dim, "affine subspace")
    low = (1 << n) - 1
    # rows from V carry a copy of themselves above bit n, so the high half of a
    # reduced target is the V-part of its decomposition in V.space + W.space
    pivots: Dict[int, int] = {}
    tagged = [v | (v << n) for v in V.space.basis] + list(W.space.basis)
    for row in tagged:
        for p, prow in pivots.items():
            if row & p:
                row ^= prow
        if not row & low:
            continue
        p = row & -row
        for q, prow in list(pivots.items()):
            if prow & p:
                pivots[q] = prow ^ row
        pivots[p] = row
    target = V.shift ^ W.shift
    for p, prow in pivots.items():
        if target & p:
            target ^= prow
    if target & low:
        return None
    point = V.shift ^ (target >> n)
    return AffineSubspace(intersect(V.space, W.space), point)


# --- dual bases and coset maps -------------------------------------------------

def _validate_dual(S: Subspace, lines: Sequence[int]):
    if len(lines) != S.codim:
        raise InvalidDualBasisError(f"expected {S.codim} dual lines, got {len(lines)}")
    for line in lines:
        for row in S.basis:
            if parity(line & row):
                raise InvalidDualBasisError("a line is not orthogonal to the subspace")
    if rank(lines) != len(lines):
        raise InvalidDualBasisError("dual lines are linearly dependent")


@dataclass(frozen=True)
class DualBasis:
    """An ordered basis L of dual(for_space)."""
    for_space: Subspace
    lines: F2Matrix

    def __post_init__(self):
        if self.lines.ambient_dim != self.for_space.ambient_dim:
            raise DimensionMismatchError(self.for_space.ambient_dim, self.lines.ambient_dim, "dual basis")
        _validate_dual(self.for_space, self.lines.rows)

    @classmethod
    def canonical(cls, S: Subspace) -> 'DualBasis':
        return cls(S, dual_space(S).basis_matrix)


def coset_map(S: Subspace, L: DualBasis, x: VectorLike) -> F2Vector:
    """(<l_1,x>, ..., <l_codim,x>) packed with l_1 in bit 0."""
    if L.for_space != S:
        if L.lines.ambient_dim != S.ambient_dim:
            raise InvalidDualBasisError("dual basis lives in another ambient dimension")
        _validate_dual(S, L.lines.rows)
    x = _bits(x)
    _check_width(x, S.ambient_dim)
    label = 0
    for i, line in enumerate(L.lines.rows):
        label |= parity(line & x) << i
    return F2Vector(len(L.lines.rows), label)


def parity_array(values: np.ndarray) -> np.ndarray:
    """Elementwise parity of non-negative int64 values."""
    v = values.astype(np.uint64)
    for shift in (32, 16, 8, 4, 2, 1):
        v ^= v >> np.uint64(shift)
    return (v & np.uint64(1)).astype(np.int64)


def cube_points(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


def coset_label_table(lines: Sequence[int], points: np.ndarray) -> np.ndarray:
    """Coset labels of many points at once."""
    labels = np.zeros(points.shape, dtype=np.int64)
    for i, line in enumerate(lines):
        labels |= parity_array(points & np.int64(line)) << np.int64(i)
    return labels


# --- randomness ----------------------------------------------------------------

def random_subspace(n: int, d: int, seed: RandomSource) -> Subspace:
    """Uniform d-dimensional subspace: draw vectors, rejecting those in the current span."""
    if not 0 <= d <= n:
        raise ParameterError(f"need 0 <= d <= n, got d={d}, n={n}")
    rng = as_rng(seed)
    pivots: Dict[int, int] = {}
    chosen: List[int] = []
    while len(chosen) < d:
        v = random_bits(rng, n)
        if _insert(v, pivots):
            chosen.append(v)
    return Subspace(n, tuple(chosen))


def random_affine_subspace(n: int, d: int, seed: RandomSource) -> AffineSubspace:
    rng = as_rng(seed)
    space = random_subspace(n, d, rng)
    return AffineSubspace(space, random_bits(rng, n))


def random_invertible_map(n: int, seed: RandomSource) -> Tuple[int, ...]:
    """Images of e_1..e_n under a uniform invertible linear map."""
    rng = as_rng(seed)
    pivots: Dict[int, int] = {}
    images: List[int] = []
    while len(images) < n:
        v = random_bits(rng, n)
        if _insert(v, pivots):
            images.append(v)
    return tuple(images)


def apply_map(images: Sequence[int], x: int) -> int:
    y = 0
    for i, image in enumerate(images):
        if (x >> i) & 1:
            y ^= image
    return y


# --- counting and intersection bounds -----------------------------------------

@dataclass(frozen=True)
class IntersectionBound:
    bound: Fraction
    raw: Fraction
    vacuous: bool


def trivial_intersection_prob_bound(n: int, d1: int, d2: int) -> IntersectionBound:
    """1 - n 2^(d1+d2-n), a lower bound on Pr[S ∩ T = {0}] for uniform T of dim d2."""
    raw = 1 - n * Fraction(2) ** (d1 + d2 - n)
    clamped = min(Fraction(1), max(Fraction(0), raw))
    return IntersectionBound(bound=clamped, raw=raw, vacuous=raw <= 0)


def trivial_intersection_probability(n: int, d1: int, d2: int) -> Fraction:
    """Exact Pr[S ∩ T = {0}] for fixed S of dim d1 and uniform T of dim d2."""
    if d1 + d2 > n:
        return Fraction(0)
    prob = Fraction(1)
    total = 1 << n
    for i in range(1, d2 + 1):
        prob *= Fraction(total - (1 << (d1 + i - 1)), total - (1 << (i - 1)))
    return prob


class AvoidanceKind(Enum):
    DISJOINT = "disjoint"
    INTERSECTING = "intersecting"


@dataclass(frozen=True)
class AvoidanceResult:
    kind: AvoidanceKind
    ratio: Optional[Fraction]   # |V ∩ W| / |V| when intersecting
    premise: bool               # |V ∩ W| / |W| < |V| / 2^n


def affine_avoidance_check(V: AffineSubspace, W: AffineSubspace) -> AvoidanceResult:
    """Disjoint, or Intersecting with |V∩W|/|V| >= |W|/2^n."""
    n = V.ambient_dim
    inter = affine_intersection(V, W)
    size = inter.size if inter is not None else 0
    premise = Fraction(size, W.size) < Fraction(V.size, 1 << n)
    if inter is None:
        return AvoidanceResult(AvoidanceKind.DISJOINT, None, premise)
    if premise:
        raise PropertyViolationError(f"{V!r} and {W!r} meet although the avoidance premise holds")
    ratio = Fraction(size, V.size)
    if ratio < Fraction(W.size, 1 << n):
        raise PropertyViolationError(f"intersection ratio {ratio} below |W|/2^n")
    return AvoidanceResult(AvoidanceKind.INTERSECTING, ratio, premise)


def gaussian_binomial(n: int, k: int) -> int:
    """Number of k-dimensional subspaces of F_2^n."""
    if k < 0 or k > n:
        return 0
    num, den = 1, 1
    for i in range(k):
        num *= (1 << (n - i)) - 1
        den *= (1 << (i + 1)) - 1
    return num // den


def count_subspaces(n: int, max_dim: int) -> int:
    return sum(gaussian_binomial(n, k) for k in range(0, min(max_dim, n) + 1))


def iter_subspace_bases(n: int, k: int) -> Iterator[Tuple[int, ...]]:
    """Canonical bases of every k-dimensional subspace, in a fixed order."""
    for pivots in itertools.combinations(range(n), k):
        pivot_set = set(pivots)
        slots = [(i, c) for i, p in enumerate(pivots) for c in range(p + 1, n) if c not in pivot_set]
        base = [1 << p for p in pivots]
        for fill in range(1 << len(slots)):
            rows = list(base)
            idx = 0
            while fill:
                if fill & 1:
                    i, c = slots[idx]
                    rows[i] |= 1 << c
                fill >>= 1
                idx += 1
            yield tuple(rows)


def iter_affine_subspaces(n: int, codim: int) -> Iterator[AffineSubspace]:
    """Every affine subspace of the given codimension: dual bases times shifts."""
    for lines in iter_subspace_bases(n, codim):
        for label in range(1 << codim):
            values = [(label >> i) & 1 for i in range(codim)]
            region = AffineSubspace.from_constraints(n, lines, values)
            if region is not None:
                yield region
