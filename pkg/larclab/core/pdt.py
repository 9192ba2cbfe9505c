"""
Parity decision trees and the corruption route to randomized lower bounds.

Small-n solvers represent a set of inputs as an int whose bit x is set when
the point x belongs to the set; the sets reached inside a tree are affine
subspaces, so those ints double as canonical memo keys.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from larclab.core.designs import DesignCertificate, SubspaceFamily
from larclab.core.errors import (
    CapExceededError,
    DimensionMismatchError,
    ParameterError,
    UndefinedDistributionError,
)
from larclab.core.f2core import (
    AffineSubspace,
    affine_intersection,
    coset_label_table,
    count_subspaces,
    cube_points,
    iter_subspace_bases,
    parity,
)
from larclab.core.fourier import PseudoBooleanFunction, union_function
from larclab.core.task_manager import TaskManager, chunked, get_task_manager
from larclab.utils.serialization import bits_to_hex, hex_to_bits

logger = logging.getLogger(__name__)

DEFAULT_OPTIMAL_DEPTH_N = 5
DEFAULT_TREE_ENUM_N = 4
DEFAULT_SUBSPACE_COUNT_CAP = 10_000_000
CHUNK_SIZE = 64


# --- distributions -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CubeDistribution:
    """Exact distribution on {0,1}^n: Pr[x] = weights[x] / denominator."""
    n: int
    weights: np.ndarray
    denominator: int

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.dtype != object:
            w = w.astype(np.int64)
        if w.shape != (1 << self.n,):
            raise DimensionMismatchError(1 << self.n, w.shape[0] if w.ndim else 0, "distribution table")
        if any(int(v) < 0 for v in w[w != 0]):
            raise ParameterError("probabilities must be non-negative")
        total = sum(int(v) for v in w[w != 0])
        if self.denominator <= 0 or total != self.denominator:
            raise ParameterError(f"weights sum to {total}, expected {self.denominator}")
        w.setflags(write=False)
        object.__setattr__(self, 'weights', w)

    @classmethod
    def from_fractions(cls, n: int, probs: Dict[int, Fraction]) -> 'CubeDistribution':
        den = 1
        for p in probs.values():
            den = den * Fraction(p).denominator // math.gcd(den, Fraction(p).denominator)
        weights = np.zeros(1 << n, dtype=object)
        weights[:] = 0
        for x, p in probs.items():
            weights[x] = int(Fraction(p) * den)
        return cls(n, weights, den)

    @classmethod
    def uniform(cls, n: int) -> 'CubeDistribution':
        return cls(n, np.ones(1 << n, dtype=np.int64), 1 << n)

    @classmethod
    def uniform_on(cls, n: int, points: Sequence[int]) -> 'CubeDistribution':
        weights = np.zeros(1 << n, dtype=np.int64)
        weights[np.asarray(points, dtype=np.int64)] = 1
        return cls(n, weights, int(weights.sum()))

    @classmethod
    def point_mass(cls, n: int, x: int) -> 'CubeDistribution':
        return cls.uniform_on(n, [x])

    def prob(self, x: int) -> Fraction:
        return Fraction(int(self.weights[x]), self.denominator)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights != 0)

    def mass(self, mask: np.ndarray) -> Fraction:
        """Mass of the points selected by a boolean table."""
        return Fraction(sum(int(v) for v in self.weights[mask]), self.denominator)

    def mass_of(self, region: AffineSubspace) -> Fraction:
        return Fraction(sum(int(v) for v in self.weights[region.element_array()]), self.denominator)

    @property
    def is_uniform_on_support(self) -> bool:
        nz = self.weights[self.weights != 0]
        return bool(np.all(nz == nz[0]))

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "denominator": self.denominator,
            "support": [[bits_to_hex(int(x), self.n), int(self.weights[x])] for x in self.support()],
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'CubeDistribution':
        n = int(data["n"])
        weights = np.zeros(1 << n, dtype=object)
        weights[:] = 0
        for point, weight in data["support"]:
            weights[hex_to_bits(point, n)] = int(weight)
        return cls(n, weights, int(data["denominator"]))


def hard_distribution_mu(fam: SubspaceFamily) -> CubeDistribution:
    """
    Half the mass uniform on f^-1(0); half spread as (1/m) sum_V uniform(V).

    The denominator 2 m |V|max |f^-1(0)| makes every weight an integer.
    """
    f = union_function(fam)
    zeros = np.flatnonzero(f.numerators == 0)
    if zeros.size == 0:
        raise UndefinedDistributionError("the union covers the whole cube; f^-1(0) is empty")
    vmax = max(V.size for V in fam.members)
    z = int(zeros.size)
    denominator = 2 * fam.m * vmax * z
    dtype = np.int64 if denominator < (1 << 62) else object
    weights = np.zeros(1 << fam.n, dtype=dtype)
    if dtype == object:
        weights[:] = 0
    for V in fam.members:
        np.add.at(weights, V.element_array(), (vmax // V.size) * z)
    weights[zeros] = fam.m * vmax
    return CubeDistribution(fam.n, weights, denominator)


def mu_one_mass(fam: SubspaceFamily, W: AffineSubspace) -> Fraction:
    """mu(W ∩ f^-1(1)) = (1/2)(1/m) sum_V |W ∩ V| / |V|, without building mu."""
    total = Fraction(0)
    for V in fam.members:
        inter = affine_intersection(AffineSubspace.linear(V), W)
        if inter is not None:
            total += Fraction(inter.size, V.size)
    return total / (2 * fam.m)


# --- trees ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    value: int


@dataclass(frozen=True)
class Query:
    mask: int
    zero: 'Node'
    one: 'Node'


Node = Union[Leaf, Query]


def _node_depth(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(_node_depth(node.zero), _node_depth(node.one))


@dataclass(frozen=True)
class ParityDecisionTree:
    """Internal nodes query <mask, x>; the edge taken is the parity value."""
    n: int
    root: Node

    def __post_init__(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                if node.value not in (0, 1):
                    raise ParameterError(f"leaf value must be 0 or 1, got {node.value}")
                continue
            if not 0 < node.mask < (1 << self.n):
                raise ParameterError(f"query mask {node.mask} is empty or outside F_2^{self.n}")
            stack.extend((node.zero, node.one))

    @property
    def depth(self) -> int:
        return _node_depth(self.root)

    def evaluate(self, x: int) -> int:
        node = self.root
        while isinstance(node, Query):
            node = node.one if parity(node.mask & x) else node.zero
        return node.value

    def to_json(self) -> Dict[str, Any]:
        def encode(node: Node) -> Dict[str, Any]:
            if isinstance(node, Leaf):
                return {"leaf": node.value}
            return {"mask": bits_to_hex(node.mask, self.n), "0": encode(node.zero), "1": encode(node.one)}
        return {"n": self.n, "depth": self.depth, "root": encode(self.root)}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'ParityDecisionTree':
        n = int(data["n"])

        def decode(raw: Dict[str, Any]) -> Node:
            if "leaf" in raw:
                return Leaf(int(raw["leaf"]))
            return Query(hex_to_bits(raw["mask"], n), decode(raw["0"]), decode(raw["1"]))
        return cls(n, decode(data["root"]))


def evaluate(tree: ParityDecisionTree, x: int) -> int:
    return tree.evaluate(x)


def soundness_check(tree: ParityDecisionTree, f: PseudoBooleanFunction) -> bool:
    """True when the tree agrees with f on every input."""
    if tree.n != f.n:
        raise DimensionMismatchError(f.n, tree.n, "tree")
    return all(tree.evaluate(x) == int(f.numerators[x]) for x in range(1 << f.n))


def leaf_regions(tree: ParityDecisionTree) -> List[Tuple[AffineSubspace, int]]:
    """(inputs reaching the leaf, leaf value) for every reachable leaf."""
    regions: List[Tuple[AffineSubspace, int]] = []

    def walk(node: Node, lines: List[int], values: List[int]):
        region = AffineSubspace.from_constraints(tree.n, lines, values)
        if region is None:
            return
        if isinstance(node, Leaf):
            regions.append((region, node.value))
            return
        walk(node.zero, lines + [node.mask], values + [0])
        walk(node.one, lines + [node.mask], values + [1])

    walk(tree.root, [], [])
    return regions


def enumerate_trees(n: int, depth: int, cap: int = DEFAULT_TREE_ENUM_N) -> Iterator[ParityDecisionTree]:
    """Every parity decision tree of depth at most `depth` (non-empty masks only)."""
    if n > cap:
        raise CapExceededError("tree enumeration dimension", n, cap)

    def nodes(d: int) -> List[Node]:
        out: List[Node] = [Leaf(0), Leaf(1)]
        if d == 0:
            return out
        children = nodes(d - 1)
        for mask in range(1, 1 << n):
            for zero in children:
                for one in children:
                    out.append(Query(mask, zero, one))
        return out

    for node in nodes(depth):
        yield ParityDecisionTree(n, node)


# --- exhaustive solvers ----------------------------------------------------------------

class _CubeSets:
    """Point sets as ints and the half-spaces <l, x> = 0 for every l."""

    def __init__(self, n: int):
        self.n = n
        self.full = (1 << (1 << n)) - 1
        self.halves = [0] * (1 << n)
        for mask in range(1, 1 << n):
            h = 0
            for x in range(1 << n):
                if not parity(mask & x):
                    h |= 1 << x
            self.halves[mask] = h

    def split(self, region: int, mask: int) -> Tuple[int, int]:
        h = self.halves[mask]
        return region & h, region & ~h & self.full


def _ones_mask(f: PseudoBooleanFunction) -> int:
    if not f.is_boolean:
        raise ParameterError("parity decision trees need a 0/1-valued function")
    mask = 0
    for x in np.flatnonzero(f.numerators):
        mask |= 1 << int(x)
    return mask


def optimal_depth(f: PseudoBooleanFunction, cap: int = DEFAULT_OPTIMAL_DEPTH_N) -> Tuple[int, ParityDecisionTree]:
    """
    Deterministic parity decision tree depth of f with a witness tree.

    Queries that are constant on the current region are skipped; ties go to
    the numerically smallest mask and the zero branch is solved first.
    """
    if f.n > cap:
        raise CapExceededError("optimal_depth dimension", f.n, cap)
    sets = _CubeSets(f.n)
    ones = _ones_mask(f)
    memo: Dict[int, Tuple[int, Node]] = {}

    def solve(region: int) -> Tuple[int, Node]:
        if region in memo:
            return memo[region]
        on = region & ones
        if on == 0 or on == region:
            answer: Tuple[int, Node] = (0, Leaf(1 if on else 0))
            memo[region] = answer
            return answer
        best: Optional[Tuple[int, Node]] = None
        for mask in range(1, 1 << f.n):
            r0, r1 = sets.split(region, mask)
            if not r0 or not r1:
                continue
            d0, t0 = solve(r0)
            if best is not None and 1 + d0 >= best[0]:
                continue
            d1, t1 = solve(r1)
            depth = 1 + max(d0, d1)
            if best is None or depth < best[0]:
                best = (depth, Query(mask, t0, t1))
                if depth == 1:
                    break
        memo[region] = best  # type: ignore[assignment]
        return best  # type: ignore[return-value]

    depth, root = solve(sets.full)
    logger.debug(f"optimal_depth solved {len(memo)} regions")
    return depth, ParityDecisionTree(f.n, root)


def distributional_error(tree: ParityDecisionTree, f: PseudoBooleanFunction, mu: CubeDistribution) -> Fraction:
    """mu-mass of the inputs the tree gets wrong."""
    wrong = sum(int(mu.weights[x]) for x in range(1 << f.n) if tree.evaluate(x) != int(f.numerators[x]))
    return Fraction(wrong, mu.denominator)


def min_distributional_error(f: PseudoBooleanFunction, mu: CubeDistribution, depth: int,
                             cap: int = DEFAULT_OPTIMAL_DEPTH_N) -> Tuple[Fraction, ParityDecisionTree]:
    """Least mu-error of any tree of depth <= `depth`, by dynamic programming over regions."""
    if f.n > cap:
        raise CapExceededError("min_distributional_error dimension", f.n, cap)
    if mu.n != f.n:
        raise DimensionMismatchError(f.n, mu.n, "distribution")
    sets = _CubeSets(f.n)
    ones = _ones_mask(f)
    weights = [int(w) for w in mu.weights]

    def mass(region: int) -> int:
        total, x = 0, 0
        while region:
            if region & 1:
                total += weights[x]
            region >>= 1
            x += 1
        return total

    memo: Dict[Tuple[int, int], Tuple[int, Node]] = {}

    def solve(region: int, d: int) -> Tuple[int, Node]:
        key = (region, d)
        if key in memo:
            return memo[key]
        one_mass = mass(region & ones)
        zero_mass = mass(region & ~ones)
        best: Tuple[int, Node] = (one_mass, Leaf(0)) if one_mass <= zero_mass else (zero_mass, Leaf(1))
        if d > 0 and best[0] > 0:
            for mask in range(1, 1 << f.n):
                r0, r1 = sets.split(region, mask)
                if not r0 or not r1:
                    continue
                e0, t0 = solve(r0, d - 1)
                if e0 >= best[0]:
                    continue
                e1, t1 = solve(r1, d - 1)
                if e0 + e1 < best[0]:
                    best = (e0 + e1, Query(mask, t0, t1))
        memo[key] = best
        return best

    err, root = solve(sets.full, depth)
    return Fraction(err, mu.denominator), ParityDecisionTree(f.n, root)


# --- corruption scanning -------------------------------------------------------------

@dataclass(frozen=True)
class CorruptionWitness:
    W: AffineSubspace
    one_mass: Fraction
    total_mass: Fraction
    epsilon: Fraction

    def to_json(self) -> Dict[str, Any]:
        data = self.W.to_json()
        data.update({"codim": self.W.codim, "one_mass": self.one_mass, "total_mass": self.total_mass})
        return data


@dataclass(frozen=True)
class CorruptionScanResult:
    epsilon: Fraction
    c_max: int
    c_scanned: int
    witness: Optional[CorruptionWitness]
    regions_checked: int

    @property
    def verdict(self) -> str:
        return "witness" if self.witness else f"NoWitness({self.c_scanned})"

    @property
    def lower_bound(self) -> Optional[int]:
        """Every randomized tree with error eps has cost greater than this (when no witness)."""
        return None if self.witness else self.c_scanned

    def to_json(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "c_max": self.c_max,
            "c_scanned": self.c_scanned,
            "verdict": self.verdict,
            "regions_checked": self.regions_checked,
            "witness": self.witness.to_json() if self.witness else None,
        }


def corruption_scan(f: PseudoBooleanFunction, mu: CubeDistribution, eps: Union[Fraction, int],
                    c_max: int, cap: int = DEFAULT_SUBSPACE_COUNT_CAP,
                    task_manager: Optional[TaskManager] = None) -> CorruptionScanResult:
    """
    Smallest codimension c <= c_max with an affine W, mu(W) > 0, such that
    mu(W ∩ f^-1(1)) <= 4 eps mu(W).

    Dual bases are visited in canonical order and shifts in label order, so
    the witness returned is the first one in that order.
    """
    eps = Fraction(eps)
    if eps < 0:
        raise ParameterError("eps must be non-negative")
    if c_max < 0:
        raise ParameterError("c_max must be non-negative")
    if mu.n != f.n:
        raise DimensionMismatchError(f.n, mu.n, "distribution")
    n = f.n
    c_max = min(c_max, n)
    total = count_subspaces(n, c_max)
    if total > cap:
        raise CapExceededError(f"dual bases of dimension <= {c_max} at n={n}", total, cap)
    if not f.is_boolean:
        raise ParameterError("corruption scans need a 0/1-valued function")

    points = cube_points(n)
    dtype = np.int64 if mu.denominator < (1 << 62) else object
    all_w = np.asarray(mu.weights, dtype=dtype)
    one_w = np.where(f.numerators != 0, all_w, 0).astype(dtype)
    num, den = eps.numerator, eps.denominator
    manager = task_manager or get_task_manager()
    checked = 0

    for c in range(0, c_max + 1):
        def sweep(chunk: Sequence[Tuple[int, ...]]):
            for i, lines in enumerate(chunk):
                labels = coset_label_table(lines, points)
                totals = np.zeros(1 << c, dtype=dtype)
                ones = np.zeros(1 << c, dtype=dtype)
                np.add.at(totals, labels, all_w)
                np.add.at(ones, labels, one_w)
                for label in range(1 << c):
                    t, o = int(totals[label]), int(ones[label])
                    if t > 0 and o * den <= 4 * num * t:
                        return (lines, label, o, t), i + 1
            return None, len(chunk)

        results = manager.run(sweep, chunked(iter_subspace_bases(n, c), CHUNK_SIZE),
                              stop_when=lambda r: r[0] is not None)
        found = results[-1][0] if results else None
        checked += sum(visited for _, visited in results) << c
        logger.info(f"Corruption scan: codim {c} {'has a witness' if found else 'has none'}")
        if found is not None:
            lines, label, o, t = found
            W = AffineSubspace.from_constraints(n, lines, [(label >> i) & 1 for i in range(c)])
            witness = CorruptionWitness(W, Fraction(o, mu.denominator), Fraction(t, mu.denominator), eps)
            return CorruptionScanResult(eps, c_max, c, witness, checked)
    return CorruptionScanResult(eps, c_max, c_max, None, checked)


# --- threshold quantities ------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdReport:
    epsilon_star: Fraction        # (m - h)/(8m) |f^-1(0)| / 2^n
    s: int
    h: int
    m: int
    zeros: int
    zero_fraction_lower: Fraction  # 1 - sum |V| / 2^n, clamped at 0
    vacuous: bool

    def to_json(self) -> Dict[str, Any]:
        return {
            "epsilon_star": self.epsilon_star,
            "s": self.s,
            "h": self.h,
            "m": self.m,
            "zeros": self.zeros,
            "zero_fraction_lower": self.zero_fraction_lower,
            "vacuous": self.vacuous,
        }


def query_threshold(fam: SubspaceFamily, certificate: DesignCertificate) -> ThresholdReport:
    """For eps below epsilon_star, an (s, h) certificate gives RPDT_eps(f) >= s."""
    if certificate.m != fam.m or certificate.n != fam.n:
        raise ParameterError("certificate was issued for a different family")
    f = union_function(fam)
    zeros = (1 << fam.n) - int(np.count_nonzero(f.numerators))
    m, h = fam.m, certificate.h
    eps_star = Fraction(max(m - h, 0), 8 * m) * Fraction(zeros, 1 << fam.n)
    covered = Fraction(sum(V.size for V in fam.members), 1 << fam.n)
    return ThresholdReport(eps_star, certificate.s, h, m, zeros, max(Fraction(0), 1 - covered),
                           vacuous=eps_star == 0)
