"""
Subspace families and (dual) subspace design certification.

A family is an (s, h)-dual subspace design when every linear W of codimension
at most s is independent of all but at most h members. Independence of V and
W is tested on the dual side (dual(V) meets dual(W) only at 0), so a sweep
over W is a sweep over subspaces T = dual(W) of dimension at most s.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from larclab.core.errors import CapExceededError, DimensionMismatchError, ParameterError
from larclab.core.f2core import (
    AffineSubspace,
    Subspace,
    _insert,
    _pivot_table,
    count_subspaces,
    dual_space,
    independent,
    iter_subspace_bases,
    random_subspace,
    rank,
)
from larclab.core.task_manager import TaskManager, chunked, get_task_manager
from larclab.utils.rng import RandomSource, as_rng, make_rng
from larclab.utils.serialization import dump_json, load_json

logger = logging.getLogger(__name__)

DEFAULT_SUBSPACE_COUNT_CAP = 10_000_000
MAX_REJECTIONS = 10_000
CHUNK_SIZE = 256


@dataclass(frozen=True)
class SubspaceFamily:
    """An ordered family of m subspaces of F_2^n."""
    n: int
    members: Tuple[Subspace, ...]
    meta: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, 'members', tuple(self.members))
        if not self.members:
            raise ParameterError("a family needs at least one member")
        for V in self.members:
            if V.ambient_dim != self.n:
                raise DimensionMismatchError(self.n, V.ambient_dim, "family member")

    @property
    def m(self) -> int:
        return len(self.members)

    def duals(self) -> List[Subspace]:
        return [dual_space(V) for V in self.members]

    def to_json(self) -> Dict[str, Any]:
        return {"n": self.n, "members": [V.to_json() for V in self.members], "meta": dict(self.meta)}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'SubspaceFamily':
        n = int(data["n"])
        members = []
        for raw in data["members"]:
            raw = dict(raw)
            raw.setdefault("n", n)
            members.append(Subspace.from_json(raw))
        return cls(n, tuple(members), dict(data.get("meta", {})))

    @classmethod
    def from_strings(cls, members: Sequence[Sequence[str]], n: int) -> 'SubspaceFamily':
        return cls(n, tuple(Subspace.from_strings(basis, n) for basis in members))


def save_family(fam: SubspaceFamily, path: str) -> str:
    return dump_json(fam.to_json(), path=path)


def load_family(path: str) -> SubspaceFamily:
    return SubspaceFamily.from_json(load_json(path))


# --- presets ---------------------------------------------------------------------

@dataclass(frozen=True)
class DesignPreset:
    name: str
    n: int
    dim: int
    m: int
    s: int
    h: int

    def to_json(self) -> Dict[str, Any]:
        return {"name": self.name, "n": self.n, "dim": self.dim, "m": self.m, "s": self.s, "h": self.h}


def query_preset(n: int) -> DesignPreset:
    """dim = 2n/5 members, m = 100n, certified as an (n/5, m/10)-dual design w.h.p."""
    m = 100 * n
    return DesignPreset("query", n, 2 * n // 5, m, n // 5, m // 10)


def communication_preset(n: int, k: int = 1) -> DesignPreset:
    """The communication-side shape: m = 200kn, h = m/(20k)."""
    if k < 1:
        raise ParameterError("k must be at least 1")
    m = 200 * k * n
    return DesignPreset("communication", n, 2 * n // 5, m, n // 5, m // (20 * k))


# --- construction ----------------------------------------------------------------

def _meets_trivially(S: Subspace, T: Subspace) -> bool:
    return rank(S.basis + T.basis) == S.dim + T.dim


def random_design(n: int, dim: int, m: int, seed: RandomSource,
                  pairwise_trivial: bool = False) -> SubspaceFamily:
    """
    Draw m independent uniform dimension-`dim` subspaces.

    Args:
        n: Ambient dimension
        dim: Member dimension
        m: Number of members
        seed: Seed or numpy Generator
        pairwise_trivial: Redraw a member until it meets every earlier one only at 0

    Returns:
        SubspaceFamily with (n, dim, m, seed) recorded in its metadata
    """
    if not 0 <= dim <= n:
        raise ParameterError(f"need 0 <= dim <= n, got dim={dim}, n={n}")
    if m < 1:
        raise ParameterError("m must be at least 1")
    if pairwise_trivial and m > 1 and dim > 0 and 2 * dim > n:
        raise ParameterError(f"two {dim}-dimensional subspaces of F_2^{n} always meet non-trivially")

    rng = as_rng(seed)
    members: List[Subspace] = []
    rejections = 0
    while len(members) < m:
        V = random_subspace(n, dim, rng)
        if pairwise_trivial and not all(_meets_trivially(V, U) for U in members):
            rejections += 1
            if rejections > MAX_REJECTIONS * m:
                raise ParameterError("gave up drawing a pairwise-trivial family; lower m or dim")
            continue
        members.append(V)
    if rejections:
        logger.debug(f"random_design rejected {rejections} draws for pairwise triviality")

    meta: Dict[str, Any] = {"dim": dim, "m": m, "seed": None if isinstance(seed, np.random.Generator) else int(seed)}
    if pairwise_trivial:
        meta["pairwise_trivial"] = True
    return SubspaceFamily(n, tuple(members), meta)


# --- pairwise triviality and hitting ---------------------------------------------

@dataclass(frozen=True)
class PairwiseResult:
    trivial: bool
    pair: Optional[Tuple[int, int]] = None   # 1-based indices of the first offending pair

    def __bool__(self) -> bool:
        return self.trivial

    def to_json(self) -> Dict[str, Any]:
        return {"pairwise_trivial": self.trivial, "pair": list(self.pair) if self.pair else None}


def pairwise_trivial(fam: SubspaceFamily) -> PairwiseResult:
    for i in range(fam.m):
        for j in range(i + 1, fam.m):
            if not _meets_trivially(fam.members[i], fam.members[j]):
                return PairwiseResult(False, (i + 1, j + 1))
    return PairwiseResult(True)


def hitting_check(fam: SubspaceFamily, W: AffineSubspace) -> int:
    """Number of members V with V ∩ W nonempty (W.shift ∈ V + W.space)."""
    if W.ambient_dim != fam.n:
        raise DimensionMismatchError(fam.n, W.ambient_dim, "affine subspace")
    return sum(1 for V in fam.members if (V + W.space).contains(W.shift))


def nonindependent_count(fam: SubspaceFamily, W: Subspace) -> int:
    """#{i : members[i] is not independent of W}."""
    return sum(1 for V in fam.members if not independent(V, W))


def dual_side_hits(fam: SubspaceFamily, T: Subspace) -> int:
    """#{i : dual(members[i]) ∩ T != {0}}; equals nonindependent_count(fam, dual(T))."""
    return _count_hits([D.basis for D in fam.duals()], T.basis)


def _count_hits(dual_bases: Sequence[Tuple[int, ...]], t_basis: Tuple[int, ...]) -> int:
    base = _pivot_table(t_basis)
    hits = 0
    for rows in dual_bases:
        pivots = dict(base)
        for row in rows:
            if not _insert(row, pivots):
                hits += 1
                break
    return hits


# --- certificates ------------------------------------------------------------------

class CertificationMode(Enum):
    EXHAUSTIVE = "exhaustive"
    MONTE_CARLO = "montecarlo"


@dataclass(frozen=True)
class DesignCertificate:
    """Evidence that a family is an (s, h)-dual subspace design."""
    n: int
    m: int
    s: int
    h: int
    mode: CertificationMode
    pairwise_trivial: bool
    worst_witness: Optional[AffineSubspace] = None
    checked: int = 0
    trials: Optional[int] = None
    seed: Optional[int] = None
    max_observed: Optional[int] = None
    violation_rate_bound: Optional[float] = None   # 95% upper bound, Monte Carlo only

    @property
    def is_proof(self) -> bool:
        return self.mode == CertificationMode.EXHAUSTIVE

    def implies(self, s: int, h: int) -> bool:
        """Whether this certificate also certifies (s, h)."""
        if self.mode == CertificationMode.EXHAUSTIVE:
            return s <= self.s and h >= self.h
        return s == self.s and h >= self.h

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "verdict": "certified",
            "mode": self.mode.value,
            "is_proof": self.is_proof,
            "n": self.n,
            "m": self.m,
            "s": self.s,
            "h": self.h,
            "pairwise_trivial": self.pairwise_trivial,
            "checked": self.checked,
            "witness": self.worst_witness.to_json() if self.worst_witness else None,
        }
        if self.mode == CertificationMode.MONTE_CARLO:
            data.update({
                "trials": self.trials,
                "seed": self.seed,
                "max_observed": self.max_observed,
                "violation_rate_bound": self.violation_rate_bound,
            })
        return data


@dataclass(frozen=True)
class DesignViolation:
    """A sampled W with more than h non-independent members."""
    s: int
    h: int
    witness: AffineSubspace
    count: int
    trial: int
    trials: int
    seed: int

    def to_json(self) -> Dict[str, Any]:
        return {
            "verdict": "violation",
            "mode": CertificationMode.MONTE_CARLO.value,
            "s": self.s,
            "h": self.h,
            "count": self.count,
            "trial": self.trial,
            "trials": self.trials,
            "seed": self.seed,
            "witness": self.witness.to_json(),
        }


def certify_dual_design_exhaustive(fam: SubspaceFamily, s: int,
                                   cap: int = DEFAULT_SUBSPACE_COUNT_CAP,
                                   task_manager: Optional[TaskManager] = None) -> DesignCertificate:
    """
    Minimal h such that fam is an (s, h)-dual design, by full enumeration.

    Only the subspaces T of dimension exactly min(s, n) are visited: a larger
    T meets at least the duals a smaller one meets, so the maximum is reached
    there. The cap still applies to the count of all subspaces of dimension
    at most s.
    """
    if s < 0:
        raise ParameterError("s must be non-negative")
    n = fam.n
    total = count_subspaces(n, s)
    if total > cap:
        raise CapExceededError(f"subspaces of codimension <= {s} at n={n}", total, cap,
                               hint="use --mode montecarlo")
    k = min(s, n)
    duals = [D.basis for D in fam.duals()]
    logger.info(f"Exhaustive certification: n={n}, m={fam.m}, s={s}, {total} subspaces in range")

    def sweep(chunk: Sequence[Tuple[int, ...]]):
        best, best_basis = -1, None
        for t_basis in chunk:
            hits = _count_hits(duals, t_basis)
            if hits > best:
                best, best_basis = hits, t_basis
        return best, best_basis, len(chunk)

    manager = task_manager or get_task_manager()
    results = manager.run(sweep, chunked(iter_subspace_bases(n, k), CHUNK_SIZE))
    h, worst, checked = -1, None, 0
    for best, basis, size in results:
        checked += size
        if best > h:
            h, worst = best, basis
    witness = None
    if h > 0 and worst is not None:
        witness = AffineSubspace.linear(dual_space(Subspace(n, worst)))
    return DesignCertificate(
        n=n, m=fam.m, s=s, h=max(h, 0), mode=CertificationMode.EXHAUSTIVE,
        pairwise_trivial=pairwise_trivial(fam).trivial, worst_witness=witness, checked=checked,
    )


def certify_dual_design_montecarlo(fam: SubspaceFamily, s: int, h: int, trials: int, seed: int,
                                   task_manager: Optional[TaskManager] = None
                                   ) -> Union[DesignCertificate, DesignViolation]:
    """Sample `trials` uniform W of codimension exactly s; trial i uses stream (seed, i)."""
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if s < 0 or h < 0:
        raise ParameterError("s and h must be non-negative")
    n = fam.n
    k = min(s, n)
    duals = [D.basis for D in fam.duals()]

    def sweep(chunk: Sequence[int]):
        worst = 0
        for trial in chunk:
            T = random_subspace(n, k, make_rng(seed, trial))
            hits = _count_hits(duals, T.basis)
            worst = max(worst, hits)
            if hits > h:
                return (trial, T, hits), worst
        return None, worst

    manager = task_manager or get_task_manager()
    logger.info(f"Monte Carlo certification: n={n}, m={fam.m}, s={s}, h={h}, {trials} trials")
    results = manager.run(sweep, chunked(range(trials), CHUNK_SIZE), stop_when=lambda r: r[0] is not None)
    max_observed = max(worst for _, worst in results)
    violation = results[-1][0]
    if violation is not None:
        trial, T, hits = violation
        logger.info(f"Violation at trial {trial}: {hits} members not independent of W")
        return DesignViolation(s=s, h=h, witness=AffineSubspace.linear(dual_space(T)), count=hits,
                               trial=trial, trials=trials, seed=seed)
    return DesignCertificate(
        n=n, m=fam.m, s=s, h=h, mode=CertificationMode.MONTE_CARLO,
        pairwise_trivial=pairwise_trivial(fam).trivial, checked=trials, trials=trials, seed=seed,
        max_observed=max_observed, violation_rate_bound=1.0 - 0.05 ** (1.0 / trials),
    )


def expected_bad_pairs(n: int, dim: int, m: int) -> Fraction:
    """Union-bound estimate C(m,2) n 2^(2 dim - n) of non-trivially meeting pairs."""
    return Fraction(m * (m - 1), 2) * n * Fraction(2) ** (2 * dim - n)
