"""
Communication-side experiments on XOR lifts F(x, y) = f(x xor y).

Covers the pair distribution nu, the pair sets S_V, coset pushforwards and
their distances to uniform, entropy, the entropy-loss conjecture predicates
with a counterexample search, rectangle projection analysis and a
monochromatic rectangle search.

Exact arithmetic is used whenever the input distribution is rational; float
probability tables are accepted and then every distance is a float.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from larclab.core.designs import (
    DesignCertificate,
    SubspaceFamily,
    certify_dual_design_exhaustive,
    certify_dual_design_montecarlo,
    nonindependent_count,
    random_design,
)
from larclab.core.errors import CapExceededError, DimensionMismatchError, ParameterError
from larclab.core.f2core import (
    Subspace,
    coset_label_table,
    count_subspaces,
    cube_points,
    dual_space,
    random_affine_subspace,
    random_subspace,
)
from larclab.core.fourier import PseudoBooleanFunction, union_function, xor_convolution
from larclab.core.pdt import CubeDistribution, hard_distribution_mu
from larclab.core.task_manager import TaskManager, chunked, get_task_manager
from larclab.utils.rng import RandomSource, as_rng, make_rng
from larclab.utils.serialization import JsonLinesWriter, bitset_to_hex, hex_to_bitset

logger = logging.getLogger(__name__)

DEFAULT_PAIR_TABLE_N = 6
DEFAULT_DENSE_SEARCH_N = 16
DEFAULT_MONO_RECT_N = 14

Distribution = Union[CubeDistribution, np.ndarray]


# --- pair sets and nu ------------------------------------------------------------------

def sv_membership(V: Subspace, x: int, y: int) -> bool:
    return V.contains(x ^ y)


def sv_size(V: Subspace) -> int:
    """|S_V| = 2^n |V|."""
    return (1 << V.ambient_dim) * V.size


class NuDistribution:
    """
    The hard pair distribution for F = f o XOR.

    nu(x, y) = mu(x xor y) / 2^n where mu is the single-input hard
    distribution of the family, so nu is held as a mass oracle over
    differences rather than a 2^2n table.
    """

    def __init__(self, fam: SubspaceFamily):
        self.family = fam
        self.n = fam.n
        self.mu = hard_distribution_mu(fam)
        self.f = union_function(fam)

    @property
    def denominator(self) -> int:
        return self.mu.denominator << self.n

    def mass(self, x: int, y: int) -> Fraction:
        return Fraction(int(self.mu.weights[x ^ y]), self.denominator)

    def is_one(self, x: int, y: int) -> bool:
        return bool(self.f.numerators[x ^ y])

    def zero_mass(self) -> Fraction:
        """nu(F^-1(0)); always 1/2."""
        zeros = self.f.numerators == 0
        return Fraction(sum(int(w) for w in self.mu.weights[zeros]) << self.n, self.denominator)

    def table(self, cap: int = DEFAULT_PAIR_TABLE_N) -> np.ndarray:
        """Numerators over `denominator` for every pair, indexed [x][y]."""
        if self.n > cap:
            raise CapExceededError("full nu table dimension", self.n, cap)
        idx = np.arange(1 << self.n)
        return np.asarray(self.mu.weights)[idx[:, None] ^ idx[None, :]]

    def sample(self, rng: RandomSource, size: int) -> Tuple[np.ndarray, np.ndarray]:
        """x uniform, x xor y drawn from mu."""
        rng = as_rng(rng)
        probs = np.asarray(self.mu.weights, dtype=float) / float(self.mu.denominator)
        d = rng.choice(1 << self.n, size=size, p=probs)
        x = rng.integers(0, 1 << self.n, size=size)
        return x, x ^ d

    def rectangle_masses(self, R: 'Rectangle') -> Tuple[Fraction, Fraction]:
        """(nu(R), nu(R ∩ F^-1(1))) from XOR-convolution counts of A and B."""
        if R.n != self.n:
            raise DimensionMismatchError(self.n, R.n, "rectangle")
        counts = xor_convolution(R.A.astype(np.int64), R.B.astype(np.int64), self.n)
        weights = np.asarray(self.mu.weights)
        total = sum(int(c) * int(w) for c, w in zip(counts, weights) if c)
        ones = sum(int(c) * int(w) for c, w, bit in zip(counts, weights, self.f.numerators) if c and bit)
        return Fraction(total, self.denominator), Fraction(ones, self.denominator)


def nu_distribution(fam: SubspaceFamily) -> NuDistribution:
    return NuDistribution(fam)


# --- rectangles ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Rectangle:
    """A x B with A, B given as boolean tables over {0,1}^n."""
    n: int
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        for name in ('A', 'B'):
            table = np.array(getattr(self, name), dtype=bool)
            if table.shape != (1 << self.n,):
                raise DimensionMismatchError(1 << self.n, table.shape[0], f"rectangle side {name}")
            table.setflags(write=False)
            object.__setattr__(self, name, table)

    @classmethod
    def from_points(cls, n: int, A: Sequence[int], B: Sequence[int]) -> 'Rectangle':
        a = np.zeros(1 << n, dtype=bool)
        b = np.zeros(1 << n, dtype=bool)
        a[list(A)] = True
        b[list(B)] = True
        return cls(n, a, b)

    @classmethod
    def full(cls, n: int) -> 'Rectangle':
        return cls(n, np.ones(1 << n, dtype=bool), np.ones(1 << n, dtype=bool))

    @property
    def size_a(self) -> int:
        return int(self.A.sum())

    @property
    def size_b(self) -> int:
        return int(self.B.sum())

    @property
    def size(self) -> int:
        return self.size_a * self.size_b

    def is_monochromatic(self, f: PseudoBooleanFunction) -> bool:
        counts = xor_convolution(self.A.astype(np.int64), self.B.astype(np.int64), self.n)
        colors = {int(f.numerators[d]) for d in np.flatnonzero(counts)}
        return len(colors) <= 1

    def to_json(self) -> Dict[str, Any]:
        return {"n": self.n, "A": bitset_to_hex(self.A), "B": bitset_to_hex(self.B)}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'Rectangle':
        n = int(data["n"])
        return cls(n, hex_to_bitset(data["A"], 1 << n), hex_to_bitset(data["B"], 1 << n))


def random_rectangle(n: int, rng: RandomSource) -> Rectangle:
    """A mix of random subsets and subsets of random affine subspaces on each side."""
    rng = as_rng(rng)

    def side() -> np.ndarray:
        if rng.random() < 0.5:
            region = random_affine_subspace(n, int(rng.integers(0, n + 1)), rng)
            table = np.zeros(1 << n, dtype=bool)
            table[region.element_array()] = True
            table &= rng.random(1 << n) < rng.uniform(0.2, 1.0)
        else:
            table = rng.random(1 << n) < rng.uniform(0.01, 1.0)
        if not table.any():
            table[int(rng.integers(0, 1 << n))] = True
        return table

    return Rectangle(n, side(), side())


# --- pushforwards, distances, entropy --------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabelDistribution:
    """Distribution of coset labels; exact when `denominator` is set, else float."""
    codim: int
    weights: np.ndarray
    denominator: Optional[int] = None

    @property
    def exact(self) -> bool:
        return self.denominator is not None

    def probs(self) -> List[Union[Fraction, float]]:
        if self.exact:
            return [Fraction(int(w), self.denominator) for w in self.weights]
        return [float(w) for w in self.weights]


def _member_lines(V: Subspace, lines: Optional[Sequence[int]] = None) -> Sequence[int]:
    return lines if lines is not None else dual_space(V).basis


def _distribution_table(X: Distribution, n: int) -> Tuple[np.ndarray, Optional[int]]:
    if isinstance(X, CubeDistribution):
        if X.n != n:
            raise DimensionMismatchError(n, X.n, "distribution")
        return np.asarray(X.weights), X.denominator
    table = np.asarray(X)
    if table.shape != (1 << n,):
        raise DimensionMismatchError(1 << n, table.shape[0], "distribution table")
    if table.dtype == bool:
        return table.astype(np.int64), int(table.sum())
    return table.astype(float), None


def coset_pushforward(X: Distribution, V: Subspace, lines: Optional[Sequence[int]] = None) -> LabelDistribution:
    """
    Law of coset_V(x) for x ~ X.

    Args:
        X: CubeDistribution, a boolean subset table (uniform on it) or a float probability table
        V: The subspace whose coset map is applied
        lines: Dual basis to label cosets with (default the canonical one)
    """
    weights, denominator = _distribution_table(X, V.ambient_dim)
    lines = _member_lines(V, lines)
    labels = coset_label_table(lines, cube_points(V.ambient_dim))
    return _pushforward(weights, denominator, labels, len(lines))


def _pushforward(weights: np.ndarray, denominator: Optional[int], labels: np.ndarray,
                 codim: int) -> LabelDistribution:
    nz = np.flatnonzero(weights)
    if denominator is None:
        out = np.bincount(labels[nz], weights=weights[nz], minlength=1 << codim)
        return LabelDistribution(codim, out, None)
    dtype = np.int64 if denominator < (1 << 62) else object
    out = np.zeros(1 << codim, dtype=dtype)
    if dtype == object:
        out[:] = 0
        for x in nz:
            out[labels[x]] += int(weights[x])
    else:
        np.add.at(out, labels[nz], weights[nz].astype(np.int64))
    return LabelDistribution(codim, out, denominator)


def l1_to_uniform(P: LabelDistribution) -> Union[Fraction, float]:
    """||P - U||_1 over the 2^codim labels."""
    size = 1 << P.codim
    if P.exact:
        den = P.denominator
        total = sum(abs(int(w) * size - den) for w in P.weights)
        return Fraction(total, den * size)
    return float(np.abs(P.weights - 1.0 / size).sum())


def l1_float_error_bound(codim: int) -> float:
    """Accumulated rounding allowance for a float L1 distance over 2^codim labels."""
    return float((1 << codim) * np.finfo(float).eps * 4)


def l1_distance(P: LabelDistribution, Q: LabelDistribution) -> Union[Fraction, float]:
    if P.codim != Q.codim:
        raise DimensionMismatchError(P.codim, Q.codim, "label distribution")
    if P.exact and Q.exact:
        total = sum(abs(int(p) * Q.denominator - int(q) * P.denominator) for p, q in zip(P.weights, Q.weights))
        return Fraction(total, P.denominator * Q.denominator)
    p = np.array([float(v) for v in P.probs()])
    q = np.array([float(v) for v in Q.probs()])
    return float(np.abs(p - q).sum())


def entropy(X: Union[Distribution, LabelDistribution]) -> float:
    """Shannon entropy in bits; log2 |support| exactly when X is uniform on its support."""
    if isinstance(X, LabelDistribution):
        weights, denominator = X.weights, X.denominator
    elif isinstance(X, CubeDistribution):
        weights, denominator = np.asarray(X.weights), X.denominator
    else:
        weights, denominator = _distribution_table(X, int(np.log2(len(X))))
    nz = weights[weights != 0]
    if nz.size == 0:
        raise ParameterError("entropy of an empty distribution")
    if denominator is not None:
        if np.all(nz == nz[0]):
            return math.log2(nz.size)
        p = np.array([int(w) / denominator for w in nz], dtype=float)
    else:
        p = nz.astype(float) / float(nz.sum())
    return float(-(p * np.log2(p)).sum())


# --- family statistics and conjecture predicates ---------------------------------------

@dataclass(frozen=True)
class FamilyStats:
    union_size: int
    gamma: Fraction

    def to_json(self) -> Dict[str, Any]:
        return {"union_size": self.union_size, "gamma": self.gamma}


def family_stats(fam: SubspaceFamily) -> FamilyStats:
    size = int(np.count_nonzero(union_function(fam).numerators))
    return FamilyStats(size, Fraction(size, 1 << fam.n))


@dataclass(frozen=True)
class ConjectureParams:
    alpha: Fraction
    beta: Fraction
    k: int
    s: int
    h: int

    def __post_init__(self):
        object.__setattr__(self, 'alpha', Fraction(self.alpha))
        object.__setattr__(self, 'beta', Fraction(self.beta))
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.beta <= 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if self.k < 1:
            raise ParameterError(f"k must be at least 1, got {self.k}")
        if self.s < 0 or self.h < 0:
            raise ParameterError("s and h must be non-negative")

    @classmethod
    def from_certificate(cls, certificate: DesignCertificate, alpha, beta, k: int) -> 'ConjectureParams':
        return cls(Fraction(alpha), Fraction(beta), k, certificate.s, certificate.h)

    def to_json(self) -> Dict[str, Any]:
        return {"alpha": self.alpha, "beta": self.beta, "k": self.k, "s": self.s, "h": self.h}


CONSISTENT = "consistent"
PREMISE_NOT_MET = "premise-not-met"
COUNTEREXAMPLE_CANDIDATE = "COUNTEREXAMPLE-CANDIDATE"


@dataclass(frozen=True)
class ConjectureReport:
    far_count: int
    required_far: int        # the premise is far_count >= required_far
    entropy: float
    bound: Fraction          # the conjectured entropy ceiling
    distances: Tuple[Union[Fraction, float], ...] = field(repr=False)
    seed: Optional[int] = None
    error_bound: Optional[float] = None   # float inputs only: allowance on each distance

    @property
    def premise(self) -> bool:
        return self.far_count >= self.required_far

    @property
    def margin(self) -> float:
        """entropy - bound; positive margins with the premise met are candidates."""
        return self.entropy - float(self.bound)

    @property
    def consistent(self) -> bool:
        return not self.premise or self.entropy <= float(self.bound)

    @property
    def verdict(self) -> str:
        if not self.premise:
            return PREMISE_NOT_MET
        return CONSISTENT if self.consistent else COUNTEREXAMPLE_CANDIDATE

    def to_json(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "far_count": self.far_count,
            "required_far": self.required_far,
            "entropy": self.entropy,
            "bound": self.bound,
            "margin": self.margin,
            "verdict": self.verdict,
            "error_bound": self.error_bound,
        }


def _far_distances(X: Distribution, fam: SubspaceFamily
                   ) -> Tuple[List[Union[Fraction, float]], Optional[float]]:
    """Distances of every member projection, plus the rounding allowance when X is a float table."""
    weights, denominator = _distribution_table(X, fam.n)
    points = cube_points(fam.n)
    out = []
    for V in fam.members:
        lines = dual_space(V).basis
        out.append(l1_to_uniform(_pushforward(weights, denominator, coset_label_table(lines, points), len(lines))))
    if denominator is not None:
        return out, None
    return out, l1_float_error_bound(max(V.codim for V in fam.members))


def conjecture_check(X: Distribution, fam: SubspaceFamily, params: ConjectureParams) -> ConjectureReport:
    """Entropy-loss predicate: more than k h far projections should force H(X) <= n - beta s."""
    distances, error_bound = _far_distances(X, fam)
    far = sum(1 for d in distances if d >= params.alpha)
    return ConjectureReport(far, params.k * params.h + 1, entropy(X), fam.n - params.beta * params.s,
                            tuple(distances), error_bound=error_bound)


def conjecture2_check(X: Distribution, fam: SubspaceFamily, alpha, beta) -> ConjectureReport:
    """Random-subspace form: at least m/3 far projections should force H(X) <= n - beta n."""
    alpha, beta = Fraction(alpha), Fraction(beta)
    if not 0 < alpha < 1 or beta <= 0:
        raise ParameterError("need 0 < alpha < 1 and beta > 0")
    distances, error_bound = _far_distances(X, fam)
    far = sum(1 for d in distances if d >= alpha)
    required = -(-fam.m // 3)
    return ConjectureReport(far, required, entropy(X), fam.n - beta * fam.n, tuple(distances),
                            error_bound=error_bound)


@dataclass(frozen=True)
class CommunicationThreshold:
    epsilon: Fraction          # (1-alpha)^2/4 (m - 2kh)/(8m) (1 - gamma)
    conditional_cost: float    # beta s + log2(1 - gamma), valid only under the conjecture
    gamma: Fraction
    vacuous: bool

    def to_json(self) -> Dict[str, Any]:
        return {"epsilon": self.epsilon, "conditional_cost": self.conditional_cost,
                "gamma": self.gamma, "vacuous": self.vacuous}


def communication_threshold(fam: SubspaceFamily, params: ConjectureParams) -> CommunicationThreshold:
    gamma = family_stats(fam).gamma
    m = fam.m
    spread = Fraction(max(m - 2 * params.k * params.h, 0), 8 * m)
    eps = (1 - params.alpha) ** 2 / 4 * spread * (1 - gamma)
    cost = float(params.beta * params.s) + (math.log2(1 - gamma) if gamma < 1 else float('-inf'))
    return CommunicationThreshold(eps, cost, gamma, vacuous=eps == 0)


# --- affine sanity runs ----------------------------------------------------------------

@dataclass(frozen=True)
class AffineSanityResult:
    trial: int
    codim: int
    entropy: float
    far_count: int
    nonindependent: int
    h: int
    h_source: str
    verdict: str

    @property
    def design_holds(self) -> bool:
        """Whether the tested W respects the separately certified h."""
        return self.nonindependent <= self.h

    @property
    def ok(self) -> bool:
        # only dependent members may project far from uniform
        return self.far_count <= self.nonindependent and self.verdict != COUNTEREXAMPLE_CANDIDATE

    def to_json(self) -> Dict[str, Any]:
        return {
            "trial": self.trial, "codim": self.codim, "entropy": self.entropy,
            "far_count": self.far_count, "nonindependent": self.nonindependent,
            "h": self.h, "h_source": self.h_source, "verdict": self.verdict,
            "design_holds": self.design_holds, "ok": self.ok,
        }


def affine_sanity_trial(n: int, dim: int, m: int, s: int, trial: int, seed: int,
                        alpha=Fraction(1, 2), beta=Fraction(1, 10), k: int = 1,
                        exhaustive_cap: int = 50_000, mc_trials: int = 512) -> AffineSanityResult:
    """
    One (family, affine W) instance with X uniform on W, codim(W) = s.

    h comes from an exhaustive certificate when the sweep is small enough,
    otherwise from the largest count seen over `mc_trials` sampled test
    subspaces drawn on their own stream. The tested W never feeds into h;
    a W with more than h dependent members is reported through
    `design_holds`.
    """
    rng = make_rng(seed, trial)
    fam = random_design(n, dim, m, rng)
    W = random_affine_subspace(n, n - s, rng)
    nonind = nonindependent_count(fam, W.space)
    if count_subspaces(n, s) <= exhaustive_cap:
        h, source = certify_dual_design_exhaustive(fam, s, cap=exhaustive_cap).h, "exhaustive"
    else:
        cert = certify_dual_design_montecarlo(fam, s, m, mc_trials, int(rng.integers(0, 2 ** 31)))
        h, source = cert.max_observed or 0, "montecarlo"
    X = CubeDistribution.uniform_on(n, W.element_array())
    report = conjecture_check(X, fam, ConjectureParams(alpha, beta, k, s, h))
    result = AffineSanityResult(trial, W.codim, report.entropy, report.far_count, nonind, h, source, report.verdict)
    if not result.design_holds:
        logger.info(f"Trial {trial}: W has {nonind} dependent members, above the {source} h={h}")
    return result


# --- counterexample search -------------------------------------------------------------

@dataclass
class SearchResult:
    support: np.ndarray
    report: ConjectureReport
    best_score: float
    trace: List[Tuple[int, float]]
    iterations: int
    tilted: Optional[np.ndarray] = None
    tilted_report: Optional[ConjectureReport] = None

    def to_json(self) -> Dict[str, Any]:
        data = {
            "support": bitset_to_hex(self.support),
            "support_size": int(self.support.sum()),
            "best_score": self.best_score,
            "iterations": self.iterations,
            "trace": [[i, s] for i, s in self.trace],
            "report": self.report.to_json(),
        }
        if self.tilted_report is not None:
            data["tilted_report"] = self.tilted_report.to_json()
        return data


class _SupportState:
    """Per-member label counts of a support set, updated one point at a time."""

    def __init__(self, fam: SubspaceFamily, support: np.ndarray, alpha: Fraction):
        self.fam = fam
        self.alpha = alpha
        points = cube_points(fam.n)
        self.codims = [V.codim for V in fam.members]
        self.labels = np.stack([coset_label_table(dual_space(V).basis, points) for V in fam.members])
        self.counts = [np.bincount(self.labels[i][support], minlength=1 << c).astype(np.int64)
                       for i, c in enumerate(self.codims)]
        self.support = support.copy()
        self.size = int(support.sum())

    def toggle(self, x: int):
        delta = -1 if self.support[x] else 1
        self.support[x] = not self.support[x]
        self.size += delta
        for i in range(len(self.codims)):
            self.counts[i][self.labels[i][x]] += delta

    def far_count(self) -> int:
        far = 0
        a_num, a_den = self.alpha.numerator, self.alpha.denominator
        for counts, c in zip(self.counts, self.codims):
            total = int(np.abs(counts * (1 << c) - self.size).sum())
            if total * a_den >= a_num * self.size * (1 << c):
                far += 1
        return far


def counterexample_search(fam: SubspaceFamily, params: ConjectureParams, budget: int, seed: int,
                          temperature_start: float = 1.0, temperature_end: float = 0.01,
                          tilt_steps: int = 0, cap: int = DEFAULT_DENSE_SEARCH_N,
                          writer: Optional[JsonLinesWriter] = None) -> SearchResult:
    """
    Simulated annealing over support sets S with X uniform on S.

    The score is log2|S| when more than k h projections are far, and
    log2|S| minus n per missing far projection otherwise. The start is the
    uniform distribution on the first member. Candidates are reported, never
    refutations.
    """
    n = fam.n
    if n > cap:
        raise CapExceededError("dense search dimension", n, cap)
    if budget < 0:
        raise ParameterError("budget must be non-negative")
    rng = make_rng(seed)
    start = np.zeros(1 << n, dtype=bool)
    start[fam.members[0].element_array()] = True
    state = _SupportState(fam, start, params.alpha)
    required = params.k * params.h + 1

    def score() -> float:
        deficit = max(0, required - state.far_count())
        return math.log2(state.size) - n * deficit

    current = score()
    best, best_support = current, state.support.copy()
    trace: List[Tuple[int, float]] = [(0, best)]
    for step in range(budget):
        frac = step / max(1, budget - 1)
        temperature = temperature_start * (temperature_end / temperature_start) ** frac
        x = int(rng.integers(0, 1 << n))
        if state.support[x] and state.size == 1:
            continue
        state.toggle(x)
        proposed = score()
        if proposed >= current or rng.random() < math.exp((proposed - current) / temperature):
            current = proposed
            if current > best:
                best, best_support = current, state.support.copy()
                trace.append((step + 1, best))
                if writer is not None:
                    writer.write({"seed": seed, "iteration": step + 1, "score": best,
                                  "support_size": int(best_support.sum())})
        else:
            state.toggle(x)
    logger.info(f"Counterexample search: best score {best:.4f} after {budget} iterations")

    report = conjecture_check(best_support, fam, params)
    report = replace(report, seed=seed)
    result = SearchResult(best_support, report, best, trace, budget)
    if tilt_steps > 0:
        result.tilted, result.tilted_report = _tilt(best_support, fam, params, tilt_steps, rng, seed)
    return result


def _tilt(support: np.ndarray, fam: SubspaceFamily, params: ConjectureParams, steps: int,
          rng: np.random.Generator, seed: int) -> Tuple[np.ndarray, ConjectureReport]:
    """Greedy multiplicative reweighting of the best support (float arithmetic)."""
    points = np.flatnonzero(support)
    weights = np.ones(points.size)

    def evaluate(w: np.ndarray) -> Tuple[float, ConjectureReport]:
        probs = np.zeros(1 << fam.n)
        probs[points] = w / w.sum()
        rep = conjecture_check(probs, fam, params)
        return rep.entropy - fam.n * max(0, rep.required_far - rep.far_count), rep

    best_score, best_report = evaluate(weights)
    for _ in range(steps):
        trial = weights.copy()
        trial[int(rng.integers(0, points.size))] *= math.exp(rng.normal(0.0, 0.5))
        candidate, rep = evaluate(trial)
        if candidate > best_score:
            weights, best_score, best_report = trial, candidate, rep
    probs = np.zeros(1 << fam.n)
    probs[points] = weights / weights.sum()
    return probs, replace(best_report, seed=seed)


# --- rectangle analysis ----------------------------------------------------------------

@dataclass(frozen=True)
class MemberProjection:
    index: int
    codim: int
    collision: Fraction
    dA: Fraction
    dB: Fraction
    far: bool

    def to_json(self) -> Dict[str, Any]:
        return {"index": self.index, "codim": self.codim, "collision": self.collision,
                "dA": self.dA, "dB": self.dB, "far": self.far}


@dataclass(frozen=True)
class ProjectionReport:
    alpha: Fraction
    members: Tuple[MemberProjection, ...]

    @property
    def far_count(self) -> int:
        return sum(1 for p in self.members if p.far)

    def to_json(self) -> Dict[str, Any]:
        return {"alpha": self.alpha, "far_count": self.far_count, "members": [p.to_json() for p in self.members]}


def _side_pushforwards(R: Rectangle, V: Subspace) -> Tuple[LabelDistribution, LabelDistribution]:
    return coset_pushforward(R.A, V), coset_pushforward(R.B, V)


def collision_probability(PA: LabelDistribution, PB: LabelDistribution) -> Fraction:
    """Pr[a = b] for a ~ PA, b ~ PB independent."""
    total = sum(int(a) * int(b) for a, b in zip(PA.weights, PB.weights))
    return Fraction(total, PA.denominator * PB.denominator)


def rectangle_analysis(R: Rectangle, fam: SubspaceFamily, alpha=Fraction(1, 2)) -> ProjectionReport:
    if R.n != fam.n:
        raise DimensionMismatchError(fam.n, R.n, "rectangle")
    if not R.A.any() or not R.B.any():
        raise ParameterError("rectangle sides must be non-empty")
    alpha = Fraction(alpha)
    out = []
    for i, V in enumerate(fam.members):
        PA, PB = _side_pushforwards(R, V)
        dA, dB = l1_to_uniform(PA), l1_to_uniform(PB)
        out.append(MemberProjection(i + 1, V.codim, collision_probability(PA, PB), dA, dB,
                                    far=max(dA, dB) >= alpha))
    return ProjectionReport(alpha, tuple(out))


def s_set(PB: LabelDistribution, alpha) -> np.ndarray:
    """Labels b with PB(b) >= (1 - alpha) / (2 * 2^codim)."""
    alpha = Fraction(alpha)
    size = 1 << PB.codim
    # PB(b) = w / den >= (1 - alpha) / (2 size)  <=>  2 size w q >= (q - p) den
    p, q = alpha.numerator, alpha.denominator
    return np.array([b for b, w in enumerate(PB.weights) if 2 * size * int(w) * q >= (q - p) * PB.denominator],
                    dtype=np.int64)


@dataclass(frozen=True)
class ChainCheck:
    premise: bool            # collision < (1 - alpha)^2 / 4 * 2^-codim
    collision: Fraction
    separation: Fraction     # ||A_V - B_V||_1
    max_distance: Fraction   # max(dA, dB)
    a_mass_on_s: Fraction
    b_mass_on_s: Fraction
    alpha: Fraction = Fraction(1, 2)

    @property
    def holds(self) -> bool:
        if not self.premise:
            return True
        return (self.a_mass_on_s < (1 - self.alpha) / 2
                and self.b_mass_on_s >= (1 + self.alpha) / 2
                and self.separation >= 2 * self.alpha
                and self.max_distance >= self.alpha)

    def to_json(self) -> Dict[str, Any]:
        return {"premise": self.premise, "holds": self.holds, "collision": self.collision,
                "separation": self.separation, "max_distance": self.max_distance,
                "a_mass_on_s": self.a_mass_on_s, "b_mass_on_s": self.b_mass_on_s}


def chain_inequality_check(R: Rectangle, V: Subspace, alpha=Fraction(1, 2)) -> ChainCheck:
    """
    Small collision probability forces the two coset projections apart.

    If Pr[coset(x) = coset(y)] < (1-alpha)^2/4 * 2^-codim then A_V puts less
    than (1-alpha)/2 on the heavy labels S of B_V, B_V puts at least
    (1+alpha)/2 there, so ||A_V - B_V||_1 >= 2 alpha and one side is
    alpha-far from uniform.
    """
    alpha = Fraction(alpha)
    PA, PB = _side_pushforwards(R, V)
    collision = collision_probability(PA, PB)
    premise = collision < (1 - alpha) ** 2 / 4 / (1 << V.codim)
    heavy = s_set(PB, alpha)
    a_on_s = Fraction(sum(int(PA.weights[b]) for b in heavy), PA.denominator)
    b_on_s = Fraction(sum(int(PB.weights[b]) for b in heavy), PB.denominator)
    return ChainCheck(premise, collision, l1_distance(PA, PB), max(l1_to_uniform(PA), l1_to_uniform(PB)),
                      a_on_s, b_on_s, alpha)


@dataclass(frozen=True)
class ChainTrialSummary:
    trials: int
    premise_count: int
    violations: int
    first_violation: Optional[int]

    def to_json(self) -> Dict[str, Any]:
        return {"trials": self.trials, "premise_count": self.premise_count,
                "violations": self.violations, "first_violation": self.first_violation}


def chain_trials(n: int, trials: int, seed: int, alpha=Fraction(1, 2),
                 task_manager: Optional[TaskManager] = None) -> ChainTrialSummary:
    """Random (rectangle, subspace) instances; trial i draws from stream (seed, i)."""
    alpha = Fraction(alpha)

    def sweep(chunk: Sequence[int]):
        out = []
        for trial in chunk:
            rng = make_rng(seed, trial)
            V = random_subspace(n, int(rng.integers(0, n + 1)), rng)
            check = chain_inequality_check(random_rectangle(n, rng), V, alpha)
            out.append((trial, check.premise, check.holds))
        return out

    manager = task_manager or get_task_manager()
    premise, violations, first = 0, 0, None
    for part in manager.run(sweep, chunked(range(trials), 128)):
        for trial, p, ok in part:
            premise += p
            if not ok:
                violations += 1
                first = trial if first is None else first
    logger.info(f"Chain trials: {trials} instances, premise met {premise}, violations {violations}")
    return ChainTrialSummary(trials, premise, violations, first)


# --- corruption for rectangles -----------------------------------------------------------

@dataclass(frozen=True)
class RectangleCorruption:
    total_mass: Fraction
    one_mass: Fraction
    epsilon: Fraction
    corrupted: bool                  # one_mass <= 4 eps total_mass
    large: Optional[bool] = None     # total_mass >= 2^(-c-3) when c was supplied

    @property
    def witness(self) -> bool:
        return self.corrupted and self.large is not False

    def to_json(self) -> Dict[str, Any]:
        return {"total_mass": self.total_mass, "one_mass": self.one_mass, "epsilon": self.epsilon,
                "corrupted": self.corrupted, "large": self.large, "witness": self.witness}


def corruption_rectangle_check(R: Rectangle, nu: NuDistribution, eps, c: Optional[int] = None) -> RectangleCorruption:
    eps = Fraction(eps)
    total, ones = nu.rectangle_masses(R)
    large = None if c is None else total >= Fraction(1, 1 << (c + 3))
    return RectangleCorruption(total, ones, eps, ones <= 4 * eps * total, large)


# --- monochromatic rectangles ------------------------------------------------------------

@dataclass(frozen=True)
class MonoRectangleResult:
    rectangle: Rectangle
    color: int
    checks: int
    nu_mass: Optional[Fraction] = None

    @property
    def size(self) -> int:
        return self.rectangle.size

    def to_json(self) -> Dict[str, Any]:
        data = self.rectangle.to_json()
        data.update({"color": self.color, "size": self.size, "size_a": self.rectangle.size_a,
                     "size_b": self.rectangle.size_b, "checks": self.checks, "nu_mass": self.nu_mass})
        return data


def mono_rectangle_search(f: PseudoBooleanFunction, budget: int, seed: int, color: Optional[int] = None,
                          nu: Optional[NuDistribution] = None,
                          cap: int = DEFAULT_MONO_RECT_N) -> MonoRectangleResult:
    """
    Greedy growth of an F-monochromatic A x B from a random singleton.

    Sides alternate; each candidate point is checked once against the set of
    points still compatible with the other side, and one check costs one unit
    of budget. Compatible sets only shrink, so a rejected point stays rejected.
    """
    n = f.n
    if n > cap:
        raise CapExceededError("monochromatic rectangle search dimension", n, cap)
    if not f.is_boolean:
        raise ParameterError("rectangle search needs a 0/1-valued function")
    size = 1 << n
    rng = make_rng(seed)
    table = np.asarray(f.numerators, dtype=np.int64)
    x0 = int(rng.integers(0, size))
    if color is None:
        y0 = int(rng.integers(0, size))
        color = int(table[x0 ^ y0])
    else:
        diffs = np.flatnonzero(table == color)
        if diffs.size == 0:
            raise ParameterError(f"f never takes the value {color}")
        y0 = x0 ^ int(diffs[int(rng.integers(0, diffs.size))])
    good = table == color
    points = np.arange(size)

    A = np.zeros(size, dtype=bool)
    B = np.zeros(size, dtype=bool)
    A[x0], B[y0] = True, True
    allowed_a = good[points ^ y0]
    allowed_b = good[points ^ x0]

    order_a = [int(x) for x in rng.permutation(size) if x != x0]
    order_b = [int(y) for y in rng.permutation(size) if y != y0]
    ia = ib = 0
    checks = 0
    turn = 0
    while checks < budget and (ia < len(order_a) or ib < len(order_b)):
        if (turn == 0 and ia < len(order_a)) or ib >= len(order_b):
            x = order_a[ia]
            ia += 1
            checks += 1
            if allowed_a[x]:
                A[x] = True
                allowed_b &= good[points ^ x]
        else:
            y = order_b[ib]
            ib += 1
            checks += 1
            if allowed_b[y]:
                B[y] = True
                allowed_a &= good[points ^ y]
        turn ^= 1

    R = Rectangle(n, A, B)
    mass = nu.rectangle_masses(R)[0] if nu is not None else None
    logger.info(f"Monochromatic search: |A|={R.size_a}, |B|={R.size_b}, color={color}, checks={checks}")
    return MonoRectangleResult(R, color, checks, mass)
