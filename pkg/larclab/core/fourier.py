"""
Exact Fourier analysis of pseudo-Boolean functions on {0,1}^n.

Tables hold integer numerators with one shared power-of-two scale, so every
value and coefficient is an exact dyadic rational. Numerators live in int64
arrays while the butterfly cannot overflow and in object arrays (Python ints)
otherwise.

Provides:
- PseudoBooleanFunction / FourierSpectrum tables with JSON codecs
- wht / inverse_wht butterflies and the Parseval check
- subspace indicators and their closed-form spectra
- union-of-subspaces functions and the pairwise-trivial representation
- spectral_report, grolmusz_sparsify and the XOR-lift rank identity
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from sympy import QQ, ZZ
from sympy.polys.matrices.domainmatrix import DomainMatrix

from larclab.core.designs import SubspaceFamily, pairwise_trivial
from larclab.core.errors import (
    CapExceededError,
    DimensionMismatchError,
    ParameterError,
    PropertyViolationError,
)
from larclab.core.f2core import Subspace, dual_space, parity_array
from larclab.utils.rng import RandomSource, as_rng

logger = logging.getLogger(__name__)

DEFAULT_MAX_N = 24
DEFAULT_XOR_LIFT_N = 6
_INT64_HEADROOM = 62

Number = Union[int, Fraction]


def _max_abs_bits(values: np.ndarray) -> int:
    if values.size == 0:
        return 0
    if values.dtype == object:
        return max(abs(int(v)) for v in values).bit_length()
    return int(np.max(np.abs(values))).bit_length()


def _widen(values: np.ndarray, growth_bits: int) -> np.ndarray:
    """Switch to Python ints when growing by 2^growth_bits could overflow int64."""
    if values.dtype != object and _max_abs_bits(values) + growth_bits >= _INT64_HEADROOM:
        return values.astype(object)
    return values


def _shift_left(values: np.ndarray, bits: int) -> np.ndarray:
    if bits == 0:
        return values
    values = _widen(values, bits)
    if values.dtype == object:
        return values * (1 << bits)
    return values << np.int64(bits)


def _as_table(values: Any) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == object:
        return np.array([int(v) for v in arr.reshape(-1)], dtype=object)
    if arr.dtype == bool or np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.int64).reshape(-1)
    raise ParameterError(f"table numerators must be integers, got dtype {arr.dtype}")


@dataclass(frozen=True, eq=False)
class DyadicTable:
    """2^n exact dyadic rationals: value[i] = numerators[i] / 2^scale_pow2."""
    n: int
    numerators: np.ndarray
    scale_pow2: int = 0

    def __post_init__(self):
        table = _as_table(self.numerators)
        if table.shape[0] != 1 << self.n:
            raise DimensionMismatchError(1 << self.n, table.shape[0], "table length")
        scale = self.scale_pow2
        if table.size and scale > 0:
            if table.dtype == object:
                while scale > 0 and all(v % 2 == 0 for v in table):
                    table = np.array([v // 2 for v in table], dtype=object)
                    scale -= 1
            else:
                while scale > 0 and not np.any(table & 1):
                    table = table >> 1
                    scale -= 1
        if scale < 0:
            table = _shift_left(table, -scale)
            scale = 0
        table.setflags(write=False)
        object.__setattr__(self, 'numerators', table)
        object.__setattr__(self, 'scale_pow2', scale)

    def __len__(self) -> int:
        return 1 << self.n

    def __getitem__(self, index: int) -> Fraction:
        return Fraction(int(self.numerators[index]), 1 << self.scale_pow2)

    def fractions(self) -> List[Fraction]:
        den = 1 << self.scale_pow2
        return [Fraction(int(v), den) for v in self.numerators]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DyadicTable) or other.n != self.n:
            return NotImplemented
        return self.scale_pow2 == other.scale_pow2 and bool(np.all(self.numerators == other.numerators))

    __hash__ = None  # type: ignore[assignment]

    def aligned_with(self, other: 'DyadicTable'):
        """Numerators of self and other over the common scale."""
        if other.n != self.n:
            raise DimensionMismatchError(self.n, other.n)
        scale = max(self.scale_pow2, other.scale_pow2)
        a = _shift_left(self.numerators, scale - self.scale_pow2)
        b = _shift_left(other.numerators, scale - other.scale_pow2)
        if a.dtype == object or b.dtype == object:
            a, b = a.astype(object), b.astype(object)
        return a, b, scale

    def sup_distance(self, other: 'DyadicTable') -> Fraction:
        a, b, scale = self.aligned_with(other)
        a, b = _widen(a, 1), _widen(b, 1)
        if a.dtype == object or b.dtype == object:
            a, b = a.astype(object), b.astype(object)
        diff = np.abs(a - b)
        top = int(diff.max()) if diff.size else 0
        return Fraction(top, 1 << scale)

    def to_json(self) -> Dict[str, Any]:
        return {"n": self.n, "scale_pow2": self.scale_pow2, "values": [int(v) for v in self.numerators]}


class PseudoBooleanFunction(DyadicTable):
    """A function {0,1}^n -> dyadic rationals, indexed by the packed input x."""

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'PseudoBooleanFunction':
        return cls(int(data["n"]), np.array([int(v) for v in data["values"]], dtype=object),
                   int(data.get("scale_pow2", 0)))

    @classmethod
    def from_fractions(cls, n: int, values: Sequence[Number]) -> 'PseudoBooleanFunction':
        fracs = [Fraction(v) for v in values]
        den = 1
        for f in fracs:
            den = den * f.denominator // math.gcd(den, f.denominator)
        if den & (den - 1):
            raise ParameterError(f"values are not dyadic (common denominator {den})")
        scale = den.bit_length() - 1
        return cls(n, np.array([int(f * den) for f in fracs], dtype=object), scale)

    @classmethod
    def constant(cls, n: int, value: Number = 1) -> 'PseudoBooleanFunction':
        return cls.from_fractions(n, [value] * (1 << n))

    @classmethod
    def boolean(cls, n: int, bits: Sequence[int]) -> 'PseudoBooleanFunction':
        return cls(n, np.asarray(bits, dtype=np.int64) & 1)

    @classmethod
    def from_callable(cls, n: int, func) -> 'PseudoBooleanFunction':
        return cls.from_fractions(n, [func(x) for x in range(1 << n)])

    @property
    def is_boolean(self) -> bool:
        return self.scale_pow2 == 0 and bool(np.all((self.numerators == 0) | (self.numerators == 1)))

    def ones(self) -> np.ndarray:
        """Points where the value is non-zero."""
        return np.flatnonzero(self.numerators != 0)

    def __add__(self, other: 'PseudoBooleanFunction') -> 'PseudoBooleanFunction':
        a, b, scale = self.aligned_with(other)
        return PseudoBooleanFunction(self.n, a + b, scale)

    def __sub__(self, other: 'PseudoBooleanFunction') -> 'PseudoBooleanFunction':
        a, b, scale = self.aligned_with(other)
        return PseudoBooleanFunction(self.n, a - b, scale)

    def scaled(self, factor: int) -> 'PseudoBooleanFunction':
        return PseudoBooleanFunction(self.n, _widen(self.numerators, abs(factor).bit_length()) * factor,
                                     self.scale_pow2)


BooleanFunction = PseudoBooleanFunction


class FourierSpectrum(DyadicTable):
    """Coefficients f^(S) indexed by the character mask S."""

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'FourierSpectrum':
        return cls(int(data["n"]), np.array([int(v) for v in data["values"]], dtype=object),
                   int(data.get("scale_pow2", 0)))

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.numerators != 0)

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.numerators))

    @property
    def spectral_norm(self) -> Fraction:
        total = sum(abs(int(v)) for v in self.numerators[self.numerators != 0])
        return Fraction(total, 1 << self.scale_pow2)


# --- transforms ------------------------------------------------------------------

def _butterfly(table: np.ndarray, n: int) -> np.ndarray:
    """Unnormalized Walsh-Hadamard butterfly: out[S] = sum_x in[x] (-1)^|x & S|."""
    a = _widen(table, n).copy()
    h = 1
    size = a.shape[0]
    while h < size:
        a = a.reshape(-1, 2, h)
        lo = a[:, 0, :]
        hi = a[:, 1, :]
        a = np.stack((lo + hi, lo - hi), axis=1)
        h *= 2
    return a.reshape(-1)


def _check_cap(n: int, cap: int):
    if n > cap:
        raise CapExceededError(f"2^{n}-entry table", n, cap, hint="raise --max-n or LARCLAB_MAX_N")


def wht(f: PseudoBooleanFunction, cap: int = DEFAULT_MAX_N) -> FourierSpectrum:
    """f^(S) = 2^-n sum_x f(x) chi_S(x), exactly."""
    _check_cap(f.n, cap)
    return FourierSpectrum(f.n, _butterfly(f.numerators, f.n), f.scale_pow2 + f.n)


def inverse_wht(spectrum: FourierSpectrum, cap: int = DEFAULT_MAX_N) -> PseudoBooleanFunction:
    """f(x) = sum_S f^(S) chi_S(x)."""
    _check_cap(spectrum.n, cap)
    return PseudoBooleanFunction(spectrum.n, _butterfly(spectrum.numerators, spectrum.n), spectrum.scale_pow2)


def xor_convolution(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """out[d] = sum_x a[x] b[x xor d], exact for integer tables."""
    fa = _butterfly(_as_table(a), n)
    fb = _butterfly(_as_table(b), n)
    if fa.dtype == object or fb.dtype == object or _max_abs_bits(fa) + _max_abs_bits(fb) + n >= _INT64_HEADROOM:
        fa, fb = fa.astype(object), fb.astype(object)
    return _butterfly(fa * fb, n) // (1 << n)


def _sum_squares(values: np.ndarray) -> int:
    return sum(int(v) * int(v) for v in values[values != 0])


def parseval_holds(f: PseudoBooleanFunction, spectrum: Optional[FourierSpectrum] = None) -> bool:
    """sum_S f^(S)^2 == 2^-n sum_x f(x)^2, compared as integers."""
    spectrum = spectrum if spectrum is not None else wht(f, cap=f.n)
    lhs = _sum_squares(spectrum.numerators) << (2 * f.scale_pow2 + f.n)
    rhs = _sum_squares(f.numerators) << (2 * spectrum.scale_pow2)
    return lhs == rhs


def character(n: int, mask: int) -> PseudoBooleanFunction:
    """chi_S as a +-1 table."""
    x = np.arange(1 << n, dtype=np.int64)
    return PseudoBooleanFunction(n, 1 - 2 * parity_array(x & np.int64(mask)))


def parity_function(n: int) -> PseudoBooleanFunction:
    """x_1 xor ... xor x_n as a 0/1 table."""
    return PseudoBooleanFunction(n, parity_array(np.arange(1 << n, dtype=np.int64)))


def and_function(n: int) -> PseudoBooleanFunction:
    table = np.zeros(1 << n, dtype=np.int64)
    table[-1] = 1
    return PseudoBooleanFunction(n, table)


# --- subspaces and unions --------------------------------------------------------

def subspace_indicator(V: Subspace) -> PseudoBooleanFunction:
    table = np.zeros(1 << V.ambient_dim, dtype=np.int64)
    table[V.element_array()] = 1
    return PseudoBooleanFunction(V.ambient_dim, table)


def subspace_indicator_spectrum(V: Subspace) -> FourierSpectrum:
    """Closed form: 2^-codim(V) on every element of dual(V), zero elsewhere."""
    coeffs = np.zeros(1 << V.ambient_dim, dtype=np.int64)
    coeffs[dual_space(V).element_array()] = 1
    return FourierSpectrum(V.ambient_dim, coeffs, V.codim)


def union_function(fam: SubspaceFamily) -> PseudoBooleanFunction:
    """f with f^-1(1) the union of the members."""
    table = np.zeros(1 << fam.n, dtype=bool)
    for V in fam.members:
        table[V.element_array()] = True
    return PseudoBooleanFunction(fam.n, table)


def union_representation(fam: SubspaceFamily) -> PseudoBooleanFunction:
    """sum_V 1_V - (m - 1) 1_{0}; equals the union function when pairs meet only at 0."""
    table = np.zeros(1 << fam.n, dtype=np.int64)
    for V in fam.members:
        table[V.element_array()] += 1
    table[0] -= fam.m - 1
    return PseudoBooleanFunction(fam.n, table)


def check_union_identity(fam: SubspaceFamily) -> FourierSpectrum:
    """Verify the representation and the norm bound m + (m - 1) on a pairwise-trivial family."""
    if not pairwise_trivial(fam):
        raise ParameterError("the union identity needs a pairwise-trivial family")
    f = union_function(fam)
    if f != union_representation(fam):
        raise PropertyViolationError("union function differs from sum 1_V - (m-1) 1_{0}")
    spectrum = wht(f, cap=fam.n)
    if spectrum.spectral_norm > 2 * fam.m - 1:
        raise PropertyViolationError(f"spectral norm {spectrum.spectral_norm} exceeds 2m - 1 = {2 * fam.m - 1}")
    return spectrum


# --- Grolmusz sparsification -----------------------------------------------------

def grolmusz_bound(spectral_norm: Fraction, n: int, eps: Fraction, delta: Fraction,
                   constant: Number = 4) -> int:
    """ceil(C * L^2 * n / (delta - eps)^2)."""
    return math.ceil(Fraction(constant) * spectral_norm ** 2 * n / (delta - eps) ** 2)


def _check_eps_delta(eps: Fraction, delta: Fraction):
    if eps < 0:
        raise ParameterError("eps must be non-negative")
    if delta <= eps:
        raise ParameterError(f"need delta > eps, got eps={eps}, delta={delta}")


@dataclass(frozen=True)
class SparsifyResult:
    g: PseudoBooleanFunction
    method: str               # identity | constant | sampling
    t: int                    # characters sampled in the last round
    sparsity: int
    sup_distance: Fraction    # ||g - f||_inf, exact
    verified: bool
    bound: int                # C L^2 n / (delta - eps)^2
    rounds: int
    eps: Fraction
    delta: Fraction

    def to_json(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "t": self.t,
            "sparsity": self.sparsity,
            "sup_distance": self.sup_distance,
            "verified": self.verified,
            "bound": self.bound,
            "rounds": self.rounds,
            "eps": self.eps,
            "delta": self.delta,
        }


def _next_pow2(t: int) -> int:
    return 1 << max(0, (t - 1).bit_length())


def grolmusz_sparsify(f: PseudoBooleanFunction, delta: Number, seed: RandomSource,
                      eps: Number = 0, approximator: Optional[PseudoBooleanFunction] = None,
                      constant: Number = 4, initial_t: int = 64, growth: int = 2,
                      target_sparsity: Optional[int] = None,
                      cap: int = DEFAULT_MAX_N) -> SparsifyResult:
    """
    Sparse delta-approximator of f built from an eps-approximator p.

    Characters are drawn i.i.d. with probability |p^(S)| / ||p^||_1 and
    g = (||p^||_1 / t) * sum of the signed draws. The sample size t is a power
    of two, so g stays dyadic and the sup-norm check is exact. t doubles (or
    grows by `growth`) until ||g - f||_inf <= delta or t passes the bound.

    Args:
        f: Target function
        delta: Required sup-norm accuracy
        seed: Seed or numpy Generator for the sampler
        eps: Accuracy of the supplied approximator
        approximator: p with ||p - f||_inf <= eps (default f itself)
        constant: C in the reported bound
        initial_t: First sample size (rounded up to a power of two)
        growth: Sample-size multiplier (rounded up to a power of two)
        target_sparsity: Return p itself when it is already this sparse
        cap: Table-size cap

    Returns:
        SparsifyResult; `verified` is False when every round failed
    """
    _check_cap(f.n, cap)
    eps, delta = Fraction(eps), Fraction(delta)
    _check_eps_delta(eps, delta)
    p = approximator if approximator is not None else f
    if p.n != f.n:
        raise DimensionMismatchError(f.n, p.n, "approximator")
    if p.sup_distance(f) > eps:
        raise ParameterError(f"approximator is not within eps={eps} of f")

    spectrum = wht(p, cap)
    norm = spectrum.spectral_norm
    bound = grolmusz_bound(norm, f.n, eps, delta, constant) if norm else 0

    if target_sparsity is not None and spectrum.sparsity <= target_sparsity:
        return SparsifyResult(p, "identity", 0, spectrum.sparsity, p.sup_distance(f), True,
                              bound, 0, eps, delta)

    constant_g = PseudoBooleanFunction.from_fractions(f.n, [spectrum[0]] * (1 << f.n))
    constant_dist = constant_g.sup_distance(f)
    if constant_dist <= delta:
        logger.debug("Constant approximator already within delta")
        return SparsifyResult(constant_g, "constant", 0, 1 if spectrum[0] else 0, constant_dist, True,
                              bound, 0, eps, delta)

    rng = as_rng(seed)
    support = spectrum.support()
    weights = np.array([abs(int(spectrum.numerators[s])) for s in support], dtype=float)
    probs = weights / weights.sum()
    signs = np.array([1 if int(spectrum.numerators[s]) > 0 else -1 for s in support], dtype=np.int64)
    abs_total = sum(abs(int(spectrum.numerators[s])) for s in support)
    step = _next_pow2(max(2, growth))

    t = _next_pow2(max(1, initial_t))
    rounds = 0
    best: Optional[SparsifyResult] = None
    while True:
        rounds += 1
        draws = rng.choice(support.shape[0], size=t, p=probs)
        counts = np.bincount(draws, minlength=support.shape[0]).astype(np.int64) * signs
        coeffs = np.zeros(1 << f.n, dtype=object)
        for s, c in zip(support, counts):
            if c:
                coeffs[s] = abs_total * int(c)
        g = inverse_wht(FourierSpectrum(f.n, coeffs, spectrum.scale_pow2 + t.bit_length() - 1), cap)
        dist = g.sup_distance(f)
        sparsity = int(np.count_nonzero(counts))
        logger.info(f"Grolmusz round {rounds}: t={t}, sparsity={sparsity}, sup distance={float(dist):.4g}")
        result = SparsifyResult(g, "sampling", t, sparsity, dist, dist <= delta, bound, rounds, eps, delta)
        if result.verified:
            return result
        if best is None or dist < best.sup_distance:
            best = result
        if t * step > bound:
            break
        t *= step
    logger.warning(f"Sparsification not verified up to t={t}; best sup distance {best.sup_distance}")
    return SparsifyResult(best.g, best.method, t, best.sparsity, best.sup_distance, False,
                          bound, rounds, eps, delta)


# --- reports and the XOR lift ----------------------------------------------------

@dataclass(frozen=True)
class SpectralReport:
    n: int
    sparsity: int
    spectral_norm: Fraction
    eps: Fraction
    delta: Fraction
    approx_sparsity_bound: int
    grolmusz_bound: int
    sparsify: Optional[SparsifyResult] = None
    representation_norm_bound: Optional[int] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "sparsity": self.sparsity,
            "spectral_norm": self.spectral_norm,
            "eps": self.eps,
            "delta": self.delta,
            "approx_sparsity_bound": self.approx_sparsity_bound,
            "grolmusz_bound": self.grolmusz_bound,
            "sparsify": self.sparsify.to_json() if self.sparsify else None,
            "representation_norm_bound": self.representation_norm_bound,
        }


def spectral_report(f: PseudoBooleanFunction, eps: Number, delta: Number,
                    seed: Optional[RandomSource] = None, family: Optional[SubspaceFamily] = None,
                    constant: Number = 4, initial_t: int = 64, growth: int = 2,
                    cap: int = DEFAULT_MAX_N) -> SpectralReport:
    """
    Exact sparsity and spectral norm plus an approximate-sparsity bound.

    Without a seed the bound is min(sparsity, Grolmusz bound): f approximates
    itself. With a seed a verified sparsifier can only lower it.
    """
    eps, delta = Fraction(eps), Fraction(delta)
    _check_eps_delta(eps, delta)
    spectrum = wht(f, cap)
    norm = spectrum.spectral_norm
    analytic = grolmusz_bound(norm, f.n, eps, delta, constant) if norm else 0
    approx = min(spectrum.sparsity, analytic) if norm else 0
    result = None
    if seed is not None and spectrum.sparsity:
        result = grolmusz_sparsify(f, delta, seed, eps=eps, constant=constant,
                                   initial_t=initial_t, growth=growth, cap=cap)
        if result.verified:
            approx = min(approx, result.sparsity)
    rep_bound = None
    if family is not None and pairwise_trivial(family):
        rep_bound = 2 * family.m - 1
    return SpectralReport(f.n, spectrum.sparsity, norm, eps, delta, approx, analytic, result, rep_bound)


def xor_lift_matrix(f: PseudoBooleanFunction, cap: int = DEFAULT_XOR_LIFT_N) -> np.ndarray:
    """M[x][y] = f(x xor y) as numerators over 2^scale_pow2."""
    _check_cap(f.n, cap)
    idx = np.arange(1 << f.n)
    return f.numerators[idx[:, None] ^ idx[None, :]]


def xor_lift_rank(f: PseudoBooleanFunction, cap: int = DEFAULT_XOR_LIFT_N) -> int:
    """Rank over Q of the XOR lift; raises when it differs from the Fourier sparsity."""
    M = xor_lift_matrix(f, cap)
    size = M.shape[0]
    rows = [[ZZ(int(v)) for v in row] for row in M]
    r = DomainMatrix(rows, (size, size), ZZ).convert_to(QQ).rank()
    sparsity = wht(f, cap).sparsity
    if r != sparsity:
        raise PropertyViolationError(f"XOR-lift rank {r} differs from Fourier sparsity {sparsity}")
    return r
