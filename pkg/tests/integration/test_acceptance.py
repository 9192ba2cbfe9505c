"""
Desk-scale acceptance runs. The heavier ones carry the `slow` marker and are
skipped unless LARCLAB_RUN_SLOW is set.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from larclab.core.commlab import affine_sanity_trial, chain_trials
from larclab.core.designs import (
    certify_dual_design_exhaustive,
    dual_side_hits,
    hitting_check,
    nonindependent_count,
    random_design,
)
from larclab.core.f2core import (
    Subspace,
    affine_avoidance_check,
    AvoidanceKind,
    dual_space,
    intersect,
    iter_affine_subspaces,
    iter_subspace_bases,
    random_affine_subspace,
    random_subspace,
)
from larclab.core.fourier import (
    PseudoBooleanFunction,
    and_function,
    check_union_identity,
    grolmusz_sparsify,
    inverse_wht,
    parity_function,
    parseval_holds,
    subspace_indicator,
    union_function,
    union_representation,
    wht,
    xor_lift_rank,
)
from larclab.core.pdt import (
    corruption_scan,
    distributional_error,
    enumerate_trees,
    hard_distribution_mu,
    min_distributional_error,
    optimal_depth,
)
from larclab.utils.rng import make_rng
from tests.fixtures.sample_data import THREE_PLANE_EPS_STAR


class TestFourierExactness:
    def test_round_trip_and_parseval_at_12(self):
        for i in range(200):
            rng = make_rng(1, i)
            f = PseudoBooleanFunction(12, rng.integers(-1000, 1001, size=1 << 12), int(rng.integers(0, 8)))
            spectrum = wht(f)
            assert inverse_wht(spectrum) == f
            assert parseval_holds(f, spectrum)

    @pytest.mark.slow
    def test_subspace_spectra(self):
        for i in range(100):
            rng = make_rng(2, i)
            n = int(rng.integers(8, 17))
            V = random_subspace(n, int(rng.integers(0, n + 1)), rng)
            spectrum = wht(subspace_indicator(V))
            assert spectrum.sparsity == 1 << V.codim
            assert spectrum.spectral_norm == 1

    @pytest.mark.slow
    def test_union_spectral_norm(self):
        for i in range(20):
            fam = random_design(16, 6, 32, make_rng(3, i), pairwise_trivial=True)
            assert union_function(fam) == union_representation(fam)
            assert check_union_identity(fam).spectral_norm <= 2 * fam.m - 1

    def test_rank_identity(self):
        for code in range(256):
            f = PseudoBooleanFunction.boolean(3, [(code >> x) & 1 for x in range(8)])
            assert xor_lift_rank(f) == wht(f).sparsity
        for i in range(50):
            f = PseudoBooleanFunction.boolean(4, make_rng(4, i).integers(0, 2, size=16))
            assert xor_lift_rank(f) == wht(f).sparsity


class TestIntersections:
    @pytest.mark.slow
    def test_nontrivial_intersection_rate(self):
        trials = 10_000
        hits = 0
        for i in range(trials):
            rng = make_rng(5, i)
            S = random_subspace(20, 6, rng)
            T = random_subspace(20, 6, rng)
            hits += intersect(S, T).dim > 0
        p = 20 * 2.0 ** -8
        sigma = math.sqrt(p * (1 - p) / trials)
        assert hits / trials <= p + 3 * sigma

    @pytest.mark.slow
    def test_affine_dichotomy(self):
        for i in range(10_000):
            rng = make_rng(6, i)
            V = random_affine_subspace(10, int(rng.integers(0, 11)), rng)
            W = random_affine_subspace(10, int(rng.integers(0, 11)), rng)
            inter = np.intersect1d(V.element_array(), W.element_array())
            result = affine_avoidance_check(V, W)
            assert (result.kind == AvoidanceKind.DISJOINT) == (inter.size == 0)
            if inter.size:
                assert result.ratio == Fraction(int(inter.size), V.size)


class TestDesigns:
    def test_three_plane_certificate(self, three_plane):
        assert certify_dual_design_exhaustive(three_plane, 1).h == 1

    @pytest.mark.slow
    def test_two_characterizations_agree(self):
        for i in range(20):
            rng = make_rng(7, i)
            n = int(rng.integers(2, 7))
            fam = random_design(n, int(rng.integers(0, n + 1)), int(rng.integers(1, 5)), rng)
            for k in range(n + 1):
                for basis in iter_subspace_bases(n, k):
                    T = Subspace(n, basis)
                    assert dual_side_hits(fam, T) == nonindependent_count(fam, dual_space(T))

    @pytest.mark.slow
    def test_hitting_property(self):
        for i in range(10):
            rng = make_rng(8, i)
            n = int(rng.integers(3, 7))
            fam = random_design(n, int(rng.integers(1, n)), int(rng.integers(2, 6)), rng)
            for s in range(0, 3):
                h = certify_dual_design_exhaustive(fam, s).h
                for codim in range(0, s + 1):
                    for W in iter_affine_subspaces(n, codim):
                        assert hitting_check(fam, W) >= fam.m - h


class TestQueryLowerBounds:
    def test_corruption_below_threshold(self, three_plane):
        f = union_function(three_plane)
        mu = hard_distribution_mu(three_plane)
        for eps in (Fraction(0), Fraction(1, 200), THREE_PLANE_EPS_STAR - Fraction(1, 10_000)):
            assert corruption_scan(f, mu, eps, 1).verdict == "NoWitness(1)"
            best = min(distributional_error(t, f, mu) for t in enumerate_trees(3, 1))
            assert best > eps

    @staticmethod
    def _check_against_enumeration(fam, depth):
        f = union_function(fam)
        mu = hard_distribution_mu(fam)
        best, tree = min_distributional_error(f, mu, depth)
        assert best == min(distributional_error(t, f, mu) for t in enumerate_trees(fam.n, depth))
        assert distributional_error(tree, f, mu) == best
        # a tree with error eps <= 1/4 leaves some 0-leaf 4eps-corrupted
        for eps in (Fraction(0), Fraction(1, 200), Fraction(1, 50), best):
            if eps > Fraction(1, 4):
                continue
            result = corruption_scan(f, mu, eps, depth)
            if result.witness is None:
                assert best > eps
            else:
                assert result.c_scanned <= depth
            if best <= eps:
                assert result.witness is not None

    def test_depth_one_at_4(self):
        for trial in range(3):
            fam = random_design(4, 2, 3, seed=make_rng(16, trial), pairwise_trivial=True)
            self._check_against_enumeration(fam, 1)

    @pytest.mark.slow
    def test_depth_two_at_4(self):
        fam = random_design(4, 2, 3, seed=make_rng(16, 0), pairwise_trivial=True)
        self._check_against_enumeration(fam, 2)

    def test_optimal_depths(self):
        for n in range(1, 6):
            assert optimal_depth(PseudoBooleanFunction.constant(n, 1))[0] == 0
            assert optimal_depth(parity_function(n))[0] == 1
        for n in range(1, 5):
            assert optimal_depth(and_function(n))[0] == n


class TestCommunicationSide:
    def test_affine_sanity_at_12(self):
        held = 0
        for trial in range(50):
            result = affine_sanity_trial(12, 4, 8, 2, trial, seed=12)
            assert result.h_source == "montecarlo"
            assert result.entropy == 12 - result.codim
            assert result.far_count <= result.nonindependent
            if result.design_holds:
                held += 1
                assert result.far_count <= result.h
            assert result.ok
        assert held > 0

    def test_affine_sanity_with_exhaustive_h(self):
        for trial in range(20):
            result = affine_sanity_trial(8, 3, 8, 2, trial, seed=15)
            assert result.h_source == "exhaustive"
            assert result.design_holds
            assert result.far_count <= result.h

    @pytest.mark.slow
    def test_chain_at_10(self):
        summary = chain_trials(10, 10_000, seed=13)
        assert summary.violations == 0

    @pytest.mark.slow
    def test_grolmusz_self_verification(self):
        fam = random_design(14, 5, 16, seed=14, pairwise_trivial=True)
        f = union_function(fam)
        result = grolmusz_sparsify(f, Fraction(1, 10), seed=14)
        assert result.verified
        assert result.sup_distance <= Fraction(1, 10)
        assert result.t <= 4 * (2 * fam.m) ** 2 * fam.n * 100
