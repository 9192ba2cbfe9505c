from fractions import Fraction

import numpy as np
import pytest

from larclab.core.designs import SubspaceFamily, certify_dual_design_exhaustive, random_design
from larclab.core.errors import CapExceededError, ParameterError, UndefinedDistributionError
from larclab.core.f2core import AffineSubspace, Subspace, apply_map, iter_affine_subspaces, random_invertible_map
from larclab.core.fourier import PseudoBooleanFunction, and_function, parity_function, union_function
from larclab.core.pdt import (
    CubeDistribution,
    Leaf,
    ParityDecisionTree,
    Query,
    corruption_scan,
    distributional_error,
    enumerate_trees,
    evaluate,
    hard_distribution_mu,
    leaf_regions,
    min_distributional_error,
    mu_one_mass,
    optimal_depth,
    soundness_check,
    query_threshold,
)
from larclab.utils.rng import make_rng
from tests.fixtures.sample_data import THREE_PLANE_EPS_STAR, THREE_PLANE_MU, bits


def all_boolean_functions(n):
    for code in range(1 << (1 << n)):
        yield PseudoBooleanFunction.boolean(n, [(code >> x) & 1 for x in range(1 << n)])


class TestDistributions:
    def test_three_plane_mu(self, three_plane):
        mu = hard_distribution_mu(three_plane)
        assert mu.denominator == 24
        for point, p in THREE_PLANE_MU.items():
            assert mu.prob(bits(point)) == p

    def test_half_the_mass_is_on_zeros(self, rng):
        for _ in range(5):
            fam = random_design(6, 2, 4, rng)
            mu = hard_distribution_mu(fam)
            zeros = union_function(fam).numerators == 0
            assert mu.mass(zeros) == Fraction(1, 2)
            assert sum(mu.prob(x) for x in range(64)) == 1

    def test_covering_family_has_no_mu(self):
        fam = SubspaceFamily(3, (Subspace.full(3),))
        with pytest.raises(UndefinedDistributionError):
            hard_distribution_mu(fam)

    def test_one_mass_matches_table(self, three_plane):
        mu = hard_distribution_mu(three_plane)
        ones = union_function(three_plane).numerators != 0
        for codim in range(0, 4):
            for W in iter_affine_subspaces(3, codim):
                inside = np.zeros(8, dtype=bool)
                inside[W.element_array()] = True
                assert mu_one_mass(three_plane, W) == mu.mass(inside & ones)

    def test_weights_must_sum_to_denominator(self):
        with pytest.raises(ParameterError):
            CubeDistribution(1, np.array([1, 1]), 3)

    def test_json_round_trip(self, three_plane):
        mu = hard_distribution_mu(three_plane)
        back = CubeDistribution.from_json(mu.to_json())
        assert all(back.prob(x) == mu.prob(x) for x in range(8))

    def test_uniform_on(self):
        X = CubeDistribution.uniform_on(3, [1, 2])
        assert X.is_uniform_on_support
        assert list(X.support()) == [1, 2]
        assert X.prob(1) == Fraction(1, 2)
        assert X.mass_of(AffineSubspace.linear(Subspace.full(3))) == 1


class TestTrees:
    def test_evaluation(self):
        tree = ParityDecisionTree(2, Query(0b11, Leaf(0), Leaf(1)))
        assert [evaluate(tree, x) for x in range(4)] == [0, 1, 1, 0]
        assert soundness_check(tree, parity_function(2))
        assert tree.depth == 1

    def test_empty_mask_rejected(self):
        with pytest.raises(ParameterError):
            ParityDecisionTree(2, Query(0, Leaf(0), Leaf(1)))

    def test_json_round_trip(self):
        tree = ParityDecisionTree(3, Query(0b101, Leaf(1), Query(0b010, Leaf(0), Leaf(1))))
        assert ParityDecisionTree.from_json(tree.to_json()) == tree

    def test_leaf_regions_partition_the_cube(self, rng):
        trees = list(enumerate_trees(3, 2))
        for index in rng.choice(len(trees), size=40, replace=False):
            tree = trees[int(index)]
            regions = leaf_regions(tree)
            assert sum(W.size for W, _ in regions) == 8
            for W, value in regions:
                assert all(tree.evaluate(x) == value for x in W.elements())

    def test_enumeration_count(self):
        assert len(list(enumerate_trees(2, 1))) == 2 + 3 * 4
        with pytest.raises(CapExceededError):
            next(enumerate_trees(5, 1))


class TestOptimalDepth:
    def test_simple_functions(self):
        assert optimal_depth(PseudoBooleanFunction.constant(3, 0))[0] == 0
        assert optimal_depth(parity_function(4))[0] == 1
        for n in (1, 2, 3):
            assert optimal_depth(and_function(n))[0] == n

    def test_witness_tree_is_sound(self, three_plane):
        f = union_function(three_plane)
        depth, tree = optimal_depth(f)
        assert tree.depth == depth
        assert soundness_check(tree, f)

    def test_matches_tree_enumeration(self):
        trees = list(enumerate_trees(2, 2))
        for f in all_boolean_functions(2):
            depth, _ = optimal_depth(f)
            brute = min(t.depth for t in trees if soundness_check(t, f))
            assert depth == brute

    def test_invariant_under_invertible_maps(self):
        for n in (2, 3, 4):
            for trial in range(6):
                rng = make_rng(41, n, trial)
                f = PseudoBooleanFunction.boolean(n, rng.integers(0, 2, size=1 << n))
                A = random_invertible_map(n, rng)
                g = PseudoBooleanFunction.boolean(n, [f.numerators[apply_map(A, x)] for x in range(1 << n)])
                assert optimal_depth(g)[0] == optimal_depth(f)[0]

    def test_union_depth_survives_a_change_of_basis(self, three_plane):
        f = union_function(three_plane)
        A = random_invertible_map(3, make_rng(42))
        g = PseudoBooleanFunction.boolean(3, [f.numerators[apply_map(A, x)] for x in range(8)])
        assert optimal_depth(g)[0] == optimal_depth(f)[0]

    def test_non_boolean_rejected(self):
        with pytest.raises(ParameterError):
            optimal_depth(PseudoBooleanFunction.from_fractions(1, [Fraction(1, 2), 0]))

    def test_cap(self):
        with pytest.raises(CapExceededError):
            optimal_depth(parity_function(6))


class TestDistributionalError:
    def test_three_plane_depth_one(self, three_plane):
        f = union_function(three_plane)
        mu = hard_distribution_mu(three_plane)
        err, tree = min_distributional_error(f, mu, 1)
        assert err == Fraction(1, 6)
        assert distributional_error(tree, f, mu) == err

    def test_depth_zero_is_the_minority_mass(self, three_plane):
        f = union_function(three_plane)
        err, tree = min_distributional_error(f, hard_distribution_mu(three_plane), 0)
        assert err == Fraction(1, 2)
        assert isinstance(tree.root, Leaf)

    def test_full_depth_is_exact(self, three_plane):
        f = union_function(three_plane)
        err, _ = min_distributional_error(f, hard_distribution_mu(three_plane), optimal_depth(f)[0])
        assert err == 0

    def test_matches_enumeration(self, rng):
        trees = list(enumerate_trees(2, 1))
        for f in all_boolean_functions(2):
            weights = rng.integers(0, 5, size=4)
            weights[0] += 1
            mu = CubeDistribution(2, weights, int(weights.sum()))
            err, _ = min_distributional_error(f, mu, 1)
            assert err == min(distributional_error(t, f, mu) for t in trees)


class TestCorruption:
    def test_no_witness_below_threshold(self, three_plane):
        f = union_function(three_plane)
        mu = hard_distribution_mu(three_plane)
        result = corruption_scan(f, mu, Fraction(1, 100), 1)
        assert result.verdict == "NoWitness(1)"
        assert result.lower_bound == 1
        assert result.witness is None

    def test_witness_at_one_sixteenth(self, three_plane, task_manager):
        f = union_function(three_plane)
        mu = hard_distribution_mu(three_plane)
        result = corruption_scan(f, mu, Fraction(1, 16), 1, task_manager=task_manager)
        assert result.verdict == "witness"
        assert result.c_scanned == 1
        assert result.witness.one_mass == Fraction(1, 6)
        assert result.witness.total_mass == Fraction(2, 3)
        assert result.witness.W.codim == 1
        assert result.lower_bound is None

    def test_witness_just_below_one_sixteenth(self, three_plane):
        f = union_function(three_plane)
        result = corruption_scan(f, hard_distribution_mu(three_plane), Fraction(1, 17), 1)
        assert result.verdict == "NoWitness(1)"

    def test_codim_zero_witness(self):
        f = PseudoBooleanFunction.constant(2, 0)
        result = corruption_scan(f, CubeDistribution.uniform(2), 0, 2)
        assert result.c_scanned == 0
        assert result.witness.total_mass == 1

    def test_negative_eps(self, three_plane):
        f = union_function(three_plane)
        with pytest.raises(ParameterError):
            corruption_scan(f, hard_distribution_mu(three_plane), Fraction(-1, 2), 1)


class TestThreshold:
    def test_three_plane_threshold(self, three_plane):
        cert = certify_dual_design_exhaustive(three_plane, 1)
        report = query_threshold(three_plane, cert)
        assert report.epsilon_star == THREE_PLANE_EPS_STAR
        assert report.zeros == 1
        assert report.zero_fraction_lower == 0
        assert not report.vacuous

    def test_certificate_must_match_family(self, three_plane, two_planes):
        cert = certify_dual_design_exhaustive(two_planes, 1)
        with pytest.raises(ParameterError):
            query_threshold(three_plane, cert)
