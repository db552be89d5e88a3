import math

import numpy as np
import pytest

from attribmkt.demand import FactorStructure, Preferences, sigma_dense
from attribmkt.hetero import (
    ConsumerMix,
    RhoGrid,
    _duopoly_profit_batch,
    _monopoly_batch,
    aggregate_demand,
    duopoly_equilibrium,
    mixed_monopoly_profit,
    mixed_sigma,
    ratio_parameters,
    rho_star_duopoly,
    rho_star_monopoly,
    swapped_mix,
)
from attribmkt.pricing import active_set_equilibrium, monopoly_profit


def mirrored_loadings(rho):
    x = 0.5 * math.asin(rho)
    return np.array([[math.cos(x), math.sin(x)], [math.sin(x), math.cos(x)]])


class TestMixedSigma:
    def test_full_weight_is_consumer_one(self):
        s = np.array([[1.0, 0.2], [0.3, 1.0], [0.0, 0.5]])
        mix = ConsumerMix(1.0, [2.0, 1.0], [5.0, 7.0], [1, 1], [1, 1], s)
        np.testing.assert_array_equal(mixed_sigma(mix)[0], sigma_dense(FactorStructure(s, [2.0, 1.0])))

    def test_average_weight(self):
        mix = ConsumerMix(0.5, [2.0], [4.0], [1.0], [1.0], np.array([[1.0], [0.0]]))
        np.testing.assert_array_equal(mixed_sigma(mix)[0], np.diag([4.0, 1.0]))

    def test_equal_weights_bitwise(self):
        s = np.random.default_rng(0).normal(size=(4, 2))
        mix = ConsumerMix(0.3, [1.5, 0.5], [1.5, 0.5], [1, 1], [1, 1], s)
        np.testing.assert_array_equal(mixed_sigma(mix)[0], sigma_dense(FactorStructure(s, [1.5, 0.5])))

    def test_inverse(self):
        rng = np.random.default_rng(1)
        mix = ConsumerMix(0.4, rng.uniform(0.1, 3, 3), rng.uniform(0.1, 3, 3), [1, 1, 1], [1, 1, 1],
                          rng.normal(size=(6, 3)))
        sig, inv = mixed_sigma(mix)
        assert np.max(np.abs(inv @ sig - np.eye(6))) < 1e-10

    def test_validation(self):
        with pytest.raises(ValueError):
            ConsumerMix(1.5, [1], [1], [1], [1], np.ones((2, 1)))
        with pytest.raises(ValueError):
            ConsumerMix(0.5, [0], [1], [1], [1], np.ones((2, 1)))


class TestMixedProfit:
    @pytest.mark.parametrize("model", ["aggregate", "combined"])
    def test_identical_consumers(self, model):
        s = np.array([[1.0, 0.2], [0.3, 1.0]])
        mix = ConsumerMix(0.5, [1.0, 2.0], [1.0, 2.0], [1.0, 0.5], [1.0, 0.5], s)
        expected = monopoly_profit(FactorStructure(s, [1.0, 2.0]), Preferences([1.0, 0.5], -1.0))
        assert mixed_monopoly_profit(mix, model) == pytest.approx(expected, rel=1e-13)

    def test_zero_weight_is_consumer_two(self):
        s = np.array([[1.0, 0.2], [0.3, 1.0]])
        mix = ConsumerMix(0.0, [1.0, 2.0], [3.0, 0.5], [1.0, 0.5], [0.2, 2.0], s)
        expected = monopoly_profit(FactorStructure(s, [3.0, 0.5]), Preferences([0.2, 2.0], -1.0))
        assert mixed_monopoly_profit(mix) == pytest.approx(expected, rel=1e-13)

    @pytest.mark.parametrize("rho", [0.0, 1.0])
    def test_decomposition_with_common_utility(self, rho):
        s = mirrored_loadings(rho)
        # common delta: both consumers have the same taste
        mix = ConsumerMix(0.5, [2.0, 1.0], [1.0, 2.0], [1.0, 1.0], [1.0, 1.0], s)
        parts = [monopoly_profit(FactorStructure(s, g), Preferences([1.0, 1.0], -1.0))
                 for g in ([2.0, 1.0], [1.0, 2.0])]
        assert mixed_monopoly_profit(mix) == pytest.approx(0.5 * parts[0] + 0.5 * parts[1], rel=1e-13)

    def test_swapped_tastes_example(self):
        mix = ConsumerMix(0.5, [2.0, 1.0], [1.0, 2.0], [2.0, 1.0], [1.0, 2.0], mirrored_loadings(1.0))
        aligned = mixed_monopoly_profit(mix)
        split = mixed_monopoly_profit(mix.with_loadings(mirrored_loadings(0.0)))
        assert aligned > 0 and split > 0 and aligned != split

    def test_unknown_model(self):
        mix = swapped_mix(1, 1, 1, 1)
        with pytest.raises(ValueError):
            mixed_monopoly_profit(mix, "mean")

    @pytest.mark.parametrize("model", ["aggregate", "combined"])
    def test_batch_matches_direct(self, model):
        mix = swapped_mix(*ratio_parameters(3.0, 0.2))
        for rho in (0.0, 0.3, 0.77, 1.0):
            direct = mixed_monopoly_profit(mix.with_loadings(mirrored_loadings(rho)), model)
            assert _monopoly_batch(rho, mix, model)[0] == pytest.approx(direct, rel=1e-12)

    def test_aggregate_demand_restriction(self):
        mix = swapped_mix(*ratio_parameters(2.0, 0.5))
        a, B = aggregate_demand(mix, [1])
        assert a.shape == (1,) and B.shape == (1, 1)


class TestRhoMonopoly:
    def test_identical_consumers(self):
        assert rho_star_monopoly(1.0, 1.0, 1.0, 1.0) == 1.0

    def test_anticorrelated_corner(self):
        rho = rho_star_monopoly(*ratio_parameters(4.0, 1 / 16))
        assert rho == pytest.approx(0.11094, abs=1e-5)

    @pytest.mark.parametrize("rb", [0.25, 0.5, 1.5, 2.0, 4.0])
    def test_curvature_equal_to_squared_taste(self, rb):
        assert rho_star_monopoly(*ratio_parameters(rb, rb * rb)) == 1.0

    def test_equal_taste_unequal_weight(self):
        # equal tastes alone do not make the consumers identical
        assert rho_star_monopoly(*ratio_parameters(1.0, 4.0)) == pytest.approx(0.75, abs=1e-5)

    def test_relabeling(self):
        bh, bl, gh, gl = 1.7, 0.6, 0.3, 2.2
        assert rho_star_monopoly(bh, bl, gh, gl) == pytest.approx(rho_star_monopoly(bl, bh, gl, gh), abs=1e-6)

    def test_combined_model_never_splits(self):
        assert rho_star_monopoly(*ratio_parameters(4.0, 1 / 16), model="combined") == 1.0

    def test_maximizes_profit(self):
        mix = swapped_mix(*ratio_parameters(4.0, 0.25))
        rho = rho_star_monopoly(*ratio_parameters(4.0, 0.25))
        grid = np.linspace(0, 1, 5001)
        assert _monopoly_batch(rho, mix, "aggregate")[0] >= np.max(_monopoly_batch(grid, mix, "aggregate")) - 1e-12


class TestRhoDuopoly:
    def test_identical_consumers(self):
        assert rho_star_duopoly(1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_anticorrelated_corner(self):
        rho = rho_star_duopoly(*ratio_parameters(4.0, 1 / 16))
        assert rho == pytest.approx(0.43405, abs=1e-4)
        assert rho >= rho_star_monopoly(*ratio_parameters(4.0, 1 / 16))

    @pytest.mark.parametrize("rb", [0.25, 0.5, 2.0, 4.0])
    def test_curvature_equal_to_squared_taste(self, rb):
        assert rho_star_duopoly(*ratio_parameters(rb, rb * rb)) == pytest.approx(1.0, abs=1e-12)

    def test_equilibrium_is_mutual_best_response(self):
        params = ratio_parameters(4.0, 0.25)
        out = duopoly_equilibrium(*params)
        mix = swapped_mix(*params)
        grid = np.linspace(0, math.pi / 2, 20001)
        for firm in (0, 1):
            own = _duopoly_profit_batch(out.angles[firm], out.angles[1 - firm], firm, mix)[0]
            alt = _duopoly_profit_batch(grid, out.angles[1 - firm], firm, mix)
            assert own >= alt.max() - 1e-10
        assert out.profits[0] == pytest.approx(out.profits[1], rel=1e-7)

    def test_batch_profit_matches_active_set(self):
        mix = swapped_mix(*ratio_parameters(2.0, 0.3))
        rows = np.array([[math.cos(0.3), math.sin(0.3)], [math.cos(1.1), math.sin(1.1)]])
        eq = active_set_equilibrium(lambda act: aggregate_demand(mix.with_loadings(rows), act), 2,
                                    method="direct")
        got = _duopoly_profit_batch(0.3, 1.1, 0, mix)[0]
        assert got == pytest.approx(eq.profits[0], rel=1e-10)

    def test_relabeling(self):
        bh, bl, gh, gl = 1.7, 0.6, 0.3, 2.2
        assert rho_star_duopoly(bh, bl, gh, gl) == pytest.approx(rho_star_duopoly(bl, bh, gl, gh), abs=1e-6)


class TestRhoGrid:
    def test_shape_and_range(self):
        with pytest.raises(ValueError):
            RhoGrid(np.ones(2), np.ones(3), np.ones((3, 2)))
        with pytest.raises(ValueError):
            RhoGrid(np.ones(1), np.ones(1), np.array([[1.5]]))
        RhoGrid(np.ones(2), np.ones(3), np.full((2, 3), 0.5))
