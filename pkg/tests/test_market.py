import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from mfcarbon import market
from mfcarbon import simulator as sim
from mfcarbon.carbon import CarbonParams, build_spec
from mfcarbon.constants import VARIANTS
from mfcarbon.errors import ConfigurationError, StructuralError
from mfcarbon.lq_problem import TimeGrid
from mfcarbon.riccati import solve_endogenous, solve_exogenous


def solved(params, dt=0.01):
    grid = TimeGrid(params.T, dt)
    spec = build_spec(params, VARIANTS.ENDOGENOUS, grid=grid)
    return spec, solve_endogenous(spec)


class PriceTest(unittest.TestCase):
    '''equilibrium permit price'''

    @classmethod
    def setUpClass(cls):
        cls.params = CarbonParams()
        cls.spec, cls.sol = solved(cls.params)
        cfg = sim.SimConfig(dt=0.01, n_common=40, n_particles=1, seed=2)
        cls.noise = sim.generate_noise(cfg, cls.sol.grid)
        loop = sim.ClosedLoop(cls.sol, cls.spec)
        cls.xbar = np.array([
            sim.simulate_mean_path(cls.sol, cls.spec, cls.noise.common(m),
                                   loop) for m in range(40)])
        cls.price = market.equilibrium_price(cls.sol, cls.xbar)

    def test_terminal(self):
        '''omega(T) = -2 lambda Xbar(T) on every path'''
        np.testing.assert_allclose(self.price.omega[:, -1],
                                   -2 * self.params.lam * self.xbar[:, -1, 1],
                                   rtol=0, atol=1e-12)

    def test_no_penalty(self):
        params = CarbonParams(lam=0.0)
        spec, sol = solved(params)
        xbar = sim.simulate_mean_path(sol, spec, self.noise.common(0))
        omega = market.equilibrium_price(sol, xbar).omega
        self.assertEqual(omega.shape, (1, sol.grid.n))
        self.assertEqual(omega[0, -1], 0.0)

    def test_oscillations(self):
        '''price variance over paths grows toward maturity'''
        var = self.price.omega.var(axis=0)
        self.assertGreater(var[-2], var[len(var) // 2])

    def test_variant(self):
        grid = TimeGrid(5.0, 0.1)
        spec = build_spec(self.params, VARIANTS.EXOGENOUS, 20.0, grid)
        with self.assertRaises(ConfigurationError):
            market.equilibrium_price(solve_exogenous(spec),
                                     np.zeros((grid.n, 2)))
        with self.assertRaises(StructuralError):
            market.equilibrium_price(self.sol, np.zeros((10, 2)))


class TradingTest(unittest.TestCase):
    '''individual trading rates'''

    @classmethod
    def setUpClass(cls):
        cls.params = CarbonParams()
        cls.spec, cls.sol = solved(cls.params)
        cfg = sim.SimConfig(dt=0.01, n_common=1, n_particles=400, seed=5)
        noise = sim.generate_noise(cfg, cls.sol.grid)
        cls.ens = sim.simulate_path(cls.sol, cls.spec, noise, 0)
        cls.beta = market.trading_rates(cls.ens.Y, cls.ens.Ybar,
                                        cls.params.nu)

    def test_feedback(self):
        '''rates agree with the simulated trading control'''
        np.testing.assert_allclose(self.beta, self.ens.v[..., 3], rtol=1e-9,
                                   atol=1e-9)

    def test_mean_zero(self):
        '''particle average within the central limit bound'''
        mean = self.beta.mean(axis=0)
        bound = 3 * self.beta.std(axis=0) / np.sqrt(len(self.beta))
        for node in (100, 250, 400, 500):
            self.assertLessEqual(abs(mean[node]), bound[node])

    def test_linear(self):
        Y = self.ens.Y
        np.testing.assert_array_equal(
            market.trading_rates(Y, self.ens.Ybar, 2 * self.params.nu),
            2 * self.beta)
        np.testing.assert_array_equal(
            market.trading_rates(np.broadcast_to(self.ens.Ybar, Y.shape),
                                 self.ens.Ybar, self.params.nu), 0.0)

    def test_relabel(self):
        '''permuting particles permutes the rates'''
        order = np.random.default_rng(0).permutation(len(self.ens.Y))
        np.testing.assert_array_equal(
            market.trading_rates(self.ens.Y[order], self.ens.Ybar,
                                 self.params.nu), self.beta[order])


class ResidualTest(unittest.TestCase):
    '''clearing statistics'''

    def test_fit(self):
        '''synthetic residuals with variance 1/N'''
        rng = np.random.default_rng(8)
        residuals = {n: rng.normal(size=(4000, 5)) / np.sqrt(n)
                     for n in (10, 100, 1000)}
        stats = market.clearing_residual(residuals, np.arange(5.0))
        self.assertAlmostEqual(stats.slope, -1.0, delta=0.05)
        self.assertGreater(stats.r_squared, 0.99)
        self.assertTrue(np.all(stats.residual_sq_mean >= 0))
        self.assertEqual(stats.residual_mean.shape, (3, 5))

    def test_errors(self):
        with self.assertRaises(StructuralError):
            market.clearing_residual({10: np.ones((3, 5))}, np.arange(5.0))

    def test_zero(self):
        stats = market.clearing_residual({10: np.zeros((3, 5)),
                                          20: np.zeros((3, 5))},
                                         np.arange(5.0))
        self.assertTrue(np.isnan(stats.slope))

    def test_csv(self):
        rng = np.random.default_rng(1)
        residuals = {n: rng.normal(size=(10, 5)) for n in (10, 40)}
        stats = market.clearing_residual(residuals, np.arange(5.0))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'clearing.csv')
            fit = os.path.join(tmp, 'clearing_fit.csv')
            stats.write_csv(path, fit)
            frame = pd.read_csv(path)
            self.assertEqual(list(frame.columns),
                             ['N', 't', 'residual_mean', 'residual_sq_mean'])
            self.assertEqual(len(frame), 10)
            self.assertEqual(list(pd.read_csv(fit).columns),
                             ['slope', 'intercept', 'r_squared'])

    def test_nodes(self):
        np.testing.assert_array_equal(market.clearing_nodes(600),
                                      [100, 200, 300, 400, 500])


class ClearingTest(unittest.TestCase):
    '''clearing rate in the number of firms'''

    def test_rate(self):
        '''mean square residual decays like 1/N'''
        params = CarbonParams()
        spec, sol = solved(params)
        cfg = sim.SimConfig(dt=0.01, n_common=50, seed=13)
        stats = market.clearing_study(sol, spec, params, cfg,
                                      (10, 100, 1000))
        self.assertGreaterEqual(stats.slope, -1.2)
        self.assertLessEqual(stats.slope, -0.8)
        level = stats.residual_sq_mean.mean(axis=1)
        self.assertLess(level[2], level[0])

    def test_without_noise(self):
        '''no idiosyncratic noise, the market clears exactly'''
        params = CarbonParams(sigma=0.0, sigma2=0.0, rho=1.0)
        spec, sol = solved(params)
        cfg = sim.SimConfig(dt=0.01, n_common=3, seed=13)
        stats = market.clearing_study(sol, spec, params, cfg, (10, 40))
        np.testing.assert_array_equal(stats.residual_sq_mean, 0.0)
        self.assertTrue(np.isnan(stats.slope))


if __name__ == '__main__':
    unittest.main()
