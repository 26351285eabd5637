import unittest

import numpy as np
from scipy.integrate import trapezoid

from mfcarbon import simulator as sim
from mfcarbon.carbon import CarbonParams, build_spec
from mfcarbon.constants import MODES, PARTICLE_BLOCK, VARIANTS, Z95
from mfcarbon.errors import ConfigurationError, ValidationError
from mfcarbon.lq_problem import TimeGrid
from mfcarbon.market import equilibrium_price
from mfcarbon.riccati import solve_endogenous


def setup(params, dt=0.01, **config):
    grid = TimeGrid(params.T, dt)
    spec = build_spec(params, VARIANTS.ENDOGENOUS, grid=grid)
    sol = solve_endogenous(spec)
    cfg = sim.SimConfig(dt=config.pop('sim_dt', dt), **config)
    noise = sim.generate_noise(cfg, grid, spec.d0, spec.d1)
    return spec, sol, noise


class ConfigTest(unittest.TestCase):

    def test_invalid(self):
        for kwargs in ({'dt': 0.0}, {'n_common': 0}, {'n_particles': 1.5},
                       {'seed': -1}, {'seed': 2 ** 64}, {'variant': 'x'}):
            with self.assertRaises(ValidationError):
                sim.SimConfig(**kwargs)

    def test_stride(self):
        '''simulation step coarser than the Riccati step'''
        spec, sol, noise = setup(CarbonParams(), dt=0.01, sim_dt=0.05,
                                 n_common=1, n_particles=3)
        self.assertEqual(noise.steps, 100)
        ens = sim.simulate_path(sol, spec, noise, 0)
        self.assertEqual(ens.X.shape, (3, 101, 2))
        np.testing.assert_array_equal(ens.nodes, np.arange(0, 501, 5))
        with self.assertRaises(ConfigurationError):
            sim.simulate_mean_path(sol, spec, np.zeros((100, 3)))


class NoiseTest(unittest.TestCase):
    '''counter based streams'''

    def test_streams(self):
        grid = TimeGrid(1.0, 0.01)
        noise = sim.generate_noise(sim.SimConfig(dt=0.01, seed=3), grid)
        again = sim.generate_noise(sim.SimConfig(dt=0.01, seed=3), grid)
        np.testing.assert_array_equal(noise.common(4), again.common(4))
        self.assertEqual(noise.common(4).shape, (100, 2))
        block = noise.idiosyncratic(2, range(6))
        np.testing.assert_array_equal(block[5],
                                      again.idiosyncratic(2, [5])[0])
        self.assertFalse(np.array_equal(noise.common(0), noise.common(1)))
        self.assertFalse(np.array_equal(block[0], block[1]))
        other = sim.generate_noise(sim.SimConfig(dt=0.01, seed=4), grid)
        self.assertFalse(np.array_equal(noise.common(0), other.common(0)))

    def test_scale(self):
        '''increments have variance dt'''
        grid = TimeGrid(100.0, 0.01)
        dw = sim.generate_noise(sim.SimConfig(dt=0.01), grid).common(0)
        self.assertAlmostEqual(np.var(dw) / 0.01, 1.0, delta=0.05)


class KernelTest(unittest.TestCase):

    def test_affine(self):
        '''one step of the kernel by hand'''
        x0 = np.array([[1.0, 2.0]])
        drift = np.array([[[0.5, 0.0], [1.0, -1.0]]])
        off = np.array([[0.1, 0.2]])
        own = np.array([[[[1.0, 0.0], [0.0, 2.0]]]])
        own_off = np.array([[[0.3, 0.0]]])
        own_dw = np.array([[[0.4]]])
        shared = np.zeros((1, 1, 2, 2))
        shared_off = np.array([[[0.0, 1.0]]])
        shared_dw = np.array([[-0.5]])
        out = sim.euler_affine(x0, drift, off, own, own_off, own_dw, shared,
                               shared_off, shared_dw, 0.1,
                               np.array([0, 1], dtype=np.int64))
        x = x0[0]
        expected = (x + (drift[0] @ x + off[0]) * 0.1
                    + (own[0, 0] @ x + own_off[0, 0]) * 0.4
                    + shared_off[0, 0] * -0.5)
        np.testing.assert_allclose(out[0, 1], expected)
        np.testing.assert_array_equal(out[0, 0], x)


class ZeroNoiseTest(unittest.TestCase):
    '''without idiosyncratic noise every particle follows the mean'''

    @classmethod
    def setUpClass(cls):
        cls.params = CarbonParams(sigma=0.0, sigma2=0.0, rho=1.0)
        cls.spec, cls.sol, cls.noise = setup(cls.params, n_common=2,
                                             n_particles=4)
        cls.ens = sim.simulate_path(cls.sol, cls.spec, cls.noise, 1)

    def test_particles(self):
        '''particles equal the mean path bitwise'''
        for X in self.ens.X:
            np.testing.assert_array_equal(X, self.ens.xbar)
        for Y in self.ens.Y:
            np.testing.assert_array_equal(Y, self.ens.Ybar)

    def test_common_noise(self):
        '''the mean path still moves with the common noise'''
        self.assertGreater(np.std(np.diff(self.ens.xbar[:, 1])), 0.0)

    def test_z(self):
        '''no idiosyncratic diffusion, common diffusion Pi F0'''
        Z, Z0 = sim.reconstruct_z(self.sol, self.spec, self.ens)
        self.assertEqual(Z.shape, (4, 501, 2, 3))
        np.testing.assert_array_equal(Z, 0.0)
        expected = np.einsum('kab,klb->kal', self.sol.Pi,
                             self.spec.F0)
        np.testing.assert_allclose(Z0[2], expected, atol=1e-15)


class EnsembleTest(unittest.TestCase):
    '''reference calibration on a coarse grid'''

    @classmethod
    def setUpClass(cls):
        cls.params = CarbonParams()
        cls.spec, cls.sol, cls.noise = setup(cls.params, n_common=3,
                                             n_particles=40, seed=9)
        cls.loop = sim.ClosedLoop(cls.sol, cls.spec)
        cls.paths = [sim.simulate_path(cls.sol, cls.spec, cls.noise, m,
                                       cls.loop) for m in range(3)]

    def test_terminal_adjoint(self):
        '''Y(T) = H X(T)'''
        H = self.spec.H
        for ens in self.paths:
            np.testing.assert_allclose(ens.Y[:, -1], ens.X[:, -1] @ H.T,
                                       rtol=0, atol=1e-12)

    def test_initial_state(self):
        for ens in self.paths:
            np.testing.assert_array_equal(ens.xbar[0], self.params.x0)
            np.testing.assert_array_equal(ens.X[:, 0],
                                          np.tile(self.params.x0, (40, 1)))

    def test_reproducible(self):
        '''same path, same numbers, whatever the particle subset'''
        again = sim.simulate_path(self.sol, self.spec, self.noise, 1,
                                  self.loop, particles=[7, 3])
        np.testing.assert_array_equal(again.X[0], self.paths[1].X[7])
        np.testing.assert_array_equal(again.X[1], self.paths[1].X[3])
        np.testing.assert_array_equal(again.xbar, self.paths[1].xbar)

    def test_blocks(self):
        '''particles beyond one kernel block'''
        n = PARTICLE_BLOCK + 5
        ens = sim.simulate_path(self.sol, self.spec, self.noise, 0,
                                self.loop, particles=range(n),
                                record=[0, 250, 500])
        np.testing.assert_array_equal(ens.X[:40, 1],
                                      self.paths[0].X[:, 250])
        self.assertEqual(ens.X.shape, (n, 3, 2))

    def test_sample_mean(self):
        '''particle average tracks the conditional mean'''
        ens = self.paths[2]
        spread = ens.X[:, -1, 0].std()
        self.assertLessEqual(abs(ens.X[:, -1, 0].mean() - ens.xbar[-1, 0]),
                             4 * spread / np.sqrt(40))

    def test_costs(self):
        '''cost samples integrate the running cost'''
        ens = self.paths[0]
        omega = equilibrium_price(self.sol, ens.xbar, ens.nodes).omega[0]
        samples = sim.cost_samples(ens, self.params, omega, MODES.NE)
        self.assertEqual(samples.shape, (40,))
        est = sim.estimate_cost(self.paths[:1], self.params, omega, MODES.NE)
        self.assertAlmostEqual(est.mean, samples.mean(), delta=1e-9 *
                               abs(samples.mean()))
        self.assertGreater(est.half_width, 0.0)
        cut = sim.PathEnsemble(ens.path, ens.times[:10], ens.nodes[:10],
                               ens.xbar[:10], ens.vbar[:10], ens.X[:, :10],
                               ens.v[:, :10], ens.Y[:, :10], ens.Ybar[:10])
        with self.assertRaises(ConfigurationError):
            sim.cost_samples(cut, self.params, omega[:10], MODES.NE)

    def test_gap_identity(self):
        '''NE minus LQ cost equals the fluctuation of output'''
        p = self.params
        prices = [equilibrium_price(self.sol, e.xbar, e.nodes).omega[0]
                  for e in self.paths]
        gap = sim.cost_gap(self.paths, p, prices)
        scale = p.b * (1 - p.gamma) * p.A_k ** 2
        ref = [scale * trapezoid((e.X[..., 0] - e.xbar[:, 0]) ** 2, e.times,
                                 axis=1) for e in self.paths]
        direct = [sim.cost_samples(e, p, w, MODES.NE)
                  - sim.cost_samples(e, p, w, MODES.LQ) - r
                  for e, w, r in zip(self.paths, prices, ref)]
        diff = sim.estimate([np.concatenate(direct)])
        self.assertLessEqual(abs(diff.mean), 3 * diff.half_width / Z95)
        self.assertGreater(gap.mean, -gap.half_width)

    def test_summary(self):
        '''node moments merged over paths'''
        summary = sim.EnsembleSummary(self.paths[0].times)
        for ens in self.paths:
            summary.add(sim.path_moments(ens, 10.0))
        frame = summary.frame()
        self.assertEqual(len(frame), 501)
        X = np.concatenate([e.X for e in self.paths])
        np.testing.assert_allclose(frame['K_mean'], X[..., 0].mean(axis=0))
        np.testing.assert_allclose(frame['K_std'], X[..., 0].std(axis=0),
                                   atol=1e-8)
        np.testing.assert_allclose(frame['omega_mean'], 10.0)

    def test_parallel(self):
        '''worker processes return the serial results in path order'''
        work = _Work(self.sol, self.spec, self.noise, self.loop)
        serial = sim.run_paths(work, range(3))
        parallel = sim.run_paths(work, range(3), jobs=2)
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a, b)


class _Work:
    def __init__(self, sol, spec, noise, loop):
        self.sol, self.spec, self.noise, self.loop = sol, spec, noise, loop

    def __call__(self, path):
        return sim.simulate_path(self.sol, self.spec, self.noise, path,
                                 self.loop, particles=range(5)).X


class ConsistencyTest(unittest.TestCase):
    '''particle averages converge to the conditional mean'''

    def test_rate(self):
        '''normalized error decays like N^-1/2'''
        params = CarbonParams()
        spec, sol, noise = setup(params, n_common=8, n_particles=10000,
                                 seed=4)
        loop = sim.ClosedLoop(sol, spec)
        n_values = (100, 1000, 10000)
        errors = {n: [] for n in n_values}
        for path in range(noise.n_common):
            ens = sim.simulate_path(sol, spec, noise, path, loop,
                                    record=[100, 300, 500])
            spread = ens.X.std(axis=0)
            for n in n_values:
                errors[n].append((ens.X[:n].mean(axis=0) - ens.xbar)
                                 / spread)
        rms = [np.sqrt(np.mean(np.square(errors[n]))) for n in n_values]
        slope = np.polyfit(np.log(n_values), np.log(rms), 1)[0]
        self.assertAlmostEqual(slope, -0.5, delta=0.1)


class EstimateTest(unittest.TestCase):

    def test_deterministic(self):
        '''identical samples have zero half width'''
        est = sim.estimate([[0.1, 0.1, 0.1], [0.1, 0.1, 0.1]])
        self.assertEqual(est.half_width, 0.0)
        self.assertAlmostEqual(est.mean, 0.1)

    def test_across_paths(self):
        '''standard error from the path means when there are several'''
        est = sim.estimate([[1.0, 3.0], [3.0, 5.0]])
        self.assertEqual(est.mean, 3.0)
        self.assertAlmostEqual(est.half_width, Z95 * np.sqrt(2) / np.sqrt(2))
        single = sim.estimate([[1.0, 2.0, 3.0]])
        self.assertAlmostEqual(single.half_width, Z95 / np.sqrt(3))

    def test_anarchy(self):
        '''zero without market power, positive otherwise'''
        times = np.linspace(0, 5, 11)
        paths = [np.column_stack([np.full(11, 30.0), np.zeros(11)])] * 2
        self.assertEqual(
            sim.price_of_anarchy(paths, CarbonParams(gamma=0.0), times).mean,
            0.0)
        poa = sim.price_of_anarchy(paths, CarbonParams(gamma=0.5), times)
        self.assertAlmostEqual(poa.mean, 0.07 * 0.5 * 4 / 2 * 900 * 5)
        self.assertEqual(poa.half_width, 0.0)


class OptimalityTest(unittest.TestCase):
    '''unilateral control shifts do not lower the NE cost'''

    @classmethod
    def setUpClass(cls):
        cls.params = CarbonParams()
        cls.spec, cls.sol, cls.noise = setup(cls.params, dt=1e-3,
                                             n_common=10, n_particles=500,
                                             seed=21)
        cls.loop = sim.ClosedLoop(cls.sol, cls.spec)

    def test_shifts(self):
        '''eight perturbations of size 0.05, common random numbers'''
        shifts = []
        for i in range(4):
            for sign in (1.0, -1.0):
                shift = np.zeros(4)
                shift[i] = 0.05 * sign
                shifts.append(shift)
        gaps = {i: [] for i in range(len(shifts))}
        for path in range(self.noise.n_common):
            xbar = sim.simulate_mean_path(self.sol, self.spec,
                                          self.noise.common(path), self.loop)
            omega = equilibrium_price(self.sol, xbar).omega[0]
            base = sim.cost_samples(
                sim.simulate_particles(self.sol, self.spec, xbar, self.noise,
                                       path, loop=self.loop),
                self.params, omega, MODES.NE)
            for i, shift in enumerate(shifts):
                moved = sim.simulate_particles(self.sol, self.spec, xbar,
                                               self.noise, path,
                                               control_shift=shift,
                                               loop=self.loop)
                gaps[i].append(sim.cost_samples(moved, self.params, omega,
                                                MODES.NE) - base)
        for i, samples in gaps.items():
            est = sim.estimate(samples)
            self.assertGreaterEqual(est.mean, -3 * est.half_width / Z95,
                                    msg=f'shift {shifts[i]}')


if __name__ == '__main__':
    unittest.main()
