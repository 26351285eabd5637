"""Permit market

Equilibrium price of the endogenous model and the clearing diagnostics:
the mean trading rate (1/N) sum_i beta_i vanishes in mean square at rate
1/N as the number of firms grows.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import linregress

from .constants import CLEARING_NODES, VARIANTS
from .errors import ConfigurationError, StructuralError
from .simulator import (ClosedLoop, generate_noise, run_paths,
                        simulate_mean_path, simulate_particles)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PricePath:
    '''equilibrium permit price, omega of shape (M, r) on times (r,)'''
    times: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True, eq=False)
class ClearingStats:
    '''clearing residual per particle count and node

    residual_mean    -- mean over paths of (1/N) sum_i beta_i, (len(N), r)
    residual_sq_mean -- mean over paths of its square, (len(N), r)
    slope, intercept -- least squares fit of log of the time averaged
                        squared mean against log N, nan if it vanishes
    '''
    n_values: tuple
    times: np.ndarray
    residual_mean: np.ndarray
    residual_sq_mean: np.ndarray
    slope: float
    intercept: float
    r_squared: float

    def frame(self):
        rows = [(n, t, m, s) for i, n in enumerate(self.n_values)
                for t, m, s in zip(self.times, self.residual_mean[i],
                                   self.residual_sq_mean[i])]
        return pd.DataFrame(rows, columns=['N', 't', 'residual_mean',
                                           'residual_sq_mean'])

    def fit_frame(self):
        return pd.DataFrame({'slope': [self.slope],
                             'intercept': [self.intercept],
                             'r_squared': [self.r_squared]})

    def write_csv(self, path, fit_path):
        self.frame().to_csv(path, index=False, float_format='%.16e')
        self.fit_frame().to_csv(fit_path, index=False, float_format='%.16e')
        logger.info('wrote %s and %s', path, fit_path)


def equilibrium_price(sol, xbar, nodes=None):
    '''omega = -2 (Pi21 Kbar + Pi22 Xbar) - 2 phi2 along the mean paths

    xbar  -- conditional means, shape (r, 2) or (M, r, 2)
    nodes -- Riccati node of every row of xbar, all nodes by default
    '''
    if sol.variant != VARIANTS.ENDOGENOUS:
        raise ConfigurationError(f'equilibrium price needs the endogenous '
                                 f'solution, got {sol.variant!r}')
    xbar = np.asarray(xbar, dtype=float)
    paths = xbar if xbar.ndim == 3 else xbar[None]
    nodes = np.arange(sol.grid.n) if nodes is None else np.asarray(nodes)
    if paths.shape[1] != len(nodes):
        raise StructuralError(f'mean path has {paths.shape[1]} nodes, '
                              f'expected {len(nodes)}')
    Pi, phi = sol.Pi[nodes], sol.phi[nodes]
    omega = (-2 * (Pi[:, 1, 0] * paths[..., 0] + Pi[:, 1, 1] * paths[..., 1])
             - 2 * phi[:, 1])
    return PricePath(sol.grid.times[nodes], omega)


def trading_rates(Y, Ybar, nu):
    '''beta_i = -2 nu Y2_i + 2 nu Ybar2 for every particle and node'''
    Y, Ybar = np.asarray(Y, dtype=float), np.asarray(Ybar, dtype=float)
    return -2 * nu * Y[..., 1] + 2 * nu * Ybar[..., 1]


def clearing_residual(residuals, times):
    '''ClearingStats from the mean trading rates

    residuals -- maps N to an array (M, r) holding (1/N) sum_i beta_i for
                 every common path, the same paths for every N
    '''
    n_values = tuple(sorted(residuals))
    if len(n_values) < 2:
        raise StructuralError('clearing fit needs at least two values of N')
    means = np.array([np.mean(residuals[n], axis=0) for n in n_values])
    squares = np.array([np.mean(np.square(residuals[n]), axis=0)
                        for n in n_values])
    level = squares.mean(axis=1)
    if np.any(level == 0):
        slope = intercept = r_squared = np.nan
    else:
        fit = linregress(np.log(n_values), np.log(level))
        slope, intercept = float(fit.slope), float(fit.intercept)
        r_squared = float(fit.rvalue ** 2)
    logger.info('clearing slope %.4g over N = %s', slope, n_values)
    return ClearingStats(n_values, np.asarray(times), means, squares,
                         slope, intercept, r_squared)


def clearing_nodes(steps, count=CLEARING_NODES):
    '''count evenly spaced interior node indices of a grid with steps steps'''
    return np.rint(np.linspace(0, steps, count + 2)[1:-1]).astype(np.int64)


class _ClearingWork:
    '''per path work unit, picklable for the process pool'''

    def __init__(self, sol, spec, noise, params, n_list, record):
        self.sol, self.spec, self.noise = sol, spec, noise
        self.loop = ClosedLoop(sol, spec, sol.grid.stride(noise.dt))
        self.nu = params.nu
        self.n_list, self.record = n_list, record

    def __call__(self, path):
        loop = self.loop
        xbar = simulate_mean_path(self.sol, self.spec,
                                  self.noise.common(path), loop)
        out = {}
        for n in self.n_list:
            ens = simulate_particles(self.sol, self.spec, xbar, self.noise,
                                     path, particles=range(n),
                                     record=self.record, loop=loop)
            out[n] = trading_rates(ens.Y, ens.Ybar, self.nu).mean(axis=0)
        return out


def clearing_study(sol, spec, params, config, n_list, jobs=1):
    '''clearing residuals over n_list on the same common paths

    Particle i of a path has the same noise whatever N, so the ensembles
    are nested.
    '''
    noise = generate_noise(config, sol.grid, spec.d0, spec.d1)
    record = clearing_nodes(noise.steps)
    work = _ClearingWork(sol, spec, noise, params, tuple(n_list), record)
    results = run_paths(work, range(config.n_common), jobs)
    residuals = {n: np.array([r[n] for r in results]) for n in n_list}
    times = sol.grid.times[record * sol.grid.stride(config.dt)]
    return clearing_residual(residuals, times)
