"""Monte Carlo simulation of the optimal mean field dynamics

For every common noise path the conditional mean Xbar is simulated from its
own closed-loop SDE, then N particles are advanced through the fluctuation
X - Xbar with Euler-Maruyama. The fluctuation recursion is the difference of
the particle and mean recursions, so X = Xbar + (X - Xbar) reproduces the
direct scheme. Noise is counter based: every (path, particle, channel) has
its own stream, results do not depend on execution order.
"""
import logging
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numba import jit
from scipy.integrate import trapezoid

from . import carbon
from .constants import (DT, MODES, N_COMMON, N_PARTICLES, PARTICLE_BLOCK,
                        VARIANTS, Z95)
from .errors import ConfigurationError, DivergenceError, ValidationError
from .riccati import feedback_gains

logger = logging.getLogger(__name__)

Estimate = namedtuple('Estimate', ['mean', 'half_width'])
AdjointDiffusions = namedtuple('AdjointDiffusions', ['Z', 'Z0'])
AdjointDiffusions.__doc__ = '''Z of shape (N, r, d, d1), Z0 of (N, r, d, d0)'''

# stream families of the counter based generator
_COMMON, _IDIO = 0, 1


@dataclass(frozen=True)
class SimConfig:
    '''Monte Carlo settings

    dt          -- simulation step, a multiple of the Riccati step
    n_common    -- number of common noise paths M
    n_particles -- particles per common path N
    seed        -- 64 bit seed of all streams
    '''
    dt: float = DT
    n_common: int = N_COMMON
    n_particles: int = N_PARTICLES
    seed: int = 0
    variant: str = VARIANTS.ENDOGENOUS

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f'dt must be positive, got {self.dt}')
        for name in ('n_common', 'n_particles'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f'{name} must be a positive integer')
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ValidationError('seed must be an unsigned 64 bit integer')
        if self.variant not in VARIANTS:
            raise ValidationError(f'unknown variant {self.variant!r}')


@dataclass(frozen=True)
class NoiseBundle:
    '''Brownian increments on the simulation grid

    Increments are drawn on demand, stream (family, path, particle,
    channel) always yields the same numbers.
    '''
    seed: int
    dt: float
    steps: int
    n_common: int
    n_particles: int
    d0: int = 2
    d1: int = 3

    def _stream(self, *key):
        seq = np.random.SeedSequence(self.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))

    def common(self, path):
        '''increments of the common noise, shape (steps, d0)'''
        out = np.empty((self.steps, self.d0))
        for c in range(self.d0):
            out[:, c] = self._stream(_COMMON, path, c).standard_normal(
                self.steps)
        return out * np.sqrt(self.dt)

    def idiosyncratic(self, path, particles):
        '''increments of the idiosyncratic noise, shape (N, steps, d1)'''
        particles = list(particles)
        out = np.empty((len(particles), self.steps, self.d1))
        for i, particle in enumerate(particles):
            for c in range(self.d1):
                out[i, :, c] = self._stream(_IDIO, path, particle,
                                            c).standard_normal(self.steps)
        return out * np.sqrt(self.dt)


def generate_noise(config, grid, d0=2, d1=3):
    '''NoiseBundle of config on grid'''
    steps = (grid.n - 1) // grid.stride(config.dt)
    return NoiseBundle(int(config.seed), config.dt, steps, config.n_common,
                       config.n_particles, d0, d1)


# numba.jit decorated functions cannot be defined with self
@jit(nopython=True)
def euler_affine(x0, drift_mat, drift_off, own_mat, own_off, own_dw,
                 shared_mat, shared_off, shared_dw, dt, record):
    '''Euler-Maruyama for affine SDEs

    dx = (M x + m) dt + sum_c (M_c x + m_c) dW_c

    x0          -- initial states, shape (N, d)
    drift_*     -- per step drift, (steps, d, d) and (steps, d)
    own_*       -- per particle channels, (steps, c, d, d) and (steps, c, d)
    own_dw      -- their increments, (N, steps, c)
    shared_*    -- channels shared by all particles
    shared_dw   -- their increments, (steps, c)
    record      -- sorted node indices to store
    '''
    count, d = x0.shape
    steps = drift_mat.shape[0]
    n_own = own_dw.shape[2]
    n_shared = shared_dw.shape[1]
    out = np.empty((count, record.size, d))
    x = np.empty(d)
    nxt = np.empty(d)
    for i in range(count):
        for a in range(d):
            x[a] = x0[i, a]
        slot = 0
        if record[0] == 0:
            out[i, 0, :] = x
            slot = 1
        for k in range(steps):
            for a in range(d):
                acc = x[a] + drift_off[k, a] * dt
                for b in range(d):
                    acc += drift_mat[k, a, b] * x[b] * dt
                for c in range(n_own):
                    s = own_off[k, c, a]
                    for b in range(d):
                        s += own_mat[k, c, a, b] * x[b]
                    acc += s * own_dw[i, k, c]
                for c in range(n_shared):
                    s = shared_off[k, c, a]
                    for b in range(d):
                        s += shared_mat[k, c, a, b] * x[b]
                    acc += s * shared_dw[k, c]
                nxt[a] = acc
            for a in range(d):
                x[a] = nxt[a]
            if slot < record.size and record[slot] == k + 1:
                out[i, slot, :] = x
                slot += 1
    return out


class ClosedLoop:
    '''closed-loop coefficients on the simulation nodes

    Mean path:   dXbar = (A0 + (A+Abar) Xbar + (B+Bbar) vbar) dt
                         + sum_l (F0 + (F+Fbar) Xbar + (G+Gbar) vbar) dW0_l
    Fluctuation: de = (A - B K0) e dt + sum_j (...) dW_j
                      + sum_l (F - G K0) e dW0_l
    '''

    def __init__(self, sol, spec, stride=1):
        s = spec
        self.spec = spec
        self.nodes = np.arange(0, sol.grid.n, stride)
        self.dt = sol.grid.dt * stride
        self.times = sol.grid.times[self.nodes]
        self.P = sol.P[self.nodes]
        self.Pi = sol.Pi[self.nodes]
        self.phi = sol.phi[self.nodes]
        self.K0, self.K1, self.k = feedback_gains(sol, spec, self.nodes)
        K0, K1, k = self.K0[:-1], self.K1[:-1], self.k[:-1]
        left = self.nodes[:-1]
        self.Bp = s.B + s.Bbar
        self.Cp, self.Dp = s.C + s.Cbar, s.D + s.Dbar
        self.Gp = s.G + s.Gbar
        self.mean_drift = (s.A + s.Abar) - np.einsum('ij,kjl->kil',
                                                     self.Bp, K1)
        self.mean_off = s.A0[left] - k @ self.Bp.T
        self.mean_diff = (s.F + s.Fbar)[None] - np.einsum('lij,kjm->klim',
                                                          self.Gp, K1)
        self.mean_diff_off = s.F0[left] - np.einsum('lij,kj->kli', self.Gp, k)
        self.dev_drift = s.A - np.einsum('ij,kjl->kil', s.B, K0)
        self.idio_mat = s.C[None] - np.einsum('jab,kbc->kjac', s.D, K0)
        self.common_mat = s.F[None] - np.einsum('lab,kbc->klac', s.G, K0)

    @property
    def steps(self):
        return len(self.nodes) - 1

    def mean_control(self, xbar):
        return -np.einsum('kij,kj->ki', self.K1, xbar) - self.k


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    '''one common path with its particles on the recorded nodes

    nodes -- indices into the Riccati grid
    X, v, Y -- particle states, controls and adjoints, shape (N, r, .)
    xbar, vbar, Ybar -- conditional means, shape (r, .)
    '''
    path: int
    times: np.ndarray
    nodes: np.ndarray
    xbar: np.ndarray
    vbar: np.ndarray
    X: np.ndarray
    v: np.ndarray
    Y: np.ndarray
    Ybar: np.ndarray


def _check_finite(values, times, what):
    bad = ~np.isfinite(values)
    if np.any(bad):
        axes = tuple(i for i in range(values.ndim) if i != values.ndim - 2)
        node = int(np.argmax(bad.any(axis=axes)))
        raise DivergenceError(f'{what} is not finite at node {node} '
                              f'(t = {times[node]:.6g})')


def _loop(sol, spec, dt, loop):
    if loop is None:
        return ClosedLoop(sol, spec, sol.grid.stride(dt))
    return loop


def simulate_mean_path(sol, spec, common_dw, loop=None):
    '''conditional mean path driven by common increments

    common_dw -- shape (steps, d0), the simulation step is T/steps
    '''
    common_dw = np.ascontiguousarray(common_dw, dtype=float)
    dt = sol.grid.T / len(common_dw)
    loop = _loop(sol, spec, dt, loop)
    if common_dw.shape != (loop.steps, spec.d0):
        raise ConfigurationError(f'common increments have shape '
                                 f'{common_dw.shape}, expected '
                                 f'{(loop.steps, spec.d0)}')
    none = np.zeros((loop.steps, 0, spec.d, spec.d))
    xbar = euler_affine(spec.x0[None, :], loop.mean_drift, loop.mean_off,
                        none, np.zeros((loop.steps, 0, spec.d)),
                        np.zeros((1, loop.steps, 0)),
                        loop.mean_diff, loop.mean_diff_off, common_dw,
                        loop.dt, np.arange(loop.steps + 1))[0]
    _check_finite(xbar, loop.times, 'mean path')
    return xbar


def simulate_particles(sol, spec, xbar, noise, path=0, particles=None,
                       record=None, control_shift=None, loop=None):
    '''particles of one common path around its mean path xbar

    particles     -- particle indices, range(noise.n_particles) by default
    record        -- simulation node indices to keep, all by default
    control_shift -- vector added to every particle's control while the
                     mean path stays fixed
    '''
    loop = _loop(sol, spec, noise.dt, loop)
    s = spec
    particles = range(noise.n_particles) if particles is None else particles
    particles = list(particles)
    record = (np.arange(loop.steps + 1) if record is None
              else np.unique(np.asarray(record, dtype=np.int64)))
    vbar = loop.mean_control(xbar)
    shift = np.zeros(s.d2) if control_shift is None else np.asarray(
        control_shift, dtype=float)
    left = loop.nodes[:-1]
    dev_off = np.tile(s.B @ shift, (loop.steps, 1))
    idio_off = (s.C0[left] + np.einsum('jab,kb->kja', loop.Cp, xbar[:-1])
                + np.einsum('jab,kb->kja', loop.Dp, vbar[:-1])
                + (s.D @ shift)[None])
    common_off = np.tile(s.G @ shift, (loop.steps, 1, 1))
    common_dw = noise.common(path)
    blocks = []
    for start in range(0, len(particles), PARTICLE_BLOCK):
        chunk = particles[start:start + PARTICLE_BLOCK]
        blocks.append(euler_affine(
            np.zeros((len(chunk), s.d)), loop.dev_drift, dev_off,
            loop.idio_mat, idio_off, noise.idiosyncratic(path, chunk),
            loop.common_mat, common_off, common_dw, loop.dt, record))
    dev = (np.concatenate(blocks) if blocks
           else np.zeros((0, len(record), s.d)))
    times = loop.times[record]
    _check_finite(dev, times, f'particles of path {path}')
    X = xbar[record][None] + dev
    v = (vbar[record][None] - np.einsum('kij,nkj->nki', loop.K0[record], dev)
         + shift)
    ensemble = PathEnsemble(path, times, loop.nodes[record], xbar[record],
                            vbar[record], X, v, None, None)
    Y, Ybar = reconstruct_adjoint(sol, ensemble)
    logger.debug('simulated path %d with %d particles', path, len(particles))
    return PathEnsemble(path, times, ensemble.nodes, ensemble.xbar,
                        ensemble.vbar, X, v, Y, Ybar)


def simulate_path(sol, spec, noise, path, loop=None, **kwargs):
    '''mean path and particles of one common path'''
    loop = _loop(sol, spec, noise.dt, loop)
    xbar = simulate_mean_path(sol, spec, noise.common(path), loop)
    return simulate_particles(sol, spec, xbar, noise, path, loop=loop,
                              **kwargs)


def reconstruct_adjoint(sol, ensemble):
    '''Y = P (X - Xbar) + Pi Xbar + phi and Ybar = Pi Xbar + phi'''
    nodes = ensemble.nodes
    Ybar = np.einsum('kij,kj->ki', sol.Pi[nodes], ensemble.xbar) \
        + sol.phi[nodes]
    Y = np.einsum('kij,nkj->nki', sol.P[nodes],
                  ensemble.X - ensemble.xbar[None]) + Ybar[None]
    return Y, Ybar


def reconstruct_z(sol, spec, ensemble):
    '''diffusion coefficients of the adjoint along the ensemble'''
    s = spec
    nodes = ensemble.nodes
    P, Pi = sol.P[nodes], sol.Pi[nodes]
    xbar, vbar = ensemble.xbar, ensemble.vbar
    e = ensemble.X - xbar[None]
    dv = ensemble.v - vbar[None]
    Cp, Dp = s.C + s.Cbar, s.D + s.Dbar
    Fp, Gp = s.F + s.Fbar, s.G + s.Gbar
    idio = (s.C0[nodes][None] + np.einsum('jab,nkb->nkja', s.C, e)
            + np.einsum('jab,kb->kja', Cp, xbar)[None]
            + np.einsum('jab,nkb->nkja', s.D, dv)
            + np.einsum('jab,kb->kja', Dp, vbar)[None])
    Z = np.einsum('kab,nkjb->nkaj', P, idio)
    fluct = (np.einsum('lab,nkb->nkla', s.F, e)
             + np.einsum('lab,nkb->nkla', s.G, dv))
    mean = (s.F0[nodes] + np.einsum('lab,kb->kla', Fp, xbar)
            + np.einsum('lab,kb->kla', Gp, vbar))
    Z0 = (np.einsum('kab,nklb->nkal', P, fluct)
          + np.einsum('kab,klb->kal', Pi, mean)[None])
    return AdjointDiffusions(Z, Z0)


def estimate(samples):
    '''mean and 95% half width of per-path lists of per-particle values

    The standard error is taken across common paths when there are
    several, across particles otherwise.
    '''
    samples = [np.asarray(s, dtype=float).ravel() for s in samples]
    means = np.array([np.mean(s) for s in samples])
    if len(samples) > 1:
        spread = means
    else:
        spread = samples[0]
    if len(spread) < 2 or np.ptp(spread) == 0:
        return Estimate(float(np.mean(means)), 0.0)
    stderr = np.std(spread, ddof=1) / np.sqrt(len(spread))
    return Estimate(float(np.mean(means)), float(Z95 * stderr))


def _as_list(ensembles, prices):
    if isinstance(ensembles, PathEnsemble):
        ensembles = [ensembles]
    if prices is None or np.ndim(prices) <= 1:
        prices = [prices] * len(ensembles)
    return ensembles, prices


def _price(omega, ensemble):
    if omega is None:
        return np.zeros(len(ensemble.times))
    return np.broadcast_to(np.asarray(omega, dtype=float),
                           ensemble.times.shape)


def cost_samples(ensemble, params, omega, mode):
    '''per particle cost, trapezoidal running cost plus terminal penalty'''
    if abs(ensemble.times[-1] - params.T) > 1e-9 * params.T:
        raise ConfigurationError('cost needs the terminal node recorded')
    rate = carbon.running_cost(ensemble.X, ensemble.xbar[None], ensemble.v,
                               _price(omega, ensemble)[None], params, mode)
    return (trapezoid(rate, ensemble.times, axis=1)
            + carbon.terminal_cost(ensemble.X[:, -1], params))


def estimate_cost(ensembles, params, prices, mode):
    '''Monte Carlo cost over one or several PathEnsembles

    prices -- price path per ensemble, or one path for all
    '''
    ensembles, prices = _as_list(ensembles, prices)
    return estimate([cost_samples(e, params, w, mode)
                     for e, w in zip(ensembles, prices)])


def cost_gap(ensembles, params, prices):
    '''direct estimate of the NE minus LQ cost'''
    ensembles, prices = _as_list(ensembles, prices)
    return estimate([cost_samples(e, params, w, MODES.NE)
                     - cost_samples(e, params, w, MODES.LQ)
                     for e, w in zip(ensembles, prices)])


def price_of_anarchy(mean_paths, params, times):
    '''b gamma A_k^2 / 2 times the expected integral of Kbar^2'''
    p = params
    scale = p.b * p.gamma * p.A_k ** 2 / 2
    return estimate([[scale * trapezoid(np.asarray(x)[:, 0] ** 2, times)]
                     for x in mean_paths])


def run_paths(work, paths, jobs=1):
    '''evaluates work(path) for every path, results in path order'''
    paths = list(paths)
    if jobs <= 1:
        return [work(path) for path in paths]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(work, paths))


SUMMARY_FIELDS = ('K', 'Xt', 'Kf', 'Kg', 'alpha', 'beta', 'Y1', 'Y2',
                  'omega')


def path_moments(ensemble, omega):
    '''per node sums and sums of squares of the summary fields'''
    N = len(ensemble.X)
    omega = _price(omega, ensemble)
    fields = (ensemble.X[..., 0], ensemble.X[..., 1], ensemble.v[..., 0],
              ensemble.v[..., 1], ensemble.v[..., 2], ensemble.v[..., 3],
              ensemble.Y[..., 0], ensemble.Y[..., 1],
              np.broadcast_to(omega, (N,) + omega.shape))
    return {name: (values.sum(axis=0), (values ** 2).sum(axis=0), N)
            for name, values in zip(SUMMARY_FIELDS, fields)}


class EnsembleSummary:
    '''running node moments over common paths'''

    def __init__(self, times):
        self.times = np.asarray(times)
        self.count = 0
        self.sums = {f: np.zeros(len(times)) for f in SUMMARY_FIELDS}
        self.squares = {f: np.zeros(len(times)) for f in SUMMARY_FIELDS}

    def add(self, moments):
        for name in SUMMARY_FIELDS:
            total, square, count = moments[name]
            self.sums[name] += total
            self.squares[name] += square
        self.count += moments[SUMMARY_FIELDS[0]][2]

    def frame(self):
        columns = {'t': self.times}
        for name in SUMMARY_FIELDS:
            mean = self.sums[name] / self.count
            var = np.maximum(self.squares[name] / self.count - mean ** 2, 0)
            columns[f'{name}_mean'] = mean
            columns[f'{name}_std'] = np.sqrt(var)
        return pd.DataFrame(columns)

    def write_csv(self, path):
        self.frame().to_csv(path, index=False, float_format='%.16e')
        logger.info('wrote %s', path)
