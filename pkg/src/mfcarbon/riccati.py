"""Riccati systems of the mean field problem

P is the feedback on the fluctuation X - Xbar, Pi the feedback on the
conditional mean Xbar and phi the affine offset, so that the adjoint reads
Y = P(X - Xbar) + Pi Xbar + phi. Three variants are solved:

    exogenous    -- price enters through r, carbon specialisation
    endogenous   -- clearing coupling Dmkt and rtilde replace B^T and r in the
                    mean equations
    general-mfc  -- full coefficient set with Sigma/Lambda blocks

All equations are integrated backward from T with the classical fourth
order Runge-Kutta method on the coefficient grid, in the order P, Pi, phi.
"""
import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numba import jit

from .constants import COND_MAX, VARIANTS
from .errors import (ConfigurationError, DivergenceError, SingularityError,
                     StructuralError)
from .lq_problem import TimeGrid, interpolate

logger = logging.getLogger(__name__)

# stage positions inside the step from t_{k+1} down to t_k
UPPER, MID, LOWER = range(3)

SigmaLambdaBlocks = namedtuple('SigmaLambdaBlocks',
                               ['Sigma0', 'Sigma1', 'Lambda0', 'Lambda1'])
Residuals = namedtuple('Residuals', ['resP', 'resPi', 'resPhi'])
FeedbackGains = namedtuple('FeedbackGains', ['K0', 'K1', 'k'])
FeedbackGains.__doc__ = '''per node gains, v = -K0 (x - xbar) - K1 xbar - k'''
_Schedules = namedtuple('_Schedules', ['A0', 'q', 'lin', 'C0', 'F0'])


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    '''P, Pi and phi on every node of grid

    P, Pi -- arrays of shape (n, d, d)
    phi   -- array of shape (n, d)
    '''
    grid: TimeGrid
    P: np.ndarray
    Pi: np.ndarray
    phi: np.ndarray
    variant: str

    def __post_init__(self):
        for value in (self.P, self.Pi, self.phi):
            value.setflags(write=False)

    def at(self, t):
        '''returns (P, Pi, phi) at time t, exact on nodes'''
        return (interpolate(self.P, self.grid, t),
                interpolate(self.Pi, self.grid, t),
                interpolate(self.phi, self.grid, t))

    def asymmetry(self):
        '''max over nodes of |P - P^T| and |Pi - Pi^T|'''
        def asym(M):
            return float(np.max(np.abs(M - np.swapaxes(M, 1, 2))))
        return asym(self.P), asym(self.Pi)


def _quad(outer, M, inner):
    'sum_j outer_j^T M inner_j over stacked noise channels'
    return np.einsum('jba,bc,jcd->ad', outer, M, inner)


def _lin(outer, M, vec):
    'sum_j outer_j^T M vec_j'
    return np.einsum('jba,bc,jc->a', outer, M, vec)


def _solve_block(Sigma, rhs, label, t):
    cond = np.linalg.cond(Sigma)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SingularityError(f'{label} singular at t = {t:.6g} '
                               f'(condition number {cond:.3e})')
    return np.linalg.solve(Sigma, rhs)


# kernels of the model system, stage loops run compiled
@jit(nopython=True, cache=True)
def quadratic_rate(Y, drive, cpc, const, M, A, AT):
    '''-(C^T D C + const - Y M Y + Y A + A^T Y) with D = drive

    cpc maps the flattened drive to the flattened C^T D C.
    '''
    d = Y.shape[0]
    CDC = (cpc @ drive.reshape(d * d)).reshape((d, d))
    return -(CDC + const - Y @ M @ Y + Y @ A + AT @ Y)


@jit(nopython=True, cache=True)
def affine_rate(y, Pi, lin, q, A0, BRinv, BRBD, AT):
    '''rate of the affine offset'''
    return -(q - Pi @ (BRinv @ lin) + Pi @ A0 - Pi @ (BRBD @ y) + AT @ y)


@jit(nopython=True, cache=True)
def _symmetric_part(Y):
    out = np.empty_like(Y)
    for i in range(Y.shape[0]):
        for j in range(Y.shape[1]):
            out[i, j] = 0.5 * (Y[i, j] + Y[j, i])
    return out


@jit(nopython=True, cache=True)
def backward_quadratic(n, dt, terminal, drive, drive_mid, cpc, const, M, A,
                       AT, symmetric):
    '''classical Runge-Kutta for Ydot = quadratic_rate from t_{n-1} to t_0

    The drive is Y itself when drive is empty, else drive on the nodes and
    drive_mid halfway between. Returns the values, the rates on every node
    and the node where Y stopped being finite, -1 if it never did.
    '''
    d = terminal.shape[0]
    own = drive.shape[0] == 0
    out = np.empty((n, d, d))
    rates = np.empty((n, d, d))
    y = terminal.copy()
    out[n - 1] = y
    for k in range(n - 2, -1, -1):
        upper = y if own else drive[k + 1]
        k1 = quadratic_rate(y, upper, cpc, const, M, A, AT)
        rates[k + 1] = k1
        y2 = y - 0.5 * dt * k1
        k2 = quadratic_rate(y2, y2 if own else drive_mid[k], cpc, const, M,
                            A, AT)
        y3 = y - 0.5 * dt * k2
        k3 = quadratic_rate(y3, y3 if own else drive_mid[k], cpc, const, M,
                            A, AT)
        y4 = y - dt * k3
        k4 = quadratic_rate(y4, y4 if own else drive[k], cpc, const, M, A,
                            AT)
        y = y - dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if symmetric:
            y = _symmetric_part(y)
        if not np.all(np.isfinite(y)):
            return out, rates, k
        out[k] = y
    rates[0] = quadratic_rate(y, y if own else drive[0], cpc, const, M, A,
                              AT)
    return out, rates, -1


@jit(nopython=True, cache=True)
def backward_affine(dt, Pi, Pi_mid, lin, lin_mid, q, q_mid, A0, A0_mid,
                    BRinv, BRBD, AT):
    '''classical Runge-Kutta for the affine offset, zero at t_{n-1}'''
    n, d = q.shape
    out = np.zeros((n, d))
    y = np.zeros(d)
    for k in range(n - 2, -1, -1):
        k1 = affine_rate(y, Pi[k + 1], lin[k + 1], q[k + 1], A0[k + 1],
                         BRinv, BRBD, AT)
        k2 = affine_rate(y - 0.5 * dt * k1, Pi_mid[k], lin_mid[k], q_mid[k],
                         A0_mid[k], BRinv, BRBD, AT)
        k3 = affine_rate(y - 0.5 * dt * k2, Pi_mid[k], lin_mid[k], q_mid[k],
                         A0_mid[k], BRinv, BRBD, AT)
        k4 = affine_rate(y - dt * k3, Pi[k], lin[k], q[k], A0[k], BRinv,
                         BRBD, AT)
        y = y - dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            return out, k
        out[k] = y
    return out, -1


def _check_finite(fail, name, times):
    if fail >= 0:
        raise DivergenceError(f'{name} is not finite at node {fail} '
                              f'(t = {times[fail]:.6g})')


class _System:
    '''right-hand sides of one variant, Ydot = rate(Y)'''

    def __init__(self, spec, lin, A0, q, C0, F0):
        self.spec = spec
        self.times = spec.grid.times
        self._nodes = _Schedules(A0, q, lin, C0, F0)
        self._mids = _Schedules(*(0.5 * (a[:-1] + a[1:])
                                  for a in self._nodes))

    def time(self, k, where):
        if where == UPPER:
            return self.times[k + 1]
        if where == LOWER:
            return self.times[k]
        return 0.5 * (self.times[k] + self.times[k + 1])

    def staged(self, k, where):
        '''schedules at a Runge-Kutta stage'''
        if where == MID:
            return _Schedules(*(a[k] for a in self._mids))
        node = k + 1 if where == UPPER else k
        return _Schedules(*(a[node] for a in self._nodes))

    def at(self, t):
        return _Schedules(*(interpolate(a, self.spec.grid, t)
                            for a in self._nodes))

    def solve(self, symmetrize):
        '''P, Pi and phi on every node, stages evaluated one by one'''
        dt = self.spec.grid.dt

        def p_rate(y, k, where):
            return self.p_dot(y, self.time(k, where))

        P, rates = _integrate_backward(self, self.spec.H, p_rate, symmetrize,
                                       'P')
        P_mid = _hermite_mids(P, rates, dt)

        def pi_rate(y, k, where):
            return self.pi_dot(y, _staged(P, P_mid, k, where),
                               self.time(k, where))

        Pi, rates = _integrate_backward(self, self.terminal_pi, pi_rate,
                                        symmetrize and self.symmetric_pi,
                                        'Pi')
        Pi_mid = _hermite_mids(Pi, rates, dt)

        def phi_rate(y, k, where):
            return self.phi_dot(y, _staged(Pi, Pi_mid, k, where),
                                _staged(P, P_mid, k, where),
                                self.staged(k, where), self.time(k, where))

        phi, _ = _integrate_backward(self, np.zeros(self.spec.d), phi_rate,
                                     False, 'phi')
        return P, Pi, phi


def _dense(a):
    return np.array(a, dtype=float, order='C')


class _ModelSystem(_System):
    '''exogenous and endogenous equations with R as the only control weight'''

    def __init__(self, spec, variant):
        s = spec
        endogenous = variant == VARIANTS.ENDOGENOUS
        super().__init__(spec, s.rtilde if endogenous else s.r,
                         s.A0, s.q, s.C0, s.F0)
        self.Rinv = _solve_block(s.R, np.eye(s.d2), 'R', s.grid.T)
        self.coupling = s.B.T + s.Dmkt if endogenous else s.B.T
        self.BRinv = _dense(s.B @ self.Rinv)
        self.BRB = _dense(self.BRinv @ s.B.T)
        self.BRBD = _dense(self.BRinv @ self.coupling)
        self.symmetric_pi = not (endogenous and s.coupled)
        self.terminal_pi = s.H
        d = s.d
        self.cpc = _dense(np.einsum('jba,jcd->adbc', s.C, s.C).reshape(
            d * d, d * d))
        self.A, self.AT = _dense(s.A), _dense(s.A.T)
        self.p_const, self.pi_const = _dense(s.Q), _dense(s.Q + s.Qbar)

    def p_dot(self, P, t):
        P = _dense(P)
        return quadratic_rate(P, P, self.cpc, self.p_const, self.BRB,
                              self.A, self.AT)

    def pi_dot(self, Pi, P, t):
        return quadratic_rate(_dense(Pi), _dense(P), self.cpc, self.pi_const,
                              self.BRBD, self.A, self.AT)

    def phi_dot(self, phi, Pi, P, sched, t):
        return affine_rate(_dense(phi), _dense(Pi), _dense(sched.lin),
                           _dense(sched.q), _dense(sched.A0), self.BRinv,
                           self.BRBD, self.AT)

    def solve(self, symmetrize):
        '''P, Pi and phi on every node with the compiled kernels'''
        s = self.spec
        n, dt = s.grid.n, s.grid.dt
        empty = np.empty((0, s.d, s.d))
        P, rates, fail = backward_quadratic(
            n, dt, _dense(s.H), empty, empty, self.cpc, self.p_const,
            self.BRB, self.A, self.AT, symmetrize)
        _check_finite(fail, 'P', self.times)
        P_mid = _hermite_mids(P, rates, dt)
        Pi, rates, fail = backward_quadratic(
            n, dt, _dense(self.terminal_pi), P, P_mid, self.cpc,
            self.pi_const, self.BRBD, self.A, self.AT,
            symmetrize and self.symmetric_pi)
        _check_finite(fail, 'Pi', self.times)
        Pi_mid = _hermite_mids(Pi, rates, dt)
        nodes, mids = self._nodes, self._mids
        phi, fail = backward_affine(
            dt, Pi, Pi_mid, _dense(nodes.lin), _dense(mids.lin),
            _dense(nodes.q), _dense(mids.q), _dense(nodes.A0),
            _dense(mids.A0), self.BRinv, self.BRBD, self.AT)
        _check_finite(fail, 'phi', self.times)
        return P, Pi, phi

    def gains(self, P, Pi, phi, sched, t):
        RB = self.Rinv @ self.spec.B.T
        RC = self.Rinv @ self.coupling
        return RB @ P, RC @ Pi, RC @ phi + self.Rinv @ sched.lin


class _GeneralSystem(_System):
    '''full coefficient set

    The clearing coupling Dmkt adds to (B + Bbar)^T wherever the mean
    control is priced (Lambda1 and rho), not in the mean dynamics.
    '''

    def __init__(self, spec):
        s = spec
        super().__init__(spec, s.r + s.rbar, s.A0, s.q + s.qbar, s.C0, s.F0)
        self.Ap, self.Bp = s.A + s.Abar, s.B + s.Bbar
        self.Cp, self.Dp = s.C + s.Cbar, s.D + s.Dbar
        self.Fp, self.Gp = s.F + s.Fbar, s.G + s.Gbar
        self.Sp, self.Rp = s.S + s.Sbar, s.R + s.Rbar
        self.coupling = self.Bp.T + s.Dmkt
        self.symmetric_pi = not s.coupled
        self.terminal_pi = s.H + s.Hbar

    def fluctuation_blocks(self, P):
        '''returns Sigma0, Lambda0 and the left factor of the P equation'''
        s = self.spec
        Sigma0 = _quad(s.D, P, s.D) + _quad(s.G, P, s.G) + s.R
        Lambda0 = s.B.T @ P + _quad(s.D, P, s.C) + _quad(s.G, P, s.F) + s.S
        M0 = P @ s.B + _quad(s.C, P, s.D) + _quad(s.F, P, s.G) + s.S.T
        return Sigma0, Lambda0, M0

    def mean_blocks(self, P, Pi):
        '''returns Sigma1, Lambda1 and the left factor of the Pi equation'''
        s = self.spec
        Sigma1 = (_quad(self.Dp, P, self.Dp) + _quad(self.Gp, Pi, self.Gp)
                  + self.Rp)
        Lambda1 = (self.coupling @ Pi + _quad(self.Dp, P, self.Cp)
                   + _quad(self.Gp, Pi, self.Fp) + self.Sp)
        M1 = (Pi @ self.Bp + _quad(self.Cp, P, self.Dp)
              + _quad(self.Fp, Pi, self.Gp) + self.Sp.T)
        return Sigma1, Lambda1, M1

    def rho(self, phi, Pi, P, sched):
        return (sched.lin + self.coupling @ phi + _lin(self.Dp, P, sched.C0)
                + _lin(self.Gp, Pi, sched.F0))

    def p_dot(self, P, t):
        s = self.spec
        Sigma0, Lambda0, M0 = self.fluctuation_blocks(P)
        gain = _solve_block(Sigma0, Lambda0, 'Sigma0', t)
        return -(P @ s.A + s.A.T @ P + _quad(s.C, P, s.C)
                 + _quad(s.F, P, s.F) + s.Q - M0 @ gain)

    def pi_dot(self, Pi, P, t):
        s = self.spec
        Sigma1, Lambda1, M1 = self.mean_blocks(P, Pi)
        gain = _solve_block(Sigma1, Lambda1, 'Sigma1', t)
        return -(Pi @ self.Ap + self.Ap.T @ Pi + _quad(self.Cp, P, self.Cp)
                 + _quad(self.Fp, Pi, self.Fp) + s.Q + s.Qbar - M1 @ gain)

    def phi_dot(self, phi, Pi, P, sched, t):
        Sigma1, _, M1 = self.mean_blocks(P, Pi)
        offset = _solve_block(Sigma1, self.rho(phi, Pi, P, sched),
                              'Sigma1', t)
        return -(self.Ap.T @ phi + Pi @ sched.A0
                 + _lin(self.Cp, P, sched.C0) + _lin(self.Fp, Pi, sched.F0)
                 + sched.q - M1 @ offset)

    def gains(self, P, Pi, phi, sched, t):
        Sigma0, Lambda0, _ = self.fluctuation_blocks(P)
        Sigma1, Lambda1, _ = self.mean_blocks(P, Pi)
        return (_solve_block(Sigma0, Lambda0, 'Sigma0', t),
                _solve_block(Sigma1, Lambda1, 'Sigma1', t),
                _solve_block(Sigma1, self.rho(phi, Pi, P, sched),
                             'Sigma1', t))


def _system(spec, variant):
    if variant == VARIANTS.GENERAL:
        return _GeneralSystem(spec)
    if variant in (VARIANTS.EXOGENOUS, VARIANTS.ENDOGENOUS):
        return _ModelSystem(spec, variant)
    raise ConfigurationError(f'unknown variant {variant!r}')


def _integrate_backward(system, terminal, rate, symmetric, name):
    '''classical Runge-Kutta from t_{n-1} down to t_0

    rate(y, k, where) -- time derivative of y at a stage of step k

    Returns the values and the rates on every node, the first stage of
    each step being the rate at its upper node.
    '''
    grid = system.spec.grid
    dt = grid.dt
    out = np.empty((grid.n,) + terminal.shape)
    rates = np.empty_like(out)
    out[-1] = terminal
    y = out[-1].copy()
    for k in range(grid.n - 2, -1, -1):
        k1 = rate(y, k, UPPER)
        rates[k + 1] = k1
        k2 = rate(y - 0.5 * dt * k1, k, MID)
        k3 = rate(y - 0.5 * dt * k2, k, MID)
        k4 = rate(y - dt * k3, k, LOWER)
        y = y - dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if symmetric:
            y = 0.5 * (y + y.T)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f'{name} is not finite at node {k} '
                                  f'(t = {system.times[k]:.6g})')
        out[k] = y
    rates[0] = rate(y, 0, LOWER)
    return out, rates


def _hermite_mids(values, rates, dt):
    '''cubic Hermite midpoints, fourth order accurate'''
    return (0.5 * (values[:-1] + values[1:])
            + dt / 8 * (rates[:-1] - rates[1:]))


def _staged(nodes, mids, k, where):
    if where == UPPER:
        return nodes[k + 1]
    if where == MID:
        return mids[k]
    return nodes[k]


def _check_grid(spec, grid):
    if grid is not None and grid != spec.grid:
        raise StructuralError(f'grid {grid} differs from the coefficient grid '
                              f'{spec.grid}')


def _solve(spec, grid, variant, symmetrize):
    _check_grid(spec, grid)
    system = _system(spec, variant)
    logger.info('solving %s Riccati system on %d nodes', variant,
                spec.grid.n)
    P, Pi, phi = system.solve(symmetrize)
    return RiccatiSolution(spec.grid, P, Pi, phi, variant)


def solve_exogenous(spec, grid=None, symmetrize=True):
    '''solves the system with an exogenous price schedule in spec.r

    The Pi equation uses Q + Qbar, phi uses r.
    '''
    return _solve(spec, grid, VARIANTS.EXOGENOUS, symmetrize)


def solve_endogenous(spec, grid=None, symmetrize=True):
    '''solves the system with the clearing coupling

    The quadratic term of Pi reads Pi B R^-1 (B^T + Dmkt) Pi and phi is
    driven by rtilde. Pi is symmetrized only if Dmkt vanishes.
    '''
    return _solve(spec, grid, VARIANTS.ENDOGENOUS, symmetrize)


def solve_general(spec, grid=None, symmetrize=True):
    '''solves the general mean field control system

    Terminal values P(T) = H, Pi(T) = H + Hbar, phi(T) = 0.
    '''
    return _solve(spec, grid, VARIANTS.GENERAL, symmetrize)


SOLVERS = {VARIANTS.EXOGENOUS: solve_exogenous,
           VARIANTS.ENDOGENOUS: solve_endogenous,
           VARIANTS.GENERAL: solve_general}


def sigma_lambda(spec, P_t, Pi_t, t):
    '''Sigma0, Sigma1, Lambda0, Lambda1 of the general problem at time t'''
    spec.grid.locate(t)
    shape = (spec.d, spec.d)
    P_t, Pi_t = np.asarray(P_t, dtype=float), np.asarray(Pi_t, dtype=float)
    if P_t.shape != shape or Pi_t.shape != shape:
        raise StructuralError(f'P and Pi must have shape {shape}')
    system = _GeneralSystem(spec)
    Sigma0, Lambda0, _ = system.fluctuation_blocks(P_t)
    Sigma1, Lambda1, _ = system.mean_blocks(P_t, Pi_t)
    return SigmaLambdaBlocks(Sigma0, Sigma1, Lambda0, Lambda1)


def feedback_control(sol, spec, t, x, xbar):
    '''optimal control at time t for state x and conditional mean xbar

    x and xbar may carry leading batch axes.
    '''
    system = _system(spec, sol.variant)
    P, Pi, phi = sol.at(t)
    K0, K1, k = system.gains(P, Pi, phi, system.at(t), t)
    x, xbar = np.asarray(x, dtype=float), np.asarray(xbar, dtype=float)
    return -(x - xbar) @ K0.T - xbar @ K1.T - k


def feedback_gains(sol, spec, nodes=None):
    '''FeedbackGains on the given node indices, all nodes by default'''
    system = _system(spec, sol.variant)
    n = sol.grid.n
    nodes = np.arange(n) if nodes is None else np.asarray(nodes)
    K0 = np.empty((len(nodes), spec.d2, spec.d))
    K1 = np.empty_like(K0)
    k = np.empty((len(nodes), spec.d2))
    for i, node in enumerate(nodes):
        step, where = (node, LOWER) if node < n - 1 else (n - 2, UPPER)
        K0[i], K1[i], k[i] = system.gains(sol.P[node], sol.Pi[node],
                                          sol.phi[node],
                                          system.staged(step, where),
                                          system.times[node])
    return FeedbackGains(K0, K1, k)


def _derivative(values, dt, order):
    '''finite difference time derivative along axis 0'''
    if order == 2 or len(values) < 5:
        return np.gradient(values, dt, axis=0, edge_order=2)
    if order != 4:
        raise StructuralError(f'difference order must be 2 or 4, got {order}')
    v = values
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * dt)
    out[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3]
              - 3 * v[4]) / (12 * dt)
    out[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3]
              + v[4]) / (12 * dt)
    out[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4]
               + 3 * v[-5]) / (12 * dt)
    out[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4]
               - v[-5]) / (12 * dt)
    return out


def residual_profile(sol, spec, order=4):
    '''node-wise norms of the Riccati left-hand sides

    Time derivatives are finite differences of the stored schedules.
    Returns three arrays of length n. The centred stencils skip their own
    node, so an error at a single node shows mostly on its neighbours.
    '''
    grid = sol.grid
    if grid.n < 3:
        raise StructuralError('residuals need at least three nodes')
    _check_grid(spec, grid)
    system = _system(spec, sol.variant)
    dP = _derivative(sol.P, grid.dt, order)
    dPi = _derivative(sol.Pi, grid.dt, order)
    dphi = _derivative(sol.phi, grid.dt, order)
    res = np.empty((3, grid.n))
    for node in range(grid.n):
        step, where = (node, LOWER) if node < grid.n - 1 else (grid.n - 2,
                                                               UPPER)
        t = system.times[node]
        P, Pi, phi = sol.P[node], sol.Pi[node], sol.phi[node]
        res[0, node] = np.linalg.norm(dP[node] - system.p_dot(P, t))
        res[1, node] = np.linalg.norm(dPi[node] - system.pi_dot(Pi, P, t))
        res[2, node] = np.linalg.norm(
            dphi[node] - system.phi_dot(phi, Pi, P,
                                        system.staged(step, where), t))
    return res[0], res[1], res[2]


def residual_norms(sol, spec, order=4):
    '''max over nodes of the plug-back residuals'''
    return Residuals(*(float(np.max(r))
                       for r in residual_profile(sol, spec, order)))


def _columns(prefix, d, matrix=True):
    if matrix:
        return [f'{prefix}{i + 1}{j + 1}' for i in range(d) for j in range(d)]
    return [f'{prefix}{i + 1}' for i in range(d)]


def write_csv(sol, path):
    '''dump t, P, Pi and phi, one row per node'''
    n, d = sol.phi.shape
    frame = pd.DataFrame(
        np.hstack([sol.grid.times[:, None], sol.P.reshape(n, -1),
                   sol.Pi.reshape(n, -1), sol.phi]),
        columns=['t'] + _columns('P', d) + _columns('Pi', d)
        + _columns('phi', d, matrix=False))
    frame.to_csv(path, index=False, float_format='%.16e')
    logger.info('wrote %s', path)


def read_csv(path, variant):
    '''inverse of write_csv'''
    frame = pd.read_csv(path)
    d = sum(1 for c in frame.columns if c.startswith('phi'))
    t = frame['t'].to_numpy()
    n = len(t)
    grid = TimeGrid(float(t[-1]), float(t[-1]) / (n - 1))
    P = frame[_columns('P', d)].to_numpy().reshape(n, d, d)
    Pi = frame[_columns('Pi', d)].to_numpy().reshape(n, d, d)
    phi = frame[_columns('phi', d, matrix=False)].to_numpy()
    return RiccatiSolution(grid, P, Pi, phi, variant)
