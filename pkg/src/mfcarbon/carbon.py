"""Cap-and-trade model

A representative firm produces with fossil and green capital, emits in
proportion to fossil capital, abates, trades allowances and pays a
quadratic penalty on its terminal bank account. State X = (K, Xt) with
capital K and bank account Xt, control v = (Kf, Kg, alpha, beta).
"""
import logging
from collections import namedtuple
from dataclasses import asdict, dataclass

import numpy as np

from .constants import COUPLINGS, DT, MODES, VARIANTS
from .errors import ConfigurationError, ValidationError
from .lq_problem import GeneralLQSpec, TimeGrid

logger = logging.getLogger(__name__)

Controls = namedtuple('Controls', ['Kf', 'Kg', 'alpha', 'beta'])
Wellposedness = namedtuple('Wellposedness', ['cond1', 'cond2', 'passed'])


@dataclass(frozen=True)
class CarbonParams:
    '''economic parameters, defaults are the reference calibration

    kappa_f, kappa_g -- productivity of fossil and green investment
    kappa_e      -- emissions per unit of fossil capital
    delta, sigma -- depreciation and volatility of capital
    sigma1, sigma2, sigma_tilde2 -- emission and allocation volatilities
    rho          -- correlation of emissions with the business cycle
    a, b, A_k    -- inverse demand intercept, slope and productivity
    gamma        -- degree of competition, 0 monopoly, 1 perfect
    nu, eta      -- market depth and abatement flexibility
    h            -- linear abatement cost
    c11 .. c22   -- linear and quadratic capital costs
    lam          -- terminal penalty on the bank account
    atilde       -- allowance rate, a number or one value per grid node
    kappa0, E0, A0 -- initial capital, emissions and permits

    kappa_g and atilde default to 3*gamma + 0.2 and 0.5/T; the defaults
    are resolved on access so they follow gamma and T.
    '''
    kappa_f: float = 5.0
    kappa_g: float = None
    kappa_e: float = 2.0
    delta: float = 0.01
    sigma: float = 0.005
    sigma1: float = 0.2
    sigma2: float = 0.5
    sigma_tilde2: float = 0.2
    rho: float = 0.92
    a: float = 50.0
    b: float = 0.07
    gamma: float = 0.5
    A_k: float = 2.0
    nu: float = 285.713
    eta: float = 0.211
    h: float = 80.0
    c11: float = 0.01
    c12: float = 3.0
    c21: float = 0.02
    c22: float = 4.0
    lam: float = 7.5e-5
    atilde: object = None
    T: float = 5.0
    kappa0: float = 30.0
    E0: float = 4.0
    A0: float = 0.1

    def __post_init__(self):
        if self.atilde is not None and np.ndim(self.atilde):
            object.__setattr__(self, 'atilde',
                               tuple(float(a) for a in self.atilde))
        for name, value in asdict(self).items():
            if value is None:
                continue
            if not np.all(np.isfinite(value)):
                raise ValidationError(f'{name} must be finite, got {value}')
        checks = [('nu', self.nu > 0), ('eta', self.eta > 0),
                  ('c12', self.c12 > 0), ('c22', self.c22 > 0),
                  ('lambda', self.lam >= 0), ('T', self.T > 0),
                  ('gamma', 0 <= self.gamma <= 1),
                  ('rho', 0 <= self.rho <= 1)]
        for name, ok in checks:
            if not ok:
                raise ValidationError(f'{name} violates its constraint')

    @property
    def kg(self):
        'resolved green productivity'
        if self.kappa_g is None:
            return 3 * self.gamma + 0.2
        return self.kappa_g

    @property
    def X0(self):
        'initial bank account'
        return self.A0 - self.E0

    @property
    def x0(self):
        return np.array([self.kappa0, self.X0])

    def allowance_schedule(self, grid):
        '''allowance rate on every node of grid'''
        if self.atilde is None:
            return np.full(grid.n, 0.5 / self.T)
        if np.ndim(self.atilde) == 0:
            return np.full(grid.n, float(self.atilde))
        schedule = np.asarray(self.atilde, dtype=float)
        if schedule.shape != (grid.n,):
            raise ConfigurationError(f'allowance schedule has {len(schedule)}'
                                     f' values, grid has {grid.n} nodes')
        return schedule

    def resolved(self):
        '''all parameters with derived defaults filled in'''
        values = asdict(self)
        values['kappa_g'] = self.kg
        if self.atilde is None:
            values['atilde'] = 0.5 / self.T
        return values


def build_spec(params, variant, price_schedule=None, grid=None,
               coupling=COUPLINGS.CLEARING):
    '''GeneralLQSpec of the cap-and-trade model

    price_schedule -- exogenous permit price, a number or one value per node;
                      required for the exogenous variant, refused otherwise
    coupling       -- 'clearing' gives the coupling row (0, -1) so that the
                      feedback trades -2 nu (Y2 - Ybar2), 'printed' gives
                      (0, -1/2)
    '''
    p = params
    grid = TimeGrid(p.T, DT) if grid is None else grid
    if abs(grid.T - p.T) > 1e-12 * p.T:
        raise ConfigurationError(f'grid horizon {grid.T} differs from T={p.T}')
    if variant == VARIANTS.EXOGENOUS and price_schedule is None:
        raise ConfigurationError('exogenous variant needs a price schedule')
    if variant == VARIANTS.ENDOGENOUS and price_schedule is not None:
        raise ConfigurationError('endogenous variant takes no price schedule')
    if variant not in (VARIANTS.EXOGENOUS, VARIANTS.ENDOGENOUS):
        raise ConfigurationError(f'unknown variant {variant!r}')
    if coupling not in COUPLINGS:
        raise ConfigurationError(f'unknown coupling {coupling!r}')

    C = np.zeros((3, 2, 2))
    C[0, 0, 0] = p.sigma
    C0 = np.zeros((3, 2))
    C0[1, 1] = -p.sigma1 * np.sqrt(1 - p.rho ** 2)
    C0[2, 1] = -p.sigma2
    F0 = np.zeros((2, 2))
    F0[0, 1] = -p.sigma1 * p.rho
    F0[1, 1] = p.sigma_tilde2
    A0 = np.zeros((grid.n, 2))
    A0[:, 1] = p.allowance_schedule(grid)
    rtilde = np.array([p.c11 / 2, p.c21 / 2, p.h / 2, 0.0])
    Dmkt = np.zeros((4, 2))
    if variant == VARIANTS.EXOGENOUS:
        price = np.asarray(price_schedule, dtype=float)
        if price.ndim and price.shape != (grid.n,):
            raise ConfigurationError(f'price schedule has shape {price.shape}'
                                     f', grid has {grid.n} nodes')
        r = np.tile(rtilde, (grid.n, 1))
        r[:, 3] = np.broadcast_to(price, (grid.n,)) / 2
        rtilde = r
    else:
        r = rtilde
        Dmkt[3, 1] = -1.0 if coupling == COUPLINGS.CLEARING else -0.5
    return GeneralLQSpec(
        grid=grid, d=2, d0=2, d1=3, d2=4,
        A0=A0,
        A=[[-p.delta, 0.0], [0.0, 0.0]],
        B=[[p.kappa_f, p.kg, 0.0, 0.0], [-p.kappa_e, 0.0, 1.0, 1.0]],
        C0=C0, C=C, F0=F0,
        Q=[[p.b * (1 - p.gamma) * p.A_k ** 2, 0.0], [0.0, 0.0]],
        Qbar=[[p.b * p.gamma * p.A_k ** 2 / 2, 0.0], [0.0, 0.0]],
        R=np.diag([p.c12, p.c22, 1 / (2 * p.eta), 1 / (2 * p.nu)]),
        q=[-p.a * p.A_k / 2, 0.0],
        r=r, rtilde=rtilde, Dmkt=Dmkt,
        H=[[0.0, 0.0], [0.0, p.lam]],
        x0=p.x0)


def check_wellposedness(params):
    '''margins of the sufficient condition for the coupled system'''
    p = params
    cond1 = (p.kappa_f ** 2 / p.c12 + p.kg ** 2 / p.c22
             - p.kappa_f * p.kappa_e / p.c12)
    cond2 = (2 * p.eta + p.nu + p.kappa_e ** 2 / p.c12
             - p.kappa_f * p.kappa_e / p.c12)
    return Wellposedness(cond1, cond2, bool(cond1 > 0 and cond2 > 0))


def inverse_demand(k, kbar, params):
    '''goods price faced by a firm with capital k'''
    p = params
    return p.a - p.b * (1 - p.gamma) * p.A_k * k - p.b * p.gamma * p.A_k * kbar


def coupling_controls(y, ybar, omega, params, variant):
    '''optimal controls as a function of the adjoint

    y, ybar -- adjoint and its conditional mean, last axis of length 2
    omega   -- permit price, used by the exogenous variant
    '''
    p = params
    y = np.asarray(y, dtype=float)
    y1, y2 = y[..., 0], y[..., 1]
    Kf = -p.kappa_f / p.c12 * y1 + p.kappa_e / p.c12 * y2 - p.c11 / (2 * p.c12)
    Kg = -p.kg / p.c22 * y1 - p.c21 / (2 * p.c22)
    alpha = -2 * p.eta * y2 - p.eta * p.h
    if variant == VARIANTS.EXOGENOUS:
        if omega is None:
            raise ConfigurationError('exogenous controls need a price')
        beta = -2 * p.nu * y2 - p.nu * np.asarray(omega)
    elif variant == VARIANTS.ENDOGENOUS:
        if ybar is None:
            raise ConfigurationError('endogenous controls need ybar')
        beta = -2 * p.nu * y2 + 2 * p.nu * np.asarray(ybar)[..., 1]
    else:
        raise ConfigurationError(f'unknown variant {variant!r}')
    return Controls(Kf, Kg, alpha, beta)


def as_controls(v):
    '''Controls from an array with last axis (Kf, Kg, alpha, beta)'''
    if isinstance(v, Controls):
        return v
    v = np.asarray(v, dtype=float)
    return Controls(v[..., 0], v[..., 1], v[..., 2], v[..., 3])


def running_cost(x, xbar, v, omega, params, mode):
    '''cost rate of a firm in Eur/year

    NE: revenue on the own output A_k x1, LQ: on the mean output A_k xbar1
    '''
    p = params
    x, xbar = np.asarray(x, dtype=float), np.asarray(xbar, dtype=float)
    v = as_controls(v)
    price = inverse_demand(x[..., 0], xbar[..., 0], p)
    if mode == MODES.NE:
        revenue = price * p.A_k * x[..., 0]
    elif mode == MODES.LQ:
        revenue = price * p.A_k * xbar[..., 0]
    else:
        raise ConfigurationError(f'unknown cost mode {mode!r}')
    return (-revenue + v.beta * omega + v.beta ** 2 / (2 * p.nu)
            + p.h * v.alpha + v.alpha ** 2 / (2 * p.eta)
            + p.c11 * v.Kf + p.c12 * v.Kf ** 2
            + p.c21 * v.Kg + p.c22 * v.Kg ** 2)


def terminal_cost(x, params):
    'penalty on the terminal bank account'
    return params.lam * np.asarray(x)[..., 1] ** 2
