"""General linear-quadratic mean field problem

Holds the coefficient set of the conditional mean field control problem with
common noise, the uniform time grid its schedules live on, and the standing
assumption checks of the game (N family) and control (M family) problems.

Conventions: the running cost is

    Q0 + <QX,X> + <Qbar Xbar,Xbar> + <Rv,v> + <Rbar vbar,vbar>
       + 2<SX,v> + 2<Sbar Xbar,vbar> + 2<q,X> + 2<qbar,Xbar>
       + 2<r,v> + 2<rbar,vbar>

and the terminal cost <HX,X> + <Hbar Xbar,Xbar>.
"""
import logging
from collections import namedtuple
from dataclasses import dataclass, field, fields

import numpy as np

from .constants import DELTA1, DELTA2, DT, EIG_TOL, GRID_TOL, NODE_TOL
from .errors import RangeError, StructuralError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    '''uniform grid on [0, T]

    T  -- horizon in years
    dt -- step in years, T/dt must be an integer
    '''
    T: float
    dt: float = DT

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise StructuralError(f'horizon must be positive, got {self.T}')
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise StructuralError(f'step must be positive, got {self.dt}')
        steps = self.T / self.dt
        if abs(steps - round(steps)) > GRID_TOL * max(1.0, steps):
            raise StructuralError(f'T/dt = {steps} is not an integer')
        if round(steps) < 1:
            raise StructuralError('grid needs at least two nodes')

    @property
    def n(self):
        'number of nodes'
        return int(round(self.T / self.dt)) + 1

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.n)

    def locate(self, t):
        '''returns (k, w) with t = (1-w)*t_k + w*t_{k+1}

        w is exactly 0 when t sits on a node
        '''
        if not np.isfinite(t) or t < 0 or t > self.T * (1 + 1e-15):
            raise RangeError(f't = {t} outside [0, {self.T}]')
        pos = t / self.dt
        k = int(round(pos))
        if abs(pos - k) <= NODE_TOL * max(1.0, pos):
            return min(k, self.n - 1), 0.0
        k = min(int(np.floor(pos)), self.n - 2)
        return k, pos - k

    def stride(self, dt):
        '''number of grid steps in one step of size dt'''
        ratio = dt / self.dt
        stride = int(round(ratio))
        if stride < 1 or abs(ratio - stride) > GRID_TOL * max(1.0, ratio):
            raise StructuralError(f'step {dt} is not a multiple of {self.dt}')
        if (self.n - 1) % stride:
            raise StructuralError(f'step {dt} does not divide T = {self.T}')
        return stride


def interpolate(values, grid, t):
    '''linear interpolation of a node schedule, exact at nodes

    values -- array with leading axis of length grid.n
    '''
    k, w = grid.locate(t)
    if w == 0.0:
        return values[k]
    return (1 - w) * values[k] + w * values[k + 1]


# shape of every coefficient in terms of (d, d0, d1, d2)
_CONSTANT = {'A': 'dd', 'Abar': 'dd', 'B': 'de', 'Bbar': 'de',
             'C': 'jdd', 'Cbar': 'jdd', 'D': 'jde', 'Dbar': 'jde',
             'F': 'ldd', 'Fbar': 'ldd', 'G': 'lde', 'Gbar': 'lde',
             'Q': 'dd', 'Qbar': 'dd', 'R': 'ee', 'Rbar': 'ee',
             'S': 'ed', 'Sbar': 'ed', 'H': 'dd', 'Hbar': 'dd',
             'Dmkt': 'ed', 'x0': 'd'}
_SCHEDULE = {'A0': 'd', 'C0': 'jd', 'F0': 'ld', 'Q0': '',
             'q': 'd', 'qbar': 'd', 'r': 'e', 'rbar': 'e', 'rtilde': 'e'}
SYMMETRIC = ('Q', 'Qbar', 'R', 'Rbar', 'H', 'Hbar')


@dataclass(frozen=True, eq=False)
class GeneralLQSpec:
    '''coefficients of the linear-quadratic problem

    Matrices are stored as numpy arrays, idiosyncratic and common
    diffusion coefficients are stacked along the first axis
    (C has shape (d1, d, d), F has shape (d0, d, d)). Schedules carry a
    leading time axis of length grid.n; a constant can be passed and is
    broadcast. Missing coefficients are zero, rtilde defaults to r.
    The arrays are read-only after construction.

    x0     -- deterministic initial state
    Dmkt   -- clearing coupling, zero unless prices are endogenous
    rtilde -- linear control cost used with the clearing coupling
    '''
    grid: TimeGrid
    d: int
    d0: int
    d1: int
    d2: int
    A0: np.ndarray = None
    A: np.ndarray = None
    Abar: np.ndarray = None
    B: np.ndarray = None
    Bbar: np.ndarray = None
    C0: np.ndarray = None
    C: np.ndarray = None
    Cbar: np.ndarray = None
    D: np.ndarray = None
    Dbar: np.ndarray = None
    F0: np.ndarray = None
    F: np.ndarray = None
    Fbar: np.ndarray = None
    G: np.ndarray = None
    Gbar: np.ndarray = None
    Q0: np.ndarray = None
    Q: np.ndarray = None
    Qbar: np.ndarray = None
    R: np.ndarray = None
    Rbar: np.ndarray = None
    S: np.ndarray = None
    Sbar: np.ndarray = None
    q: np.ndarray = None
    qbar: np.ndarray = None
    r: np.ndarray = None
    rbar: np.ndarray = None
    H: np.ndarray = None
    Hbar: np.ndarray = None
    Dmkt: np.ndarray = None
    rtilde: np.ndarray = None
    x0: np.ndarray = None

    def __post_init__(self):
        for name in ('d', 'd2'):
            if int(getattr(self, name)) < 1:
                raise StructuralError(f'{name} must be positive')
        for name in ('d0', 'd1'):
            if int(getattr(self, name)) < 0:
                raise StructuralError(f'{name} must be nonnegative')
        sizes = {'d': self.d, 'e': self.d2, 'j': self.d1, 'l': self.d0}
        if self.rtilde is None and self.r is not None:
            object.__setattr__(self, 'rtilde', self.r)
        for name, code in _CONSTANT.items():
            shape = tuple(sizes[c] for c in code)
            object.__setattr__(self, name,
                               self._coerce(name, getattr(self, name), shape))
        for name, code in _SCHEDULE.items():
            shape = tuple(sizes[c] for c in code)
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=float)
                if value.shape == shape:
                    value = np.broadcast_to(value, (self.grid.n,) + shape)
            object.__setattr__(self, name,
                               self._coerce(name, value,
                                            (self.grid.n,) + shape))
        for name in SYMMETRIC:
            object.__setattr__(self, name, _symmetrized(name,
                                                        getattr(self, name)))
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                value.setflags(write=False)

    @staticmethod
    def _coerce(name, value, shape):
        if value is None:
            return np.zeros(shape)
        value = np.array(value, dtype=float)
        if value.shape != shape:
            raise StructuralError(f'{name} has shape {value.shape}, '
                                  f'expected {shape}')
        return value

    @property
    def coupled(self):
        'True if the clearing coupling is active'
        return bool(np.any(self.Dmkt != 0))

    def replace(self, **changes):
        '''returns a copy with some coefficients replaced

        An rtilde that still equals r follows a new r.
        '''
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        if ('r' in changes and 'rtilde' not in changes
                and np.array_equal(self.rtilde, self.r)):
            values['rtilde'] = None
        values.update(changes)
        return GeneralLQSpec(**values)


def _symmetrized(name, M):
    asym = np.max(np.abs(M - M.T), initial=0.0)
    if asym > 1e-12 * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise StructuralError(f'{name} is not symmetric, '
                              f'max |M - M^T| = {asym:.3e}')
    return 0.5 * (M + M.T)


@dataclass(frozen=True, eq=False)
class CoefficientSnapshot:
    '''all coefficients at a single time t'''
    t: float
    A0: np.ndarray
    A: np.ndarray
    Abar: np.ndarray
    B: np.ndarray
    Bbar: np.ndarray
    C0: np.ndarray
    C: np.ndarray
    Cbar: np.ndarray
    D: np.ndarray
    Dbar: np.ndarray
    F0: np.ndarray
    F: np.ndarray
    Fbar: np.ndarray
    G: np.ndarray
    Gbar: np.ndarray
    Q0: float
    Q: np.ndarray
    Qbar: np.ndarray
    R: np.ndarray
    Rbar: np.ndarray
    S: np.ndarray
    Sbar: np.ndarray
    q: np.ndarray
    qbar: np.ndarray
    r: np.ndarray
    rbar: np.ndarray
    H: np.ndarray
    Hbar: np.ndarray
    Dmkt: np.ndarray
    rtilde: np.ndarray


def coeff_at(spec, t):
    '''returns a CoefficientSnapshot of spec at time t

    Schedules are interpolated linearly between nodes and reproduce the
    stored node values bitwise on a node.
    '''
    values = {'t': t}
    for f in fields(CoefficientSnapshot):
        if f.name == 't':
            continue
        if f.name in _SCHEDULE:
            values[f.name] = interpolate(getattr(spec, f.name), spec.grid, t)
        else:
            values[f.name] = getattr(spec, f.name)
    return CoefficientSnapshot(**values)


def running_cost(spec, k, x, xbar, v, vbar):
    '''mean field control integrand at node k

    x, v       -- states and controls, leading axes are broadcast
    xbar, vbar -- conditional means
    '''
    def quad(M, a, b):
        return np.einsum('...i,ij,...j->...', a, M, b)

    return (spec.Q0[k] + quad(spec.Q, x, x) + quad(spec.Qbar, xbar, xbar)
            + quad(spec.R, v, v) + quad(spec.Rbar, vbar, vbar)
            + 2 * quad(spec.S.T, x, v) + 2 * quad(spec.Sbar.T, xbar, vbar)
            + 2 * x @ spec.q[k] + 2 * xbar @ spec.qbar[k]
            + 2 * v @ spec.r[k] + 2 * vbar @ spec.rbar[k])


def terminal_cost(spec, x, xbar):
    return (np.einsum('...i,ij,...j->...', x, spec.H, x)
            + np.einsum('...i,ij,...j->...', xbar, spec.Hbar, xbar))


AssumptionItem = namedtuple('AssumptionItem',
                            ['name', 'passed', 'margin', 'checks'])
AssumptionItem.__doc__ = '''one assumption verdict

checks -- dict of sub-check name to margin
'''


@dataclass(frozen=True)
class AssumptionReport:
    family: str
    delta1: float
    delta2: float
    items: tuple = field(default_factory=tuple)

    @property
    def passed(self):
        return all(item.passed for item in self.items)

    def __getitem__(self, name):
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def lines(self):
        '''human readable report, one line per assumption'''
        out = [f'{self.family}-assumptions (delta1={self.delta1!r}, '
               f'delta2={self.delta2!r}): '
               f'{"pass" if self.passed else "FAIL"}']
        for item in self.items:
            detail = ', '.join(f'{k}={v:.6g}' for k, v in item.checks.items())
            out.append(f'  {item.name}: {"pass" if item.passed else "FAIL"}'
                       f' margin={item.margin:.6g}'
                       + (f' [{detail}]' if detail else ''))
        return out


def _finite(name, spec, names):
    ok = all(np.all(np.isfinite(getattr(spec, n))) for n in names)
    return AssumptionItem(name, ok, 0.0 if ok else -np.inf, {})


def _symmetry(name, spec, names):
    checks = {}
    for n in names:
        M = getattr(spec, n)
        asym = float(np.max(np.abs(M - M.T), initial=0.0))
        if asym != 0.0:
            raise StructuralError(f'{n} is not symmetric, '
                                  f'max |M - M^T| = {asym:.3e}')
        checks[n] = -asym
    return AssumptionItem(name, True, 0.0, checks)


def _lower_bounds(name, bounds, strict):
    '''bounds -- list of (label, matrix, lower bound) for eigenvalue tests
    strict -- labels that also need a strictly positive spectrum
    '''
    checks, ok = {}, True
    for label, M, lower in bounds:
        lmin = float(np.linalg.eigvalsh(M)[0]) if M.size else 0.0
        margin = lmin - lower
        checks[label] = margin
        scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
        ok &= margin >= -EIG_TOL * scale
        if label in strict:
            ok &= lmin > 0
    return AssumptionItem(name, bool(ok), min(checks.values()), checks)


def _cross_term(name, spec, delta1, delta2, pairs):
    checks = {}
    if delta1 > 0:
        for label, M in pairs:
            checks[label] = delta1 * delta2 - np.linalg.norm(M, 2) ** 2
        margin = min(checks.values())
        return AssumptionItem(name, margin > 0, margin, checks)
    size = max(float(np.max(np.abs(spec.S), initial=0.0)),
               float(np.max(np.abs(spec.Sbar), initial=0.0)))
    checks['S=Sbar=0'] = -size
    return AssumptionItem(name, size == 0.0, -size, checks)


def _check_delta(delta1, delta2):
    if not delta1 >= 0:
        raise StructuralError(f'delta1 must be nonnegative, got {delta1}')
    if not delta2 > 0:
        raise StructuralError(f'delta2 must be positive, got {delta2}')


def validate_mfc_assumptions(spec, delta1=DELTA1, delta2=DELTA2):
    '''checks M1-M7 of the mean field control problem

    Failures are report entries; an asymmetric weight matrix is a
    StructuralError.
    '''
    _check_delta(delta1, delta2)
    I_d, I_e = np.eye(spec.d), np.eye(spec.d2)
    items = (
        _finite('M1', spec, ('A0', 'C0', 'F0', 'Q0')),
        _finite('M2', spec, ('A', 'Abar', 'C', 'Cbar', 'F', 'Fbar')),
        _finite('M3', spec, ('B', 'Bbar', 'D', 'Dbar', 'G', 'Gbar')),
        _symmetry('M4', spec, SYMMETRIC),
        _lower_bounds('M5', [
            ('H', spec.H, 0.0),
            ('H+Hbar', spec.H + spec.Hbar, 0.0),
            ('Q', spec.Q - delta1 * I_d, 0.0),
            ('Q+Qbar', spec.Q + spec.Qbar - delta1 * I_d, 0.0),
            ('R', spec.R, delta2),
            ('R+Rbar', spec.R + spec.Rbar, delta2)],
            strict=('R', 'R+Rbar')),
        _finite('M6', spec, ('S', 'Sbar', 'q', 'qbar', 'r', 'rbar',
                             'rtilde', 'Dmkt')),
        _cross_term('M7', spec, delta1, delta2,
                    [('S', spec.S), ('S+Sbar', spec.S + spec.Sbar)]),
    )
    report = AssumptionReport('M', delta1, delta2, items)
    logger.debug('\n'.join(report.lines()))
    return report


def validate_mfg_assumptions(spec, delta1=DELTA1, delta2=DELTA2):
    '''checks N1-N7 of the mean field game problem'''
    _check_delta(delta1, delta2)
    I_d = np.eye(spec.d)
    items = (
        _finite('N1', spec, ('A0', 'C0', 'F0')),
        _finite('N2', spec, ('A', 'Abar', 'C', 'Cbar', 'F', 'Fbar')),
        _finite('N3', spec, ('B', 'Bbar', 'D', 'Dbar', 'G', 'Gbar')),
        _symmetry('N4', spec, SYMMETRIC),
        _lower_bounds('N5', [
            ('H', spec.H, 0.0),
            ('Q', spec.Q - delta1 * I_d, 0.0),
            ('R', spec.R, delta2)],
            strict=('R',)),
        _finite('N6', spec, ('Q0', 'S', 'Sbar', 'q', 'qbar', 'r', 'rbar')),
        _cross_term('N7', spec, delta1, delta2, [('S', spec.S)]),
    )
    report = AssumptionReport('N', delta1, delta2, items)
    logger.debug('\n'.join(report.lines()))
    return report
