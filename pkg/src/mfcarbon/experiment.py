"""Scenario runner and command line

A scenario is described by a text file of "key = value" lines, '#' starts a
comment. Keys are the CarbonParams fields (lambda for lam), the SimConfig
fields and

    sweep, sweep_values  -- swept parameter and its values
    out, emit            -- output directory and files to write
    price_schedule       -- csv with columns t, omega for the exogenous price
    n_list, jobs         -- particle counts of the clearing study, processes
    coupling             -- clearing or printed
"""
import argparse
import logging
import os
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from . import carbon
from .carbon import CarbonParams, build_spec, check_wellposedness
from .constants import COUPLINGS, EMIT, MODES, N_LIST, SWEEPS, VARIANTS
from .errors import (ConfigurationError, DivergenceError, ParseError,
                     SingularityError, ValidationError)
from .lq_problem import (TimeGrid, validate_mfc_assumptions,
                         validate_mfg_assumptions)
from .market import clearing_study, equilibrium_price
from .riccati import SOLVERS, residual_norms, write_csv
from .simulator import (ClosedLoop, EnsembleSummary, SimConfig, cost_samples,
                        estimate, generate_noise, path_moments,
                        price_of_anarchy, run_paths, simulate_path)

logger = logging.getLogger(__name__)

# config key to CarbonParams field
PARAM_KEYS = {f.name: f.name for f in fields(CarbonParams)}
PARAM_KEYS['lambda'] = PARAM_KEYS.pop('lam')
SIM_KEYS = tuple(f.name for f in fields(SimConfig))
_INTS = ('n_common', 'n_particles', 'seed', 'jobs')
_STRINGS = ('variant', 'sweep', 'out', 'price_schedule', 'coupling')
_LISTS = {'sweep_values': float, 'emit': str, 'n_list': int}

SUMMARY_NAMES = ('production', 'goods_price', 'permit_price', 'abatement',
                 'trading', 'fossil', 'green', 'penalty', 'J_NE', 'J_LQ',
                 'PoA')
SummaryRow = namedtuple(
    'SummaryRow',
    ['value'] + [f'{n}{s}' for n in SUMMARY_NAMES for s in ('', '_hw')])
SummaryRow.__doc__ = '''Monte Carlo means and 95% half widths of a run'''
RunResult = namedtuple('RunResult', ['summary', 'solution', 'residuals',
                                     'out'])


@dataclass(frozen=True)
class ScenarioConfig:
    '''complete description of a run'''
    params: CarbonParams = field(default_factory=CarbonParams)
    sim: SimConfig = field(default_factory=SimConfig)
    sweep: str = None
    sweep_values: tuple = ()
    out: str = 'out'
    emit: tuple = tuple(EMIT)
    price_schedule: str = None
    n_list: tuple = N_LIST
    jobs: int = 1
    coupling: str = COUPLINGS.CLEARING

    def __post_init__(self):
        if self.sweep is not None:
            if self.sweep not in SWEEPS:
                raise ValidationError(f'cannot sweep {self.sweep!r}, choose '
                                      f'from {", ".join(SWEEPS)}')
            if not self.sweep_values:
                object.__setattr__(self, 'sweep_values', SWEEPS[self.sweep])
            values = np.asarray(self.sweep_values, dtype=float)
            if not np.all(np.isfinite(values)):
                raise ValidationError('sweep values must be finite')
        object.__setattr__(self, 'sweep_values',
                           tuple(float(v) for v in self.sweep_values))
        unknown = set(self.emit) - set(EMIT)
        if unknown:
            raise ValidationError(f'unknown emit flags {sorted(unknown)}')
        if not self.n_list or any(int(n) != n or n < 1 for n in self.n_list):
            raise ValidationError('n_list must hold positive integers')
        if int(self.jobs) != self.jobs or self.jobs < 1:
            raise ValidationError('jobs must be a positive integer')
        if self.coupling not in COUPLINGS:
            raise ValidationError(f'unknown coupling {self.coupling!r}')

    @property
    def variant(self):
        return self.sim.variant

    def with_value(self, key, value):
        '''copy with one config key changed'''
        if key in PARAM_KEYS:
            return replace(self, params=replace(self.params,
                                                **{PARAM_KEYS[key]: value}))
        if key in SIM_KEYS:
            return replace(self, sim=replace(self.sim, **{key: value}))
        return replace(self, **{key: value})

    def resolved(self):
        '''every config key with derived defaults applied'''
        values = self.params.resolved()
        values['lambda'] = values.pop('lam')
        values.update(asdict(self.sim))
        for f in fields(self):
            if f.name not in ('params', 'sim'):
                values[f.name] = getattr(self, f.name)
        return values


def _convert(key, text, lineno):
    try:
        if key in _LISTS:
            return tuple(_LISTS[key](item.strip())
                         for item in text.split(',') if item.strip())
        if key in _STRINGS:
            return text
        if key in _INTS:
            return int(text)
        if key == 'atilde' and ',' in text:
            return tuple(float(item) for item in text.split(','))
        return float(text)
    except ValueError:
        raise ParseError(lineno, f'cannot read {text!r} as value of {key}')


def parse_config(text):
    '''ScenarioConfig from key = value lines'''
    known = set(PARAM_KEYS) | set(SIM_KEYS) | {
        f.name for f in fields(ScenarioConfig)} - {'params', 'sim'}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ParseError(lineno, 'expected key = value')
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in known:
            raise ParseError(lineno, f'unknown key {key!r}')
        if key in values:
            raise ParseError(lineno, f'duplicate key {key!r}')
        if not value:
            raise ParseError(lineno, f'missing value for {key!r}')
        values[key] = _convert(key, value, lineno)
    params = CarbonParams(**{PARAM_KEYS[k]: v for k, v in values.items()
                             if k in PARAM_KEYS})
    sim = SimConfig(**{k: v for k, v in values.items() if k in SIM_KEYS})
    rest = {k: v for k, v in values.items()
            if k not in PARAM_KEYS and k not in SIM_KEYS}
    return ScenarioConfig(params=params, sim=sim, **rest)


def _format(value):
    if isinstance(value, tuple):
        return ', '.join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render(config):
    '''text that parse_config turns back into config'''
    lines = []
    for key, value in config.resolved().items():
        if value is None or value == ():
            continue
        lines.append(f'{key} = {_format(value)}')
    return '\n'.join(lines) + '\n'


def read_config(path):
    with open(path) as handle:
        return parse_config(handle.read())


def load_price_schedule(path, grid):
    '''exogenous price from a csv with columns t, omega, on the grid nodes'''
    frame = pd.read_csv(path)
    missing = {'t', 'omega'} - set(frame.columns)
    if missing:
        raise ConfigurationError(f'{path} lacks columns {sorted(missing)}')
    return np.interp(grid.times, frame['t'].to_numpy(dtype=float),
                     frame['omega'].to_numpy(dtype=float))


def scenario_spec(config):
    '''(grid, spec, price) of a scenario, price is None when endogenous'''
    grid = TimeGrid(config.params.T, config.sim.dt)
    price = None
    if config.variant == VARIANTS.EXOGENOUS:
        if config.price_schedule is None:
            raise ConfigurationError('exogenous variant needs price_schedule')
        price = load_price_schedule(config.price_schedule, grid)
    spec = build_spec(config.params, config.variant, price, grid,
                      config.coupling)
    return grid, spec, price


def _prepare(config):
    '''(grid, spec, solution, price) of a well-posed scenario'''
    if config.variant == VARIANTS.ENDOGENOUS:
        margins = check_wellposedness(config.params)
        if not margins.passed:
            raise ValidationError(f'well-posedness fails: cond1 = '
                                  f'{margins.cond1:.6g}, cond2 = '
                                  f'{margins.cond2:.6g}')
    grid, spec, price = scenario_spec(config)
    sol = SOLVERS[config.variant](spec)
    return grid, spec, sol, price


def _output_dir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise ConfigurationError(f'output directory {path} is not writable')
    return path


def _integral(values, times):
    return trapezoid(values, times, axis=-1)


class _PathWork:
    '''simulation and per path statistics of one common path'''

    def __init__(self, sol, spec, params, noise, price):
        self.sol, self.spec, self.params = sol, spec, params
        self.noise, self.price = noise, price
        self.loop = ClosedLoop(sol, spec, sol.grid.stride(noise.dt))

    def __call__(self, path):
        p = self.params
        ens = simulate_path(self.sol, self.spec, self.noise, path, self.loop)
        if self.price is None:
            omega = equilibrium_price(self.sol, ens.xbar, ens.nodes).omega[0]
        else:
            omega = self.price[ens.nodes]
        t = ens.times
        K = ens.xbar[:, 0]
        samples = {
            'production': _integral(p.A_k * ens.X[..., 0], t),
            'goods_price': [_integral(carbon.inverse_demand(K, K, p), t)],
            'permit_price': [_integral(omega, t)],
            'abatement': _integral(ens.v[..., 2], t),
            'trading': _integral(ens.v[..., 3], t),
            'fossil': _integral(ens.v[..., 0], t),
            'green': _integral(ens.v[..., 1], t),
            'penalty': carbon.terminal_cost(ens.X[:, -1], p),
            'J_NE': cost_samples(ens, p, omega, MODES.NE),
            'J_LQ': cost_samples(ens, p, omega, MODES.LQ),
            'PoA': [price_of_anarchy([ens.xbar], p, t).mean],
        }
        market = np.column_stack([np.full(len(t), path), t, ens.xbar, omega])
        return path_moments(ens, omega), samples, market


def summarize(value, samples):
    '''SummaryRow from the per path samples of every quantity'''
    row = [value]
    for name in SUMMARY_NAMES:
        row.extend(estimate([s[name] for s in samples]))
    return SummaryRow(*row)


def _manifest(config, grid, residuals=None, reports=(), margins=None):
    lines = [render(config).rstrip('\n'),
             f'# grid: T = {grid.T!r}, dt = {grid.dt!r}, nodes = {grid.n}']
    if residuals is not None:
        lines.append('# residuals: ' + ', '.join(
            f'{k} = {v:.6e}' for k, v in residuals._asdict().items()))
    for report in reports:
        lines.extend('# ' + line for line in report.lines())
    if margins is not None:
        lines.append(f'# well-posedness: cond1 = {margins.cond1!r}, '
                     f'cond2 = {margins.cond2!r}, passed = {margins.passed}')
    return '\n'.join(lines) + '\n'


def _write_manifest(out, text):
    path = os.path.join(out, 'manifest.txt')
    with open(path, 'w') as handle:
        handle.write(text)
    logger.info('wrote %s', path)


def _write_frame(frame, path):
    frame.to_csv(path, index=False, float_format='%.16e')
    logger.info('wrote %s', path)


def solve_scenario(config):
    '''solve the Riccati system, write riccati.csv and the manifest'''
    out = _output_dir(config.out)
    grid, spec, sol, _ = _prepare(config)
    residuals = residual_norms(sol, spec)
    logger.info('residuals %s', residuals)
    if EMIT.RICCATI in config.emit:
        write_csv(sol, os.path.join(out, 'riccati.csv'))
    _write_manifest(out, _manifest(config, grid, residuals,
                                   margins=check_wellposedness(config.params)))
    return sol, residuals


def run_scenario(config, value=np.nan):
    '''solve, simulate and write the requested files to config.out

    Returns a RunResult whose summary carries value in its first field.
    '''
    out = _output_dir(config.out)
    grid, spec, sol, price = _prepare(config)
    residuals = residual_norms(sol, spec)
    noise = generate_noise(config.sim, grid, spec.d0, spec.d1)
    work = _PathWork(sol, spec, config.params, noise, price)
    logger.info('simulating %d paths of %d particles', config.sim.n_common,
                config.sim.n_particles)
    summary, samples, market = None, [], []
    for moments, path_samples, rows in run_paths(
            work, range(config.sim.n_common), config.jobs):
        if summary is None:
            summary = EnsembleSummary(rows[:, 1])
        summary.add(moments)
        samples.append(path_samples)
        market.append(rows)
    row = summarize(value, samples)
    if EMIT.RICCATI in config.emit:
        write_csv(sol, os.path.join(out, 'riccati.csv'))
    if EMIT.ENSEMBLE in config.emit:
        summary.write_csv(os.path.join(out, 'ensemble.csv'))
    if EMIT.MARKET in config.emit:
        frame = pd.DataFrame(np.vstack(market),
                             columns=['path', 't', 'Kbar', 'Xbar', 'omega'])
        frame['path'] = frame['path'].astype(int)
        _write_frame(frame, os.path.join(out, 'market.csv'))
    if EMIT.SUMMARY in config.emit:
        _write_frame(pd.DataFrame([row]), os.path.join(out, 'summary.csv'))
    reports = (validate_mfc_assumptions(spec), validate_mfg_assumptions(spec))
    _write_manifest(out, _manifest(config, grid, residuals, reports,
                                   margins=check_wellposedness(config.params)))
    return RunResult(row, sol, residuals, out)


def _sweep_value(args):
    config, value = args
    return run_scenario(config, value).summary


def sweep(config):
    '''one run per sweep value with the same seed, summary.csv in config.out

    Every value writes into its own subdirectory; the merged summary is
    replaced atomically.
    '''
    if config.sweep is None:
        raise ConfigurationError('sweep needs a sweep parameter')
    out = _output_dir(config.out)
    tasks = []
    for i, value in enumerate(config.sweep_values):
        sub = config.with_value(config.sweep, value)
        sub = replace(sub, out=os.path.join(out, f'{config.sweep}_{i:02d}'),
                      sweep=None, sweep_values=(), jobs=1)
        tasks.append((sub, value))
        logger.info('sweep %s = %r', config.sweep, value)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_sweep_value, tasks))
    else:
        rows = [_sweep_value(task) for task in tasks]
    frame = pd.DataFrame(rows).rename(columns={'value': config.sweep})
    path = os.path.join(out, 'summary.csv')
    _write_frame(frame, path + '.tmp')
    os.replace(path + '.tmp', path)
    _write_manifest(out, _manifest(config, TimeGrid(config.params.T,
                                                    config.sim.dt)))
    return rows


def clearing(config):
    '''clearing rate study over config.n_list'''
    if config.variant != VARIANTS.ENDOGENOUS:
        raise ConfigurationError('clearing study needs the endogenous variant')
    out = _output_dir(config.out)
    grid, spec, sol, _ = _prepare(config)
    stats = clearing_study(sol, spec, config.params, config.sim,
                           config.n_list, config.jobs)
    stats.write_csv(os.path.join(out, 'clearing.csv'),
                    os.path.join(out, 'clearing_fit.csv'))
    _write_manifest(out, _manifest(config, grid))
    return stats


def validate(config):
    '''(passed, lines) of the assumption reports and well-posedness'''
    _, spec, _ = scenario_spec(config)
    margins = check_wellposedness(config.params)
    reports = (validate_mfc_assumptions(spec), validate_mfg_assumptions(spec))
    lines = [line for report in reports for line in report.lines()]
    lines.append(f'well-posedness: cond1 = {margins.cond1:.12g}, '
                 f'cond2 = {margins.cond2:.12g}: '
                 f'{"pass" if margins.passed else "FAIL"}')
    return margins.passed and all(r.passed for r in reports), lines


def build_parser():
    parser = argparse.ArgumentParser(
        prog='mfcarbon',
        description='Mean field cap-and-trade solver and simulator')
    sub = parser.add_subparsers(dest='command', required=True)
    for name, text in [('validate', 'assumption and well-posedness report'),
                       ('riccati', 'solve and dump the Riccati system'),
                       ('simulate', 'run a single scenario'),
                       ('sweep', 'run a parameter sweep'),
                       ('clearing', 'market clearing rate study')]:
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument('--config', help='scenario file')
        cmd.add_argument('--out', help='output directory')
        cmd.add_argument('--seed', type=int, help='unsigned 64 bit seed')
        cmd.add_argument('--variant', choices=[VARIANTS.EXOGENOUS,
                                               VARIANTS.ENDOGENOUS])
        cmd.add_argument('--jobs', type=int, help='worker processes')
        cmd.add_argument('-v', '--verbose', action='count', default=0)
        if name == 'clearing':
            cmd.add_argument('--n-list', help='comma separated particle '
                                              'counts, e.g. 10,100,1000')
    return parser


def load_config(args):
    '''ScenarioConfig of the config file with command line overrides'''
    config = read_config(args.config) if args.config else ScenarioConfig()
    for key in ('out', 'seed', 'variant', 'jobs'):
        value = getattr(args, key)
        if value is not None:
            config = config.with_value(key, value)
    if getattr(args, 'n_list', None):
        config = config.with_value('n_list', _convert('n_list', args.n_list,
                                                      0))
    return config


def main(argv=None):
    '''entry point, returns the process exit code'''
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                       logging.DEBUG)
    logging.basicConfig(level=level,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        config = load_config(args)
        if args.command == 'validate':
            passed, lines = validate(config)
            print('\n'.join(lines))
            return 0 if passed else 1
        if args.command == 'riccati':
            _, residuals = solve_scenario(config)
            print(f'residuals: {residuals}')
        elif args.command == 'simulate':
            result = run_scenario(config)
            print(f'J_NE = {result.summary.J_NE:.6g} '
                  f'+- {result.summary.J_NE_hw:.2g}')
        elif args.command == 'sweep':
            sweep(config)
        elif args.command == 'clearing':
            stats = clearing(config)
            print(f'clearing slope {stats.slope:.4f}')
    except (SingularityError, DivergenceError) as e:
        logger.error('numerical failure: %s', e)
        return 2
    except (ValueError, OSError) as e:
        logger.error('%s', e)
        return 1
    return 0


if __name__ == '__main__':
    raise SystemExit(main())
