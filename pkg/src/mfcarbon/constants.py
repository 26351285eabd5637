""" Constants

Numerical settings of the solver and simulator. Economic parameters live in
carbon.py as defaults of CarbonParams, the numbers below are more related to
the discretisation and the experiment harness.
"""
from collections import namedtuple

VARIANTS = namedtuple('VARIANTS', ['EXOGENOUS', 'ENDOGENOUS', 'GENERAL'],
                      defaults=['exogenous', 'endogenous', 'general-mfc'])()
MODES = namedtuple('MODES', ['NE', 'LQ'], defaults=['NE', 'LQ'])()
EMIT = namedtuple('EMIT', ['RICCATI', 'ENSEMBLE', 'MARKET', 'SUMMARY'],
                  defaults=['riccati', 'ensemble', 'market', 'summary'])()
COUPLINGS = namedtuple('COUPLINGS', ['CLEARING', 'PRINTED'],
                       defaults=['clearing', 'printed'])()

DT = 1e-3            # Riccati and simulation step [years]
GRID_TOL = 1e-9      # tolerance on T/dt being an integer
EIG_TOL = 1e-10      # PSD means lambda_min >= -EIG_TOL
COND_MAX = 1e12      # condition number beyond which a block is singular
DELTA1 = 0.0
DELTA2 = 1e-12
NODE_TOL = 1e-9      # relative distance at which a time snaps to a node

# Monte Carlo budget, 5000 trajectories split as paths x particles
N_COMMON = 50
N_PARTICLES = 100
PARTICLE_BLOCK = 256  # particles advanced per kernel call
CLEARING_NODES = 5    # interior nodes used by the clearing slope fit
N_LIST = (10, 100, 1000)
Z95 = 1.96

# sweep presets, keyed by config name
SWEEPS = {'atilde': (0.02, 0.1, 1.0, 4.0),
          'lambda': (7.5e-7, 7.5e-5, 7.5e-3),
          'gamma': (0.0, 0.25, 0.5, 0.75, 1.0),
          'nu': (28.5713, 285.713, 2857.13),
          'eta': (0.0211, 0.211, 2.11)}

# noise channels, common first then idiosyncratic
COMMON_CHANNELS = ('W01', 'W02')
IDIO_CHANNELS = ('W1', 'W2', 'W3')
