from . import (constants, errors, lq_problem, riccati, carbon, simulator,
               market, experiment)
