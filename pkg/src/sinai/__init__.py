"""Random walk in a one-dimensional random environment (Sinai's regime).

Modules
-------
env       environments, potentials and n-dependent scales
valleys   basic valley, refinements, ordered chopping, inner barriers
goodenv   clause-by-clause good-environment checker and its probability
exact     exit probabilities and exit-time moments, bound evaluators
walk      seeded Monte Carlo of the quenched walk
harness   end-to-end experiments and reports
"""

from .env import (DerivedScales, DistSpec, Environment, PotentialView, build_environment,
                  derived_scales, potential, scales_from_log)
from .errors import *  # noqa: F401,F403
from .exact import (exit_prob, expected_exit_time, expected_exit_times, return_tail_bound,
                    second_moment_exit_adjacent, tail_bound_inputs, theorem_bounds)
from .goodenv import GoodEnvReport, check_good_environment, estimate_good_probability
from .logscalar import LogScalar
from .valleys import (RefinementChain, Valley, find_basic_valley, inner_barrier,
                      ordered_chopping, refine, stopping_time)
from .walk import (WalkerConfig, estimate_return_tail, exit_frequency, last_return_event,
                   simulate)

__version__ = "0.1.0"
