"""TD-learning with an experience replay buffer on tabular MDPs.

Exact chain analytics, an instrumented learner, closed-form bound evaluators
and the Monte-Carlo machinery that checks one against the other.
"""

from .bounds import (BoundInputs, avg_iterate_bound, avg_iterate_bound_rms, bernstein_mean_bound,
                     bernstein_second_moment_bound, final_iterate_bound, final_iterate_bound_rms,
                     first_moment_bound, distribution_bounds, second_moment_bound)
from .buffer import BufferEmpirics, ReplayBuffer, Transition, empirics
from .chain import (ErgodicityReport, MixingProfile, PairChain, build_pair_chain, ergodicity_check,
                    empirical_distribution_variance, mixing_profile, mixing_time, state_distribution_at,
                    stationary_distribution, tv_distance)
from .estimator import ReplayTD
from .exceptions import (ChainNotErgodic, DimensionMismatch, EmptyBatch, EmptyBuffer, GenerationFailed,
                         HypothesisViolated, InputError, InvalidMDP, MixingCapExceeded, NonConvergence,
                         NonStationaryStart, ReplayTDError, SingularSystem)
from .generate import GeneratorSpec, gen_mdp
from .learner import ReplayTDLearner, RunConfig, RunTrace, delta_buffer, delta_stationary, noise, run, td_error
from .mdp import InducedChain, Mdp, Policy, induce_chain, validate_mdp
from .norms import frobenius_norm, inf_norm, spectral_norm, weighted_sq_norm
from .report import BoundReport, CheckRecord

__version__ = "0.1.0"
