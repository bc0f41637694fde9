"""Random ergodic MDP generation."""

from dataclasses import asdict, dataclass

import numpy as np

from .chain import ergodicity_check
from .exceptions import GenerationFailed, InputError
from .mdp import Mdp, Policy, policy_matrices, validate_mdp

MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class GeneratorSpec:
    n_states: int = 3
    n_actions: int = 2
    gamma: float = 0.5
    r_max: float = 1.0
    sparsity: float = 0.0
    self_loop_min: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise InputError("n_states and n_actions must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise InputError("gamma must be in (0, 1)")
        if not self.r_max > 0:
            raise InputError("r_max must be positive")
        if not 0.0 <= self.sparsity < 1.0:
            raise InputError("sparsity must be in [0, 1)")
        if not 0.0 <= self.self_loop_min < 1.0:
            raise InputError("self_loop_min must be in [0, 1)")

    def to_dict(self):
        return asdict(self)


def _transition_rows(spec, rng):
    n, na = spec.n_states, spec.n_actions
    p = np.zeros((n, na, n))
    for s in range(n):
        others = [t for t in range(n) if t != s]
        for a in range(na):
            w = np.zeros(n)
            if others:
                keep = rng.random(len(others)) >= spec.sparsity
                if not keep.any():
                    keep[rng.integers(len(others))] = True
                idx = np.array(others)[keep]
                w[idx] = rng.random(idx.size) + 1e-3
            w[s] = rng.random() if spec.sparsity == 0.0 else 0.0
            if w.sum() == 0.0:
                w[s] = 1.0
            row = (1.0 - spec.self_loop_min) * w / w.sum()
            row[s] += spec.self_loop_min
            p[s, a] = row / row.sum()
    return p


def gen_mdp(spec: GeneratorSpec):
    """Random MDP and policy whose induced chain is irreducible and aperiodic.

    Transitions are renormalised random rows with at least ``self_loop_min``
    mass on the self-loop, rewards are uniform on ``[-r_max, r_max]`` and policy
    rows are uniform on the simplex. Draws that fail the ergodicity check are
    regenerated; :class:`GenerationFailed` after 100 attempts.
    """
    rng = np.random.default_rng(spec.seed)
    for _ in range(MAX_ATTEMPTS):
        p = _transition_rows(spec, rng)
        r = rng.uniform(-spec.r_max, spec.r_max, size=p.shape)
        probs = rng.dirichlet(np.ones(spec.n_actions), size=spec.n_states)
        mdp = Mdp(transition=p, reward=r, gamma=spec.gamma, r_max=spec.r_max)
        policy = Policy(probs)
        if not validate_mdp(mdp).ok:
            continue
        p_pi, _ = policy_matrices(mdp, policy)
        if ergodicity_check(p_pi).ergodic:
            return mdp, policy
    raise GenerationFailed(f"no ergodic MDP after {MAX_ATTEMPTS} attempts for {spec}")
