"""Finite MDPs, policies and the exact quantities of the induced reward process."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain import ergodicity_check, stationary_distribution
from .exceptions import ChainNotErgodic, InputError, InvalidMDP, SingularSystem
from .norms import inf_norm

PROB_TOL = 1e-12
LYAPUNOV_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mdp:
    """Tabular MDP with deterministic rewards ``r(s, a, s')``.

    ``transition[s, a, s']`` and ``reward[s, a, s']`` are stored read-only.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    r_max: float

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def v_max(self) -> float:
        return self.r_max / (1.0 - self.gamma)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "r_max": self.r_max,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }


@dataclass(frozen=True, eq=False)
class Policy:
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist()}


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def _stochastic_violations(probs, label):
    out = []
    if not np.all(np.isfinite(probs)):
        out.append(f"{label} has non-finite entries")
        return out
    neg = np.argwhere(probs < 0)
    for idx in neg:
        out.append(f"negative probability at {tuple(int(i) for i in idx)}")
    sums = probs.sum(axis=-1)
    for idx in np.argwhere(np.abs(sums - 1.0) > PROB_TOL):
        out.append(f"row sum != 1 at {tuple(int(i) for i in idx)} (sum={sums[tuple(idx)]!r})")
    return out


def validate_mdp(mdp: Mdp) -> ValidationResult:
    """Check every MDP invariant; violations are returned, not raised."""
    v = []
    p, r = mdp.transition, mdp.reward
    if p.ndim != 3 or p.shape[0] != p.shape[2]:
        return ValidationResult((f"transition must have shape (S, A, S), got {p.shape}",))
    if r.shape != p.shape:
        return ValidationResult((f"reward shape {r.shape} != transition shape {p.shape}",))
    v += _stochastic_violations(p, "transition")
    if not np.all(np.isfinite(r)):
        v.append("reward has non-finite entries")
    else:
        for idx in np.argwhere(np.abs(r) > mdp.r_max):
            v.append(f"reward exceeds r_max at {tuple(int(i) for i in idx)}")
    if not (0.0 < mdp.gamma < 1.0):
        v.append(f"gamma={mdp.gamma} not in (0, 1)")
    if not (math.isfinite(mdp.r_max) and mdp.r_max > 0):
        v.append(f"r_max={mdp.r_max} must be positive and finite")
    return ValidationResult(tuple(v))


def validate_policy(policy: Policy, n_states: int | None = None, n_actions: int | None = None) -> ValidationResult:
    probs = policy.probs
    if probs.ndim != 2:
        return ValidationResult((f"policy must be (S, A), got shape {probs.shape}",))
    v = []
    if n_states is not None and n_actions is not None and probs.shape != (n_states, n_actions):
        v.append(f"policy shape {probs.shape} != ({n_states}, {n_actions})")
    v += _stochastic_violations(probs, "policy")
    return ValidationResult(tuple(v))


def lyapunov_matrix(a, tol: float = LYAPUNOV_TOL):
    """Truncated series ``M = sum_{k=0}^{K} (A^k)^T A^k``.

    ``K = 2^j - 1`` is the first such value with ``n * ||A||_inf^(2K) <= tol``;
    the partial sums are doubled via ``M_{2m} = M_m + (A^m)^T M_m A^m``.
    Returns ``(M, K)``. Requires ``||A||_inf < 1``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    c = inf_norm(a)
    if c >= 1.0:
        raise ValueError(f"||A||_inf = {c} >= 1; the series does not converge")
    m = np.eye(n)
    a_pow = a.copy()
    terms = 1
    # c**(2K) underflows cleanly to 0 for c == 0
    while n * c ** (2 * (terms - 1)) > tol:
        m = m + a_pow.T @ m @ a_pow
        a_pow = a_pow @ a_pow
        terms *= 2
    return 0.5 * (m + m.T), terms - 1


@dataclass(frozen=True, eq=False)
class InducedChain:
    """Exact quantities of the Markov reward process induced by a policy."""

    mdp: Mdp
    policy: Policy
    p_pi: np.ndarray
    mu: np.ndarray
    r_pi: np.ndarray
    v_pi: np.ndarray
    alpha: float
    a_matrix: np.ndarray
    m_matrix: np.ndarray
    lyapunov_terms: int
    d_pi: np.ndarray = field(init=False)

    def __post_init__(self):
        for name in ("p_pi", "mu", "r_pi", "v_pi", "a_matrix", "m_matrix"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "d_pi", _frozen(np.diag(self.mu)))

    @property
    def n_states(self) -> int:
        return self.p_pi.shape[0]

    @property
    def gamma(self) -> float:
        return self.mdp.gamma

    @property
    def mu_min(self) -> float:
        return float(self.mu.min())

    @property
    def contraction(self) -> float:
        """``1 - alpha (1 - gamma) mu_min``, the exact value of ``||A||_inf``."""
        return 1.0 - self.alpha * (1.0 - self.gamma) * self.mu_min

    @property
    def m_norm_bound(self) -> float:
        return 1.0 + self.n_states / (self.alpha * (1.0 - self.gamma) * self.mu_min)


def policy_matrices(mdp: Mdp, policy: Policy):
    """``(P^pi, R^pi)`` for ``policy`` on ``mdp``."""
    p_pi = np.einsum("sa,sat->st", policy.probs, mdp.transition)
    r_pi = np.einsum("sa,sat,sat->s", policy.probs, mdp.transition, mdp.reward)
    return p_pi, r_pi


def system_matrix(d_pi, p_pi, alpha: float, gamma: float) -> np.ndarray:
    n = d_pi.shape[0]
    return np.eye(n) - alpha * d_pi + alpha * gamma * d_pi @ p_pi


def induce_chain(mdp: Mdp, policy: Policy, alpha: float = 0.1, lyapunov_tol: float = LYAPUNOV_TOL) -> InducedChain:
    res = validate_mdp(mdp)
    if not res.ok:
        raise InvalidMDP(res.violations)
    res = validate_policy(policy, mdp.n_states, mdp.n_actions)
    if not res.ok:
        raise InvalidMDP(res.violations)
    if not (0.0 < alpha < 1.0):
        raise InputError(f"alpha={alpha} not in (0, 1)")

    p_pi, r_pi = policy_matrices(mdp, policy)
    erg = ergodicity_check(p_pi)
    if not erg.ergodic:
        raise ChainNotErgodic(f"induced chain irreducible={erg.irreducible} aperiodic={erg.aperiodic}")

    n = mdp.n_states
    mu = stationary_distribution(p_pi)
    try:
        v_pi = np.linalg.solve(np.eye(n) - mdp.gamma * p_pi, r_pi)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(v_pi)):
        raise SingularSystem("value solve produced non-finite entries")

    a = system_matrix(np.diag(mu), p_pi, alpha, mdp.gamma)
    m, k = lyapunov_matrix(a, lyapunov_tol)
    return InducedChain(mdp=mdp, policy=policy, p_pi=p_pi, mu=mu, r_pi=r_pi, v_pi=v_pi,
                        alpha=float(alpha), a_matrix=a, m_matrix=m, lyapunov_terms=k)


# -- JSON I/O ---------------------------------------------------------------

def _reject_constant(name):
    raise InputError(f"non-finite number {name!r} in JSON input")


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc


def mdp_from_dict(d: dict) -> Mdp:
    try:
        mdp = Mdp(transition=d["transition"], reward=d["reward"], gamma=d["gamma"], r_max=d["r_max"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed MDP document: {exc}") from exc
    declared = (d.get("n_states", mdp.transition.shape[0]), d.get("n_actions", mdp.transition.shape[1]))
    if mdp.transition.ndim != 3 or declared != mdp.transition.shape[:2]:
        raise InputError(f"declared sizes {declared} do not match transition shape {mdp.transition.shape}")
    res = validate_mdp(mdp)
    if not res.ok:
        raise InvalidMDP(res.violations)
    return mdp


def policy_from_dict(d: dict, mdp: Mdp | None = None) -> Policy:
    try:
        pol = Policy(probs=d["probs"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed policy document: {exc}") from exc
    res = validate_policy(pol, *( (mdp.n_states, mdp.n_actions) if mdp else (None, None)))
    if not res.ok:
        raise InvalidMDP(res.violations)
    return pol


def load_mdp(path) -> Mdp:
    return mdp_from_dict(_load_json(path))


def load_policy(path, mdp: Mdp | None = None) -> Policy:
    return policy_from_dict(_load_json(path), mdp)


def uniform_policy(mdp: Mdp) -> Policy:
    return Policy(np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions))


def save_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")
