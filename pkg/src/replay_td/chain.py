"""Exact analytics for finite Markov chains.

Everything here is computed from known transition matrices: total variation
distances, k-step distributions, mixing times, the chain of consecutive state
pairs, and irreducibility/aperiodicity of the positive-probability digraph.
"""

from collections import deque
from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import DimensionMismatch, MixingCapExceeded

MIXING_EPS = 0.25
MIXING_CAP = 10**6
# mixing_time scans linearly up to this step, then switches to doubling + bisection
_LINEAR_SCAN = 4096


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes {p.shape} and {q.shape} differ")
    return float(0.5 * np.abs(p - q).sum())


def _tv_rows(rows, stationary):
    return 0.5 * np.abs(rows - stationary[None, :]).sum(axis=1)


def state_distribution_at(chain, initial, k: int) -> np.ndarray:
    """Distribution of ``S_k`` when ``S_0 ~ initial``."""
    p = np.asarray(chain, dtype=float)
    x = np.asarray(initial, dtype=float).copy()
    if x.shape != (p.shape[0],):
        raise DimensionMismatch("initial distribution does not match chain size")
    for _ in range(int(k)):
        x = x @ p
    return x


def distribution_curve(chain, initial, n_steps: int) -> np.ndarray:
    """Rows ``initial^T P^k`` for ``k = 0..n_steps-1``."""
    p = np.asarray(chain, dtype=float)
    out = np.empty((n_steps, p.shape[0]))
    x = np.asarray(initial, dtype=float)
    for k in range(n_steps):
        out[k] = x
        x = x @ p
    return out


def stationary_distribution(chain) -> np.ndarray:
    """Left fixed vector of ``chain`` normalised to sum one.

    One equation of ``(P^T - I) x = 0`` is replaced by ``sum(x) = 1`` and the
    system is solved directly.
    """
    p = np.asarray(chain, dtype=float)
    n = p.shape[0]
    lhs = p.T - np.eye(n)
    lhs[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    mu = np.linalg.solve(lhs, rhs)
    # tiny negative round-off on near-zero entries
    mu = np.where(np.abs(mu) < 1e-15, 0.0, mu)
    return mu


def sup_tv(chain, stationary, k: int) -> float:
    """Worst-start TV distance to ``stationary`` after ``k`` steps."""
    pk = np.linalg.matrix_power(np.asarray(chain, dtype=float), int(k))
    return float(_tv_rows(pk, np.asarray(stationary, dtype=float)).max())


def tv_curve(chain, stationary, n_steps: int) -> np.ndarray:
    """Worst-start TV distance for ``k = 0..n_steps-1``."""
    p = np.asarray(chain, dtype=float)
    mu = np.asarray(stationary, dtype=float)
    rows = np.eye(p.shape[0])
    out = np.empty(n_steps)
    for k in range(n_steps):
        out[k] = _tv_rows(rows, mu).max()
        rows = rows @ p
    return out


def mixing_time(chain, stationary, epsilon: float = MIXING_EPS, cap: int = MIXING_CAP) -> int:
    """Smallest ``k >= 1`` with worst-start TV distance at most ``epsilon``.

    All start rows are iterated together. Past a short linear scan the search
    brackets the answer by repeated squaring and bisects, which relies on the
    worst-start distance being non-increasing in ``k`` (true whenever
    ``stationary`` is stationary for ``chain``).
    """
    p = np.asarray(chain, dtype=float)
    mu = np.asarray(stationary, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1] or mu.shape != (p.shape[0],):
        raise DimensionMismatch("chain must be square and match the stationary vector")

    rows = p.copy()
    for k in range(1, min(_LINEAR_SCAN, cap) + 1):
        if _tv_rows(rows, mu).max() <= epsilon:
            return k
        rows = rows @ p
    if cap <= _LINEAR_SCAN:
        raise MixingCapExceeded(f"no mixing within {cap} steps at epsilon={epsilon}")

    lo, lo_pow = _LINEAR_SCAN, np.linalg.matrix_power(p, _LINEAR_SCAN)
    hi, hi_pow = lo, lo_pow
    while _tv_rows(hi_pow, mu).max() > epsilon:
        lo, lo_pow = hi, hi_pow
        if hi >= cap:
            raise MixingCapExceeded(f"no mixing within {cap} steps at epsilon={epsilon}")
        hi, hi_pow = 2 * hi, hi_pow @ hi_pow
    # invariant: TV(lo) > eps >= TV(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        mid_pow = lo_pow @ np.linalg.matrix_power(p, mid - lo)
        if _tv_rows(mid_pow, mu).max() <= epsilon:
            hi, hi_pow = mid, mid_pow
        else:
            lo, lo_pow = mid, mid_pow
    if hi > cap:
        raise MixingCapExceeded(f"no mixing within {cap} steps at epsilon={epsilon}")
    return hi


@dataclass(frozen=True)
class ErgodicityReport:
    irreducible: bool
    aperiodic: bool

    @property
    def ergodic(self) -> bool:
        return self.irreducible and self.aperiodic


def _component_period(adj, members):
    """Period of a strongly connected component from BFS level differences."""
    root = members[0]
    member_set = set(members)
    level = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v in member_set and v not in level:
                level[v] = level[u] + 1
                queue.append(v)
    g = 0
    for u in members:
        for v in adj[u]:
            if v in member_set:
                g = gcd(g, level[u] + 1 - level[v])
    return g


def state_periods(chain) -> np.ndarray:
    """Period of every state; 0 for states that can never return to themselves."""
    p = np.asarray(chain, dtype=float)
    n = p.shape[0]
    positive = p > 0
    adj = [np.flatnonzero(positive[i]).tolist() for i in range(n)]
    n_comp, labels = connected_components(csr_matrix(positive), directed=True, connection="strong")
    periods = np.zeros(n, dtype=int)
    for c in range(n_comp):
        members = np.flatnonzero(labels == c).tolist()
        if len(members) == 1 and not positive[members[0], members[0]]:
            continue
        periods[members] = _component_period(adj, members)
    return periods


def ergodicity_check(chain) -> ErgodicityReport:
    p = np.asarray(chain, dtype=float)
    n_comp, _ = connected_components(csr_matrix(p > 0), directed=True, connection="strong")
    return ErgodicityReport(irreducible=bool(n_comp == 1),
                            aperiodic=bool(np.all(state_periods(p) == 1)))


@dataclass(frozen=True)
class PairChain:
    """Markov chain of realizable consecutive pairs ``(S_k, S_{k+1})``."""

    pairs: tuple          # pairs[i] = (s, s_next); the inverse of pair_index
    pair_index: dict
    transition: np.ndarray
    mu_pair: np.ndarray

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def as_matrix(self, n_states: int) -> np.ndarray:
        """Scatter a vector over pairs into an ``|S| x |S|`` matrix."""
        out = np.zeros((n_states, n_states))
        for i, (s, t) in enumerate(self.pairs):
            out[s, t] = self.mu_pair[i]
        return out


def pair_chain(p_pi, mu) -> PairChain:
    """Build the pair chain of ``p_pi`` with stationary law ``mu(s) P(s, s')``."""
    p = np.asarray(p_pi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    pairs = tuple((int(s), int(t)) for s, t in zip(*np.nonzero(p > 0)))
    index = {pr: i for i, pr in enumerate(pairs)}
    n = len(pairs)
    trans = np.zeros((n, n))
    for i, (_, t) in enumerate(pairs):
        for u in np.flatnonzero(p[t] > 0):
            trans[i, index[(t, int(u))]] = p[t, u]
    mu_pair = np.array([mu[s] * p[s, t] for s, t in pairs])
    fixed = mu_pair @ trans
    if not np.allclose(fixed, mu_pair, atol=1e-9, rtol=0):
        raise AssertionError("pair-chain stationary law failed the fixed-point cross-check")
    return PairChain(pairs=pairs, pair_index=index, transition=trans, mu_pair=mu_pair)


def build_pair_chain(chain) -> PairChain:
    """Pair chain of an :class:`~replay_td.mdp.InducedChain`."""
    return pair_chain(chain.p_pi, chain.mu)


@dataclass(frozen=True)
class MixingProfile:
    t1_mix: int
    t2_mix: int
    tv_curve_state: np.ndarray
    tv_curve_pair: np.ndarray


def mixing_profile(chain, epsilon: float = MIXING_EPS, curve_len: int | None = None) -> MixingProfile:
    pc = build_pair_chain(chain)
    t1 = mixing_time(chain.p_pi, chain.mu, epsilon)
    t2 = mixing_time(pc.transition, pc.mu_pair, epsilon)
    n = curve_len if curve_len is not None else 4 * max(t1, t2) + 1
    return MixingProfile(
        t1_mix=t1,
        t2_mix=t2,
        tv_curve_state=tv_curve(chain.p_pi, chain.mu, n),
        tv_curve_pair=tv_curve(pc.transition, pc.mu_pair, n),
    )


def _sample_paths(p, initial, n_steps, n_trials, rng):
    """``n_trials`` independent paths of ``n_steps + 1`` states (vectorised)."""
    cdf = np.cumsum(p, axis=1)
    cdf[:, -1] = 1.0
    init_cdf = np.cumsum(initial)
    init_cdf[-1] = 1.0
    paths = np.empty((n_trials, n_steps + 1), dtype=np.int64)
    paths[:, 0] = np.searchsorted(init_cdf, rng.random(n_trials), side="right")
    for k in range(n_steps):
        u = rng.random(n_trials)
        paths[:, k + 1] = (u[:, None] >= cdf[paths[:, k]]).sum(axis=1)
    return paths


@dataclass(frozen=True)
class EmpiricalVariance:
    state_var_sum: float
    state_var_se: float
    pair_var_sum: float
    pair_var_se: float
    tv_mean: float
    tv_se: float
    pair_tv_mean: float
    pair_tv_se: float
    n: int
    trials: int


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def empirical_distribution_variance(chain, n: int, trials: int, seed=0) -> EmpiricalVariance:
    """Monte-Carlo spread of the empirical occupancy of a stationary-start path.

    Each trial draws ``S_0 ~ mu`` and counts ``S_1..S_n`` (states) and
    ``(S_k, S_{k+1})`` for ``k = 1..n`` (pairs).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    p = np.asarray(chain.p_pi, dtype=float)
    mu = np.asarray(chain.mu, dtype=float)
    n_s = p.shape[0]
    paths = _sample_paths(p, mu, n + 1, trials, rng)

    states = paths[:, 1:n + 1]
    offs = (np.arange(trials) * n_s)[:, None]
    counts = np.bincount((states + offs).ravel(), minlength=trials * n_s).reshape(trials, n_s)
    emp = counts / n
    sq = ((emp - mu) ** 2).sum(axis=1)
    tv = 0.5 * np.abs(emp - mu).sum(axis=1)

    mu_ss = mu[:, None] * p
    codes = states * n_s + paths[:, 2:n + 2]
    offs2 = (np.arange(trials) * n_s * n_s)[:, None]
    pcounts = np.bincount((codes + offs2).ravel(), minlength=trials * n_s * n_s)
    pemp = pcounts.reshape(trials, n_s * n_s) / n
    psq = ((pemp - mu_ss.ravel()) ** 2).sum(axis=1)
    ptv = 0.5 * np.abs(pemp - mu_ss.ravel()).sum(axis=1)

    sv, sv_se = _mean_se(sq)
    pv, pv_se = _mean_se(psq)
    tm, tm_se = _mean_se(tv)
    ptm, ptm_se = _mean_se(ptv)
    return EmpiricalVariance(sv, sv_se, pv, pv_se, tm, tm_se, ptm, ptm_se, n, trials)
