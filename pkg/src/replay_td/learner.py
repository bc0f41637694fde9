"""TD-learning with an experience replay buffer.

The learner runs on a single Markovian trajectory: ``N`` warm-up transitions
fill the buffer, after which every step appends one fresh transition, evicts
the oldest, draws ``L`` entries uniformly with replacement and applies the
averaged TD update. Every quantity of the error analysis (noise vector, its
two-part decomposition, Lyapunov-weighted error) can be recorded per step.

Randomness: each run owns a :class:`numpy.random.SeedSequence` built from
``(seed, run_index)``; it spawns two Philox (counter-based) generators, one for
the environment and one for mini-batch draws, so the environment trajectory
does not depend on ``L`` or ``N``.
"""

import csv
import json
import math
from bisect import bisect_right
from dataclasses import asdict, dataclass

import numpy as np

from .buffer import Batch, ReplayBuffer, Transition, UniformStream, empirics, empirics_from_columns
from .exceptions import EmptyBatch, InputError
from .mdp import InducedChain, Mdp, Policy, induce_chain

FULL_HISTORY_MAX_T = 10_000
_CHUNK = 4096


def td_error(o, v, gamma: float) -> np.ndarray:
    """``e_s (r + gamma v[s'] - v[s])``."""
    s, r, sn = o
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    out[s] = r + gamma * v[sn] - v[s]
    return out


def mean_td_error(batch: Batch, v, gamma: float) -> np.ndarray:
    """Mini-batch average of :func:`td_error`."""
    if len(batch) == 0:
        raise EmptyBatch("mini-batch is empty")
    delta = batch.r + gamma * v[batch.s_next] - v[batch.s]
    return np.bincount(batch.s, weights=delta, minlength=v.shape[0]) / len(batch)


def delta_buffer(emp, v, gamma: float) -> np.ndarray:
    """Expected TD error under the buffer's empirical law."""
    v = np.asarray(v, dtype=float)
    return emp.d_b @ emp.r_b + gamma * (emp.d_b @ emp.p_b) @ v - emp.d_b @ v


def delta_stationary(chain: InducedChain, v) -> np.ndarray:
    """Expected TD error under the stationary law of the induced chain."""
    v = np.asarray(v, dtype=float)
    d = chain.d_pi
    return d @ chain.r_pi + chain.gamma * (d @ chain.p_pi) @ v - d @ v


@dataclass(frozen=True, eq=False)
class Noise:
    w: np.ndarray
    decomp_a: np.ndarray
    decomp_b: np.ndarray


def noise(batch, emp, chain: InducedChain, v) -> Noise:
    if not isinstance(batch, Batch):
        batch = Batch.from_transitions(batch)
    v = np.asarray(v, dtype=float)
    g = mean_td_error(batch, v, chain.gamma)
    dk = delta_buffer(emp, v, chain.gamma)
    dpi = delta_stationary(chain, v)
    return Noise(w=g - dpi, decomp_a=g - dk, decomp_b=dpi - dk)


# -- environment ------------------------------------------------------------

def _cdf_rows(probs):
    rows = []
    for p in np.atleast_2d(probs):
        c = np.cumsum(p)
        last = int(np.flatnonzero(p > 0)[-1])
        c[last:] = 1.0
        rows.append(c.tolist())
    return rows


class TrajectorySampler:
    """Draws ``(s, r, s')`` along one trajectory of the MDP under ``policy``.

    Each transition consumes exactly two uniforms (action, successor).
    """

    def __init__(self, mdp: Mdp, policy: Policy, stream: UniformStream):
        self.mdp = mdp
        self.stream = stream
        self._pi_cdf = _cdf_rows(policy.probs)
        n_s, n_a = mdp.n_states, mdp.n_actions
        self._p_cdf = [_cdf_rows(mdp.transition[s]) for s in range(n_s)]
        self._reward = mdp.reward.tolist()
        self.state = None

    def reset(self, initial_distribution) -> int:
        cdf = _cdf_rows(np.asarray(initial_distribution, dtype=float))[0]
        self.state = bisect_right(cdf, self.stream.one())
        return self.state

    def next(self) -> Transition:
        s = self.state
        a = bisect_right(self._pi_cdf[s], self.stream.one())
        sn = bisect_right(self._p_cdf[s][a], self.stream.one())
        self.state = sn
        return Transition(s, self._reward[s][a][sn], sn)


# -- configuration and trace --------------------------------------------------

START_MODES = ("stationary", "fixed", "custom")


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.1
    buffer_size: int = 256
    batch_size: int = 32
    horizon: int = 2000
    initial_v: tuple | None = None
    initial_state_mode: str = "stationary"
    initial_state: int | None = None
    initial_distribution: tuple | None = None
    seed: int = 0
    run_index: int = 0
    instrument: bool = True

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise InputError(f"alpha={self.alpha} not in (0, 1)")
        if self.buffer_size < 1 or self.batch_size < 1:
            raise InputError("buffer_size and batch_size must be >= 1")
        if self.horizon < 0:
            raise InputError("horizon must be >= 0")
        if self.initial_state_mode not in START_MODES:
            raise InputError(f"initial_state_mode must be one of {START_MODES}")
        if self.initial_state_mode == "fixed" and self.initial_state is None:
            raise InputError("fixed start mode needs initial_state")
        if self.initial_state_mode == "custom" and self.initial_distribution is None:
            raise InputError("custom start mode needs initial_distribution")
        if self.initial_v is not None:
            object.__setattr__(self, "initial_v", tuple(float(x) for x in self.initial_v))
        if self.initial_distribution is not None:
            object.__setattr__(self, "initial_distribution", tuple(float(x) for x in self.initial_distribution))

    def start_distribution(self, chain: InducedChain) -> np.ndarray:
        """Law of the first warm-up state ``S_{-N}``."""
        n = chain.n_states
        if self.initial_state_mode == "stationary":
            return np.array(chain.mu)
        if self.initial_state_mode == "fixed":
            if not 0 <= self.initial_state < n:
                raise InputError(f"initial_state {self.initial_state} out of range")
            out = np.zeros(n)
            out[self.initial_state] = 1.0
            return out
        d = np.asarray(self.initial_distribution, dtype=float)
        if d.shape != (n,) or np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
            raise InputError("initial_distribution must be a distribution over the states")
        return d / d.sum()

    def v0(self, chain: InducedChain) -> np.ndarray:
        n = chain.n_states
        if self.initial_v is None:
            return np.zeros(n)
        v = np.asarray(self.initial_v, dtype=float)
        if v.shape != (n,):
            raise InputError("initial_v has the wrong length")
        if np.abs(v).max() > chain.mdp.v_max * (1 + 1e-12):
            raise InputError("||initial_v||_inf exceeds R_max / (1 - gamma)")
        return v

    def to_dict(self) -> dict:
        return asdict(self)


def run_streams(seed: int, run_index: int = 0):
    """Environment and sampling streams for one run."""
    env_ss, samp_ss = np.random.SeedSequence(int(seed), spawn_key=(int(run_index),)).spawn(2)
    return (UniformStream(np.random.Generator(np.random.Philox(env_ss))),
            UniformStream(np.random.Generator(np.random.Philox(samp_ss))))


@dataclass(eq=False)
class RunTrace:
    """Per-step record of one run.

    Error arrays cover ``k = 0..T``; noise arrays cover the ``T`` updates.
    """

    config: RunConfig
    err_l2_sq: np.ndarray
    err_weighted: np.ndarray
    v_inf: np.ndarray
    w_norm: np.ndarray
    w_norm_sq: np.ndarray
    decomp_a: np.ndarray
    decomp_b: np.ndarray
    running_avg_err_sq: np.ndarray
    v_steps: np.ndarray
    v_history: np.ndarray
    avg_iterate_err_sq: float
    start_distribution: np.ndarray
    v_pi: np.ndarray

    @property
    def horizon(self) -> int:
        return self.config.horizon

    @property
    def mean_sq_err(self) -> float:
        """``(1/T) sum_{k<T} ||V_k - V^pi||^2`` (``||V_0 - V^pi||^2`` when T = 0)."""
        t = self.horizon
        return float(self.err_l2_sq[:max(t, 1)].mean())

    @property
    def final_v(self) -> np.ndarray:
        return self.v_history[-1]

    def summary(self) -> dict:
        t = self.horizon
        return {
            "horizon": t,
            "avg_iterate_err_sq": self.avg_iterate_err_sq,
            "mean_sq_err": self.mean_sq_err,
            "final_err_l2_sq": float(self.err_l2_sq[-1]),
            "max_v_inf": float(self.v_inf.max()),
            "mean_w_norm": float(np.mean(self.w_norm)) if t and self.config.instrument else None,
            "mean_w_norm_sq": float(np.mean(self.w_norm_sq)) if t and self.config.instrument else None,
        }


# -- learner ------------------------------------------------------------------

@dataclass(eq=False)
class StepRecord:
    k: int
    batch: Batch
    v_before: np.ndarray
    v_after: np.ndarray
    noise: Noise | None = None


class ReplayTDLearner:
    """Stateful learner; call :meth:`warm_up` once, then :meth:`step`."""

    def __init__(self, chain: InducedChain, config: RunConfig,
                 env_stream: UniformStream | None = None, sample_stream: UniformStream | None = None):
        if abs(chain.alpha - config.alpha) > 0:
            raise InputError("chain was induced with a different alpha than the run config")
        self.chain = chain
        self.config = config
        if env_stream is None or sample_stream is None:
            env_stream, sample_stream = run_streams(config.seed, config.run_index)
        self.sampler = TrajectorySampler(chain.mdp, chain.policy, env_stream)
        self.sample_stream = sample_stream
        self.buffer = ReplayBuffer(config.buffer_size)
        self.v = config.v0(chain).copy()
        self.k = 0
        self._gamma = chain.gamma
        self._alpha = config.alpha
        self._n = chain.n_states

    def warm_up(self):
        self.sampler.reset(self.config.start_distribution(self.chain))
        for _ in range(self.config.buffer_size):
            self.buffer.push(self.sampler.next())
        return self

    def step(self, instrument: bool = False) -> StepRecord:
        if not self.buffer.full:
            raise RuntimeError("warm_up() must run before step()")
        self.buffer.push(self.sampler.next())
        batch = self.buffer.sample_batch(self.config.batch_size, self.sample_stream)
        v = self.v
        g = mean_td_error(batch, v, self._gamma)
        rec_noise = None
        if instrument:
            emp = empirics(self.buffer, self._n)
            dk = delta_buffer(emp, v, self._gamma)
            dpi = delta_stationary(self.chain, v)
            rec_noise = Noise(w=g - dpi, decomp_a=g - dk, decomp_b=dpi - dk)
        self.v = v + self._alpha * g
        rec = StepRecord(self.k, batch, v, self.v, rec_noise)
        self.k += 1
        return rec


def sample_trajectory(sampler: TrajectorySampler, start, n: int) -> Batch:
    """Reset ``sampler`` from ``start`` and collect ``n`` consecutive transitions."""
    sampler.reset(start)
    items = [sampler.next() for _ in range(n)]
    return Batch.from_transitions(items) if items else Batch(np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64))


def run_chain(chain: InducedChain, config: RunConfig) -> RunTrace:
    """Warm up and run ``config.horizon`` steps on an already-induced chain.

    Equivalent to driving :class:`ReplayTDLearner` step by step (the two
    random streams are consumed in the same order), but the trajectory and all
    mini-batch positions are drawn up front: at step ``k`` the full buffer
    holds trajectory entries ``k+1 .. k+N``.
    """
    t, n_buf, n_batch = config.horizon, config.buffer_size, config.batch_size
    n_s = chain.n_states
    gamma, alpha = chain.gamma, config.alpha
    env, samp = run_streams(config.seed, config.run_index)
    start = config.start_distribution(chain)
    traj = sample_trajectory(TrajectorySampler(chain.mdp, chain.policy, env), start, n_buf + t)
    u = samp.take(t * n_batch).reshape(t, n_batch)
    idx = np.minimum((u * n_buf).astype(np.int64), n_buf - 1) + np.arange(1, t + 1)[:, None]
    bs, br, bsn = traj.s[idx], traj.r[idx], traj.s_next[idx]

    v = config.v0(chain).copy()
    v_pi = np.asarray(chain.v_pi)
    m = np.asarray(chain.m_matrix)
    instrument = config.instrument

    w_norm = np.full(t, np.nan)
    w_sq = np.full(t, np.nan)
    da = np.full(t, np.nan)
    db = np.full(t, np.nan)
    thin = 1 if t <= FULL_HISTORY_MAX_T else math.ceil(t / 1000)
    steps = list(range(0, t + 1, thin))
    if steps[-1] != t:
        steps.append(t)

    # iterates are produced in chunks; norms are taken per chunk so that only
    # the thinned history is ever held for long horizons
    chunk = np.empty((min(t + 1, _CHUNK), n_s))
    err = np.empty(t + 1)
    vinf = np.empty(t + 1)
    errw = np.full(t + 1, np.nan)
    v_sum_before = np.zeros(n_s)
    run_avg = np.empty(max(t, 1))
    hist = []
    next_hist = 0

    def flush(lo, count):
        nonlocal v_sum_before, next_hist
        block = chunk[:count]
        e = block - v_pi
        err[lo:lo + count] = np.einsum("ij,ij->i", e, e)
        vinf[lo:lo + count] = np.abs(block).max(axis=1)
        if instrument:
            errw[lo:lo + count] = np.einsum("ij,jk,ik->i", e, m, e)
        upto = min(count, t - lo)  # iterates V_lo .. V_{lo+upto-1} enter the average
        if upto > 0:
            csum = v_sum_before + np.cumsum(block[:upto], axis=0)
            ra = csum / np.arange(lo + 1, lo + upto + 1)[:, None] - v_pi
            run_avg[lo:lo + upto] = np.einsum("ij,ij->i", ra, ra)
            v_sum_before = csum[-1]
        while next_hist < len(steps) and steps[next_hist] < lo + count:
            hist.append(block[steps[next_hist] - lo].copy())
            next_hist += 1

    lo = 0
    for k in range(t + 1):
        pos = k - lo
        if pos == chunk.shape[0]:
            flush(lo, pos)
            lo, pos = k, 0
        chunk[pos] = v
        if k == t:
            break
        s_k = bs[k]
        delta = br[k] + gamma * v[bsn[k]] - v[s_k]
        g = np.bincount(s_k, weights=delta, minlength=n_s) / n_batch
        if instrument:
            lo_b, hi_b = k + 1, k + 1 + n_buf
            emp = empirics_from_columns(traj.s[lo_b:hi_b], traj.r[lo_b:hi_b], traj.s_next[lo_b:hi_b], n_s)
            dk = delta_buffer(emp, v, gamma)
            dpi = delta_stationary(chain, v)
            w = g - dpi
            w_sq[k] = w @ w
            w_norm[k] = math.sqrt(w_sq[k])
            da[k] = np.linalg.norm(g - dk)
            db[k] = np.linalg.norm(dpi - dk)
        v = v + alpha * g
    flush(lo, t - lo + 1)

    if t == 0:
        run_avg[0] = err[0]
        avg_err = float(err[0])
    else:
        avg_err = float(run_avg[t - 1])
    return RunTrace(config=config, err_l2_sq=err, err_weighted=errw, v_inf=vinf, w_norm=w_norm,
                    w_norm_sq=w_sq, decomp_a=da, decomp_b=db, running_avg_err_sq=run_avg,
                    v_steps=np.array(steps), v_history=np.array(hist), avg_iterate_err_sq=avg_err,
                    start_distribution=start, v_pi=v_pi.copy())


def run(mdp: Mdp, policy: Policy, config: RunConfig) -> RunTrace:
    return run_chain(induce_chain(mdp, policy, config.alpha), config)


def standard_td(transitions, v0, alpha: float, gamma: float) -> np.ndarray:
    """Plain one-sample TD(0); returns iterates ``V_0..V_T`` as rows."""
    v = np.array(v0, dtype=float)
    out = [v.copy()]
    for s, r, sn in transitions:
        v = v.copy()
        v[s] = v[s] + alpha * (r + gamma * v[sn] - v[s])
        out.append(v)
    return np.array(out)


# -- serialization ------------------------------------------------------------

TRACE_COLUMNS = ("k", "err_l2_sq", "err_weighted", "w_norm", "w_norm_sq", "decomp_a", "decomp_b")


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_trace_csv(trace: RunTrace, path) -> None:
    t = trace.horizon
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRACE_COLUMNS)
        for k in range(t + 1):
            noise_cols = ([trace.w_norm[k], trace.w_norm_sq[k], trace.decomp_a[k], trace.decomp_b[k]]
                          if k < t else [None] * 4)
            wr.writerow([k, _fmt(trace.err_l2_sq[k]), _fmt(trace.err_weighted[k])] + [_fmt(x) for x in noise_cols])


def write_trace_sidecar(trace: RunTrace, path) -> None:
    doc = {"config": trace.config.to_dict(), "seed": trace.config.seed,
           "run_index": trace.config.run_index, "summary": trace.summary()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")
