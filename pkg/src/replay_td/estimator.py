"""scikit-learn style front end: fit a value table from a stream of transitions."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .buffer import ReplayBuffer, UniformStream
from .learner import mean_td_error, run_streams


def check_transitions(X, n_states: int | None = None) -> np.ndarray:
    """Validate an ``(n, 3)`` array of ``[s, r, s']`` rows with integral in-range states."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != 3:
        raise ValueError(f"transitions must have 3 columns [s, r, s'], got {X.shape[1]}")
    states = X[:, [0, 2]]
    if np.any(states != np.round(states)) or np.any(states < 0):
        raise ValueError("state columns must hold non-negative integers")
    if n_states is not None and states.size and states.max() >= n_states:
        raise ValueError(f"state index {int(states.max())} out of range for n_states={n_states}")
    return X


def check_states(states, n_states: int) -> np.ndarray:
    s = np.asarray(states)
    if s.ndim == 2 and s.shape[1] == 1:
        s = s[:, 0]
    s = check_array(s.reshape(-1, 1), dtype=None, ensure_2d=True)[:, 0]
    if not np.issubdtype(s.dtype, np.integer):
        if np.any(s != np.round(s.astype(float))):
            raise ValueError("states must be integers")
        s = s.astype(np.int64)
    if np.any(s < 0) or np.any(s >= n_states):
        raise ValueError(f"states must lie in [0, {n_states})")
    return s


class ReplayTD(BaseEstimator):
    """Tabular TD(0) with a FIFO replay buffer, fitted on a single trajectory.

    ``fit(X)`` treats the first ``buffer_size`` rows of ``X`` as the warm-up
    that fills the buffer; each subsequent row is pushed and followed by one
    mini-batch update of size ``batch_size``. ``partial_fit`` continues from
    the current buffer and values.

    Parameters
    ----------
    n_states : int or None
        Size of the state space; inferred from ``X`` when ``None``.
    gamma : float
        Discount factor in ``(0, 1)``.
    alpha : float
        Constant step size in ``(0, 1)``.
    buffer_size, batch_size : int
        Replay capacity ``N`` and mini-batch size ``L``.
    v0 : array-like or None
        Initial value table (zeros when ``None``).
    random_state : int or None
        Seed of the mini-batch sampling stream.
    """

    def __init__(self, n_states=None, gamma=0.9, alpha=0.1, buffer_size=256, batch_size=32, v0=None,
                 random_state=None):
        self.n_states = n_states
        self.gamma = gamma
        self.alpha = alpha
        self.buffer_size = buffer_size
        self.batch_size = batch_size
        self.v0 = v0
        self.random_state = random_state

    def _validate_params(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if int(self.buffer_size) < 1 or int(self.batch_size) < 1:
            raise ValueError("buffer_size and batch_size must be >= 1")

    def _sampling_stream(self):
        if self.random_state is None:
            return UniformStream(np.random.default_rng())
        return run_streams(int(self.random_state))[1]

    def fit(self, X, y=None):
        self._validate_params()
        X = check_transitions(X, self.n_states)
        n_buf = int(self.buffer_size)
        if X.shape[0] < n_buf:
            raise ValueError(f"need at least buffer_size={n_buf} transitions for the warm-up, got {X.shape[0]}")
        n = int(self.n_states) if self.n_states is not None else int(X[:, [0, 2]].max()) + 1
        self.n_states_ = n
        if self.v0 is None:
            self.values_ = np.zeros(n)
        else:
            v0 = np.asarray(self.v0, dtype=float)
            if v0.shape != (n,):
                raise ValueError(f"v0 must have shape ({n},)")
            self.values_ = v0.copy()
        self.buffer_ = ReplayBuffer(n_buf)
        self._stream = self._sampling_stream()
        self.n_iter_ = 0
        for row in X[:n_buf]:
            self.buffer_.push((int(row[0]), float(row[1]), int(row[2])))
        return self._consume(X[n_buf:])

    def partial_fit(self, X, y=None):
        """Continue training on more rows; starts a fresh fit if not yet fitted."""
        if not hasattr(self, "values_"):
            return self.fit(X)
        X = check_transitions(X, self.n_states_)
        return self._consume(X)

    def _consume(self, rows):
        g_, a_, L = float(self.gamma), float(self.alpha), int(self.batch_size)
        v = self.values_
        for row in rows:
            self.buffer_.push((int(row[0]), float(row[1]), int(row[2])))
            batch = self.buffer_.sample_batch(L, self._stream)
            v = v + a_ * mean_td_error(batch, v, g_)
            self.n_iter_ += 1
        self.values_ = v
        return self

    def predict(self, states) -> np.ndarray:
        check_is_fitted(self, "values_")
        return self.values_[check_states(states, self.n_states_)]

    def score(self, states, y) -> float:
        """Negative mean squared error of predicted values against ``y``."""
        y = np.asarray(y, dtype=float)
        return -float(np.mean((self.predict(states) - y) ** 2))
