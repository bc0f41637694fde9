import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from replay_td.estimator import ReplayTD, check_transitions
from replay_td.learner import RunConfig, TrajectorySampler, run_chain, run_streams, sample_trajectory


def stream(chain, n, seed=0):
    env, _ = run_streams(seed)
    traj = sample_trajectory(TrajectorySampler(chain.mdp, chain.policy, env), chain.mu, n)
    return np.column_stack([traj.s, traj.r, traj.s_next])


class TestReplayTD:
    def test_params_round_trip(self):
        est = ReplayTD(n_states=3, gamma=0.5, alpha=0.2, buffer_size=8)
        assert est.get_params()["alpha"] == 0.2
        assert clone(est).get_params() == est.get_params()
        est.set_params(batch_size=4)
        assert est.batch_size == 4

    def test_fit_predict_shapes(self, desk_chain):
        X = stream(desk_chain, 600)
        est = ReplayTD(n_states=3, gamma=0.5, buffer_size=64, batch_size=8, random_state=0).fit(X)
        assert est.n_iter_ == 600 - 64
        assert est.predict([0, 1, 2]).shape == (3,)
        assert len(est.buffer_) == 64

    def test_matches_learner_on_same_streams(self, desk_chain):
        cfg = RunConfig(buffer_size=32, batch_size=4, horizon=300, seed=5, instrument=False)
        tr = run_chain(desk_chain, cfg)
        env, _ = run_streams(5)
        traj = sample_trajectory(TrajectorySampler(desk_chain.mdp, desk_chain.policy, env), desk_chain.mu, 332)
        X = np.column_stack([traj.s, traj.r, traj.s_next])
        est = ReplayTD(n_states=3, gamma=0.5, alpha=0.1, buffer_size=32, batch_size=4, random_state=5).fit(X)
        np.testing.assert_array_equal(est.values_, tr.final_v)

    def test_partial_fit_equals_fit(self, desk_chain):
        X = stream(desk_chain, 400, seed=2)
        full = ReplayTD(n_states=3, gamma=0.5, buffer_size=32, random_state=1).fit(X)
        part = ReplayTD(n_states=3, gamma=0.5, buffer_size=32, random_state=1).fit(X[:200]).partial_fit(X[200:])
        np.testing.assert_array_equal(full.values_, part.values_)
        assert part.n_iter_ == full.n_iter_

    def test_converges_towards_true_values(self, desk_chain):
        X = stream(desk_chain, 6000, seed=3)
        est = ReplayTD(n_states=3, gamma=0.5, buffer_size=256, batch_size=32, random_state=0).fit(X)
        assert est.score([0, 1, 2], desk_chain.v_pi) > -0.05

    def test_infers_state_count(self, desk_chain):
        est = ReplayTD(gamma=0.5, buffer_size=16).fit(stream(desk_chain, 100))
        assert est.n_states_ == 3

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            ReplayTD().predict([0])

    def test_short_stream(self, desk_chain):
        with pytest.raises(ValueError):
            ReplayTD(buffer_size=50).fit(stream(desk_chain, 10))

    def test_bad_params(self, desk_chain):
        with pytest.raises(ValueError):
            ReplayTD(alpha=1.5, buffer_size=4).fit(stream(desk_chain, 10))

    def test_predict_range(self, desk_chain):
        est = ReplayTD(n_states=3, gamma=0.5, buffer_size=8).fit(stream(desk_chain, 20))
        with pytest.raises(ValueError):
            est.predict([3])


class TestCheckTransitions:
    def test_columns(self):
        with pytest.raises(ValueError):
            check_transitions(np.zeros((4, 2)))

    def test_integral_states(self):
        with pytest.raises(ValueError):
            check_transitions([[0.5, 1.0, 1.0]])

    def test_non_finite(self):
        with pytest.raises(ValueError):
            check_transitions([[0, np.nan, 1]])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            check_transitions([[0, 1.0, 4]], n_states=3)
