import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from replay_td import bounds
from replay_td.buffer import empirics_from_columns
from replay_td.chain import ergodicity_check, mixing_time, pair_chain, stationary_distribution, tv_distance
from replay_td.experiments import TvSchedule
from replay_td.generate import GeneratorSpec, gen_mdp
from replay_td.mdp import induce_chain
from replay_td.norms import inf_norm, spectral_norm
from replay_td.verification import brute_force_mixing_time

PROPS = settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])

specs = st.builds(
    GeneratorSpec,
    n_states=st.integers(1, 6),
    n_actions=st.integers(1, 3),
    gamma=st.floats(0.05, 0.95),
    r_max=st.floats(0.1, 5.0),
    sparsity=st.sampled_from([0.0, 0.3, 0.7, 0.9]),
    self_loop_min=st.floats(0.01, 0.3),
    seed=st.integers(0, 2**32 - 1),
)
alphas = st.floats(1e-3, 0.999)


@PROPS
@given(spec=specs, alpha=alphas)
def test_induced_chain_invariants(spec, alpha):
    mdp, pol = gen_mdp(spec)
    ch = induce_chain(mdp, pol, alpha)
    n = ch.n_states
    assert np.allclose(ch.p_pi.sum(axis=1), 1.0, atol=1e-12)
    assert np.abs(ch.mu @ ch.p_pi - ch.mu).max() <= 1e-10
    assert ch.mu.min() > 0
    assert np.abs(ch.r_pi).max() <= mdp.r_max * (1 + 1e-12)
    d = ch.d_pi
    assert np.abs(d @ ch.v_pi - ch.gamma * d @ ch.p_pi @ ch.v_pi - d @ ch.r_pi).max() <= 1e-10
    assert abs(inf_norm(ch.a_matrix) - ch.contraction) <= 1e-12
    a, m = ch.a_matrix, ch.m_matrix
    assert np.linalg.norm(a.T @ m @ a - m + np.eye(n)) <= 1e-8
    assert np.linalg.eigvalsh(m).min() > 0
    assert spectral_norm(m) <= ch.m_norm_bound


@PROPS
@given(spec=specs)
def test_pair_chain_inherits_ergodicity(spec):
    mdp, pol = gen_mdp(spec)
    p_pi = np.einsum("sa,sat->st", pol.probs, mdp.transition)
    assert ergodicity_check(p_pi).ergodic
    pc = pair_chain(p_pi, stationary_distribution(p_pi))
    assert ergodicity_check(pc.transition).ergodic
    assert np.allclose(pc.transition.sum(axis=1), 1.0, atol=1e-12)


@PROPS
@given(spec=specs)
def test_mixing_time_matches_brute_force(spec):
    mdp, pol = gen_mdp(spec)
    p_pi = np.einsum("sa,sat->st", pol.probs, mdp.transition)
    mu = stationary_distribution(p_pi)
    assert mixing_time(p_pi, mu) == brute_force_mixing_time(p_pi, mu)


@PROPS
@given(spec=specs, weights=arrays(np.float64, 6, elements=st.floats(0.0, 1.0)))
def test_sum_of_tv_terms(spec, weights):
    mdp, pol = gen_mdp(spec)
    p_pi = np.einsum("sa,sat->st", pol.probs, mdp.transition)
    mu = stationary_distribution(p_pi)
    n = p_pi.shape[0]
    w = weights[:n] + 1e-3
    t1 = mixing_time(p_pi, mu)
    horizon = 30 * t1 + 30
    total = TvSchedule(p_pi, mu, w / w.sum(), horizon).curve(horizon).sum()
    assert total <= 2 * t1


@PROPS
@given(a=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-10, 10)))
def test_spectral_norm_matches_svd(a):
    ref = np.linalg.svd(a, compute_uv=False)[0]
    got = spectral_norm(a)
    assert abs(got - ref) <= 1e-8 * max(1.0, ref)


@PROPS
@given(p=arrays(np.float64, 4, elements=st.floats(0, 1)), q=arrays(np.float64, 4, elements=st.floats(0, 1)))
def test_tv_is_a_metric_on_distributions(p, q):
    p, q = p + 1e-9, q + 1e-9
    p, q = p / p.sum(), q / q.sum()
    d = tv_distance(p, q)
    assert 0.0 <= d <= 1.0 + 1e-15
    assert d == tv_distance(q, p)
    assert tv_distance(p, p) == 0.0


@PROPS
@given(data=st.data(), n_states=st.integers(1, 5), size=st.integers(1, 60))
def test_buffer_empirics_invariants(data, n_states, size):
    s = np.array(data.draw(st.lists(st.integers(0, n_states - 1), min_size=size, max_size=size)))
    sn = np.array(data.draw(st.lists(st.integers(0, n_states - 1), min_size=size, max_size=size)))
    r = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=size, max_size=size)))
    e = empirics_from_columns(s, r, sn, n_states)
    assert np.abs(e.d_b @ e.p_b - e.mu_ss).max() <= 1e-14
    assert abs(e.mu_s.sum() - 1) <= 1e-12 and abs(e.mu_ss.sum() - 1) <= 1e-12
    perm = np.random.default_rng(size).permutation(size)
    f = empirics_from_columns(s[perm], r[perm], sn[perm], n_states)
    assert np.array_equal(e.counts, f.counts) and np.allclose(e.r_b, f.r_b, atol=1e-15)


bound_inputs = st.builds(
    bounds.BoundInputs,
    n_states=st.integers(1, 8), n_actions=st.integers(1, 4), r_max=st.floats(0.1, 5),
    gamma=st.floats(0.05, 0.95), mu_min=st.floats(0.01, 1.0), alpha=st.floats(0.01, 0.99),
    buffer_n=st.integers(20, 10_000), batch_l=st.integers(1, 1000), horizon_t=st.integers(1, 10_000),
    t1_mix=st.integers(1, 10), t2_mix=st.integers(1, 10), v0_err_sq=st.floats(0, 100),
)


def _evaluators(b):
    return {
        "first": bounds.first_moment_bound(b),
        "second": bounds.second_moment_bound(b),
        "avg": bounds.avg_iterate_bound(b).total,
        "avg_rms": bounds.avg_iterate_bound_rms(b).total,
        "final": bounds.final_iterate_bound(b, 5).total,
        "final_rms": bounds.final_iterate_bound_rms(b, 5),
    }


@PROPS
@given(b=bound_inputs, field=st.sampled_from(["batch_l", "buffer_n", "horizon_t"]), factor=st.integers(2, 5))
def test_bounds_non_increasing_in_sizes(b, field, factor):
    before = _evaluators(b)
    after = _evaluators(b.with_(**{field: getattr(b, field) * factor}))
    for k in before:
        assert after[k] <= before[k] * (1 + 1e-12)


@PROPS
@given(b=bound_inputs, field=st.sampled_from(["n_states", "n_actions", "r_max"]))
def test_bounds_non_decreasing_in_problem_size(b, field):
    bigger = b.with_(**{field: getattr(b, field) + 1})
    before, after = _evaluators(b), _evaluators(bigger)
    # the transient of the final iterate also carries |S|; every evaluator must grow or stay
    for k in before:
        assert after[k] >= before[k] * (1 - 1e-12)
