"""Self-adaptive (T, N) control: frozen hand-traced oracles."""

import pytest
from hypothesis import given, strategies as st

from neurogrow.adaptation import AdaptationConfig, AdaptationState, step


def unit_config(tau_n=10):
    return AdaptationConfig(lambda_t=1, xi_t=1, lambda_n=1, xi_n=1, tau_n=tau_n)


def trace(fitnesses, config):
    state = AdaptationState.initial(config)
    out = []
    for f in fitnesses:
        state = step(state, f, config)
        out.append((state.t, state.n))
    return out


def test_stagnation_trace_oracle():
    """Hand trace, constant fitness, all parameters 1:

    gen1 is the bootstrap (T,N)=(1,1); then T climbs until it overtakes N,
    which bumps N and resets T: (2,1) (1,2) (2,2) (3,2) (1,3).
    """
    assert trace([0.0] * 6, unit_config()) == [
        (1, 1), (2, 1), (1, 2), (2, 2), (3, 2), (1, 3),
    ]


def test_improvement_resets_t():
    config = unit_config()
    # reach (2, 2) under stagnation, then improve: T resets, N holds
    state = AdaptationState.initial(config)
    for f in [0.0, 0.0, 0.0, 0.0]:
        state = step(state, f, config)
    assert (state.t, state.n) == (2, 2)
    state = step(state, 1.0, config)
    assert (state.t, state.n) == (1, 2)


def test_improvement_with_t_over_n_still_bumps_n():
    config = unit_config()
    state = AdaptationState.initial(config)
    for f in [0.0] * 5:
        state = step(state, f, config)
    assert (state.t, state.n) == (3, 2)
    state = step(state, 1.0, config)  # improvement while T(3) > N(2)
    assert (state.t, state.n) == (1, 3)


def test_n_ceiling():
    config = unit_config(tau_n=2)
    state = AdaptationState.initial(config)
    ns = []
    for _ in range(40):
        state = step(state, 0.0, config)
        ns.append(state.n)
    # N grows by xi_n while N <= tau_n, then may end exactly one step above
    assert max(ns) == 3
    assert ns[-1] == 3


def test_custom_steps():
    config = AdaptationConfig(lambda_t=2, xi_t=3, lambda_n=1, xi_n=2, tau_n=10)
    got = trace([0.0] * 4, config)
    # gen1 bootstrap (2,1); T=2>N=1 at gen2: N 1->3, T resets to 2;
    # gen3: T(2)<=N(3) so T climbs to 5; gen4: T(5)>N(3): N->5, T->2
    assert got == [(2, 1), (2, 3), (5, 3), (2, 5)]


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptationConfig(lambda_t=0).validate()
    with pytest.raises(ValueError):
        AdaptationConfig(tau_n=0).validate()
    unit_config().validate()


@given(
    st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=60),
    st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
    st.integers(1, 12),
)
def test_invariants_hold_on_any_fitness_stream(fs, lt, xt, ln, xn, tn):
    config = AdaptationConfig(lambda_t=lt, xi_t=xt, lambda_n=ln, xi_n=xn, tau_n=tn)
    state = AdaptationState.initial(config)
    prev_n = state.n
    for f in fs:
        state = step(state, f, config)
        assert state.t >= config.lambda_t
        assert config.lambda_n <= state.n <= max(config.lambda_n, tn + xn)
        assert state.n >= prev_n  # N never shrinks
        prev_n = state.n
    assert state.generation == len(fs)
