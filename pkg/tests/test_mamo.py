import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copfl.mamo import MamoState, Phase, apply_step, phase_mask
from copfl.models import NumericError


def textbook_adam(w, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Straightforward reference Adam, written independently of the library."""
    w = np.array(w, dtype=float)
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        w = w - lr * mh / (np.sqrt(vh) + eps)
        out.append(w.copy())
    return out


def test_phase_masks_partition_coordinates():
    m = np.array([1, 0], np.uint8)
    np.testing.assert_array_equal(phase_mask(m, Phase.PERSONALIZED), [1, 0])
    np.testing.assert_array_equal(phase_mask(m, Phase.SHARED), [0, 1])
    np.testing.assert_array_equal(phase_mask(m, "personalized") | phase_mask(m, "shared"), [1, 1])


def test_scalar_first_step():
    state = MamoState.zeros(1, lr=0.1)
    w, s = apply_step(state, [0.0], [1.0], [1], Phase.PERSONALIZED)
    assert w[0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)
    assert s.step_pers == 1 and s.step_shared == 0
    assert s.u_pers[0] == pytest.approx(0.1)
    assert s.v_pers[0] == pytest.approx(0.001)


def test_fully_masked_phase_is_noop():
    state = MamoState.zeros(1, lr=0.1)
    w, s = apply_step(state, [3.0], [7.0], [0], Phase.PERSONALIZED)
    assert w[0] == 3.0
    assert s.u_pers[0] == 0.0 and s.v_pers[0] == 0.0


def test_personalized_step_leaves_shared_side_alone():
    state = MamoState.zeros(2, lr=0.1)
    w, s = apply_step(state, [1.0, 1.0], [1.0, 1.0], [1, 0], Phase.PERSONALIZED)
    assert w[0] != 1.0 and w[1] == 1.0
    np.testing.assert_array_equal(s.u_shared, 0.0)
    np.testing.assert_array_equal(s.v_shared, 0.0)
    assert s.step_shared == 0


def test_full_shared_phase_matches_textbook_adam():
    rng = np.random.default_rng(0)
    d = 6
    grads = [rng.normal(size=d) * rng.uniform(0.01, 10) for _ in range(100)]
    w0 = rng.normal(size=d)
    expected = textbook_adam(w0, grads, lr=0.01)
    state = MamoState.zeros(d, lr=0.01)
    w = w0
    zero = np.zeros(d, np.uint8)
    for g, ref in zip(grads, expected):
        w, state = apply_step(state, w, g, zero, Phase.SHARED)
        np.testing.assert_allclose(w, ref, rtol=0, atol=1e-12)


def test_full_personalized_phase_matches_textbook_adam():
    rng = np.random.default_rng(1)
    grads = [rng.normal(size=3) for _ in range(20)]
    expected = textbook_adam(np.zeros(3), grads, lr=0.05)
    state = MamoState.zeros(3, lr=0.05)
    w = np.zeros(3)
    for g in grads:
        w, state = apply_step(state, w, g, np.ones(3, np.uint8), Phase.PERSONALIZED)
    np.testing.assert_allclose(w, expected[-1], atol=1e-12)


def test_each_phase_runs_its_own_adam_trajectory():
    # interleaving phases on disjoint masks equals two independent Adam runs
    rng = np.random.default_rng(2)
    m = np.array([1, 1, 0, 0, 0], np.uint8)
    gp = [rng.normal(size=5) for _ in range(15)]
    gs = [rng.normal(size=5) for _ in range(15)]
    ref_p = textbook_adam(np.zeros(2), [g[:2] for g in gp], lr=0.02)[-1]
    ref_s = textbook_adam(np.zeros(3), [g[2:] for g in gs], lr=0.02)[-1]
    state = MamoState.zeros(5, lr=0.02)
    w = np.zeros(5)
    for a, b in zip(gp, gs):
        w, state = apply_step(state, w, a, m, Phase.PERSONALIZED)
        w, state = apply_step(state, w, b, m, Phase.SHARED)
    np.testing.assert_allclose(w[:2], ref_p, atol=1e-12)
    np.testing.assert_allclose(w[2:], ref_s, atol=1e-12)


def test_literal_decay_shrinks_masked_moments():
    state = MamoState.zeros(2, lr=0.1, literal_decay=True)
    _, state = apply_step(state, [0.0, 0.0], [1.0, 1.0], [0, 0], Phase.SHARED)
    u_before = state.u_shared.copy()
    w, state = apply_step(state, [5.0, 5.0], [1.0, 1.0], [1, 0], Phase.SHARED)
    assert state.u_shared[0] == pytest.approx(0.9 * u_before[0])
    assert w[0] == 5.0
    frozen = MamoState.zeros(2, lr=0.1)
    _, frozen = apply_step(frozen, [0.0, 0.0], [1.0, 1.0], [0, 0], Phase.SHARED)
    _, frozen2 = apply_step(frozen, [5.0, 5.0], [1.0, 1.0], [1, 0], Phase.SHARED)
    assert frozen2.u_shared[0] == frozen.u_shared[0]


def test_non_finite_gradient_raises_and_keeps_inputs():
    state = MamoState.zeros(2, lr=0.1)
    params = np.array([1.0, 2.0])
    with pytest.raises(NumericError):
        apply_step(state, params, [np.nan, 0.0], [1, 0], Phase.PERSONALIZED)
    assert state.step_pers == 0
    np.testing.assert_array_equal(params, [1.0, 2.0])
    # a non-finite value outside the active coordinates is ignored
    w, _ = apply_step(state, params, [np.inf, 1.0], [1, 0], Phase.SHARED)
    assert w[0] == 1.0


def test_inputs_not_mutated():
    state = MamoState.zeros(3, lr=0.1)
    params = np.ones(3)
    grad = np.ones(3)
    apply_step(state, params, grad, [0, 1, 0], Phase.SHARED)
    np.testing.assert_array_equal(params, 1.0)
    np.testing.assert_array_equal(state.u_shared, 0.0)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 8).flatmap(lambda d: st.tuples(
        st.lists(st.integers(0, 1), min_size=d, max_size=d),
        st.lists(st.lists(st.floats(-1e3, 1e3), min_size=d, max_size=d), min_size=1, max_size=10),
        st.lists(st.sampled_from(list(Phase)), min_size=10, max_size=10),
    ))
)
def test_disjointness_and_nonnegative_v(case):
    mask, grads, phases = case
    d = len(mask)
    state = MamoState.zeros(d, lr=0.01)
    w = np.zeros(d)
    for g, phase in zip(grads, phases):
        other = Phase.SHARED if phase is Phase.PERSONALIZED else Phase.PERSONALIZED
        ou, ov, ostep = (x.copy() if hasattr(x, "copy") else x for x in state.moments(other))
        inactive = ~phase_mask(mask, phase).astype(bool)
        w_new, state = apply_step(state, w, g, mask, phase)
        nu, nv, nstep = state.moments(other)
        np.testing.assert_array_equal(nu, ou)
        np.testing.assert_array_equal(nv, ov)
        assert nstep == ostep
        np.testing.assert_array_equal(w_new[inactive], w[inactive])
        assert np.all(state.v_pers >= 0) and np.all(state.v_shared >= 0)
        w = w_new
