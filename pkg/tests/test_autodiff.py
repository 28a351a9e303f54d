import numpy as np
import pytest

from wogma import autodiff as ad
from wogma.autodiff import DTensor, Parameter, Tape
from wogma.errors import ConfigurationError


def test_affine_identity():
    out = ad.affine(DTensor([[1.0, 2.0]]), DTensor([[1.0, 0.0], [0.0, 1.0]]), DTensor([0.0, 0.0]))
    np.testing.assert_array_equal(out.values, [[1.0, 2.0]])


def test_affine_scalar_case():
    out = ad.affine(DTensor([[1.0, 1.0]]), DTensor([[2.0], [3.0]]), DTensor([1.0]))
    np.testing.assert_array_equal(out.values, [[6.0]])


def test_affine_shape_mismatch_names_both_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(1, 3\).*\(2, 4\)"):
        ad.affine(DTensor(np.zeros((1, 3))), DTensor(np.zeros((2, 4))), DTensor(np.zeros(4)))


def test_affine_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal((4, 2))
    b = rng.standard_normal(2)
    err = ad.grad_check(ad.affine, [x, w, b], h=1e-6)
    assert err < 1e-6


def test_relu_values():
    np.testing.assert_array_equal(ad.relu(DTensor([-1.0, 0.0, 2.0])).values, [0.0, 0.0, 2.0])


def test_softmax_symmetry():
    np.testing.assert_allclose(ad.softmax(DTensor([0.0, 0.0])).values, [0.5, 0.5])


def test_sigmoid_at_zero():
    assert ad.sigmoid(DTensor(0.0)).values == 0.5


def test_sigmoid_extreme_inputs_stay_finite():
    out = ad.sigmoid(DTensor([-1000.0, 1000.0])).values
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-12)


@pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh", "softmax"])
def test_activation_gradients(kind):
    rng = np.random.default_rng(11)
    # keep relu inputs away from the kink
    x = rng.standard_normal((4, 5))
    x[np.abs(x) < 1e-2] = 0.1
    fn = getattr(ad, kind)
    assert ad.grad_check(fn, [x], h=1e-6) < 1e-6


def test_temporal_conv1d_identity_kernel():
    out = ad.temporal_conv1d(DTensor([[1.0], [2.0], [3.0]]),
                             DTensor(np.ones((1, 1, 1))), DTensor([0.0]))
    np.testing.assert_array_equal(out.values, [[1.0], [2.0], [3.0]])


def test_temporal_conv1d_boundary_zero_padding():
    out = ad.temporal_conv1d(DTensor([[1.0], [1.0], [1.0]]),
                             DTensor(np.ones((1, 1, 3))), DTensor([0.0]))
    np.testing.assert_array_equal(out.values[:, 0], [2.0, 3.0, 2.0])


def test_temporal_conv1d_even_kernel_rejected():
    with pytest.raises(ConfigurationError):
        ad.temporal_conv1d(DTensor(np.zeros((4, 2))), DTensor(np.zeros((3, 2, 4))), DTensor(np.zeros(3)))


def test_temporal_conv1d_gradient():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((7, 3))
    w = rng.standard_normal((2, 3, 3))
    b = rng.standard_normal(2)
    assert ad.grad_check(ad.temporal_conv1d, [x, w, b], h=1e-6) < 1e-6


def test_collapse_window_uniform_average():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 4, 3, 2))  # L=2, tau=4, N=3, C=2
    w = np.zeros((2, 4, 2))
    for c in range(2):
        w[c, :, c] = 0.25
    out = ad.collapse_window(DTensor(x), DTensor(w))
    np.testing.assert_allclose(out.values, x.mean(axis=1))


def test_collapse_window_tau1_identity():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 1, 3, 2))
    w = np.zeros((2, 1, 2))
    w[0, 0, 0] = 1.0
    w[1, 0, 1] = 1.0
    out = ad.collapse_window(DTensor(x), DTensor(w))
    np.testing.assert_allclose(out.values, x[:, 0])


def test_collapse_window_gradient():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 3, 2, 2))
    w = rng.standard_normal((2, 3, 4))
    assert ad.grad_check(ad.collapse_window, [x, w], h=1e-6) < 1e-6


def test_graph_apply_gradient():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((4, 4))
    x = rng.standard_normal((2, 4, 3))
    assert ad.grad_check(lambda t: ad.graph_apply(a, t), [x], h=1e-6) < 1e-6


def test_lstm_cell_zero_weights_zero_state():
    h = DTensor(np.zeros(4))
    c = DTensor(np.zeros(4))
    f = DTensor(np.array([1.0, -2.0, 3.0]))
    w_ih = DTensor(np.zeros((3, 16)))
    w_hh = DTensor(np.zeros((4, 16)))
    b = DTensor(np.zeros(16))
    h1, c1 = ad.lstm_cell(h, c, f, w_ih, w_hh, b)
    np.testing.assert_array_equal(h1.values, np.zeros(4))
    np.testing.assert_array_equal(c1.values, np.zeros(4))


def test_lstm_cell_hidden_state_bounded():
    rng = np.random.default_rng(12)
    h, c = np.zeros(8), np.zeros(8)
    w_ih = rng.standard_normal((5, 32))
    w_hh = rng.standard_normal((8, 32))
    b = rng.standard_normal(32)
    for _ in range(20):
        f = rng.standard_normal(5) * 3.0
        ht, ct = ad.lstm_cell(DTensor(h), DTensor(c), DTensor(f), DTensor(w_ih), DTensor(w_hh), DTensor(b))
        h, c = ht.values, ct.values
        assert np.max(np.abs(h)) < 1.0


def test_lstm_cell_gradient():
    rng = np.random.default_rng(13)
    hidden = 8
    args = [
        rng.standard_normal(hidden) * 0.5,       # h_prev
        rng.standard_normal(hidden) * 0.5,       # c_prev
        rng.standard_normal(5),                  # f
        rng.standard_normal((5, 4 * hidden)) * 0.3,
        rng.standard_normal((hidden, 4 * hidden)) * 0.3,
        rng.standard_normal(4 * hidden) * 0.3,
    ]

    def step_h(h_prev, c_prev, f, w_ih, w_hh, b):
        h, c = ad.lstm_cell(h_prev, c_prev, f, w_ih, w_hh, b)
        return ad.add(h, c)

    assert ad.grad_check(step_h, args, h=1e-6) < 1e-5


def test_softmax_cross_entropy_composite_gradient():
    rng = np.random.default_rng(14)
    logits = rng.standard_normal((6, 3))
    labels = rng.integers(0, 3, size=6)

    def ce(z):
        probs = ad.clip_min(ad.softmax(z), 1e-7)
        picked = ad.take_entries(ad.log(probs), np.arange(6), labels)
        return ad.scale(ad.reduce_mean(picked), -1.0)

    assert ad.grad_check(ce, [logits], h=1e-6) < 1e-6


def test_fanout_accumulates_gradients():
    # d(f(x)+g(x))/dx = df/dx + dg/dx exactly
    x = DTensor(np.array([1.5, -2.0, 0.5]), requires_grad=True)
    with Tape() as tape:
        doubled = ad.scale(x, 2.0)
        tripled = ad.scale(x, 3.0)
        loss = ad.reduce_sum(ad.add(doubled, tripled))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, np.full(3, 5.0))


def test_dead_branch_is_skipped():
    x = DTensor(np.array([1.0, 2.0]), requires_grad=True)
    with Tape() as tape:
        unused = ad.scale(x, 10.0)  # noqa: F841 - intentionally dead
        loss = ad.reduce_sum(ad.scale(x, 2.0))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, np.full(2, 2.0))


def test_forward_is_deterministic():
    rng = np.random.default_rng(15)
    x = rng.standard_normal((5, 4))
    w = rng.standard_normal((4, 3))
    b = rng.standard_normal(3)
    a = ad.softmax(ad.affine(DTensor(x), DTensor(w), DTensor(b))).values
    b2 = ad.softmax(ad.affine(DTensor(x.copy()), DTensor(w.copy()), DTensor(b.copy()))).values
    assert np.array_equal(a, b2)


def test_no_nan_inf_from_primitives_on_finite_input():
    rng = np.random.default_rng(16)
    x = rng.standard_normal((10, 6)) * 500.0
    for fn in (ad.relu, ad.sigmoid, ad.tanh, ad.softmax):
        assert np.all(np.isfinite(fn(DTensor(x)).values))


def test_backward_requires_scalar():
    x = DTensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ad.scale(x, 2.0)
    with pytest.raises(ad.ShapeError):
        tape.backward(y)


def test_parameter_buffers_zero_initialised():
    p = Parameter(np.ones((2, 2)), name="w")
    assert np.array_equal(p.adam_m, np.zeros((2, 2)))
    assert np.array_equal(p.adam_v, np.zeros((2, 2)))
    assert p.step_count == 0


def test_take_entries_scatter_adds_on_duplicate_rows():
    x = DTensor(np.arange(6, dtype=float).reshape(3, 2), requires_grad=True)
    rows = np.array([1, 1])
    cols = np.array([0, 0])
    with Tape() as tape:
        loss = ad.reduce_sum(ad.take_entries(x, rows, cols))
    tape.backward(loss)
    expected = np.zeros((3, 2))
    expected[1, 0] = 2.0
    np.testing.assert_array_equal(x.grad, expected)
