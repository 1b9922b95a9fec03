"""Primitive-level gradient checks against central finite differences,
tape semantics, Adam, and Xavier initialization."""

import numpy as np
import pytest

from disenlink import autodiff as ad
from disenlink.gradcheck import finite_diff_check
from disenlink.optim import (NonFiniteGradientError, adam_step, init_adam,
                             xavier_init)


def scalar_readout(t, weights):
    """Project a matrix-valued op output to a scalar with fixed weights."""
    return ad.reduce_sum(ad.mul(t, ad.constant(weights)))


def check_op(build_loss, params, tol=1e-4):
    err = finite_diff_check(build_loss, params)
    assert err < tol, f"finite-difference mismatch: {err}"


# one entry per primitive: name -> (loss builder factory taking an rng)
def _unary_case(op, rng, rows, cols, positive=False, **kw):
    data = rng.standard_normal((rows, cols))
    if positive:
        data = np.abs(data) + 0.5
    p = ad.parameter(data)
    w = rng.standard_normal((rows, cols))
    return (lambda: scalar_readout(op(p, **kw), w)), {"p": p}


UNARY_OPS = {
    "row_l2_normalize": ad.row_l2_normalize,
    "row_softmax": ad.row_softmax,
    "sigmoid": ad.sigmoid,
    "exp": ad.exp,
    "softplus": ad.softplus,
    "transpose": lambda t: ad.transpose(t),
}


@pytest.mark.parametrize("name", sorted(UNARY_OPS))
@pytest.mark.parametrize("trial", range(6))
def test_unary_primitive_gradients(name, trial):
    rng = np.random.default_rng(hash((name, trial)) % 2**32)
    rows, cols = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    op = UNARY_OPS[name]
    if name == "transpose":
        loss_fn, params = _unary_case(op, rng, rows, cols)
        # transpose flips the readout shape
        p = params["p"]
        w = rng.standard_normal((cols, rows))
        loss_fn = lambda: scalar_readout(ad.transpose(p), w)
    else:
        loss_fn, params = _unary_case(op, rng, rows, cols)
    check_op(loss_fn, params)


@pytest.mark.parametrize("trial", range(6))
def test_log_gradient_away_from_guard(trial):
    rng = np.random.default_rng(300 + trial)
    p = ad.parameter(np.abs(rng.standard_normal((3, 4))) + 0.5)
    w = rng.standard_normal((3, 4))
    check_op(lambda: scalar_readout(ad.log(p), w), {"p": p})


@pytest.mark.parametrize("trial", range(6))
def test_clamp_gradient(trial):
    rng = np.random.default_rng(400 + trial)
    # keep coordinates away from the clamp kink where FD is one-sided
    data = rng.uniform(-2.0, 2.0, size=(4, 3))
    data[np.abs(np.abs(data) - 1.0) < 0.05] = 0.0
    p = ad.parameter(data)
    w = rng.standard_normal((4, 3))
    check_op(lambda: scalar_readout(ad.clamp(p, -1.0, 1.0), w), {"p": p})


@pytest.mark.parametrize("trial", range(8))
def test_binary_primitive_gradients(trial):
    rng = np.random.default_rng(500 + trial)
    rows, cols = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    a = ad.parameter(rng.standard_normal((rows, cols)))
    shape_b = [(rows, cols), (1, cols), (rows, 1), (1, 1)][trial % 4]
    b = ad.parameter(rng.standard_normal(shape_b))
    w = rng.standard_normal((rows, cols))
    for op in (ad.add, ad.sub, ad.mul):
        check_op(lambda op=op: scalar_readout(op(a, b), w), {"a": a, "b": b})


@pytest.mark.parametrize("trial", range(6))
def test_matmul_gradients(trial):
    rng = np.random.default_rng(600 + trial)
    n, k, m = (int(x) for x in rng.integers(1, 6, size=3))
    a = ad.parameter(rng.standard_normal((n, k)))
    b = ad.parameter(rng.standard_normal((k, m)))
    w = rng.standard_normal((n, m))
    check_op(lambda: scalar_readout(ad.matmul(a, b), w), {"a": a, "b": b})


@pytest.mark.parametrize("trial", range(4))
def test_gather_segment_concat_gradients(trial):
    rng = np.random.default_rng(700 + trial)
    n, d = 6, 3
    a = ad.parameter(rng.standard_normal((n, d)))
    idx = rng.integers(0, n, size=10)
    seg = np.sort(rng.integers(0, 4, size=10))
    w_g = rng.standard_normal((10, d))
    w_s = rng.standard_normal((4, d))
    check_op(lambda: scalar_readout(ad.gather_rows(a, idx), w_g), {"a": a})
    check_op(lambda: scalar_readout(
        ad.segment_sum(ad.gather_rows(a, idx), seg, 4), w_s), {"a": a})
    b = ad.parameter(rng.standard_normal((n, 2)))
    w_c = rng.standard_normal((n, d + 2))
    check_op(lambda: scalar_readout(ad.concat_cols([a, b]), w_c), {"a": a, "b": b})


@pytest.mark.parametrize("trial", range(4))
def test_reduce_smul_gradients(trial):
    rng = np.random.default_rng(800 + trial)
    a = ad.parameter(rng.standard_normal((4, 5)))
    check_op(lambda: ad.reduce_sum(a), {"a": a})
    check_op(lambda: ad.reduce_mean(a), {"a": a})
    check_op(lambda: ad.smul(ad.reduce_sum(a), -1.7), {"a": a})


@pytest.mark.parametrize("trial", range(5))
def test_bce_logits_mean_gradient(trial):
    rng = np.random.default_rng(900 + trial)
    n = int(rng.integers(2, 6))
    z = ad.parameter(rng.standard_normal((n, n)))
    targets = (rng.random((n, n)) < 0.4).astype(float)
    pw = float(rng.uniform(0.5, 5.0))
    check_op(lambda: ad.bce_logits_mean(z, targets, pos_weight=pw, scale=1.3),
             {"z": z})


# ---------------------------------------------------------------------------
# value-level examples

def test_row_softmax_symmetry():
    out = ad.row_softmax(ad.constant([[0.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5]])


def test_row_softmax_simplex():
    rng = np.random.default_rng(0)
    out = ad.row_softmax(ad.constant(rng.standard_normal((50, 7)) * 30))
    assert np.all(out.data >= 0)
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)


def test_row_l2_normalize_by_hand():
    out = ad.row_l2_normalize(ad.constant([[3.0, 4.0]]))
    np.testing.assert_allclose(out.data, [[0.6, 0.8]])


def test_row_l2_normalize_unit_norms():
    rng = np.random.default_rng(1)
    out = ad.row_l2_normalize(ad.constant(rng.standard_normal((40, 5))))
    np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-9)


def test_row_l2_normalize_eps_guard():
    out = ad.row_l2_normalize(ad.constant([[0.0, 0.0], [1.0, 0.0]]), eps=1e-12)
    np.testing.assert_allclose(out.data[0], [0.0, 0.0])
    np.testing.assert_allclose(out.data[1], [1.0, 0.0])


def test_matmul_identity():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((2, 5))
    out = ad.matmul(ad.constant(np.eye(2)), ad.constant(m))
    np.testing.assert_array_equal(out.data, m)


def test_bce_matches_composed_softplus_form():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 4)) * 3
    t = (rng.random((4, 4)) < 0.5).astype(float)
    pw, scale = 3.0, 0.7
    fused = ad.bce_logits_mean(ad.constant(x), t, pos_weight=pw, scale=scale)
    manual = scale * np.mean(pw * t * np.logaddexp(0, -x) + (1 - t) * np.logaddexp(0, x))
    np.testing.assert_allclose(fused.item(), manual, rtol=1e-12)


# ---------------------------------------------------------------------------
# tape semantics

def test_backward_on_leaf_scalar():
    p = ad.parameter([[2.5]])
    grads = ad.backward(p)
    np.testing.assert_array_equal(grads[p], [[1.0]])


def test_backward_rejects_non_scalar():
    p = ad.parameter(np.ones((2, 2)))
    with ad.Tape():
        y = ad.smul(p, 2.0)
    with pytest.raises(ad.TapeError):
        ad.backward(y)


def test_backward_twice_rejected():
    p = ad.parameter(np.ones((2, 2)))
    with ad.Tape():
        loss = ad.reduce_sum(p)
    ad.backward(loss)
    with pytest.raises(ad.TapeError):
        ad.backward(loss)


def test_softmax_sum_has_zero_gradient():
    rng = np.random.default_rng(4)
    p = ad.parameter(rng.standard_normal((5, 4)))
    with ad.Tape():
        loss = ad.reduce_sum(ad.row_softmax(p))
    grads = ad.backward(loss)
    np.testing.assert_allclose(grads[p], 0.0, atol=1e-12)


def test_no_tape_means_no_gradients():
    p = ad.parameter(np.ones((2, 2)))
    y = ad.smul(p, 3.0)
    assert not y.requires_grad and y.tape is None


def test_sigmoid_chain_matches_fd():
    rng = np.random.default_rng(5)
    w = ad.parameter(rng.standard_normal((4, 3)))
    x = ad.constant(rng.standard_normal((3, 2)))
    check_op(lambda: ad.reduce_sum(ad.sigmoid(ad.matmul(w, x))), {"w": w})


def test_quadratic_loss_fd_error_tiny():
    p = ad.parameter([[0.7, -1.2], [0.4, 2.0]])
    err = finite_diff_check(lambda: ad.reduce_sum(ad.mul(p, p)), {"p": p})
    assert err < 1e-8


def test_constant_loss_both_gradients_zero():
    p = ad.parameter(np.ones((2, 2)))
    c = ad.constant(np.full((1, 1), 3.0))
    err = finite_diff_check(lambda: ad.add(ad.smul(ad.reduce_sum(p), 0.0), c), {"p": p})
    assert err == 0.0


def test_shape_errors():
    with pytest.raises(ad.ShapeError):
        ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))
    with pytest.raises(ad.ShapeError):
        ad.add(ad.constant(np.ones((2, 3))), ad.constant(np.ones((3, 2))))
    with pytest.raises(ad.ShapeError):
        ad.concat_cols([ad.constant(np.ones((2, 2))), ad.constant(np.ones((3, 2)))])


def test_finite_check_toggle():
    # exp overflow is silently inf by default, an error with checks on
    assert np.isinf(ad.exp(ad.constant([[1000.0]])).data[0, 0])
    ad.set_finite_checks(True)
    try:
        with pytest.raises(ad.NonFiniteError):
            ad.exp(ad.constant([[1000.0]]))
    finally:
        ad.set_finite_checks(False)


def test_determinism_bitwise():
    def run():
        rng = np.random.default_rng(42)
        p = ad.parameter(rng.standard_normal((6, 6)))
        with ad.Tape():
            loss = ad.reduce_sum(ad.row_softmax(ad.matmul(p, ad.transpose(p))))
        grads = ad.backward(loss)
        return loss.item(), grads[p].copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    np.testing.assert_array_equal(g1, g2)


# ---------------------------------------------------------------------------
# Adam + Xavier

def test_adam_zero_gradient_keeps_params():
    p = ad.parameter([[1.0, 2.0]])
    params = {"p": p}
    state = init_adam(params, lr=0.1)
    adam_step(params, {"p": np.zeros((1, 2))}, state)
    np.testing.assert_array_equal(p.data, [[1.0, 2.0]])
    assert state.step_count == 1


def test_adam_first_step_magnitude():
    p = ad.parameter([[1.0]])
    params = {"p": p}
    state = init_adam(params, lr=0.1)
    adam_step(params, {"p": np.array([[1.0]])}, state)
    # bias-corrected m_hat = v_hat = 1, so the step is ~lr
    np.testing.assert_allclose(p.data, [[0.9]], atol=1e-7)


def test_adam_rejects_non_finite():
    p = ad.parameter([[1.0]])
    params = {"p": p}
    state = init_adam(params, lr=0.1)
    with pytest.raises(NonFiniteGradientError):
        adam_step(params, {"p": np.array([[np.nan]])}, state)
    np.testing.assert_array_equal(p.data, [[1.0]])  # step rejected


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(7)
        p = ad.parameter(rng.standard_normal((3, 3)))
        params = {"p": p}
        state = init_adam(params, lr=0.05)
        for _ in range(10):
            adam_step(params, {"p": rng.standard_normal((3, 3))}, state)
        return p.data.copy()

    np.testing.assert_array_equal(run(), run())


def test_xavier_bound_and_determinism():
    t1 = xavier_init((2, 2), seed=123)
    t2 = xavier_init((2, 2), seed=123)
    bound = np.sqrt(6.0 / 4.0)
    assert np.all(np.abs(t1.data) <= bound)
    np.testing.assert_array_equal(t1.data, t2.data)
    assert t1.requires_grad


def test_xavier_mean_statistics():
    t = xavier_init((500, 200), seed=9)  # 1e5 samples
    bound = np.sqrt(6.0 / 700.0)
    assert abs(t.data.mean()) < 0.01 * bound


def test_xavier_rejects_bad_shape():
    with pytest.raises(ValueError):
        xavier_init((0, 3), seed=0)
