import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tau_ppg import ops
from tau_ppg.tensor import GradTape, NonFiniteError, TapeError, Tensor

from gradcheck import max_rel_error

ATTN = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")


def t(a):
    return Tensor(np.asarray(a, dtype=float))


# -- forward examples ------------------------------------------------------------

def test_conv1d_identity_kernel():
    out = ops.conv1d(t([[1, 2, 3]]), t([[[1]]]), t([0]))
    np.testing.assert_array_equal(out.data, [[1, 2, 3]])


def test_conv1d_hand_examples():
    w, b, x = t([[[1, 0, -1]]]), t([0]), t([[1, 2, 3, 4]])
    np.testing.assert_array_equal(ops.conv1d(x, w, b).data, [[-2, -2, -2, 3]])
    np.testing.assert_array_equal(ops.conv1d(x, w, b, dilation=2).data, [[-3, -4, 1, 2]])


def test_conv1d_errors():
    with pytest.raises(ValueError):
        ops.conv1d(t([[1, 2, 3]]), t([[[1, 1]]]), t([0]))
    with pytest.raises(ValueError):
        ops.conv1d(t([[1, 2, 3]]), t([[[1], [1]]]), t([0]))


def test_conv1d_matches_direct_sum(rng):
    x = rng.standard_normal((3, 17))
    w = rng.standard_normal((2, 3, 5))
    b = rng.standard_normal(2)
    for dil in (1, 2, 3):
        pad = dil * 2
        xp = np.pad(x, ((0, 0), (pad, pad)))
        ref = np.zeros((2, 17))
        for c in range(2):
            for tt in range(17):
                ref[c, tt] = b[c] + sum(w[c, i, j] * xp[i, tt + j * dil] for i in range(3) for j in range(5))
        np.testing.assert_allclose(ops.conv1d(t(x), t(w), t(b), dil).data, ref, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 40)),
              elements=st.floats(-1e3, 1e3)))
def test_conv1d_identity_property(x):
    c = x.shape[0]
    w = np.zeros((c, c, 3))
    w[np.arange(c), np.arange(c), 1] = 1.0
    np.testing.assert_array_equal(ops.conv1d(t(x), t(w), t(np.zeros(c))).data, x)


def test_maxpool_examples():
    np.testing.assert_array_equal(ops.maxpool1d(t([[1, 3, 2, 5]])).data, [[3, 5]])
    np.testing.assert_array_equal(ops.maxpool1d(t([[1, 1, 1, 1, 9]])).data, [[1, 1]])
    np.testing.assert_array_equal(ops.maxpool1d(t([[-5, -7]])).data, [[-5]])
    with pytest.raises(ValueError):
        ops.maxpool1d(t([[1]]))


@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(2, 41)),
              elements=st.floats(-1e3, 1e3)))
def test_maxpool_dominates_both_strides(x):
    out = ops.maxpool1d(t(x)).data
    m = x.shape[1] // 2
    assert np.all(out >= x[:, 0:2 * m:2]) and np.all(out >= x[:, 1:2 * m:2])


def test_upsample_examples():
    np.testing.assert_allclose(ops.upsample_linear2x(t([[1, 3]])).data, [[1, 1.5, 2.5, 3]])
    np.testing.assert_array_equal(ops.upsample_linear2x(t([[7]])).data, [[7, 7]])
    np.testing.assert_array_equal(ops.upsample_linear2x(t([[0, 0, 0]])).data, np.zeros((1, 6)))


@given(arrays(np.float64, st.tuples(st.integers(1, 2), st.integers(1, 30)),
              elements=st.floats(-1e3, 1e3)))
def test_upsample_bounds_and_constants(x):
    out = ops.upsample_linear2x(t(x)).data
    assert out.shape == (x.shape[0], 2 * x.shape[1])
    tol = 1e-9 * (1 + np.abs(x).max())
    assert np.all(out <= x.max(axis=1, keepdims=True) + tol)
    assert np.all(out >= x.min(axis=1, keepdims=True) - tol)
    const = np.full_like(x, 3.25)
    np.testing.assert_array_equal(ops.upsample_linear2x(t(const)).data, np.full_like(out, 3.25))


def test_resize_linear_rejects_empty():
    with pytest.raises(ValueError):
        ops.resize_linear(t(np.zeros((1, 0))), 4)


def _identity_attn(e):
    p = {}
    for k in ATTN:
        p[k] = t(np.eye(e)) if k[0] == "w" else t(np.zeros(e))
    return p


def _random_attn(rng, e):
    return {k: t(rng.standard_normal((e, e) if k[0] == "w" else e) * 0.5) for k in ATTN}


def test_attention_rows_sum_to_one(rng):
    q, k, v = (t(rng.standard_normal((4, 8))) for _ in range(3))
    _, w = ops.multi_head_attention(q, k, v, 2, _random_attn(rng, 8), return_weights=True)
    assert w.shape == (2, 4, 4)
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)


def test_attention_identical_keys_uniform(rng):
    q = t(rng.standard_normal((3, 4)))
    k = t(np.tile(rng.standard_normal(4), (5, 1)))
    v = rng.standard_normal((5, 4))
    out, w = ops.multi_head_attention(q, k, t(v), 2, _identity_attn(4), return_weights=True)
    np.testing.assert_allclose(w, 0.2, atol=1e-12)
    np.testing.assert_allclose(out.data, np.tile(v.mean(axis=0), (3, 1)), atol=1e-12)


def test_attention_single_value_row(rng):
    v = rng.standard_normal((1, 4))
    out = ops.multi_head_attention(t(rng.standard_normal((1, 4))), t(rng.standard_normal((1, 4))),
                                   t(v), 2, _identity_attn(4))
    np.testing.assert_allclose(out.data, v, atol=1e-12)


def test_attention_errors(rng):
    q = t(rng.standard_normal((2, 6)))
    with pytest.raises(ValueError):
        ops.multi_head_attention(q, q, q, 4, _identity_attn(6))
    with pytest.raises(ValueError):
        ops.multi_head_attention(q, t(np.zeros((0, 6))), t(np.zeros((0, 6))), 2, _identity_attn(6))


@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 6), st.integers(1, 6))
def test_attention_output_in_convex_hull(seed, m, p):
    rng = np.random.default_rng(seed)
    e, heads = 4, 2
    params = _random_attn(rng, e)
    q, k, v = (t(rng.uniform(-1, 1, (n, e))) for n in (m, p, p))
    _, w = ops.multi_head_attention(q, k, v, heads, params, return_weights=True)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)
    # per-head attended values lie within the projected value rows' bounds
    vp = (v.data @ params["wv"].data + params["bv"].data).reshape(p, heads, e // heads)
    for h in range(heads):
        att = w[h] @ vp[:, h, :]
        assert np.all(att <= vp[:, h, :].max(axis=0) + 1e-9)
        assert np.all(att >= vp[:, h, :].min(axis=0) - 1e-9)


def test_smooth_l1_examples():
    assert float(ops.smooth_l1(t(np.full(5, 0.5)), t(np.zeros(5))).data) == pytest.approx(0.125)
    assert float(ops.smooth_l1(t(np.full(5, 2.0)), t(np.zeros(5))).data) == pytest.approx(1.5)
    for d, g in ((3.0, 1.0), (-3.0, -1.0), (0.2, 0.2)):
        p = Tensor(np.array([d]), trainable=True)
        with GradTape() as tape:
            loss = ops.smooth_l1(p, t([0.0]))
        tape.backward(loss)
        assert p.grad[0] == pytest.approx(g)
    with pytest.raises(ValueError):
        ops.smooth_l1(t([1.0, 2.0]), t([1.0]))


# -- tape ---------------------------------------------------------------------------

def test_sum_gradient_is_ones():
    w = Tensor(np.arange(6.0).reshape(2, 3), trainable=True)
    with GradTape() as tape:
        loss = ops.total(w)
    tape.backward(loss)
    np.testing.assert_array_equal(w.grad, np.ones((2, 3)))


def test_second_backward_errors():
    w = Tensor(np.ones(3), trainable=True)
    with GradTape() as tape:
        loss = ops.total(w)
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)


def test_backward_rejects_untaped_and_nonscalar():
    w = Tensor(np.ones(3), trainable=True)
    with GradTape() as tape:
        vec = ops.scale(w, 2.0)
    with pytest.raises(TapeError):
        tape.backward(vec)
    with GradTape() as tape:
        pass
    with pytest.raises(TapeError):
        tape.backward(ops.total(Tensor(np.ones(3))))


@pytest.mark.filterwarnings("ignore:overflow")
def test_non_finite_is_an_error():
    with pytest.raises(NonFiniteError):
        Tensor([np.nan])
    with pytest.raises(NonFiniteError):
        ops.scale(t([1e308]), 10.0)


def test_rank_limit():
    with pytest.raises(ValueError):
        Tensor(np.zeros((1, 1, 1, 1)))


def test_gradients_keep_parameter_shapes(rng):
    w = Tensor(rng.standard_normal((2, 3, 5)), trainable=True)
    b = Tensor(rng.standard_normal(2), trainable=True)
    with GradTape() as tape:
        loss = ops.total(ops.conv1d(t(rng.standard_normal((3, 11))), w, b))
    tape.backward(loss)
    assert w.grad.shape == w.shape and b.grad.shape == b.shape


# -- finite-difference gradient checks (eps=1e-5, rel < 1e-4) ------------------------

def _proj(rng, shape):
    r = t(rng.uniform(-1, 1, shape))
    return lambda y: ops.total(ops.mul(y, r))


def _u(rng, *shape):
    return rng.uniform(-1, 1, shape)


def _cases(rng):
    x34 = _u(rng, 3, 4)
    cases = {
        "add": (lambda a, b, P=_proj(rng, (3, 4)): P(ops.add(a, b)), [x34, _u(rng, 4)]),
        "sub": (lambda a, b, P=_proj(rng, (3, 4)): P(ops.sub(a, b)), [_u(rng, 3, 4), _u(rng, 3, 1)]),
        "mul": (lambda a, b, P=_proj(rng, (3, 4)): P(ops.mul(a, b)), [_u(rng, 3, 4), _u(rng, 3, 4)]),
        "scale": (lambda a, P=_proj(rng, (3, 4)): P(ops.scale(a, -1.7)), [_u(rng, 3, 4)]),
        "relu": (lambda a, P=_proj(rng, (3, 4)): P(ops.relu(a)), [_u(rng, 3, 4)]),
        "reshape": (lambda a, P=_proj(rng, (4, 3)): P(ops.reshape(a, (4, 3))), [_u(rng, 3, 4)]),
        "transpose": (lambda a, P=_proj(rng, (4, 2, 3)): P(ops.transpose(a, (2, 0, 1))), [_u(rng, 2, 3, 4)]),
        "concat": (lambda a, b, P=_proj(rng, (5, 4)): P(ops.concat([a, b])), [_u(rng, 2, 4), _u(rng, 3, 4)]),
        "fit_length_crop": (lambda a, P=_proj(rng, (2, 5)): P(ops.fit_length(a, 5)), [_u(rng, 2, 8)]),
        "fit_length_pad": (lambda a, P=_proj(rng, (2, 9)): P(ops.fit_length(a, 9)), [_u(rng, 2, 4)]),
        "mean_all": (lambda a: ops.mean(ops.mul(a, a)), [_u(rng, 3, 4)]),
        "mean_axis": (lambda a, P=_proj(rng, (3,)): P(ops.mean(a, axis=1)), [_u(rng, 3, 4)]),
        "weighted_sum": (lambda a, b: ops.weighted_sum([ops.mean(ops.mul(a, a)), ops.total(b)], [0.3, 2.0]),
                         [_u(rng, 3), _u(rng, 2)]),
        "matmul": (lambda a, b, P=_proj(rng, (3, 2)): P(ops.matmul(a, b)), [_u(rng, 3, 4), _u(rng, 4, 2)]),
        "matmul_batched": (lambda a, b, P=_proj(rng, (2, 3, 2)): P(ops.matmul(a, b)),
                           [_u(rng, 2, 3, 4), _u(rng, 2, 4, 2)]),
        "linear": (lambda a, w, b, P=_proj(rng, (3, 2)): P(ops.linear(a, w, b)),
                   [_u(rng, 3, 4), _u(rng, 4, 2), _u(rng, 2)]),
        "softmax": (lambda a, P=_proj(rng, (3, 4)): P(ops.softmax(a)), [_u(rng, 3, 4)]),
        "gather_rows": (lambda a, P=_proj(rng, (5, 3)): P(ops.gather_rows(a, [0, 2, 2, 1, 0])), [_u(rng, 4, 3)]),
        "conv1d": (lambda a, w, b, P=_proj(rng, (2, 9)): P(ops.conv1d(a, w, b, 1)),
                   [_u(rng, 3, 9), _u(rng, 2, 3, 3), _u(rng, 2)]),
        "conv1d_dilated": (lambda a, w, b, P=_proj(rng, (2, 11)): P(ops.conv1d(a, w, b, 2)),
                           [_u(rng, 2, 11), _u(rng, 2, 2, 5), _u(rng, 2)]),
        "maxpool1d": (lambda a, P=_proj(rng, (2, 4)): P(ops.maxpool1d(a)), [_u(rng, 2, 9)]),
        "resize_linear": (lambda a, P=_proj(rng, (2, 13)): P(ops.resize_linear(a, 13)), [_u(rng, 2, 6)]),
        "upsample_linear2x": (lambda a, P=_proj(rng, (2, 10)): P(ops.upsample_linear2x(a)), [_u(rng, 2, 5)]),
        "smooth_l1": (lambda a, b: ops.smooth_l1(a, b), [_u(rng, 6) * 3, _u(rng, 6)]),
    }
    keys = {k: _u(rng, *((4, 4) if k[0] == "w" else (4,))) for k in ATTN}

    proj = _proj(rng, (3, 4))

    def attn(q, kv, *ps):
        return proj(ops.multi_head_attention(q, kv, kv, 2, dict(zip(ATTN, ps))))

    cases["multi_head_attention"] = (attn, [_u(rng, 3, 4), _u(rng, 5, 4)] + [keys[k] for k in ATTN])
    return cases


CASE_NAMES = sorted(_cases(np.random.default_rng(0)))


@pytest.mark.parametrize("name", CASE_NAMES)
def test_primitive_gradient(name):
    fn, inputs = _cases(np.random.default_rng(7))[name]
    assert max_rel_error(fn, inputs) < 1e-4


def test_conv_smooth_l1_gradient_example(rng):
    x, y = _u(rng, 2, 12), _u(rng, 3, 12)

    def loss(w, b):
        return ops.smooth_l1(ops.conv1d(t(x), w, b, 1), t(y))

    assert max_rel_error(loss, [_u(rng, 3, 2, 5), _u(rng, 3)]) < 1e-4
