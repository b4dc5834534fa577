"""Forward-op contracts and reverse-mode gradients against finite differences."""

import numpy as np
import pytest

from diff3m.tensor import (
    Tensor,
    add_channel,
    avg_pool2d,
    concat,
    conv2d,
    global_avg_pool,
    gradients,
    matmul,
    mse,
    no_grad,
    relu,
    silu,
    softmax,
    upsample_nearest,
)

from gradcheck import assert_grads_close, fd_gradient


def scalarize(out, w_const):
    """Fixed random linear functional; makes gradient checks direction-rich."""
    return (out * Tensor(w_const)).sum()


class TestForwardCatalog:
    def test_matmul_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2)), Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_softmax_symmetry(self):
        out = softmax(Tensor([0.0, 0.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_conv2d_identity_kernel(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 5, 7, 1))
        w = np.ones((1, 1, 1, 1))
        out = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(1)))
        np.testing.assert_allclose(out.data, x)

    def test_elementwise_and_scalar(self):
        a = Tensor([1.0, 2.0, 3.0])
        b = Tensor([4.0, 5.0, 6.0])
        np.testing.assert_allclose((a + b).data, [5, 7, 9])
        np.testing.assert_allclose((a - b).data, [-3, -3, -3])
        np.testing.assert_allclose((a * b).data, [4, 10, 18])
        np.testing.assert_allclose((a / b).data, [0.25, 0.4, 0.5])
        np.testing.assert_allclose((a * 2.0).data, [2, 4, 6])
        np.testing.assert_allclose((1.0 + a).data, [2, 3, 4])

    def test_pool_upsample_shapes(self):
        x = Tensor(np.arange(16.0).reshape(1, 4, 4, 1))
        p = avg_pool2d(x, 2)
        assert p.shape == (1, 2, 2, 1)
        np.testing.assert_allclose(p.data[0, 0, 0, 0], (0 + 1 + 4 + 5) / 4)
        u = upsample_nearest(p, 2)
        assert u.shape == (1, 4, 4, 1)
        assert u.data[0, 0, 0, 0] == u.data[0, 1, 1, 0]

    def test_concat_channels(self):
        a = Tensor(np.ones((1, 2, 2, 3)))
        b = Tensor(np.zeros((1, 2, 2, 2)))
        out = concat([a, b], axis=-1)
        assert out.shape == (1, 2, 2, 5)

    def test_mse_value(self):
        a = Tensor([1.0, 2.0])
        b = Tensor([0.0, 0.0])
        assert mse(a, b).item() == pytest.approx(2.5)

    def test_shape_errors_name_shapes(self):
        with pytest.raises(ValueError, match=r"\(2,\).*\(3,\)"):
            Tensor([1.0, 2.0]) + Tensor([1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="matmul"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ValueError, match="conv2d"):
            conv2d(Tensor(np.ones((1, 4, 4, 2))), Tensor(np.ones((3, 3, 3, 1))), Tensor(np.zeros(1)))
        with pytest.raises(ValueError, match="mse"):
            mse(Tensor(np.ones(3)), Tensor(np.ones(4)))

    def test_finite_outputs_on_finite_inputs(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.standard_normal((2, 4, 4, 3)) * 50)
        w = Tensor(rng.standard_normal((3, 3, 3, 2)))
        for out in (
            conv2d(x, w, Tensor(np.zeros(2))),
            silu(x),
            relu(x),
            softmax(x, axis=-1),
            avg_pool2d(x, 2),
        ):
            assert np.all(np.isfinite(out.data))


class TestBackwardBasics:
    def test_square_gradient(self):
        x = Tensor(3.0, requires_grad=True)
        (x * x).backward()
        assert x.grad == pytest.approx(6.0)

    def test_mse_closed_form_gradient(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        mse(x, Tensor(np.zeros(5))).backward()
        np.testing.assert_allclose(x.grad, 2.0 * x.data / 5)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * x).backward()

    def test_gradient_accumulates_over_fanout(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * x + x * 3.0  # dy/dx = 2x + 3 = 7
        y.backward()
        assert x.grad == pytest.approx(7.0)

    def test_backward_linearity(self):
        rng = np.random.default_rng(3)
        xv = rng.standard_normal(6)
        yv = rng.standard_normal(6)

        def grad_of(make_loss):
            x = Tensor(xv, requires_grad=True)
            make_loss(x).backward()
            return x.grad

        y = Tensor(yv)
        g_a = grad_of(lambda x: mse(x, y))
        g_b = grad_of(lambda x: (x * x).sum())
        g_sum = grad_of(lambda x: mse(x, Tensor(yv)) + (x * x).sum())
        np.testing.assert_allclose(g_sum, g_a + g_b, rtol=1e-12)

    def test_untouched_parameter_gets_zero_gradient(self):
        used = Tensor(np.ones(3), requires_grad=True)
        unused = Tensor(np.ones(4), requires_grad=True)
        g = gradients((used * used).sum(), {"used": used, "unused": unused})
        assert np.all(g["unused"] == 0)
        np.testing.assert_allclose(g["used"], 2 * np.ones(3))

    def test_no_grad_skips_recording(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = x * x
        assert y._parents == ()

    def test_three_layer_network_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        x0 = rng.standard_normal((2, 5))
        arrays = [
            rng.standard_normal((5, 4)),
            rng.standard_normal((4, 3)),
            rng.standard_normal((3, 1)),
        ]
        target = rng.standard_normal((2, 1))

        def forward(arrs):
            h = Tensor(x0)
            h = silu(matmul(h, Tensor(arrs[0])))
            h = relu(matmul(h, Tensor(arrs[1])) + 0.3)
            h = matmul(h, Tensor(arrs[2]))
            return mse(h, Tensor(target)).item()

        params = {f"w{i}": Tensor(a, requires_grad=True) for i, a in enumerate(arrays)}
        h = Tensor(x0)
        h = silu(matmul(h, params["w0"]))
        h = relu(matmul(h, params["w1"]) + 0.3)
        h = matmul(h, params["w2"])
        grads = gradients(mse(h, Tensor(target)), params)

        for i in range(3):
            numeric = fd_gradient(forward, arrays, i)
            assert_grads_close(grads[f"w{i}"], numeric, label=f"layer {i}")


# every differentiable op, random inputs, vs central differences
OP_CASES = {
    "add": (lambda a: (Tensor(a[0], True), Tensor(a[1], True)),
            lambda t: t[0] + t[1], [(3, 4), (3, 4)]),
    "sub": (lambda a: (Tensor(a[0], True), Tensor(a[1], True)),
            lambda t: t[0] - t[1], [(3, 4), (3, 4)]),
    "mul": (lambda a: (Tensor(a[0], True), Tensor(a[1], True)),
            lambda t: t[0] * t[1], [(3, 4), (3, 4)]),
    "div": (lambda a: (Tensor(a[0], True), Tensor(a[1], True)),
            lambda t: t[0] / (t[1] * t[1] + 1.0), [(3, 4), (3, 4)]),
    "scalar_ops": (lambda a: (Tensor(a[0], True),),
                   lambda t: t[0] * 2.5 + 1.0 - t[0] / 4.0, [(3, 4)]),
    "neg": (lambda a: (Tensor(a[0], True),), lambda t: -t[0], [(3, 4)]),
    "matmul": (lambda a: (Tensor(a[0], True), Tensor(a[1], True)),
               lambda t: matmul(t[0], t[1]), [(3, 4), (4, 2)]),
    "conv2d": (lambda a: (Tensor(a[0], True), Tensor(a[1], True), Tensor(a[2], True)),
               lambda t: conv2d(t[0], t[1], t[2]), [(2, 4, 4, 3), (3, 3, 3, 2), (2,)]),
    "conv2d_1x1": (lambda a: (Tensor(a[0], True), Tensor(a[1], True), Tensor(a[2], True)),
                   lambda t: conv2d(t[0], t[1], t[2]), [(2, 4, 4, 3), (1, 1, 3, 2), (2,)]),
    "avg_pool2d": (lambda a: (Tensor(a[0], True),),
                   lambda t: avg_pool2d(t[0], 2), [(2, 4, 4, 3)]),
    "upsample": (lambda a: (Tensor(a[0], True),),
                 lambda t: upsample_nearest(t[0], 2), [(2, 3, 3, 2)]),
    "relu": (lambda a: (Tensor(a[0], True),), lambda t: relu(t[0]), [(4, 5)]),
    "silu": (lambda a: (Tensor(a[0], True),), lambda t: silu(t[0]), [(4, 5)]),
    "softmax": (lambda a: (Tensor(a[0], True),),
                lambda t: softmax(t[0], axis=1), [(4, 5)]),
    "mse": (lambda a: (Tensor(a[0], True), Tensor(a[1], True)),
            lambda t: mse(t[0], t[1]), [(3, 4), (3, 4)]),
    "concat": (lambda a: (Tensor(a[0], True), Tensor(a[1], True)),
               lambda t: concat([t[0], t[1]], axis=-1), [(2, 3, 3, 2), (2, 3, 3, 4)]),
    "add_channel": (lambda a: (Tensor(a[0], True), Tensor(a[1], True)),
                    lambda t: add_channel(t[0], t[1]), [(2, 3, 3, 4), (2, 4)]),
    "global_avg_pool": (lambda a: (Tensor(a[0], True),),
                        lambda t: global_avg_pool(t[0]), [(2, 3, 3, 4)]),
    "reshape": (lambda a: (Tensor(a[0], True),),
                lambda t: t[0].reshape(4, 3), [(3, 4)]),
    "transpose": (lambda a: (Tensor(a[0], True),), lambda t: t[0].t(), [(3, 4)]),
    "sum": (lambda a: (Tensor(a[0], True),), lambda t: t[0].sum(), [(3, 4)]),
    "mean": (lambda a: (Tensor(a[0], True),), lambda t: t[0].mean(), [(3, 4)]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradient_vs_finite_differences(name):
    wrap, op, shapes = OP_CASES[name]
    rng = np.random.default_rng(hash(name) % 2**32)
    # keep relu inputs away from the kink
    arrays = [rng.standard_normal(s) + (0.3 if name == "relu" else 0.0) for s in shapes]
    tensors = wrap(arrays)
    out = op(tensors)
    w_const = rng.standard_normal(out.shape)
    loss = scalarize(out, w_const)
    params = {f"a{i}": t for i, t in enumerate(tensors)}
    grads = gradients(loss, params)

    def forward(arrs):
        ts = wrap(arrs)
        return scalarize(op(ts), w_const).item()

    for i in range(len(arrays)):
        numeric = fd_gradient(forward, arrays, i)
        assert_grads_close(grads[f"a{i}"], numeric, label=name)


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(99)
        x = Tensor(rng.standard_normal((2, 8, 8, 1)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 3, 1, 4)), requires_grad=True)
        y = silu(conv2d(x, w, Tensor(np.zeros(4))))
        loss = mse(global_avg_pool(y), Tensor(np.zeros((2, 4))))
        g = gradients(loss, {"x": x, "w": w})
        return loss.item(), g["x"].tobytes(), g["w"].tobytes()

    assert run() == run()
