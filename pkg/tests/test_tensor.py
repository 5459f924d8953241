import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earlypcr import tensor as T
from earlypcr.tensor import GradientError, NonFiniteError, ShapeError, Tape, Tensor


def param(arr):
    return Tensor(np.array(arr, dtype=float), requires_grad=True)


class TestPrimitives:
    def test_relu(self):
        assert T.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]

    def test_sigmoid_at_zero(self):
        assert T.sigmoid(Tensor(0.0)).item() == 0.5

    def test_matmul_identity(self, rng):
        a = rng.normal(size=(3, 3))
        np.testing.assert_array_equal(T.matmul(Tensor(np.eye(3)), Tensor(a)).data, a)

    def test_scalar_broadcast_allowed(self):
        out = T.mul(Tensor([1.0, 2.0]), Tensor(3.0))
        assert out.data.tolist() == [3.0, 6.0]

    @pytest.mark.parametrize("op", [T.add, T.sub, T.mul])
    def test_shape_mismatch_names_op_and_shapes(self, op):
        with pytest.raises(ShapeError) as exc:
            op(Tensor(np.ones(3)), Tensor(np.ones(4)))
        msg = str(exc.value)
        assert op.__name__ in msg and "(3,)" in msg and "(4,)" in msg

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeError, match="matmul"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_concat_and_slice(self):
        x = T.concat([Tensor([1.0, 2.0]), Tensor([3.0])])
        assert x.data.tolist() == [1.0, 2.0, 3.0]
        assert x[1:].data.tolist() == [2.0, 3.0]

    def test_nothing_recorded_without_tape(self):
        x = param([1.0, 2.0])
        y = T.mul(x, x)
        assert y._tape is None


class TestBackward:
    def test_sum_gradient(self):
        x = param([1.0, 2.0, 3.0])
        with Tape() as tape:
            loss = T.sum(x)
        tape.backward(loss)
        assert x.grad.tolist() == [1.0, 1.0, 1.0]

    def test_square_gradient(self):
        x = param([1.0, 2.0, 3.0])
        with Tape() as tape:
            loss = T.sum(T.mul(x, x))
        tape.backward(loss)
        assert x.grad.tolist() == [2.0, 4.0, 6.0]

    def test_fan_out_accumulates_exactly(self, rng):
        x = param(rng.normal(size=5))
        with Tape() as tape:
            y = T.tanh(x)
            single = T.sum(y)
        tape.backward(single)
        g1 = x.grad.copy()
        with Tape() as tape:
            y = T.tanh(x)
            double = T.add(T.sum(y), T.sum(y))
        tape.backward(double)
        np.testing.assert_array_equal(x.grad, 2 * g1)

    def test_non_scalar_loss(self):
        x = param([1.0, 2.0])
        with Tape() as tape:
            y = T.mul(x, Tensor(2.0))
        with pytest.raises(GradientError, match="scalar"):
            tape.backward(y)

    def test_backward_twice(self):
        x = param([1.0])
        with Tape() as tape:
            loss = T.sum(x)
        tape.backward(loss)
        with pytest.raises(GradientError, match="already"):
            tape.backward(loss)

    def test_unreached_leaf_gets_zero_gradient(self):
        x, y = param([1.0]), param([2.0, 3.0])
        with Tape() as tape:
            loss = T.add(T.sum(x), T.mul(T.sum(y), Tensor(0.0)))
            unused = param([5.0])
            T.mul(unused, unused)
        tape.backward(loss)
        assert x.grad.tolist() == [1.0]
        assert unused.grad.tolist() == [0.0]

    def test_tape_is_topologically_ordered(self, rng):
        x = param(rng.normal(size=(2, 3)))
        w = param(rng.normal(size=(4, 3)))
        with Tape() as tape:
            h = T.relu(T.linear(x, w))
            T.mean(T.sigmoid(h))
        for rec in tape.records:
            assert all(i < rec.output_id for i in rec.input_ids)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_debug_checks_catch_non_finite(self):
        with T.debug_checks():
            with pytest.raises(NonFiniteError, match="mul"):
                T.mul(Tensor([np.inf]), Tensor(0.0))

    def test_deterministic_gradients(self, rng):
        def run():
            r = np.random.default_rng(9)
            x = Tensor(r.normal(size=(1, 2, 5, 5, 5)))
            w = param(r.normal(size=(3, 2, 3, 3, 3)))
            with Tape() as tape:
                loss = T.mean(T.relu(T.conv3d(x, w, padding=1)))
            tape.backward(loss)
            return loss.data, w.grad

        a, b = run(), run()
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


class TestConv3d:
    def test_pointwise_scaling(self, rng):
        x = rng.normal(size=(1, 4, 5, 3))
        out = T.conv3d(Tensor(x), Tensor(np.full((1, 1, 1, 1, 1), 2.0)))
        np.testing.assert_array_equal(out.data, 2 * x)

    def test_window_sum(self):
        out = T.conv3d(Tensor(np.ones((1, 3, 3, 3))), Tensor(np.ones((1, 1, 2, 2, 2))))
        assert out.shape == (1, 2, 2, 2)
        assert np.all(out.data == 8.0)

    @pytest.mark.parametrize("k", [1, 2, 3])
    @pytest.mark.parametrize("stride", [1, 2])
    @pytest.mark.parametrize("padding", [0, 1])
    def test_shape_formula_and_paths_agree(self, k, stride, padding, rng):
        x = rng.normal(size=(2, 6, 5, 7))
        w = rng.normal(size=(3, 2, k, k, k))
        fast = T.conv3d(Tensor(x), Tensor(w), stride=stride, padding=padding)
        slow = T.conv3d(Tensor(x), Tensor(w), stride=stride, padding=padding, method="direct")
        expect = tuple((n + 2 * padding - k) // stride + 1 for n in (6, 5, 7))
        assert fast.shape == (3,) + expect
        np.testing.assert_allclose(fast.data, slow.data, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (1, 2)])
    def test_gradient_paths_agree(self, stride, padding, rng):
        x0 = rng.normal(size=(2, 2, 5, 6, 5))
        w0 = rng.normal(size=(3, 2, 3, 3, 3))
        g = {}
        for method in ("im2col", "direct"):
            x, w = param(x0), param(w0)
            with Tape() as tape:
                out = T.conv3d(x, w, stride=stride, padding=padding, method=method)
                loss = T.sum(T.mul(out, out))
            tape.backward(loss)
            g[method] = (x.grad, w.grad)
        for a, b in zip(g["im2col"], g["direct"]):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-10)

    def test_sum_gradient_matches_finite_differences(self, rng):
        x = param(rng.normal(size=(1, 4, 4, 4)))
        w = param(rng.normal(size=(2, 1, 3, 3, 3)))
        report = T.grad_check(lambda p: T.sum(T.conv3d(p["x"], p["w"], padding=1)),
                              {"x": x, "w": w}, tolerance=1e-6)
        assert report.passed, report.errors

    def test_kernel_larger_than_input(self):
        with pytest.raises(ShapeError, match="conv3d"):
            T.conv3d(Tensor(np.ones((1, 2, 2, 2))), Tensor(np.ones((1, 1, 3, 3, 3))))

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            T.conv3d(Tensor(np.ones((2, 4, 4, 4))), Tensor(np.ones((1, 3, 3, 3, 3))))


class TestGradCheck:
    def test_linear_layer(self, rng):
        params = {"w": param(rng.normal(size=(3, 4))), "b": param(rng.normal(size=3))}
        x = Tensor(rng.normal(size=(5, 4)))
        report = T.grad_check(lambda p: T.mean(T.tanh(T.linear(x, p["w"], p["b"]))), params)
        assert report.passed and report.worst < 1e-5

    def test_corrupted_gradient_is_caught(self, rng):
        def bad_square(x):
            return T.record_op("bad_square", x.data ** 2, (x,),
                               lambda g, needs: (1.01 * 2 * x.data * g,))

        params = {"x": param(rng.uniform(0.5, 1.5, size=4))}
        report = T.grad_check(lambda p: T.sum(bad_square(p["x"])), params)
        assert not report.passed
        assert report.worst == pytest.approx(0.01 / 1.01, rel=1e-3)

    def test_non_scalar_loss(self):
        with pytest.raises(GradientError):
            T.grad_check(lambda p: T.mul(p["x"], Tensor(2.0)), {"x": param([1.0, 2.0])})

    def test_composite_graph(self, rng):
        x = Tensor(rng.normal(size=(2, 2, 4, 4, 4)))
        labels = np.array([1.0, 0.0])
        params = {"w": param(rng.normal(size=(3, 2, 3, 3, 3)) * 0.3),
                  "fc": param(rng.normal(size=(1, 3)))}

        def build(p):
            h = T.relu(T.conv3d(x, p["w"], padding=1))
            pooled = T.mean(h, axis=(2, 3, 4))
            logit = T.reshape(T.sigmoid(T.matmul(pooled, T.reshape(p["fc"], (3, 1)))), (2,))
            return T.bce_with_logits(logit, labels)

        assert T.grad_check(build, params).passed


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1),
       op=st.sampled_from(["add", "sub", "mul", "matmul", "relu", "sigmoid", "tanh",
                           "sum", "mean", "concat", "getitem", "instance_norm"]))
def test_primitive_gradients_property(seed, op):
    r = np.random.default_rng(seed)
    a = param(r.normal(size=(3, 4)))
    b = param(r.normal(size=(3, 4)))
    if op == "relu":
        a.data[np.abs(a.data) < 1e-3] = 0.5  # keep away from the kink
    builders = {
        "add": lambda p: T.sum(T.mul(T.add(p["a"], p["b"]), p["a"])),
        "sub": lambda p: T.sum(T.mul(T.sub(p["a"], p["b"]), p["a"])),
        "mul": lambda p: T.sum(T.mul(p["a"], p["b"])),
        "matmul": lambda p: T.sum(T.tanh(T.matmul(p["a"], T.reshape(p["b"], (4, 3))))),
        "relu": lambda p: T.sum(T.mul(T.relu(p["a"]), p["b"])),
        "sigmoid": lambda p: T.sum(T.mul(T.sigmoid(p["a"]), p["b"])),
        "tanh": lambda p: T.sum(T.mul(T.tanh(p["a"]), p["b"])),
        "sum": lambda p: T.sum(T.mul(T.sum(p["a"], axis=0), T.sum(p["b"], axis=0))),
        "mean": lambda p: T.sum(T.mul(T.mean(p["a"], axis=1), T.mean(p["b"], axis=1))),
        "concat": lambda p: T.sum(T.tanh(T.concat([p["a"], p["b"]], axis=1))),
        "getitem": lambda p: T.sum(T.mul(p["a"][1:, :2], p["b"][:2, 2:])),
        "instance_norm": lambda p: T.sum(T.mul(
            T.instance_norm(T.reshape(p["a"], (3, 2, 2, 1)), p["b"][0, :3], p["b"][1, :3]),
            Tensor(np.arange(12.0).reshape(3, 2, 2, 1)))),
    }
    report = T.grad_check(builders[op], {"a": a, "b": b})
    assert report.passed, (op, report.errors)
