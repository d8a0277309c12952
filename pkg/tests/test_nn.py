import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specrl.nn import (
    MlpSpec,
    NonFiniteGradient,
    OptimizerState,
    ParamSet,
    TapeError,
    Tensor,
    adam_step,
    backward,
    concat,
    dumps_arrays,
    frozen,
    grad_check,
    init_mlp,
    load_params,
    loads_arrays,
    maximum,
    minimum,
    mlp_forward,
    no_grad,
    save_params,
    where,
)


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


class TestBackward:
    def test_square(self):
        x = leaf(3.0)
        backward(x * x)
        assert x.grad == pytest.approx(6.0)

    def test_constant_output_zero_grads(self):
        x = leaf([1.0, 2.0])
        backward((x * 0.0).sum())
        np.testing.assert_array_equal(x.grad, 0.0)

    def test_no_tape(self):
        with pytest.raises(TapeError):
            backward(Tensor(1.0))

    def test_broadcast_accumulates(self):
        a = leaf(np.ones((3, 2)))
        b = leaf(np.array([1.0, 2.0]))
        backward((a * b).sum())
        np.testing.assert_array_equal(b.grad, [3.0, 3.0])

    def test_shared_node(self):
        x = leaf(2.0)
        y = x * x
        backward(y + y)
        assert x.grad == pytest.approx(8.0)

    def test_no_grad_records_nothing(self):
        x = leaf(2.0)
        with no_grad():
            y = x * x
        assert not y.requires_grad

    def test_frozen(self):
        ps = ParamSet()
        ps.add("w", [1.0, 2.0])
        x = leaf([3.0, 4.0])
        with frozen(ps):
            backward((ps["w"] * x).sum())
        assert ps["w"].grad is None
        np.testing.assert_array_equal(x.grad, [1.0, 2.0])
        assert ps["w"].requires_grad

    def test_min_max_ties_go_to_first(self):
        a, b = leaf([1.0, 2.0]), leaf([1.0, 0.0])
        backward(minimum(a, b).sum())
        np.testing.assert_array_equal(a.grad, [1.0, 0.0])
        np.testing.assert_array_equal(b.grad, [0.0, 1.0])
        a.grad = b.grad = None
        backward(maximum(a, b).sum())
        np.testing.assert_array_equal(a.grad, [1.0, 1.0])

    @pytest.mark.parametrize("op", ["exp", "log", "sqrt", "tanh", "sigmoid", "elu", "softplus", "sin",
                                    "cos", "square", "relu"])
    def test_unary_ops(self, op):
        rng = np.random.default_rng(0)
        ps = ParamSet()
        ps.add("x", rng.uniform(0.2, 2.0, size=7) * rng.choice([-1, 1], size=7) if op not in ("log", "sqrt")
               else rng.uniform(0.2, 2.0, size=7))
        assert grad_check(lambda: getattr(ps["x"], op)().sum(), ps) < 1e-6

    def test_compound_graph(self):
        rng = np.random.default_rng(1)
        ps = ParamSet()
        ps.add("a", rng.normal(size=(4, 3)))
        ps.add("b", rng.normal(size=(3, 5)))
        idx = np.array([0, 2, 2, 1])

        def loss():
            h = ps["a"] @ ps["b"]
            z = concat([h, h[:, :2] / (1.0 + h[:, :2].square())], axis=1)
            z = where(z.data > 0, z, 0.5 * z)
            return z[np.arange(4), idx].sum() + z.logsumexp(axis=1).mean() + z.clip(-0.5, 0.5).mean() \
                + (z.transpose() ** 3).reshape(-1).mean()

        assert grad_check(loss, ps) < 1e-6


class TestMlp:
    def test_identity_weights(self):
        spec = MlpSpec((3, 3), activation="relu")
        ps = init_mlp(spec, np.random.default_rng(0))
        ps["l0.w"].data = np.eye(3)
        ps["l0.b"].data = np.zeros(3)
        x = np.array([0.5, 1.0, 2.0])
        np.testing.assert_array_equal(mlp_forward(spec, ps, x).data, x)

    def test_zero_weights(self):
        spec = MlpSpec((4, 8, 8, 2), activation="tanh", residual=True)
        ps = init_mlp(spec, np.random.default_rng(0))
        for _, t in ps.items():
            t.data = np.zeros_like(t.data)
        out = mlp_forward(spec, ps, np.random.default_rng(1).normal(size=(5, 4)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_scalar_tanh(self):
        spec = MlpSpec((1, 1), activation="tanh", output_activation=True)
        ps = init_mlp(spec, np.random.default_rng(0))
        ps["l0.w"].data = np.array([[2.0]])
        ps["l0.b"].data = np.array([1.0])
        assert mlp_forward(spec, ps, np.array([0.0])).data[0] == pytest.approx(math.tanh(1.0))
        assert math.tanh(1.0) == pytest.approx(0.76159, abs=1e-5)

    def test_residual_block_identity_at_zero(self):
        spec = MlpSpec((2, 6, 6, 6, 2), activation="elu", residual=True)
        ps = init_mlp(spec, np.random.default_rng(3))
        for i in (1, 2):
            ps[f"b{i}.w2"].data[:] = 0.0
            ps[f"b{i}.b2"].data[:] = 0.0
        x = np.random.default_rng(4).normal(size=(3, 2))
        pre = x @ ps["l0.w"].data + ps["l0.b"].data
        h = np.where(pre > 0, pre, np.expm1(np.minimum(pre, 0)))
        expected = h @ ps["l3.w"].data + ps["l3.b"].data
        np.testing.assert_array_equal(mlp_forward(spec, ps, x).data, expected)

    def test_shape_mismatch(self):
        spec = MlpSpec((3, 2))
        with pytest.raises(ValueError):
            mlp_forward(spec, init_mlp(spec, np.random.default_rng(0)), np.zeros(4))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            MlpSpec((3,))
        with pytest.raises(ValueError):
            MlpSpec((3, 4, 5, 2), residual=True)
        with pytest.raises(ValueError):
            MlpSpec((3, 2), activation="gelu")

    @pytest.mark.parametrize("act", ["relu", "tanh", "elu", "sinusoidal"])
    def test_gradients(self, act):
        spec = MlpSpec((3, 6, 6, 2), activation=act, residual=True)
        ps = init_mlp(spec, np.random.default_rng(7))
        x = np.random.default_rng(8).normal(size=(4, 3))
        assert grad_check(lambda: mlp_forward(spec, ps, x).square().sum(), ps) < 1e-6

    def test_layer_norm_flag(self):
        spec = MlpSpec((3, 6, 6, 2), residual=True, layer_norm=True)
        ps = init_mlp(spec, np.random.default_rng(7))
        x = np.random.default_rng(8).normal(size=(4, 3))
        assert grad_check(lambda: mlp_forward(spec, ps, x).square().sum(), ps) < 1e-6


class TestAdam:
    def test_zero_gradient(self):
        ps = ParamSet()
        ps.add("p", [1.0, -2.0])
        ps["p"].grad = np.zeros(2)
        opt = OptimizerState(learning_rate=0.1)
        adam_step(opt, ps)
        np.testing.assert_array_equal(ps["p"].data, [1.0, -2.0])
        assert opt.step == 1

    def test_first_step_closed_form(self):
        ps = ParamSet()
        ps.add("p", [0.0, 0.0])
        g = np.array([0.3, -4.0])
        ps["p"].grad = g.copy()
        opt = OptimizerState(learning_rate=0.01)
        adam_step(opt, ps)
        np.testing.assert_allclose(ps["p"].data, -0.01 * g / (np.abs(g) + opt.eps), rtol=1e-12)
        assert ps["p"].grad is None

    def test_quadratic_convergence(self):
        # oracle: the scalar recursion written out by hand
        p, m, v = 0.0, 0.0, 0.0
        for t in range(1, 101):
            g = 2 * (p - 3)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            p -= 0.1 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
        ps = ParamSet()
        ps.add("p", 0.0)
        opt = OptimizerState(learning_rate=0.1)
        for _ in range(100):
            backward((ps["p"] - 3.0).square())
            adam_step(opt, ps)
        assert float(ps["p"].data) == pytest.approx(p, abs=1e-12)
        assert abs(float(ps["p"].data) - 3.0) < 0.1

    def test_nan_gradient_names_parameter(self):
        ps = ParamSet()
        ps.add("weights", [1.0])
        ps["weights"].grad = np.array([np.nan])
        with pytest.raises(NonFiniteGradient, match="weights"):
            adam_step(OptimizerState(), ps)


class TestGradCheck:
    def test_quadratic(self):
        ps = ParamSet()
        ps.add("p", np.random.default_rng(0).normal(size=10))
        assert grad_check(lambda: ps["p"].square().sum(), ps) < 1e-8

    def test_detects_wrong_gradient(self):
        ps = ParamSet()
        ps.add("p", [1.0, 2.0])

        def bad():
            return Tensor._make(np.sum(ps["p"].data ** 2), (ps["p"],), lambda g: (g * ps["p"].data,))

        assert grad_check(bad, ps) > 0.1

    def test_non_finite_loss(self):
        ps = ParamSet()
        ps.add("p", [-1.0])
        with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
            grad_check(lambda: ps["p"].log().sum(), ps)


class TestParamsAndCheckpoint:
    def test_duplicate_names(self):
        ps = ParamSet()
        ps.add("a", 1.0)
        with pytest.raises(KeyError):
            ps.add("a", 2.0)

    def test_soft_update_exact(self):
        a, b = ParamSet(), ParamSet()
        a.add("w", [1.0, 2.0])
        b.add("w", [3.0, 6.0])
        a.soft_update(b, 0.25)
        np.testing.assert_array_equal(a["w"].data, 0.75 * np.array([1.0, 2.0]) + 0.25 * np.array([3.0, 6.0]))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.text(min_size=1, max_size=8),
                              st.lists(st.integers(1, 4), min_size=0, max_size=3)),
                    min_size=1, max_size=5, unique_by=lambda t: t[0]),
           st.integers(0, 1000))
    def test_round_trip_bits(self, entries, seed):
        rng = np.random.default_rng(seed)
        arrays = {name: rng.normal(size=tuple(shape)) for name, shape in entries}
        back = loads_arrays(dumps_arrays(arrays))
        assert list(back) == list(arrays)
        for k in arrays:
            assert back[k].shape == arrays[k].shape
            assert back[k].tobytes() == np.asarray(arrays[k]).tobytes()

    def test_file_layout(self, tmp_path):
        ps = ParamSet()
        ps.add("w", [[1.5, -2.0]])
        save_params(tmp_path / "c.bin", ps)
        raw = (tmp_path / "c.bin").read_bytes()
        # uint32 len, name, uint32 ndim, 2 x uint64 shape, 2 x float64
        assert len(raw) == 4 + 1 + 4 + 16 + 16
        assert raw[:4] == (1).to_bytes(4, "little") and raw[4:5] == b"w"
        np.testing.assert_array_equal(load_params(tmp_path / "c.bin")["w"], [[1.5, -2.0]])
