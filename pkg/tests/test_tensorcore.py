import math

import numpy as np
import pytest

from morphkit import tensorcore as tc
from morphkit.errors import NumericalError, ShapeError


def rnd(*shape, seed=0, scale=0.5):
    return np.random.default_rng(seed).normal(scale=scale, size=shape)


class TestForwardValues:
    def test_softmax_normalized_and_positive(self):
        for seed in range(5):
            v = tc.tensor(rnd(11, seed=seed, scale=3.0))
            s = tc.softmax(v).data
            assert abs(s.sum() - 1.0) < 1e-12
            assert np.all(s > 0)

    def test_log_softmax_of_uniform_logits_is_minus_log_v(self):
        for size in (2, 20, 1000):
            out = tc.log_softmax(tc.tensor(np.zeros(size))).data
            assert np.all(np.abs(out + math.log(size)) < 1e-12)

    def test_matmul_identity(self):
        a = rnd(4, 4, seed=1)
        out = tc.matmul(tc.tensor(np.eye(4)), tc.tensor(a))
        assert np.array_equal(out.data, a)

    def test_concat_split_inverse(self):
        v = tc.tensor(rnd(9, seed=2))
        parts = tc.split(v, [2, 3, 4])
        back = tc.concat(parts)
        assert np.array_equal(back.data, v.data)

    def test_shape_error_names_kind(self):
        with pytest.raises(ShapeError, match="matmul"):
            tc.matmul(tc.tensor(rnd(3, 2)), tc.tensor(rnd(3, 2)))
        with pytest.raises(ShapeError, match="softmax"):
            tc.softmax(tc.tensor(rnd(2, 2)))

    def test_apply_dispatch(self):
        out = tc.apply("tanh", tc.tensor(np.zeros(3)))
        assert np.array_equal(out.data, np.zeros(3))
        with pytest.raises(ValueError, match="unknown op kind"):
            tc.apply("convolve", tc.tensor(np.zeros(3)))

    def test_log_rejects_non_positive(self):
        with pytest.raises(NumericalError):
            tc.log(tc.tensor(np.array([1.0, 0.0])))


class TestBackward:
    def test_sum_gradient_is_ones(self):
        w = tc.tensor(rnd(6, seed=3), requires_grad=True)
        w.zero_grad()
        with tc.Tape() as tape:
            tape.backward(tc.tensor_sum(w))
        assert np.array_equal(w.grad, np.ones(6))

    def test_quadratic_gradient(self):
        w = tc.tensor(rnd(6, seed=4), requires_grad=True)
        w.zero_grad()
        with tc.Tape() as tape:
            tape.backward(tc.tensor_sum(tc.mul(w, w)))
        assert np.allclose(w.grad, 2 * w.data, atol=1e-12)

    def test_tanh_derivative_at_zero_vs_central_difference(self):
        h = 1e-6
        w = tc.tensor(np.zeros(1), requires_grad=True)
        w.zero_grad()
        with tc.Tape() as tape:
            tape.backward(tc.tensor_sum(tc.tanh(w)))
        analytic = w.grad[0]
        fd = (math.tanh(h) - math.tanh(-h)) / (2 * h)
        assert abs(analytic - fd) / max(abs(fd), 1e-12) < 1e-7

    def test_non_scalar_loss_rejected(self):
        w = tc.tensor(rnd(3), requires_grad=True)
        with tc.Tape() as tape:
            y = tc.tanh(w)
            with pytest.raises(ShapeError, match="scalar"):
                tape.backward(y)

    def test_unreached_parameter_keeps_zero_grad(self):
        used = tc.tensor(rnd(3, seed=5), requires_grad=True)
        unused = tc.tensor(rnd(3, seed=6), requires_grad=True)
        used.zero_grad()
        unused.zero_grad()
        with tc.Tape() as tape:
            tape.backward(tc.tensor_sum(used))
        assert np.array_equal(unused.grad, np.zeros(3))

    def test_backward_linearity(self):
        # grad(a*f + b*g) == a*grad(f) + b*grad(g)
        w = tc.tensor(rnd(5, seed=7), requires_grad=True)

        def grad_of(builder):
            w.zero_grad()
            with tc.Tape() as tape:
                tape.backward(builder())
            return w.grad.copy()

        f = lambda: tc.tensor_sum(tc.tanh(w))
        g = lambda: tc.tensor_sum(tc.mul(w, w))
        combo = lambda: tc.add(tc.scale(f(), 2.5), tc.scale(g(), -1.25))
        lhs = grad_of(combo)
        rhs = 2.5 * grad_of(f) - 1.25 * grad_of(g)
        assert np.allclose(lhs, rhs, atol=1e-10)

    def test_no_grad_suppresses_recording(self):
        w = tc.tensor(rnd(3, seed=8), requires_grad=True)
        with tc.Tape() as tape:
            with tc.no_grad():
                tc.tensor_sum(tc.tanh(w))
            assert len(tape) == 0


class TestCompositeGradients:
    def test_grad_check_linear_model(self):
        w = tc.tensor(rnd(4, 3, seed=9), requires_grad=True, name="w")
        x = tc.tensor(rnd(3, seed=10))

        def model():
            return tc.tensor_sum(tc.matmul(w, x))

        err = tc.grad_check(model, [w], h=1e-6)
        assert err < 1e-9

    def test_grad_check_attention_stack(self):
        rng = np.random.default_rng(11)
        emb = tc.tensor(rng.normal(scale=0.3, size=(7, 4)), requires_grad=True, name="emb")
        w = tc.tensor(rng.normal(scale=0.3, size=(5, 4)), requires_grad=True, name="w")
        v = tc.tensor(rng.normal(scale=0.3, size=5), requires_grad=True, name="v")

        def model():
            rows = tc.gather_rows(emb, [0, 2, 5])
            scores = tc.matmul(tc.tanh(tc.matmul(rows, tc.transpose(w))), v)
            alpha = tc.softmax(scores)
            ctx = tc.weighted_sum(alpha, rows)
            return tc.tensor_sum(tc.log_softmax(ctx))

        err = tc.grad_check(model, [emb, w, v], h=1e-5)
        assert err < 1e-6

    def test_grad_check_single_gru_cell(self):
        rng = np.random.default_rng(12)
        n_in, n_h = 5, 4
        ws = [tc.tensor(rng.normal(scale=0.4, size=(n_h, n_in + n_h)),
                        requires_grad=True, name=f"w{i}") for i in range(3)]
        bs = [tc.tensor(rng.normal(scale=0.1, size=n_h),
                        requires_grad=True, name=f"b{i}") for i in range(3)]
        x = tc.tensor(rng.normal(size=n_in), requires_grad=True, name="x")
        h = tc.tensor(rng.normal(size=n_h), requires_grad=True, name="h")

        def model():
            out = tc.gru_cell(x, h, ws[0], ws[1], ws[2], bs[0], bs[1], bs[2])
            return tc.tensor_sum(tc.tanh(out))

        err = tc.grad_check(model, ws + bs + [x, h], h=1e-5)
        assert err < 1e-5

    def test_gru_cell_without_bias_matches_zero_bias(self):
        rng = np.random.default_rng(13)
        n_in, n_h = 3, 4
        ws = [tc.tensor(rng.normal(size=(n_h, n_in + n_h))) for _ in range(3)]
        zeros = [tc.tensor(np.zeros(n_h)) for _ in range(3)]
        x = tc.tensor(rng.normal(size=n_in))
        h = tc.tensor(rng.normal(size=n_h))
        a = tc.gru_cell(x, h, *ws)
        b = tc.gru_cell(x, h, *ws, *zeros)
        assert np.allclose(a.data, b.data, atol=1e-15)

    def test_gru_update_gate_driven_to_zero_keeps_state(self):
        n_in, n_h = 3, 2
        x = tc.tensor(np.ones(n_in))
        h = tc.tensor(np.array([0.3, -0.7]))
        # rows of wz sum against [x;h]=(1,1,1,0.3,-0.7): pick huge negatives
        wz = tc.tensor(np.full((n_h, n_in + n_h), -80.0))
        wr = tc.tensor(np.zeros((n_h, n_in + n_h)))
        wh = tc.tensor(rnd(n_h, n_in + n_h, seed=14))
        out = tc.gru_cell(x, h, wz, wr, wh)
        assert np.allclose(out.data, h.data, atol=1e-40)

    def test_gru_update_gate_driven_to_one_gives_candidate(self):
        n_in, n_h = 3, 2
        x = tc.tensor(np.ones(n_in))
        h = tc.tensor(np.array([0.3, -0.7]))
        wz = tc.tensor(np.full((n_h, n_in + n_h), 80.0))
        wr = tc.tensor(np.zeros((n_h, n_in + n_h)))  # r = 0.5
        wh = tc.tensor(rnd(n_h, n_in + n_h, seed=15))
        out = tc.gru_cell(x, h, wz, wr, wh)
        cat_r = np.concatenate([x.data, 0.5 * h.data])
        cand = np.tanh(wh.data @ cat_r)
        assert np.allclose(out.data, cand, atol=1e-12)

    def test_zeroed_gru_is_fixed_point_at_zero_state(self):
        n_in, n_h = 4, 3
        x = tc.tensor(rnd(n_in, seed=16))
        h = tc.tensor(np.zeros(n_h))
        zero_w = tc.tensor(np.zeros((n_h, n_in + n_h)))
        out = tc.gru_cell(x, h, zero_w, zero_w, zero_w)
        assert np.array_equal(out.data, np.zeros(n_h))


class TestAdam:
    def test_first_step_is_signed_lr(self):
        w = tc.tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        w.zero_grad()
        w.grad[:] = np.array([0.5, -0.25, 2.0])
        before = w.data.copy()
        state = tc.AdamState([w], lr=0.001)
        tc.adam_step([w], state)
        update = w.data - before
        assert np.allclose(update, -0.001 * np.sign([0.5, -0.25, 2.0]), rtol=1e-4)
        assert state.t == 1
        assert np.array_equal(w.grad, np.zeros(3))  # cleared after the step

    def test_zero_gradient_leaves_parameters_unchanged(self):
        w = tc.tensor(np.array([1.0, 2.0]), requires_grad=True)
        w.zero_grad()
        state = tc.AdamState([w])
        before = w.data.copy()
        tc.adam_step([w], state)
        assert np.array_equal(w.data, before)

    def test_missing_gradient_rejected(self):
        w = tc.tensor(np.zeros(2), requires_grad=True)
        state = tc.AdamState([w])
        with pytest.raises(NumericalError, match="no gradient"):
            tc.adam_step([w], state)

    def test_scale_awareness_at_first_step(self):
        g = np.array([0.4, -1.5, 0.9])
        updates = []
        for factor in (1.0, 2.0):
            w = tc.tensor(np.zeros(3), requires_grad=True)
            w.zero_grad()
            w.grad[:] = factor * g
            state = tc.AdamState([w], lr=0.01)
            tc.adam_step([w], state)
            updates.append(w.data.copy())
        assert np.allclose(updates[0], updates[1], rtol=1e-6)

    def test_converges_on_quadratic(self):
        # oracle: known optimum w* of f(w) = ||w - w*||^2
        rng = np.random.default_rng(17)
        target = rng.normal(size=8)
        w = tc.tensor(target + rng.normal(scale=0.5, size=8), requires_grad=True)
        state = tc.AdamState([w], lr=0.05)
        for _ in range(200):
            w.zero_grad()
            w.grad[:] = 2.0 * (w.data - target)
            tc.adam_step([w], state)
        assert np.linalg.norm(w.data - target) < 1e-2


class TestCheckpoint:
    def test_round_trip_float64(self, tmp_path):
        arrays = {"a": rnd(3, 4, seed=18), "b": rnd(5, seed=19),
                  "c": np.array(2.5)}
        path = str(tmp_path / "ckpt.bin")
        tc.save_arrays(path, arrays)
        loaded = tc.load_arrays(path)
        assert list(loaded) == ["a", "b", "c"]
        for k in arrays:
            assert np.array_equal(loaded[k], arrays[k])

    def test_round_trip_float32_storage(self, tmp_path):
        arrays = {"w": rnd(4, 4, seed=20)}
        path = str(tmp_path / "ckpt32.bin")
        tc.save_arrays(path, arrays, float_width=4)
        loaded = tc.load_arrays(path)
        assert loaded["w"].dtype == np.float64
        assert np.allclose(loaded["w"], arrays["w"], atol=1e-6)

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE")
        from morphkit.errors import DataError
        with pytest.raises(DataError):
            tc.load_arrays(str(path))

    def test_deterministic_bytes(self, tmp_path):
        arrays = {"x": rnd(6, seed=21)}
        p1, p2 = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
        tc.save_arrays(p1, arrays)
        tc.save_arrays(p2, arrays)
        assert open(p1, "rb").read() == open(p2, "rb").read()
