import numpy as np
import pytest

from bandfaith.autodiff import Tape
from bandfaith.errors import NonScalarOutput, ShapeMismatch, StaleTape
from fd_cases import N_KINDS, check_case, make_case


class TestGradientChecks:
    @pytest.mark.parametrize("kind", range(N_KINDS))
    def test_each_kind(self, kind):
        case = make_case(kind)
        assert check_case(case, seed=kind) < 1e-4, case.name


class TestPrimitives:
    def test_relu_subgradient_zero_at_kink(self):
        tape = Tape()
        x = tape.leaf(np.array([-1.0, 0.0, 2.0]), name="x")
        grads = tape.backward(tape.reduce_sum(tape.relu(x)))
        np.testing.assert_array_equal(grads["x"], [0.0, 0.0, 1.0])

    def test_maxpool_first_max_on_ties(self):
        tape = Tape()
        x = tape.leaf(np.ones((1, 1, 2, 2)), name="x")
        grads = tape.backward(tape.reduce_sum(tape.maxpool2x2(x)))
        np.testing.assert_array_equal(grads["x"][0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_maxpool_drops_odd_edge(self):
        tape = Tape()
        out = tape.maxpool2x2(tape.leaf(np.arange(15.0).reshape(1, 1, 3, 5), name="x"))
        assert out.shape == (1, 1, 1, 2)
        np.testing.assert_array_equal(out.value[0, 0], [[6.0, 8.0]])

    def test_conv_matches_direct_loop(self, rng):
        x = rng.standard_normal((1, 2, 5, 4))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        tape = Tape()
        out = tape.conv2d(tape.constant(x), tape.constant(w), tape.constant(b), stride=2, padding=1).value
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        for o in range(3):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    ref = np.sum(xp[0, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]) + b[o]
                    assert out[0, o, i, j] == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_l2_normalize_unit_rows(self, rng):
        tape = Tape()
        out = tape.l2_normalize(tape.constant(rng.standard_normal((4, 7)))).value
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, rtol=1e-12)

    def test_l2_normalize_zero_row_finite(self):
        tape = Tape()
        x = tape.leaf(np.zeros((1, 3)), name="x")
        grads = tape.backward(tape.reduce_sum(tape.l2_normalize(x)))
        assert np.all(np.isfinite(grads["x"]))

    def test_softmax_cross_entropy_value(self):
        tape = Tape()
        loss = tape.softmax_cross_entropy(tape.constant(np.zeros((2, 4))), [0, 3])
        assert float(loss.value) == pytest.approx(np.log(4.0))

    def test_fan_out_accumulates(self):
        tape = Tape()
        x = tape.leaf(np.array([3.0]), name="x")
        grads = tape.backward(tape.reduce_sum(tape.mul(x, x)))
        np.testing.assert_array_equal(grads["x"], [6.0])


class TestTapeContract:
    def test_stale_tape(self):
        tape = Tape()
        out = tape.reduce_sum(tape.leaf(np.ones(3), name="x"))
        tape.backward(out)
        with pytest.raises(StaleTape):
            tape.backward(out)

    def test_non_scalar(self):
        tape = Tape()
        with pytest.raises(NonScalarOutput):
            tape.backward(tape.relu(tape.leaf(np.ones(3), name="x")))

    def test_shape_mismatch(self):
        tape = Tape()
        with pytest.raises(ShapeMismatch):
            tape.dense(tape.constant(np.ones((2, 3))), tape.constant(np.ones((4, 2))), tape.constant(np.ones(2)))
        with pytest.raises(ShapeMismatch):
            tape.conv2d(tape.constant(np.ones((1, 2, 4, 4))), tape.constant(np.ones((1, 3, 3, 3))),
                        tape.constant(np.ones(1)))

    def test_constants_get_no_gradient(self):
        tape = Tape()
        x = tape.leaf(np.ones(2), name="x")
        c = tape.constant(np.ones(2), name="c")
        grads = tape.backward(tape.reduce_sum(tape.mul(x, c)))
        assert set(grads) == {"x"}

    def test_unused_leaf_gets_zero(self):
        tape = Tape()
        x = tape.leaf(np.ones(2), name="x")
        tape.leaf(np.ones(3), name="unused")
        grads = tape.backward(tape.reduce_sum(x))
        np.testing.assert_array_equal(grads["unused"], np.zeros(3))

    def test_non_finite_leaf_rejected(self):
        with pytest.raises(ValueError):
            Tape().leaf(np.array([np.nan]))
