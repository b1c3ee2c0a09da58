"""Tensor core: op semantics, gradient checks against finite differences,
checkpoint round-trips."""

import math

import numpy as np
import pytest

from crossrank import tensor as T
from crossrank.tensor import Tensor

from gradcheck import check_op_grad, rel_err

GRAD_TOL = 1e-4  # 64-bit, perturbation 1e-5


def test_matmul_identity():
    eye = Tensor(np.eye(2))
    out = T.matmul(eye, eye)
    assert np.array_equal(out.data, np.eye(2))


def test_matmul_hand_case():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[1.0], [1.0]])
    out = T.matmul(a, b)
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(T.ShapeError) as exc:
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    assert "(2, 3)" in str(exc.value)


def test_matmul_grad_matches_finite_differences():
    err = check_op_grad(lambda a, b: T.reduce_sum(T.matmul(a, b)),
                        [(3, 4), (4, 2)], seed=0)
    assert err < 1e-6


def test_softmax_symmetry_and_shift_invariance():
    out = T.softmax(Tensor([0.0, 0.0]), axis=-1)
    assert np.allclose(out.data, [0.5, 0.5], atol=0)
    x = np.random.default_rng(1).normal(size=(4, 5))
    a = T.softmax(Tensor(x), axis=-1).data
    b = T.softmax(Tensor(x + 100.0), axis=-1).data
    assert np.allclose(a, b, atol=1e-15)


def test_softmax_rows_sum_to_one():
    x = np.random.default_rng(2).normal(size=(6, 9)) * 10
    out = T.softmax(Tensor(x), axis=-1).data
    assert np.abs(out.sum(axis=-1) - 1.0).max() < 1e-12
    assert (out >= 0).all()


def test_softmax_grad():
    err = check_op_grad(
        lambda a, w: T.reduce_sum(T.mul(T.softmax(a, axis=-1), w)),
        [(3, 5), (3, 5)], seed=3)
    assert err < 1e-6


def test_softmax_exact_matches_softmax_values():
    x = np.random.default_rng(4).normal(size=(2, 3, 7))
    a = T.softmax(Tensor(x), axis=-1).data
    b = T.softmax_exact(Tensor(x), axis=-1).data
    assert np.allclose(a, b, atol=1e-15)
    assert np.abs(b.sum(axis=-1) - 1.0).max() < 1e-12


def test_softmax_exact_permutation_invariant_rows():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 11))
    perm = rng.permutation(11)
    direct = T.softmax_exact(Tensor(x), axis=-1).data[0][perm]
    permuted = T.softmax_exact(Tensor(x[:, perm]), axis=-1).data[0]
    assert np.array_equal(direct, permuted)


def test_layer_norm_constant_vector_is_zero():
    x = Tensor(np.full((4,), 3.7))
    g = Tensor(np.ones(4))
    b = Tensor(np.zeros(4))
    out = T.layer_norm(x, g, b, eps=1e-6)
    assert np.abs(out.data).max() < 1e-9


def test_layer_norm_moments():
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(size=(5, 16)) * 3 + 1)
    out = T.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=1e-6).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-9
    assert np.abs(out.var(axis=-1) - 1.0).max() < 1e-6


def test_layer_norm_grads():
    def build(x, g, b):
        return T.reduce_sum(T.mul(T.layer_norm(x, g, b, eps=1e-6), x * 0 + 1)) \
            + T.reduce_sum(T.mul(T.layer_norm(x, g, b, eps=1e-6),
                                 Tensor(np.arange(12.0).reshape(3, 4) / 10)))
    for wrt in range(3):
        err = check_op_grad(build, [(3, 4), (4,), (4,)], seed=7, wrt=wrt)
        assert err < GRAD_TOL, f"wrt={wrt}: {err}"


@pytest.mark.parametrize("op", ["add", "mul", "relu", "gelu", "sum", "mean",
                                "exact_sum", "reshape", "transpose", "concat",
                                "narrow", "embedding", "softmax", "matmul",
                                "matmul_exact", "cross_entropy"])
@pytest.mark.parametrize("seed", [11, 12, 13])
def test_every_op_gradient_on_random_shapes(op, seed):
    rng = np.random.default_rng(seed)
    m, k, n = (int(v) for v in rng.integers(2, 6, size=3))
    w_mk = Tensor(rng.normal(size=(m, k)))
    w_2mk = Tensor(rng.normal(size=(2 * m, k)))

    def weighted(t):
        # fixed weighting so the check target is not a plain sum
        return T.reduce_sum(T.mul(t, w_mk))

    builders = {
        "add": (lambda a, b: weighted(T.add(a, b)), [(m, k), (k,)]),
        "mul": (lambda a, b: weighted(T.mul(a, b)), [(m, k), (k,)]),
        "relu": (lambda a: weighted(T.relu(a)), [(m, k)]),
        "gelu": (lambda a: weighted(T.gelu(a)), [(m, k)]),
        "sum": (lambda a: T.reduce_sum(a), [(m, k, n)]),
        "mean": (lambda a: T.reduce_sum(T.reduce_mean(a, axis=1)), [(m, k, n)]),
        "exact_sum": (lambda a: T.reduce_sum(T.exact_sum(a, axis=1)), [(m, k, n)]),
        "reshape": (lambda a: weighted(T.reshape(a, (m, k))), [(k, m)]),
        "transpose": (lambda a: weighted(T.transpose(a, (1, 0))), [(k, m)]),
        "concat": (lambda a, b: T.reduce_sum(T.mul(T.concat([a, b], axis=0), w_2mk)),
                   [(m, k), (m, k)]),
        "narrow": (lambda a: weighted(T.narrow(a, 1, 1, 1 + k)), [(m, k + 2)]),
        "embedding": (lambda w: T.reduce_sum(T.embedding(w, [0, 1, 0])), [(m + 1, k)]),
        "softmax": (lambda a: weighted(T.softmax(a, axis=-1)), [(m, k)]),
        "matmul": (lambda a, b: T.reduce_sum(T.matmul(a, b)), [(m, k), (k, n)]),
        "matmul_exact": (lambda a, b: T.reduce_sum(T.matmul_exact(a, b)), [(m, k), (k, n)]),
        "cross_entropy": (
            lambda a: T.reduce_sum(T.cross_entropy_with_logits(a, [1] * m)),
            [(m, k)]),
    }
    build, shapes = builders[op]
    for wrt in range(len(shapes)):
        err = check_op_grad(build, shapes, seed=seed * 31 + wrt, wrt=wrt)
        assert err < GRAD_TOL, f"{op} wrt={wrt}: rel err {err}"


def test_batched_matmul_grad():
    err = check_op_grad(lambda a, b: T.reduce_sum(T.matmul(a, b)),
                        [(2, 3, 4), (4, 5)], seed=21)
    assert err < GRAD_TOL
    err = check_op_grad(lambda a, b: T.reduce_sum(T.matmul(a, b)),
                        [(2, 3, 4), (2, 4, 5)], seed=22, wrt=1)
    assert err < GRAD_TOL


def test_backward_visits_each_node_once_on_diamond():
    # y = x*x + x*x shares the subnode; double-counting would give wrong grads
    x = Tensor(np.array([3.0]), requires_grad=True)
    sq = T.mul(x, x)
    out = T.reduce_sum(T.add(sq, sq))
    out.backward()
    assert np.allclose(x.grad, [12.0])


def test_cross_entropy_values():
    # equal logits -> ln 2 regardless of target
    out = T.cross_entropy_with_logits(Tensor([[1.0, 1.0]]), [0])
    assert abs(out.data[0] - math.log(2.0)) < 1e-12
    # known value: logits (2, 0), true class -> -ln(e^2/(e^2+1))
    out = T.cross_entropy_with_logits(Tensor([[2.0, 0.0]]), [0])
    assert abs(out.data[0] - 0.126928011) < 1e-6


def test_forward_reproducible():
    def run():
        rng = np.random.default_rng(99)
        a = Tensor(rng.normal(size=(8, 8)))
        b = Tensor(rng.normal(size=(8, 8)))
        return T.softmax(T.matmul(T.relu(a), b), axis=-1).data
    assert np.array_equal(run(), run())


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    params = {
        "enc.0.w": Tensor(rng.normal(size=(4, 5))),
        "enc.0.b": Tensor(rng.normal(size=(5,))),
        "head": Tensor(np.array(3.14159)),
    }
    p = tmp_path / "model.ckpt"
    T.save_checkpoint(p, params)
    loaded = T.load_checkpoint(p)
    assert set(loaded) == set(params)
    for name in params:
        assert np.array_equal(loaded[name], params[name].data)
        assert loaded[name].dtype == np.float64
    # write -> read -> write is byte-identical
    p2 = tmp_path / "model2.ckpt"
    T.save_checkpoint(p2, loaded)
    assert p.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"not a checkpoint at all")
    with pytest.raises(T.CheckpointError):
        T.load_checkpoint(p)
