import numpy as np
import pytest

from copfl.data import (
    CapacityError,
    PartitionSpec,
    apply_feature_shift,
    class_overlap,
    gen_synthetic,
    load_csv_pool,
    partition,
)
from copfl.models import LabeledBatch, ModelSpec, accuracy, loss_and_grad


def test_zero_noise_collapses_to_means():
    pool = gen_synthetic(3, 4, 5, seed=0, noise_scale=0.0)
    for c in range(3):
        xs = pool.inputs[pool.labels == c]
        np.testing.assert_array_equal(xs, np.broadcast_to(xs[0], xs.shape))


def test_generation_deterministic():
    a = gen_synthetic(4, 6, 10, seed=11, noise_scale=0.5)
    b = gen_synthetic(4, 6, 10, seed=11, noise_scale=0.5)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_rejection_failure_is_reported():
    with pytest.raises(ValueError, match="noise"):
        gen_synthetic(10, 2, 5, seed=0, noise_scale=50.0)


def test_low_rank_means_span_subspace():
    pool = gen_synthetic(8, 10, 1, seed=0, noise_scale=0.0, mean_rank=2)
    assert np.linalg.matrix_rank(pool.inputs, tol=1e-9) == 2


def test_easy_pool_is_learnable():
    pool = gen_synthetic(2, 2, 100, seed=0, noise_scale=0.1)
    spec = ModelSpec("softmax_regression", 2, 2)
    batch = LabeledBatch(pool.inputs, pool.labels)
    w = np.zeros(spec.num_params)
    for _ in range(300):
        _, g = loss_and_grad(spec, w, batch)
        w -= 0.5 * g
    assert accuracy(spec, w, batch) > 0.95


def _clients(N=10, C=10, s=2, M=50, Mt=100, seed=0):
    spec = PartitionSpec(N, s, M, Mt, C, seed=seed)
    pool = gen_synthetic(C, 5, spec.assignments_per_class() * (M + Mt), seed=seed, noise_scale=0.3)
    return pool, spec, partition(pool, spec)


def test_one_client_per_class_when_ns_equals_c():
    _, _, clients = _clients(N=4, C=8, s=2)
    assert class_overlap(clients) == {c: 1 for c in range(8)}


def test_reference_shard_sizes():
    _, _, clients = _clients(N=10, C=10, s=2, M=50, Mt=100)
    for cd in clients:
        assert len(cd.train) == 100
        assert len(cd.test) == 200
        for c in cd.class_set:
            assert np.sum(cd.train.labels == c) == 50
            assert np.sum(cd.test.labels == c) == 100


@pytest.mark.parametrize("N, C, s", [(10, 10, 2), (7, 5, 3), (3, 10, 4), (20, 10, 2)])
def test_partition_invariants(N, C, s):
    pool, spec, clients = _clients(N=N, C=C, s=s, M=6, Mt=4)
    counts = class_overlap(clients)
    lo, hi = (N * s) // C, -(-N * s // C)
    assert all(lo <= counts.get(c, 0) <= hi for c in range(C))
    seen = set()
    for cd in clients:
        assert len(cd.class_set) == s
        assert set(np.unique(cd.train.labels)) == set(cd.class_set)
        assert set(np.unique(cd.test.labels)) == set(cd.class_set)
        tr, te = set(cd.train_idx.tolist()), set(cd.test_idx.tolist())
        assert not tr & te
        assert not tr & seen
        seen |= tr | te
        np.testing.assert_array_equal(pool.inputs[cd.train_idx], cd.train.inputs)


def test_partition_deterministic():
    _, _, a = _clients(seed=5)
    _, _, b = _clients(seed=5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.train_idx, y.train_idx)
        assert x.class_set == y.class_set


def test_capacity_error_names_class():
    spec = PartitionSpec(10, 2, 50, 100, 10)
    pool = gen_synthetic(10, 3, 20, seed=0, noise_scale=0.1)
    with pytest.raises(CapacityError, match="class"):
        partition(pool, spec)


def test_bad_partition_spec():
    with pytest.raises(ValueError):
        PartitionSpec(4, 0, 5, 5, 10)
    with pytest.raises(ValueError):
        PartitionSpec(4, 11, 5, 5, 10)


def test_feature_shift_is_per_client_affine():
    _, _, clients = _clients(N=3, C=6, s=2)
    shifted = apply_feature_shift(clients, seed=0, shift_scale=1.0)
    for cd, sh in zip(clients, shifted):
        np.testing.assert_array_equal(cd.train.labels, sh.train.labels)
        # an affine map: the difference between two rows scales uniformly
        d0 = cd.train.inputs[1] - cd.train.inputs[0]
        d1 = sh.train.inputs[1] - sh.train.inputs[0]
        ratio = d1 / d0
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)
    assert not np.allclose(shifted[0].train.inputs - clients[0].train.inputs,
                           shifted[1].train.inputs[: len(clients[0].train)] - clients[1].train.inputs)


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "pool.csv"
    path.write_text("label,feat_0,feat_1\n0,1.5,2\n1,-1,0.25\n2,3,3\n", encoding="utf-8")
    pool = load_csv_pool(path)
    assert pool.num_classes == 3
    np.testing.assert_array_equal(pool.labels, [0, 1, 2])
    np.testing.assert_array_equal(pool.inputs[1], [-1.0, 0.25])


def test_csv_requires_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,1,2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="label"):
        load_csv_pool(path)
    path.write_text("label,feat_0\n0,1,2\n", encoding="utf-8")
    with pytest.raises(ValueError, match=":2:"):
        load_csv_pool(path)
