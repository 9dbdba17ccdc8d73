import numpy as np
import pytest

from pcm import (DatasetTooSmallError, box_index, box_partition, default_spec,
                 epsilon_of, generate, ites, kmeans_partition, levels_of)


def test_epsilon_examples():
    assert epsilon_of(16, 2) == 0.5
    assert epsilon_of(200_000, 2) == 1.0 / 21
    assert epsilon_of(2_000_000, 2) == 1.0 / 37
    assert epsilon_of(4, 1) == 0.5


def test_epsilon_exact_at_perfect_powers():
    # 14641 = 11^4; a float pow fencepost would give 10 here
    assert epsilon_of(14641, 2) == 1.0 / 11
    assert epsilon_of(14640, 2) == 1.0 / 10


def test_epsilon_too_small():
    with pytest.raises(DatasetTooSmallError):
        epsilon_of(3, 2)


def test_box_index_convention():
    x = np.array([[0.25, 0.75]])
    assert box_index(x, 0.5)[0] == 1  # cell (0,1), id = i1*m + i2
    assert box_index(np.array([[1.0, 1.0]]), 0.5)[0] == 3  # clamped last cell
    assert box_index(np.array([[0.5]]), 0.25)[0] == 2  # half-open cells


def test_box_partition_two_cells_d1():
    x = np.array([[0.1], [0.2], [0.7], [0.8]])
    ite = np.array([1.0, 3.0, 5.0, 7.0])
    pc = box_partition(x, ites=ite)
    assert pc.epsilon == 0.5
    assert [c.att for c in pc.cells] == [2.0, 6.0]
    assert [list(c.members) for c in pc.cells] == [[0, 1], [2, 3]]


def test_box_partition_single_cell():
    x = np.array([[0.1], [0.2], [0.3], [0.45]])
    ite = np.array([1.0, 2.0, 3.0, 4.0])
    pc = box_partition(x, ites=ite)
    # eps = 1/2: all four points fall in cell 0
    assert len(pc.cells) == 1
    assert pc.cells[0].att == 2.5


def test_box_partition_zero_noise_pure_cells():
    spec = default_spec(n=20_000, seed=1, sigma=0.0)
    ds = generate(spec)
    pc = box_partition(ds.x, ites=ites(ds))
    effects = spec.mu[1] - spec.mu[0]
    for cluster in pc.cells:
        levels = np.unique(ds.c_true[cluster.members])
        if levels.size == 1:  # pure cell: ATT is exactly that level's effect
            assert cluster.att == effects[levels[0]]


def test_box_partition_is_partition(small_sigma5_dataset):
    ds = small_sigma5_dataset
    pc = box_partition(ds.x, ites=ites(ds))
    all_members = np.concatenate([c.members for c in pc.cells])
    assert all_members.size == ds.n
    assert np.array_equal(np.sort(all_members), np.arange(ds.n))


def test_box_partition_cell_count_and_occupancy():
    ds = generate(default_spec(n=200_000, seed=0, sigma=5.0))
    pc = box_partition(ds.x, ites=ites(ds))
    assert len(pc.cells) == 441
    min_occ = min(c.members.size for c in pc.cells)
    assert min_occ >= np.sqrt(ds.n) / 4


def test_merged_pair_att_is_weighted_mean():
    rng = np.random.default_rng(8)
    x = rng.random((500, 2))
    ite = rng.normal(size=500)
    pc = box_partition(x, ites=ite)
    a, b = pc.cells[0], pc.cells[1]
    merged = np.concatenate([a.members, b.members])
    expected = (a.att * a.members.size + b.att * b.members.size) / merged.size
    assert float(np.mean(ite[merged])) == pytest.approx(expected, abs=1e-12)


def test_box_partition_control_diff_drops_one_sided():
    x = np.array([[0.1], [0.2], [0.7], [0.8]])
    t = np.array([1, 0, 1, 1])  # right cell has no controls
    y = np.array([3.0, 1.0, 5.0, 7.0])
    pc = box_partition(x, t=t, y=y)
    assert len(pc.cells) == 1
    assert pc.cells[0].att == 2.0
    assert pc.dropped == 1
    assert list(pc.dropped_subjects) == [2, 3]


def test_kmeans_k_equals_n():
    rng = np.random.default_rng(0)
    x = rng.random((6, 2))
    ite = rng.normal(size=6)
    pc = kmeans_partition(x, ites=ite, k=6)
    assert len(pc.cells) == 6
    atts = sorted(c.att for c in pc.cells)
    assert atts == sorted(ite.tolist())


def test_kmeans_k_equals_one():
    rng = np.random.default_rng(1)
    x = rng.random((40, 2))
    ite = rng.normal(size=40)
    pc = kmeans_partition(x, ites=ite, k=1)
    assert len(pc.cells) == 1
    assert pc.cells[0].att == pytest.approx(float(np.mean(ite)), abs=1e-12)


def test_kmeans_recovers_separated_blobs():
    # brute-force oracle: the two blobs are the unique optimal 2-clustering
    rng = np.random.default_rng(2)
    blob_a = 0.05 + 0.02 * rng.random((4, 2))
    blob_b = 0.9 + 0.02 * rng.random((4, 2))
    x = np.vstack([blob_a, blob_b])
    ite = np.arange(8.0)
    best_sse, best_mask = None, None
    for bits in range(1, 255):
        mask = np.array([(bits >> i) & 1 for i in range(8)], dtype=bool)
        if mask.all() or not mask.any():
            continue
        sse = 0.0
        for m in (mask, ~mask):
            pts = x[m]
            sse += float(np.sum((pts - pts.mean(axis=0)) ** 2))
        if best_sse is None or sse < best_sse:
            best_sse, best_mask = sse, mask
    assert best_mask[:4].all() != best_mask[4:].all()  # blobs are the optimum
    pc = kmeans_partition(x, ites=ite, k=2, seed=5)
    groups = sorted(tuple(sorted(c.members)) for c in pc.cells)
    assert groups == [(0, 1, 2, 3), (4, 5, 6, 7)]


def test_kmeans_deterministic():
    rng = np.random.default_rng(3)
    x = rng.random((300, 2))
    ite = rng.normal(size=300)
    a = kmeans_partition(x, ites=ite, seed=9)
    b = kmeans_partition(x, ites=ite, seed=9)
    assert [list(c.members) for c in a.cells] == [list(c.members) for c in b.cells]
    assert [c.att for c in a.cells] == [c.att for c in b.cells]


def test_kmeans_default_k_near_sqrt_n():
    rng = np.random.default_rng(4)
    x = rng.random((400, 2))
    ite = rng.normal(size=400)
    pc = kmeans_partition(x, ites=ite, seed=0)
    # ceil(sqrt(400)) = 20 clusters requested; empties may drop a few
    assert len(pc.cells) + pc.dropped == 20
