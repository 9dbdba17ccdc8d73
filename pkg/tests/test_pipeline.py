import numpy as np
import pytest

from pcm import (Dataset, InvalidDatasetError, PcmConfig, default_spec,
                 generate, run_pcm)


def test_zero_noise_run():
    spec = default_spec(n=20_000, seed=7, sigma=0.0)
    ds = generate(spec)
    res = run_pcm(ds, PcmConfig(cf_mode="given"))
    assert res.model.ell_hat == 3
    np.testing.assert_allclose(res.model.mu_hat, [0.0, 1.0, 2.0], atol=0.1)
    correct = float(np.mean(res.model.assignment == ds.c_true))
    assert correct > 0.93


def test_deterministic_end_to_end():
    ds = generate(default_spec(n=8000, seed=3, sigma=5.0))
    cfg = PcmConfig(cf_mode="given", seed=5)
    a = run_pcm(ds, cfg)
    b = run_pcm(ds, cfg)
    assert a.model.ell_hat == b.model.ell_hat
    assert a.model.mu_hat.tobytes() == b.model.mu_hat.tobytes()
    assert a.model.assignment.tobytes() == b.model.assignment.tobytes()
    assert a.smoothed.tobytes() == b.smoothed.tobytes()
    assert a.model.err_curve == b.model.err_curve


def test_em_iters_zero_and_one_both_valid():
    ds = generate(default_spec(n=8000, seed=3, sigma=5.0))
    r0 = run_pcm(ds, PcmConfig(cf_mode="given", em_iters=0))
    r1 = run_pcm(ds, PcmConfig(cf_mode="given", em_iters=1))
    for r in (r0, r1):
        assert r.model.ell_hat >= 1
        fitted = r.model.assignment >= 0
        assert fitted.all()
    assert r0.diagnostics["em_iters"] == 0
    assert r1.diagnostics["em_iters"] == 1


def test_knn_mode_fits_treated_only():
    ds = generate(default_spec(n=8000, seed=1, sigma=5.0))
    res = run_pcm(ds, PcmConfig(cf_mode="knn"))
    treated = ds.t == 1
    assert np.array_equal(res.fit_indices, np.nonzero(treated)[0])
    assert np.all(res.model.assignment[~treated] == -1)
    assert np.all(res.model.assignment[treated] >= 0)
    assert np.all(np.isnan(res.smoothed[~treated]))


def test_control_diff_mode_end_to_end():
    ds = generate(default_spec(n=20_000, seed=2, sigma=5.0))
    res = run_pcm(ds, PcmConfig(cf_mode="control_diff"))
    assert res.model.ell_hat == 3
    np.testing.assert_allclose(res.model.mu_hat, [0.0, 1.0, 2.0], atol=0.5)
    assert res.fit_ites is None


def test_kmeans_mode_end_to_end():
    ds = generate(default_spec(n=8000, seed=4, sigma=5.0))
    res = run_pcm(ds, PcmConfig(cf_mode="given", precluster_mode="kmeans",
                                seed=11))
    assert res.model.ell_hat == 3
    assert res.diagnostics["precluster_mode"] == "kmeans"
    assert np.isnan(res.diagnostics["epsilon"])


def test_invalid_dataset_rejected():
    ds = Dataset.from_arrays([[1.4], [0.2]], [1, 0], [1.0, 2.0], [0.0, 0.0])
    with pytest.raises(InvalidDatasetError):
        run_pcm(ds, PcmConfig(cf_mode="given"))


def test_diagnostics_contents():
    ds = generate(default_spec(n=8000, seed=6, sigma=5.0))
    res = run_pcm(ds, PcmConfig(cf_mode="given"))
    diag = res.diagnostics
    assert diag["n"] == 8000
    assert diag["n_fit"] == 8000
    assert diag["num_clusters"] == len(res.preclustering.cells)
    assert diag["ell_hat"] == res.model.ell_hat
    assert [k for k, _ in res.model.err_curve] == list(range(1, 11))
    assert diag["converged"] is True
    assert set(diag["timings_ms"]) == {"counterfactual_ms", "precluster_ms",
                                       "merge_ms", "refine_ms"}
    assert all(v >= 0 for v in diag["timings_ms"].values())


def test_runtime_scales_gently():
    # doubling n should not much more than quadruple wall time; measured
    # loosely to stay robust on shared machines
    import time
    times = []
    for n in (20_000, 40_000):
        ds = generate(default_spec(n=n, seed=0, sigma=5.0))
        cfg = PcmConfig(cf_mode="given")
        t0 = time.perf_counter()
        run_pcm(ds, cfg)
        times.append(time.perf_counter() - t0)
    assert times[1] <= 8.0 * max(times[0], 0.05)
