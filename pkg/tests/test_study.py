import numpy as np
import pytest

from elaml import StudyConfig, StudyError, run_study, summarize
from elaml.study import replicate_rng

NORMAL_TRUTH = {"intercept": 0.5, "sigma_u": 1.1, "phi": 0.9}


def _normal_config(**overrides):
    base = dict(
        family="normal_lmm",
        truth=NORMAL_TRUTH,
        T=4,
        B_point=10,
        B_se=200,
        methods=("ela",),
        estimand="ml",
        base_seed=77,
        parallelism=1,
        design={"n_groups": 6, "per_group": 4},
    )
    base.update(overrides)
    return StudyConfig(**base)


def test_summarize_identical_replicates():
    est, se, sd = summarize(np.array([[1.0, 2.0], [1.0, 2.0]]), np.ones((2, 2)))
    np.testing.assert_array_equal(sd, [0.0, 0.0])
    np.testing.assert_array_equal(est, [1.0, 2.0])


def test_summarize_hand_arithmetic():
    est, se, sd = summarize(np.array([[1.0], [3.0]]), np.array([[0.5], [0.7]]))
    assert est[0] == 2.0
    assert sd[0] == pytest.approx(np.sqrt(2.0))
    assert se[0] == pytest.approx(0.6)


def test_summarize_matches_independent_recomputation(rng):
    E = rng.standard_normal((200, 3))
    S = np.abs(rng.standard_normal((200, 3)))
    est, se, sd = summarize(E, S)
    for j in range(3):
        col = E[:, j]
        mean = sum(col) / 200
        var = sum((x - mean) ** 2 for x in col) / 199
        assert abs(est[j] - mean) < 1e-12
        assert abs(sd[j] - np.sqrt(var)) < 1e-12
        assert abs(se[j] - sum(S[:, j]) / 200) < 1e-12


def test_summarize_skips_nan_se_rows():
    E = np.array([[1.0], [2.0], [3.0]])
    S = np.array([[0.5], [np.nan], [0.7]])
    _, se, _ = summarize(E, S)
    assert se[0] == pytest.approx(0.6)


def test_summarize_needs_two_rows():
    with pytest.raises(ValueError):
        summarize(np.ones((1, 2)), np.ones((1, 2)))


def test_run_study_est_is_mean_of_replicates():
    config = _normal_config(T=2)
    res = run_study(config)
    tab = res.tables["ela"]
    assert len(tab.rep_ids) == 2
    np.testing.assert_allclose(tab.est, tab.raw_estimates.mean(axis=0), atol=0)
    # per-replicate estimates sit near the closed-form exact MLE path
    assert np.all(np.abs(tab.raw_estimates[:, 0] - 0.5) < 2.0)


def test_run_study_worker_count_invariance():
    config = _normal_config(T=4, parallelism=1)
    serial = run_study(config)
    parallel = run_study(config, workers=2)
    for m in config.methods:
        np.testing.assert_array_equal(
            serial.tables[m].raw_estimates, parallel.tables[m].raw_estimates
        )
        np.testing.assert_array_equal(
            serial.tables[m].raw_ses, parallel.tables[m].raw_ses
        )


def test_run_study_failure_threshold():
    config = _normal_config(T=4, fit={"max_iter": 0})
    with pytest.raises(StudyError, match="more than 20%"):
        run_study(config)


def test_replicate_rng_reproducible_and_distinct():
    a = replicate_rng(5, 0).standard_normal(4)
    b = replicate_rng(5, 0).standard_normal(4)
    c = replicate_rng(5, 1).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_config_roundtrip():
    config = _normal_config(methods=("la", "ela"))
    again = StudyConfig.from_dict(config.to_dict())
    assert again == config


def test_config_validation():
    with pytest.raises(ValueError):
        _normal_config(T=1)
    with pytest.raises(ValueError):
        _normal_config(methods=("bogus",))
    with pytest.raises(ValueError):
        _normal_config(estimand="map")


def test_worker_env_cap(monkeypatch):
    from elaml.study import _worker_count

    config = _normal_config(parallelism=8)
    monkeypatch.setenv("ELA_ML_THREADS", "2")
    assert _worker_count(config) == 2
    monkeypatch.delenv("ELA_ML_THREADS")
    assert _worker_count(config) == 8
    assert _worker_count(config, workers=3) == 3
