import math

import numpy as np
import pytest

import placl


@pytest.fixture(scope="module")
def split():
    cfg = placl.SynthConfig()
    cfg.num_samples = 120
    return placl.split_dataset(placl.generate_dataset(cfg, 3), 0.1, 0.1, 0.15, 4)


def tiny_config():
    c = placl.SearchConfig()
    c.rounds, c.steps, c.samples, c.group_size, c.epochs = 1, 2, 2, 2, 4
    return c


def test_dataset_shapes(split):
    assert len(split.labeled) + len(split.unlabeled) + len(split.validation) + len(split.test) == 120
    s = split.labeled[0]
    assert s.image.shape == (32, 32)
    assert s.keypoints.shape == (5, 2)
    assert s.is_labeled
    assert np.all((s.keypoints >= 0) & (s.keypoints < 32))


def test_unlabeled_samples_hide_their_labels(split):
    u = split.unlabeled[0]
    assert not u.is_labeled
    with pytest.raises(placl.StateError):
        u.keypoints
    assert u.hidden_keypoints.shape == (5, 2)


def test_forward_and_training(split):
    learner = placl.Learner(placl.LearnerConfig(), 1)
    out = learner.forward(split.labeled[0].image)
    assert out.shape == (5, 16, 16)
    assert np.all((out > 0) & (out < 1))
    losses = learner.train(list(split.labeled), epochs=3, batch_size=4)
    assert len(losses) == 3
    assert learner.epoch == 3
    assert 0.0 <= learner.evaluate(list(split.test)) <= 1.0


def test_heatmaps_round_trip():
    kps = np.array([[7.0, 11.0], [1.0, 31.0]])
    maps = placl.target_heatmaps(kps)
    assert maps.shape == (2, 16, 16)
    decoded, conf = placl.decode(maps)
    np.testing.assert_array_equal(decoded, kps)
    assert conf == [1.0, 1.0]


def test_policy_helpers():
    assert placl.truncated_pdf(0.5, 0.2, 0.5) == pytest.approx(2.0198, abs=1e-4)
    assert placl.normal_cdf(0.0) == 0.5
    draws = placl.sample_deltas([0.1, 0.9], 0.2, 500, 7)
    assert draws.shape == (500, 2)
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    assert sum(placl.normalize_rewards([0.5, 0.7, 0.9])) == pytest.approx(0.0, abs=1e-12)
    assert placl.policy_step([0.3], draws[:4, :1], [1.0, 1.0, 1.0, 1.0]) == [0.3]


def test_pck_matches_a_direct_count():
    rng = np.random.default_rng(0)
    truth = [rng.uniform(0, 32, (5, 2)) for _ in range(20)]
    pred = [t + rng.uniform(-3, 3, (5, 2)) for t in truth]
    sides = list(rng.uniform(10, 30, 20))
    hits = sum(
        int(math.hypot(*(p[k] - t[k])) <= 0.1 * s) for p, t, s in zip(pred, truth, sides) for k in range(5)
    )
    assert placl.pck(pred, truth, sides) == hits / 100


def test_config_json_and_errors():
    c = tiny_config()
    back = placl.SearchConfig.from_json(c.to_json())
    assert back.to_json() == c.to_json()
    with pytest.raises(placl.ConfigError):
        placl.SearchConfig.from_json('{"nope": 1}')
    assert issubclass(placl.ConfigError, ValueError)
    c.epochs = 5
    with pytest.raises(ValueError):
        c.validate()


def test_compose_clamps():
    c = placl.compose(placl.Curriculum([0.5, 0.9]), [0.2, 0.3])
    assert c.thresholds == pytest.approx([0.7, 1.0])
    assert c.round == 1


def test_small_search(split, tmp_path):
    res = placl.run_placl(split, tiny_config(), tmp_path / "run")
    assert res["variant"] == "placl"
    assert len(res["rounds"]) == 1
    assert res["rounds"][0]["inner_trainings"] == 2 * 2 + 1
    rows = placl.read_results(tmp_path / "run" / "results.csv")
    assert {r.variant for r in rows} == {"placl"}
    written = placl.write_report(tmp_path / "run")
    assert all(p.exists() for p in written)
    static = placl.run_ablation("static_threshold", split, tiny_config(), gamma=0.4)
    assert static["variant"] == "static_0.40"
