import json

import numpy as np
import pytest

from cyclelane import bench as B
from cyclelane import model as M
from cyclelane import training as T
from cyclelane.errors import HarnessError
from cyclelane.synth import SynthConfig, apply_blackout, generate_dataset
from cyclelane.taxonomy import SUB_TO_MAIN, MainClass, SubClass


class Probe:
    """Fake checkpoint that reports, per output, which input step it saw and where in the window."""

    def __init__(self, temporal=True, causal=False):
        self.temporal, self.causal = temporal, causal

    def predict(self, features):
        f = np.asarray(features)
        pos = np.broadcast_to(np.arange(f.shape[1])[None, :], f.shape[:2])
        return M.HierarchicalPrediction(np.ones(f.shape[:2] + (5,)), np.ones(f.shape[:2] + (13,)),
                                        pos.copy(), f[..., 0].astype(np.int64))


def step_ids(s, length):
    feats = np.zeros((s, length, 2), np.float32)
    feats[..., 0] = np.arange(1, length + 1)
    return T.SequenceDataset(feats, np.zeros((s, length), np.int64), np.ones((s, length)))


@pytest.mark.parametrize("length", [10, 50, 120, 200])
@pytest.mark.parametrize("protocol, lead", [("proposed", 20), ("no_future", 40)])
def test_coverage_multiple_of_stride(length, protocol, lead):
    data = step_ids(2, length)
    pos, seen, _, _ = B.predict_steps(Probe(causal=protocol == "no_future"), data, protocol)
    # each step's own output is recorded exactly once
    assert np.array_equal(seen[0], np.arange(1, length + 1))
    assert set(pos.ravel()) == set(range(lead, lead + 10))
    plan = B.window_plan(length, protocol=protocol)
    covered = np.concatenate([np.arange(s + f, s + f + 10) for s, f in plan])
    assert sorted(covered) == list(range(length))


@pytest.mark.parametrize("length", [1, 7, 33, 49])
def test_coverage_short_and_ragged(length):
    data = step_ids(1, length)
    _, seen, _, _ = B.predict_steps(Probe(), data, "proposed")
    assert np.array_equal(seen[0], np.arange(1, length + 1))
    covered = np.concatenate([np.arange(s + f, s + f + 10) for s, f in B.window_plan(length)])
    covered = covered[covered < length]
    assert len(covered) == len(set(covered)) == length


def test_padding_uses_blank():
    data = step_ids(1, 10)
    seen_feats = []

    class Spy(Probe):
        def predict(self, features):
            seen_feats.append(np.array(features))
            return super().predict(features)

    B.predict_steps(Spy(), data, "proposed")
    win = seen_feats[0][0]
    assert win.shape == (50, 2)
    assert np.all(win[:20] == 0) and np.all(win[30:] == 0)
    assert np.array_equal(win[20:30, 0], np.arange(1, 11))


def test_protocol_checkpoint_pairing():
    data = step_ids(1, 10)
    with pytest.raises(HarnessError):
        B.predict_steps(Probe(temporal=False), data, "proposed")
    with pytest.raises(HarnessError):
        B.predict_steps(Probe(), data, "no_temporal")
    with pytest.raises(HarnessError):
        B.predict_steps(Probe(causal=False), data, "no_future")
    with pytest.raises(HarnessError):
        B.predict_steps(Probe(), data, "sideways")


# ---------------------------------------------------------------- metrics

def balanced(count=50, length=10):
    return generate_dataset(SynthConfig(n_features=4, seq_len=length), count)


def test_perfect_predictor():
    data = balanced()
    main = np.array(SUB_TO_MAIN)[data.sub]
    rep = B.score(data, main, data.sub)
    assert rep.main_macro == rep.sub_macro == 1.0
    cm = B.normalize_rows(rep.main_confusion)
    assert np.array_equal(cm, np.eye(5))


def test_constant_predictor():
    data = balanced()
    rep = B.score(data, np.zeros_like(data.sub), np.zeros_like(data.sub))
    assert rep.main_macro == pytest.approx(0.2)


def test_confusion_rows_and_empty_flags():
    data = balanced()
    rng = np.random.default_rng(0)
    rep = B.score(data, rng.integers(0, 5, data.sub.shape), rng.integers(0, 13, data.sub.shape))
    for cm in (rep.main_confusion, rep.sub_confusion):
        norm = B.normalize_rows(cm)
        rows = cm.sum(axis=1) > 0
        assert np.allclose(norm[rows].sum(axis=1), 1.0, atol=1e-6)
        assert np.all(norm[~rows] == 0.0)
    d = rep.to_dict()
    assert len(d["empty_sub_rows"]) == 8
    assert "buffered_road_side" in d["empty_sub_rows"]
    assert d["sub_per_class"]["buffered_road_side"] is None
    json.dumps(d)


def test_macro_vs_micro():
    cm = np.array([[9, 1], [0, 1]])
    assert B.macro_accuracy(cm) == pytest.approx((0.9 + 1.0) / 2)
    with pytest.raises(HarnessError):
        B.macro_accuracy(np.zeros((2, 2)))


def test_unlabeled_steps_ignored():
    data = balanced(10)
    data.sub[:, :5] = -1
    data.conf[:, :5] = 0
    pred = np.where(data.sub >= 0, data.sub, 0)
    rep = B.score(data, np.array(SUB_TO_MAIN)[pred], pred)
    assert rep.sub_macro == 1.0
    assert rep.sub_counts.sum() == 50


# ---------------------------------------------------------------- models in the loop

SMALL = M.ModelConfig(n_features=8, latent=8, heads=2, blocks=1)


@pytest.fixture(scope="module")
def trained():
    cfg = SynthConfig(n_features=8, seq_len=20, signal_rate=0.3, noise_std=0.3, seed=1)
    train = generate_dataset(cfg, 60)
    p1 = T.train_phase1(train, T.TrainConfig(epochs=5, learning_rate=0.05), SMALL).checkpoint
    p2 = T.train_phase2(train, T.TrainConfig(epochs=5), init=p1).checkpoint
    test = generate_dataset(SynthConfig(n_features=8, seq_len=20, signal_rate=0.3, noise_std=0.3, seed=2), 20)
    return p1, p2, test


def test_sweep_shape(trained):
    p1, _, test = trained
    curve = B.blackout_sweep([p1, p1, p1], test, passes=2, seed=4)
    assert [pt.p for pt in curve] == [round(0.05 * i, 2) for i in range(21)]
    for pt in curve:
        assert len(pt.values) == 6
        assert pt.min <= pt.mean <= pt.max
        assert pt.mean == pytest.approx(np.mean(pt.values))


def test_sweep_threads_agree(trained):
    _, p2, test = trained
    probs = (0.0, 0.5, 1.0)
    a = B.blackout_sweep([p2], test, seed=7, probs=probs)
    b = B.blackout_sweep([p2], test, seed=7, probs=probs, threads=3)
    assert [pt.values for pt in a] == [pt.values for pt in b]


def test_sweep_full_blackout_is_chance(trained):
    p1, p2, test = trained
    for ck in (p1, p2):
        (pt,) = B.blackout_sweep([ck], test, seed=1, probs=(1.0,))
        # every step sees the same blank input, so exactly one class can be right
        assert pt.mean == pytest.approx(0.2, abs=1e-12)


def test_sweep_missing_checkpoint(trained):
    with pytest.raises(HarnessError):
        B.blackout_sweep([trained[0], None], trained[2])


def test_rank_single_video(trained):
    p1, _, test = trained
    r = B.rank_videos(p1, {"only": test.subset([0])})
    assert len(r) == 1 and r[0][0] == "only"


def test_rank_corruption(trained):
    _, p2, test = trained
    clean = test.subset(range(10))
    bad = test.subset(range(10))
    rng = np.random.default_rng(3)
    flip = rng.random(bad.sub.shape) < 0.6
    others = np.array([int(c) for c in SynthConfig().classes])
    bad.sub = np.where(flip, rng.choice(others, size=bad.sub.shape), bad.sub)
    bad.sub = np.where(flip & (bad.sub == clean.sub), others[(np.searchsorted(others, bad.sub) + 1) % 5], bad.sub)
    r = B.rank_videos(p2, {"clean": clean, "corrupted": bad})
    assert [v for v, _ in r] == ["corrupted", "clean"]
    assert r[0][1] < r[1][1]


def test_rank_order_invariant(trained):
    p1, _, test = trained
    vids = {f"v{i}": test.subset([i]) for i in range(8)}
    vids["v8"] = test.subset([0])  # tie with v0, broken by id
    a = B.rank_videos(p1, vids)
    b = B.rank_videos(p1, dict(reversed(list(vids.items()))))
    assert a == b
    accs = [x for _, x in a]
    assert accs == sorted(accs)
    assert [v for v, _ in a].index("v0") < [v for v, _ in a].index("v8")


def test_rank_empty(trained):
    with pytest.raises(HarnessError):
        B.rank_videos(trained[0], {})


def test_outputs(tmp_path, trained):
    p1, _, test = trained
    curve = B.blackout_sweep([p1], test, passes=1, probs=(0.0, 1.0))
    B.write_curve(tmp_path / "c.csv", curve)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "p,mean,min,max" and lines[1].startswith("0.00,")
    B.write_worklist(tmp_path / "w.csv", [("a", 0.1), ("b", 0.5)], worst=1)
    assert (tmp_path / "w.csv").read_text() == "video_id,accuracy\na,0.100000\n"
    rep = B.evaluate(p1, test)
    B.write_report(tmp_path / "r.json", rep)
    assert json.loads((tmp_path / "r.json").read_text())["protocol"] == "no_temporal"
