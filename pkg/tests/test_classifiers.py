import warnings

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from neutralyze.classifiers import (
    AugmentConfig,
    DdmCheckpoint,
    DdmHyper,
    JudgeCheckpoint,
    JudgeHyper,
    LEAKAGE_COLUMNS,
    SmallConvNet,
    TrainStrategy,
    balanced_indices,
    balanced_resample,
    ensemble_probabilities,
    evaluate_ddm,
    evaluate_leakage,
    mixup_batch,
    positive_weights,
    predict_proba,
    report_from_probabilities,
    subgroup_fairness,
    summarize_group_aucs,
    train_ddm,
    train_judge,
    write_leakage_csv,
    write_table4,
)
from neutralyze.classifiers.harness import fit_classifier, predict_logits, sigmoid
from neutralyze.classifiers.judge import leakage_row
from neutralyze.dataio import (
    FINDINGS,
    attribute_vector,
    findings_matrix,
    make_synthetic_dataset,
    split_by_patient,
    stack_pixels,
)
from neutralyze.editing import alpha_sweep
from neutralyze.errors import DegenerateLabels, EmptyGroup, FairnessUndefined, InvalidAlpha, ShapeError
from neutralyze.metrics import auc

FAST = AugmentConfig.none()


@pytest.fixture(scope="module")
def cohort():
    recs = make_synthetic_dataset(1000, 64, seed=0)
    return split_by_patient(recs, seed=0)


# mixup and balancing


def test_mixup_identities():
    xa, ya = torch.rand(4, 1, 8, 8), torch.rand(4, 15)
    xb, yb = torch.rand(4, 1, 8, 8), torch.rand(4, 15)
    x, y = mixup_batch((xa, ya), (xb, yb), 1.0)
    assert torch.equal(x, xa) and torch.equal(y, ya)
    x, y = mixup_batch((xa, ya), (xb, yb), 0.0)
    assert torch.equal(x, xb) and torch.equal(y, yb)
    x, _ = mixup_batch((torch.full((2, 1, 4, 4), 0.2), ya[:2]), (torch.full((2, 1, 4, 4), 0.6), yb[:2]), 0.5)
    assert torch.allclose(x, torch.full_like(x, 0.4), atol=1e-7)
    with pytest.raises(ShapeError):
        mixup_batch((xa, ya), (xb[:2], yb[:2]), 0.5)


@given(st.floats(0, 1))
def test_mixup_is_convex(lam):
    xa, xb = torch.zeros(2, 1, 2, 2), torch.ones(2, 1, 2, 2)
    x, _ = mixup_batch((xa, torch.zeros(2, 1)), (xb, torch.ones(2, 1)), lam)
    assert torch.allclose(x, torch.full_like(x, 1 - lam), atol=1e-6)


def test_balanced_indices_matching_rule():
    groups = np.r_[np.zeros(100, int), np.ones(30, int)]
    idx = balanced_indices(groups, seed=0)
    assert np.bincount(groups[idx]).tolist() == [30, 30]
    assert set(np.flatnonzero(groups == 1)) <= set(idx)
    assert len(set(idx)) == len(idx)
    assert np.array_equal(idx, balanced_indices(groups, seed=0))
    even = np.r_[np.zeros(50, int), np.ones(50, int)]
    assert np.bincount(even[balanced_indices(even, 0)]).tolist() == [50, 50]
    with pytest.raises(EmptyGroup):
        balanced_indices(np.zeros(10, int))


@given(st.integers(1, 80), st.integers(1, 80), st.integers(0, 1000))
def test_balanced_indices_property(n0, n1, seed):
    groups = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    idx = balanced_indices(groups, seed)
    assert np.bincount(groups[idx], minlength=2).tolist() == [min(n0, n1)] * 2


def test_balanced_resample_records(cohort):
    recs = cohort.train
    out = balanced_resample(recs, "sex", seed=0)
    counts = np.bincount([r.sex for r in out])
    assert counts[0] == counts[1] == min(np.bincount([r.sex for r in recs]))


class _CountingNet(SmallConvNet):
    def __init__(self):
        super().__init__(15, widths=(4, 4, 4, 4))
        self.seen = 0

    def forward(self, x):
        self.seen += x.shape[0]
        return super().forward(x)


def test_balanced_strategy_epoch_size():
    groups = np.r_[np.zeros(100, int), np.ones(30, int)]
    images = np.zeros((130, 1, 16, 16), np.float32)
    model = _CountingNet()
    fit_classifier(model, images, np.zeros((130, 15), np.float32), lr=1e-3, batch_size=32, epochs=2, seed=0,
                   augment=FAST, strategy=TrainStrategy.balanced(), groups=groups)
    assert model.seen == 2 * 60


def test_strategy_defaults():
    assert TrainStrategy.neutralized().alpha == 0.5
    assert TrainStrategy.neutralized(encoder_kind="unet").name == "neutralized-unet"
    assert TrainStrategy.mixup().beta_param == 1.0
    with pytest.raises(InvalidAlpha):
        TrainStrategy.neutralized(alpha=1.5)


# fairness


def _two_class_group(target_auc, half=20):
    """Scores with an exact AUC: negatives at 0..half-1, each positive above ``c_i`` of them."""
    wins = int(round(target_auc * half * half))
    c = np.full(half, wins // half)
    c[: wins % half] += 1
    labels = np.r_[np.ones(half), np.zeros(half)].astype(int)
    return np.r_[c - 0.5, np.arange(half, dtype=float)], labels


def test_summarize_group_aucs_example():
    lo, gap, sd = summarize_group_aucs([0.8, 0.7, 0.75])
    assert lo == pytest.approx(0.7, abs=1e-9)
    assert gap == pytest.approx(0.1, abs=1e-9)
    assert sd == pytest.approx(0.05, abs=1e-9)


def test_subgroup_fairness_on_constructed_predictions():
    scores, labels, groups = [], [], []
    for g, target in enumerate((0.8, 0.7, 0.75)):
        s, y = _two_class_group(target)
        assert auc(s, y) == pytest.approx(target, abs=1e-12)
        scores.append(s)
        labels.append(y)
        groups.append(np.full(len(s), g))
    report = subgroup_fairness(np.concatenate(scores), np.concatenate(labels), np.concatenate(groups))
    f = report.per_finding[0]
    assert (f.min_auc, f.gap, f.sd) == pytest.approx((0.7, 0.1, 0.05), abs=1e-9)


def test_fairness_identical_groups():
    rng = np.random.default_rng(0)
    s, y = rng.random(50), rng.integers(0, 2, 50)
    report = subgroup_fairness(np.r_[s, s], np.r_[y, y], np.r_[np.zeros(50), np.ones(50)])
    assert report.per_finding[0].gap == 0 and report.per_finding[0].sd == 0


def test_fairness_one_class_group_and_undefined():
    s = np.array([0.1, 0.9, 0.2, 0.8, 0.5, 0.6])
    y = np.array([0, 1, 0, 1, 1, 1])
    g = np.array([0, 0, 1, 1, 2, 2])
    with pytest.warns(UserWarning):
        f = subgroup_fairness(s, y, g).per_finding[0]
    assert set(f.group_aucs) == {0, 1}
    with pytest.raises(FairnessUndefined), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        subgroup_fairness(s, y, np.array([0, 0, 0, 0, 1, 1]))
    probs = np.random.default_rng(0).random((40, 2))
    labels = np.c_[np.tile([0, 1], 20), np.zeros(40, int)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = subgroup_fairness(probs, labels, np.repeat([0, 1], 20), ["a", "b"])
    assert report.undefined == ["b"] and len(report.per_finding) == 1


def test_write_table4(tmp_path):
    rows = [{"method": "original", "attribute": "sex", "worst_case_auc": 0.7, "auc_gap": None, "auc_sd": 0.01}]
    write_table4(rows, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == [
        "method,attribute,worst_case_auc,auc_gap,auc_sd",
        "original,sex,0.7,,0.01",
    ]


# judge


def test_leakage_rows():
    y = np.array([0, 1] * 50)
    row = leakage_row(0.0, y.astype(float), y)
    assert all(row[k] == 1.0 for k in ("auc", "acc", "sen", "spe", "f1"))
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 10000)
    assert leakage_row(0.5, rng.permutation(y).astype(float), y)["auc"] == pytest.approx(0.5, abs=0.02)
    with pytest.warns(UserWarning):
        assert leakage_row(1.0, np.ones(5), np.ones(5, int))["auc"] is None


def test_judge_degenerate_labels(cohort):
    males = [r for r in cohort.train if r.sex == 1][:20]
    with pytest.raises(DegenerateLabels):
        train_judge(males, JudgeHyper(epochs=1, backbone="small", augment=FAST))


def test_judge_untrained_is_near_chance(cohort):
    judge = train_judge(cohort.train, JudgeHyper(epochs=0, backbone="small", batch_size=64))
    p = predict_proba(judge, stack_pixels(cohort.test), "sex")
    assert 0.3 <= auc(p, attribute_vector(cohort.test, "sex")) <= 0.7


@pytest.fixture(scope="module")
def judge(cohort):
    return train_judge(cohort.train, JudgeHyper(epochs=5, batch_size=32, backbone="small", seed=0))


@pytest.mark.slow
def test_judge_separates_synthetic_sex(cohort, judge):
    p = predict_proba(judge, stack_pixels(cohort.test), "sex")
    assert auc(p, attribute_vector(cohort.test, "sex")) >= 0.98


def test_judge_determinism(cohort):
    hyper = JudgeHyper(epochs=1, batch_size=64, backbone="small", seed=3)
    a = train_judge(cohort.train[:200], hyper)
    b = train_judge(cohort.train[:200], hyper)
    assert a.final_loss == pytest.approx(b.final_loss, abs=1e-6)


def test_judge_checkpoint_and_leakage_csv(tmp_path, cohort, judge):
    judge.save(tmp_path / "j.nz")
    back = JudgeCheckpoint.load(tmp_path / "j.nz")
    x = stack_pixels(cohort.test[:8])
    np.testing.assert_array_equal(predict_proba(judge, x), predict_proba(back, x))
    torch.manual_seed(0)
    from neutralyze.neutralizer import Generator, GeneratorSpec

    gen = Generator(GeneratorSpec.vit(64, embed_dim=48, depth=1, heads=2, decoder_channels=(16, 8, 8)))
    edited = alpha_sweep(gen, cohort.test, alphas=(0.0, 0.5, 1.0))
    rows = evaluate_leakage(back, edited)
    assert [r["alpha"] for r in rows] == [0.0, 0.5, 1.0]
    write_leakage_csv(rows, tmp_path / "leak.csv")
    assert (tmp_path / "leak.csv").read_text().splitlines()[0] == ",".join(LEAKAGE_COLUMNS)


# diagnosis model


def test_positive_weights():
    y = np.zeros((10, 15), int)
    y[:2, 0] = 1
    y[:, 1] = np.r_[np.ones(5), np.zeros(5)]
    with pytest.warns(UserWarning):
        w = positive_weights(y, 1e4)
    assert w[0] == 4.0 and w[1] == 1.0 and w[2] == 1e4


def test_snapshot_symmetry_averages_to_half():
    rng = np.random.default_rng(0)
    p = rng.random((60, 15))
    avg = ensemble_probabilities(np.stack([p, 1 - p]))
    np.testing.assert_allclose(avg, 0.5)
    y = rng.integers(0, 2, (60, 15))
    assert report_from_probabilities(avg, y).macro["roc_auc"] == pytest.approx(0.5)


def test_report_excludes_absent_findings():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, (30, 15))
    y[:, 3] = 0
    with pytest.warns(UserWarning):
        rep = report_from_probabilities(rng.random((30, 15)), y)
    assert rep.per_finding[FINDINGS[3]]["roc_auc"] is None
    vals = [rep.per_finding[n]["roc_auc"] for n in FINDINGS if n != FINDINGS[3]]
    assert rep.macro["roc_auc"] == pytest.approx(np.mean(vals))


def _ddm_hyper(epochs, extra=0, **kw):
    return DdmHyper(epochs=epochs, extra_ensemble_epochs=extra, batch_size=32, backbone="small",
                    augment=FAST, **kw)


def test_ddm_untrained_is_chance(cohort):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ck = train_ddm(stack_pixels(cohort.train), findings_matrix(cohort.train), hyper=_ddm_hyper(0))
        rep = evaluate_ddm(ck, stack_pixels(cohort.test), findings_matrix(cohort.test))
    assert 0.4 <= rep.macro["roc_auc"] <= 0.6


@pytest.mark.slow
def test_ddm_learns_synthetic_findings(cohort, tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ck = train_ddm(stack_pixels(cohort.train), findings_matrix(cohort.train), hyper=_ddm_hyper(4, extra=2))
        assert len(ck.snapshots) == 2 and ck.snapshot_epochs == [5, 6]
        test_x, test_y = stack_pixels(cohort.test), findings_matrix(cohort.test)
        rep = evaluate_ddm(ck, test_x, test_y)
        assert rep.macro["roc_auc"] > 0.6
        assert evaluate_ddm(ck, test_x, test_y, "metric_avg").n_snapshots == 2
        ck.save(tmp_path / "d.nz")
        back = DdmCheckpoint.load(tmp_path / "d.nz")
        assert evaluate_ddm(back, test_x, test_y).macro == rep.macro


def test_ddm_single_snapshot_equals_plain_evaluation(cohort):
    x, y = stack_pixels(cohort.train[:100]), findings_matrix(cohort.train[:100])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ck = train_ddm(x, y, hyper=_ddm_hyper(1))
        rep = evaluate_ddm(ck, x, y)
        probs = sigmoid(predict_logits(ck.models()[0], x))
        assert rep.macro == report_from_probabilities(probs, y).macro


@pytest.mark.parametrize("strategy", [TrainStrategy.mixup(), TrainStrategy.manifold_mixup()])
def test_mixup_strategies_train(cohort, strategy):
    x, y = stack_pixels(cohort.train[:64]), findings_matrix(cohort.train[:64])
    groups = attribute_vector(cohort.train[:64], "sex")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ck = train_ddm(x, y, strategy, _ddm_hyper(1), groups=groups)
    assert np.isfinite(ck.epoch_losses[0])
