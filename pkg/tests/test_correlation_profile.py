"""Evidence maximisation, pseudo-probability calibration, and correlation shift."""

import numpy as np
import pytest
from oracle_utils import direct_log_evidence, grid_argmax_evidence

from shiftzoo.correlation_profile import (
    Calibrator,
    ClassRegression,
    EvidenceModel,
    calibrate,
    correlation_shift,
    dataset_correlation,
    log_evidence,
    logme_fit,
    predict_tilde,
)
from shiftzoo.errors import ValidationError
from shiftzoo.feature_store import build_feature_set
from shiftzoo.gaussian_profile import dataset_diversity, diversity_shift


def _svd_stats(phi, y):
    _, sv, vt = np.linalg.svd(phi, full_matrices=False)
    return sv * sv, vt @ (phi.T @ y), float(y @ y)


def test_log_evidence_matches_direct_matrices():
    rng = np.random.default_rng(0)
    for trial in range(10):
        n, d = int(rng.integers(5, 60)), int(rng.integers(1, 8))
        phi = rng.normal(size=(n, d))
        y = (rng.integers(0, 2, size=n)).astype(np.float64)
        s, btilde, y_sq = _svd_stats(phi, y)
        for alpha, beta in [(1.0, 1.0), (0.1, 5.0), (30.0, 0.01), (2.5, 100.0)]:
            got = log_evidence(s, btilde, y_sq, n, d, alpha, beta)
            want = direct_log_evidence(phi, y, alpha, beta)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_fixed_point_lands_on_grid_argmax():
    rng = np.random.default_rng(1)
    for trial in range(6):
        n, d = int(rng.integers(20, 100)), int(rng.integers(2, 8))
        phi = rng.normal(size=(n, d))
        w_true = rng.normal(size=d)
        y = (phi @ w_true + 0.3 * rng.normal(size=n) > 0).astype(np.float64)
        model = logme_fit(phi, y.astype(int), 2)
        reg = model.regressions[1]
        _, g_alpha, g_beta = grid_argmax_evidence(phi, y)
        assert abs(np.log10(reg.alpha) - np.log10(g_alpha)) <= 0.05 + 1e-9
        assert abs(np.log10(reg.beta) - np.log10(g_beta)) <= 0.05 + 1e-9


def test_evidence_trace_is_nondecreasing():
    rng = np.random.default_rng(2)
    for trial in range(12):
        n, d = int(rng.integers(8, 80)), int(rng.integers(1, 8))
        phi = rng.normal(size=(n, d)) * rng.uniform(0.1, 5.0)
        labels = rng.integers(0, 3, size=n)
        model = logme_fit(phi, labels, 3)
        for reg in model.regressions:
            trace = np.array(reg.evidence_trace)
            assert np.all(np.diff(trace) >= -1e-12)
            assert reg.evidence == pytest.approx(trace[-1])
            assert reg.alpha > 0 and reg.beta > 0


def test_logme_recovers_clean_linear_map():
    rng = np.random.default_rng(3)
    phi = rng.normal(size=(200, 5))
    w_true = np.array([2.0, -1.0, 0.5, 0.0, 1.5])
    scores = phi @ w_true
    labels = (scores > 0).astype(int)
    model = logme_fit(phi, labels, 2)
    probs = predict_tilde(model, phi)
    assert (probs.argmax(axis=1) == labels).mean() > 0.95


def test_logme_handles_absent_class():
    rng = np.random.default_rng(4)
    phi = rng.normal(size=(40, 3))
    labels = np.zeros(40, dtype=int)  # class 1 never appears
    model = logme_fit(phi, labels, 2)
    probs = predict_tilde(model, phi)
    assert probs.shape == (40, 2)
    assert np.isfinite(probs).all()


def test_logme_validation():
    with pytest.raises(ValidationError):
        logme_fit(np.zeros((0, 3)), np.zeros(0, dtype=int), 2)
    with pytest.raises(ValidationError):
        logme_fit(np.zeros((5, 3)), np.zeros(4, dtype=int), 2)
    with pytest.raises(ValidationError):
        logme_fit(np.zeros((5, 3)), np.zeros(5, dtype=int), 1)


def _manual_model(weights: np.ndarray) -> EvidenceModel:
    d, k = weights.shape
    regs = tuple(
        ClassRegression(
            weights=weights[:, i],
            alpha=1.0,
            beta=1.0,
            evidence=0.0,
            n_iters=0,
            clamped=False,
            evidence_trace=(0.0,),
        )
        for i in range(k)
    )
    return EvidenceModel(n_classes=k, dim=d, regressions=regs)


def test_predict_tilde_normalisation():
    model = _manual_model(np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 1.0]]))
    phi = np.array([[2.0, 1.0], [-1.0, 0.0], [0.0, 0.0]])
    probs = predict_tilde(model, phi)
    # row 0: raw (2, 0, 1) -> (2/3, 0, 1/3)
    np.testing.assert_allclose(probs[0], [2 / 3, 0.0, 1 / 3])
    # row 1: raw (-1, 1, 0) clamps to (0, 1, 0)
    np.testing.assert_allclose(probs[1], [0.0, 1.0, 0.0])
    # row 2: everything clamped -> uniform
    np.testing.assert_allclose(probs[2], [1 / 3, 1 / 3, 1 / 3])
    assert np.all(probs >= 0) and np.allclose(probs.sum(axis=1), 1.0)


def test_calibrator_bins_and_fallback():
    probs = np.array([[0.95, 0.05], [0.85, 0.15], [0.12, 0.88], [0.93, 0.07]])
    labels = np.array([0, 1, 1, 0])
    cal = calibrate(probs, labels, 2, n_bins=10)
    # class-0 bin 9 holds rows 0 and 3, both truly class 0
    assert cal.bin_accuracy[0, 9] == 1.0
    # class-0 bin 8 holds row 1, truly class 1
    assert cal.bin_accuracy[0, 8] == 0.0
    out = cal.apply(np.array([[0.97, 0.03], [0.55, 0.45]]))
    assert out[0, 0] == 1.0  # hits populated bin 9
    assert out[1, 0] == 0.55  # bin 5 empty, raw value kept
    # probability exactly 1.0 falls in the top bin, not out of range
    top = cal.apply(np.array([[1.0, 0.0]]))
    assert top[0, 0] == 1.0


def test_calibrate_empty_input_gives_identity():
    cal = calibrate(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
    probs = np.array([[0.3, 0.7]])
    np.testing.assert_allclose(cal.apply(probs), probs)
    with pytest.raises(ValidationError):
        calibrate(np.zeros((0, 2)), np.zeros(0, dtype=int), 2, n_bins=0)


def _domain(domain_id, n, seed, flip=False, shift=0.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 6))
    y = (x[:, 0] > 0).astype(int)
    if flip:
        y = 1 - y
    x = x + shift
    return build_feature_set(
        domain_id, x.astype(np.float32), y, dataset_name="cor", n_classes=2,
        split_ratio=0.2, seed=seed,
    )


def test_identical_conditionals_give_low_shift():
    for seed in range(3):
        fa = _domain("a", 1500, 10 + seed)
        fb = _domain("b", 1500, 200 + seed)
        pair = diversity_shift(fa, fb)
        cor = correlation_shift(fa, fb, pair, n_classes=2)
        assert not cor.empty_overlap
        assert cor.f_cor <= 0.05


def test_flipped_labels_give_high_shift():
    for seed in range(3):
        fa = _domain("a", 1500, 20 + seed)
        fb = _domain("b", 1500, 300 + seed, flip=True)
        pair = diversity_shift(fa, fb)
        cor = correlation_shift(fa, fb, pair, n_classes=2)
        assert cor.f_cor >= 0.9


def test_disjoint_domains_flag_empty_overlap():
    fa = _domain("a", 400, 30)
    fb = _domain("b", 400, 31, shift=60.0)
    pair = diversity_shift(fa, fb)
    cor = correlation_shift(fa, fb, pair, n_classes=2)
    assert cor.empty_overlap and cor.f_cor == 0.0
    assert cor.n_overlap_a == 0 and cor.n_overlap_b == 0


def test_dataset_correlation_averages_pairs():
    sets = [_domain("a", 600, 40), _domain("b", 600, 41), _domain("c", 600, 42, flip=True)]
    _, pair_div = dataset_diversity(sets)
    value, pairs = dataset_correlation(sets, pair_div, n_classes=2)
    assert len(pairs) == 3
    assert value == pytest.approx(np.mean([p.f_cor for p in pairs.values()]))
    # the flipped domain's pairs dominate the average
    assert pairs[("a", "c")].f_cor > pairs[("a", "b")].f_cor


def test_correlation_shift_bounds():
    for seed in range(4):
        fa = _domain("a", 500, 50 + seed)
        fb = _domain("b", 500, 60 + seed, flip=bool(seed % 2))
        pair = diversity_shift(fa, fb)
        cor = correlation_shift(fa, fb, pair, n_classes=2)
        assert 0.0 <= cor.f_cor <= 1.0
