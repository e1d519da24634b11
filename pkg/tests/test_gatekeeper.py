"""Prefix gating: threshold calibration, traces, decisions."""

import numpy as np
import pytest

from latentood import (
    ArgumentError,
    GateConfig,
    InsufficientDataError,
    TokenSequence,
    TypicalityConfig,
    calibrate_threshold,
    fit_global,
    fit_kde,
    fit_scorer,
    gate_sequence,
    score_global,
    smp_pool,
)
from latentood.typicality import TypicalityScorer

from conftest import StandardNormalField, make_dataset


# -- calibrate_threshold ------------------------------------------------------


def test_calibrate_constant_scores():
    assert calibrate_threshold(np.full(12, 3.25), percentile=99.0) == 3.25


def test_calibrate_linear_interpolation_oracle():
    scores = np.arange(1.0, 101.0)
    assert calibrate_threshold(scores, percentile=99.0) == pytest.approx(99.01)
    # sort-and-interpolate oracle: position p*(n-1) in the sorted array
    pos = 0.99 * (scores.size - 1)
    lo = int(np.floor(pos))
    want = scores[lo] + (pos - lo) * (scores[lo + 1] - scores[lo])
    assert calibrate_threshold(scores, percentile=99.0) == pytest.approx(want)


def test_calibrate_median_of_two():
    scores = np.concatenate([np.full(5, 1.0), np.full(5, 3.0)])
    assert calibrate_threshold(scores, percentile=50.0) == 2.0


def test_calibrate_needs_ten_scores():
    with pytest.raises(InsufficientDataError):
        calibrate_threshold(np.arange(9.0), percentile=99.0)


def test_calibrate_rejects_nonfinite():
    scores = np.arange(10.0)
    scores[3] = np.nan
    with pytest.raises(Exception):
        calibrate_threshold(scores, percentile=99.0)


def test_gate_config_validation():
    with pytest.raises(ArgumentError):
        GateConfig(threshold=1.0, percentile=0.0)
    with pytest.raises(ArgumentError):
        GateConfig(threshold=1.0, percentile=100.0)
    with pytest.raises(ArgumentError):
        GateConfig(threshold=1.0, min_prefix=0)


# -- gate_sequence with a covariance detector ----------------------------------


@pytest.fixture()
def cluster_gate():
    """Detector fitted on a tight cluster, threshold from its own scores."""
    rng = np.random.default_rng(80)
    train_rows = rng.normal(size=(200, 4)) * 0.5
    model = fit_global(make_dataset(train_rows, tag="cluster"))
    id_scores = np.array([score_global(model, row) for row in train_rows])
    threshold = calibrate_threshold(id_scores, percentile=99.0)
    return model, threshold, rng


def test_in_cluster_sequence_accepted(cluster_gate):
    model, threshold, rng = cluster_gate
    seq = TokenSequence(rng.normal(size=(6, 4)) * 0.1)
    trace = gate_sequence(seq, model, GateConfig(threshold=threshold))
    assert trace.decision == "accept"
    assert not trace.rejected
    assert trace.length == 6


def test_far_outside_sequence_rejected(cluster_gate):
    model, threshold, rng = cluster_gate
    # pooled mean sits ~40 sigma from the cluster center
    seq = TokenSequence(np.full((5, 4), 20.0) + rng.normal(size=(5, 4)) * 0.01)
    trace = gate_sequence(seq, model, GateConfig(threshold=threshold))
    assert trace.decision == "reject"
    assert trace.rejected
    assert bool(trace.over_threshold[-1])


def test_trace_shape_and_fields(cluster_gate):
    model, threshold, rng = cluster_gate
    seq = TokenSequence(rng.normal(size=(9, 4)))
    trace = gate_sequence(seq, model, GateConfig(threshold=threshold, min_prefix=3))
    assert trace.length == 9
    assert trace.scores.shape == (9,)
    assert trace.over_threshold.shape == (9,)
    assert trace.advisory.shape == (9,)
    assert trace.latency_s.shape == (9,)
    assert np.all(trace.latency_s >= 0.0)
    assert trace.threshold == threshold
    # first two prefixes are below the advisory window
    assert list(trace.advisory[:2]) == [True, True]
    assert not trace.advisory[2:].any()


def test_decision_at_full_length_matches_direct_smp_score(cluster_gate):
    model, threshold, rng = cluster_gate
    seq = TokenSequence(rng.normal(size=(7, 4)) * 3.0)
    trace = gate_sequence(seq, model, GateConfig(threshold=threshold))
    direct = score_global(model, smp_pool(seq))
    assert trace.scores[-1] == direct  # same summation order, 0 ULP
    assert trace.rejected == (direct > threshold)


def test_single_token_sequence_binds_despite_advisory_window(cluster_gate):
    model, threshold, _ = cluster_gate
    seq = TokenSequence(np.full((1, 4), 30.0))
    trace = gate_sequence(seq, model, GateConfig(threshold=threshold, min_prefix=3))
    assert trace.length == 1
    assert trace.advisory[0]  # below the window...
    assert trace.decision == "reject"  # ...but the full-length rule dominates


def test_threshold_monotonicity(cluster_gate):
    model, _, rng = cluster_gate
    train_rows = rng.normal(size=(200, 4)) * 0.5
    id_scores = np.array([score_global(model, row) for row in train_rows])
    seqs = [TokenSequence(rng.normal(size=(5, 4)) * s) for s in (0.2, 1.0, 2.5, 6.0)]
    decisions = {}
    for pct in (90.0, 95.0, 99.0):
        thr = calibrate_threshold(id_scores, percentile=pct)
        decisions[pct] = [
            gate_sequence(s, model, GateConfig(threshold=thr, percentile=pct)).rejected
            for s in seqs
        ]
    # raising the percentile never turns an accept into a reject
    for lo, hi in ((90.0, 95.0), (95.0, 99.0)):
        for a, b in zip(decisions[lo], decisions[hi]):
            assert not (b and not a)


def test_leading_masked_tokens_are_advisory(cluster_gate):
    model, threshold, rng = cluster_gate
    hidden = rng.normal(size=(5, 4))
    mask = np.array([0, 0, 1, 1, 1])
    trace = gate_sequence(
        TokenSequence(hidden, mask), model, GateConfig(threshold=threshold, min_prefix=1)
    )
    # no valid token yet: no score, flagged advisory
    assert np.isnan(trace.scores[0]) and np.isnan(trace.scores[1])
    assert trace.advisory[0] and trace.advisory[1]
    assert not trace.over_threshold[0]
    assert np.isfinite(trace.scores[2:]).all()


# -- detector dispatch --------------------------------------------------------


def test_gate_with_typicality_scorer():
    field = StandardNormalField()
    cfg = TypicalityConfig(probes=2, seed=81)
    rng = np.random.default_rng(82)
    train = make_dataset(rng.normal(size=(100, 4)))
    scorer = fit_scorer(field, train, cfg, bandwidth=0.2)
    id_scores = scorer.score_batch(train.rows64())
    threshold = calibrate_threshold(id_scores, percentile=99.0)

    seq = TokenSequence(rng.normal(size=(6, 4)))
    trace = gate_sequence(seq, scorer, GateConfig(threshold=threshold))
    assert trace.scores[-1] == scorer.score_one(smp_pool(seq))

    far = TokenSequence(np.full((4, 4), 25.0))
    assert gate_sequence(far, scorer, GateConfig(threshold=threshold)).rejected


def test_gate_with_plain_callable():
    detector = lambda z: float(np.linalg.norm(z))  # noqa: E731
    seq = TokenSequence(np.eye(3) * 6.0)
    trace = gate_sequence(seq, detector, GateConfig(threshold=1.5))
    assert trace.length == 3
    assert np.allclose(trace.scores[-1], np.linalg.norm(np.eye(3).mean(axis=0) * 6.0))


def test_gate_rejects_unknown_detector():
    class Opaque:
        pass

    seq = TokenSequence(np.ones((2, 2)))
    with pytest.raises(ArgumentError):
        gate_sequence(seq, Opaque(), GateConfig(threshold=1.0))


def test_gate_scorer_mode_uses_kde_mode_scores():
    # scorer whose KDE was fit elsewhere still routes through score_one
    field = StandardNormalField()
    scorer = TypicalityScorer(
        field=field, cfg=TypicalityConfig(probes=1, seed=83), kde=fit_kde(np.array([0.0, 1.0]))
    )
    seq = TokenSequence(np.ones((3, 2)))
    trace = gate_sequence(seq, scorer, GateConfig(threshold=100.0))
    assert trace.decision == "accept"
    assert np.isfinite(trace.scores).all()
