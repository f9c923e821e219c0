import numpy as np
import pytest

from bamforge import (End, PatternSet, SraConfig, alignment_gap, forward_ab,
                      forward_ba, gen_random_pairs, init_orthogonal, retrieve,
                      solve_rotation, train_bsra)
from bamforge.core import BamModel, gram_deviation, _sign


def test_single_pair_exact_recall():
    pats = PatternSet(side_a=np.array([[1.0], [-1.0], [1.0], [1.0]]),
                      side_b=np.array([[-1.0], [1.0], [1.0], [-1.0]]))
    model, _ = train_bsra(pats, init_orthogonal([4, 4, 4], seed=0), SraConfig())
    res = retrieve(model, pats.side_a[:, 0], start_end=End.A)
    assert np.array_equal(res.pattern, pats.side_b[:, 0])


def test_moderate_load_perfect_recall():
    # 15 pairs in 64 dimensions: one-shot recall with orthogonal weights
    pats = gen_random_pairs(15, 64, 64, seed=1)
    model, hist = train_bsra(pats, init_orthogonal([64, 64, 64], seed=2),
                             SraConfig(epochs=100))
    got_b = _sign(forward_ab(model, pats.side_a).logits)
    got_a = _sign(forward_ba(model, pats.side_b).logits)
    assert np.array_equal(got_b, pats.side_b)
    assert np.array_equal(got_a, pats.side_a)
    assert hist.epochs_run <= 100


def test_orthogonality_preserved():
    pats = gen_random_pairs(10, 32, 32, seed=3)
    init = init_orthogonal([32, 32, 32], seed=4)
    model, _ = train_bsra(pats, init, SraConfig(epochs=100,
                                                stop_on_perfect_recall=False))
    for w in model.weights:
        assert gram_deviation(w) < 1e-10


def test_half_step_gap_nonincrease():
    # one A->B rotation never worsens the forward alignment gap
    pats = gen_random_pairs(12, 16, 16, seed=5)
    model = init_orthogonal([16, 16, 16], seed=6)
    pred = forward_ab(model, pats.side_a).logits
    before = alignment_gap(pats.side_b, pred, np.eye(16))
    q = solve_rotation(pats.side_b, pred).Q
    rotated = BamModel(weights=(model.weights[0], q @ model.weights[1]))
    pred_after = forward_ab(rotated, pats.side_a).logits
    after = alignment_gap(pats.side_b, pred_after, np.eye(16))
    assert after <= before + 1e-12


def test_history_tracks_both_gaps():
    pats = gen_random_pairs(5, 8, 8, seed=7)
    _, hist = train_bsra(pats, init_orthogonal([8, 8, 8], seed=8),
                         SraConfig(epochs=20, stop_on_perfect_recall=False))
    assert len(hist.gap_b) == 20
    assert len(hist.gap_a) == 20
    assert hist.epochs_run == 20


def test_early_stop_on_perfect_recall():
    pats = gen_random_pairs(3, 32, 32, seed=9)
    _, hist = train_bsra(pats, init_orthogonal([32, 32, 32], seed=10),
                         SraConfig(epochs=100))
    assert hist.epochs_run < 100


def test_deterministic():
    pats = gen_random_pairs(8, 16, 16, seed=11)
    a, _ = train_bsra(pats, init_orthogonal([16, 16, 16], seed=12),
                      SraConfig(epochs=30))
    b, _ = train_bsra(pats, init_orthogonal([16, 16, 16], seed=12),
                      SraConfig(epochs=30))
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_rejects_nonorthogonal_init():
    pats = gen_random_pairs(2, 4, 4, seed=13)
    skewed = BamModel(weights=(np.full((4, 4), 0.3), np.eye(4)))
    with pytest.raises(ValueError):
        train_bsra(pats, skewed, SraConfig())
    with pytest.warns(UserWarning):
        train_bsra(pats, skewed, SraConfig(allow_nonorthogonal=True, epochs=2))


def test_rejects_dim_mismatch():
    pats = gen_random_pairs(2, 4, 4, seed=14)
    with pytest.raises(ValueError):
        train_bsra(pats, init_orthogonal([5, 5], seed=0), SraConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        SraConfig(epochs=0)


def test_inner_rotation_keeps_orthogonality():
    pats = gen_random_pairs(4, 12, 12, seed=15)
    model, _ = train_bsra(pats, init_orthogonal([12, 12, 12, 12], seed=16),
                          SraConfig(epochs=20, rotate_inner_layers=True,
                                    stop_on_perfect_recall=False))
    for w in model.weights:
        assert gram_deviation(w) < 1e-10
