import numpy as np
import pytest

from bamforge import (AttackKind, AttackSpec, Direction, apply_attack,
                      gen_random_pairs, init_orthogonal)
from bamforge.attacks import bim, ffgsm, fgsm, gn, pgd


@pytest.fixture(scope="module")
def setup():
    pats = gen_random_pairs(6, 8, 8, seed=0)
    model = init_orthogonal([8, 8, 8], seed=1)
    return model, pats.side_a, pats.side_b


def test_gn_zero_variance(setup):
    model, x, y = setup
    spec = AttackSpec(kind=AttackKind.GN, variance=0.0, seed=2)
    assert np.array_equal(gn(x, spec), x)


def test_gn_large_dim_mse():
    x = np.ones((10_000, 1))
    spec = AttackSpec(kind=AttackKind.GN, variance=12.25, seed=3)
    adv = gn(x, spec)
    assert np.mean((adv - x) ** 2) == pytest.approx(12.25, rel=0.03)


def test_gn_seeds_differ_stats_match():
    x = np.ones((5000, 1))
    a = gn(x, AttackSpec(kind=AttackKind.GN, variance=1.0, seed=4))
    b = gn(x, AttackSpec(kind=AttackKind.GN, variance=1.0, seed=5))
    assert not np.array_equal(a, b)
    assert np.mean((a - x) ** 2) == pytest.approx(np.mean((b - x) ** 2),
                                                  rel=0.1)


def test_fgsm_zero_epsilon(setup):
    model, x, y = setup
    spec = AttackSpec(kind=AttackKind.FGSM, epsilon=0.0)
    assert np.array_equal(fgsm(model, x, y, spec), x)


def test_fgsm_perturbation_mse_fingerprint(setup):
    model, x, y = setup
    spec = AttackSpec(kind=AttackKind.FGSM, epsilon=1.1)
    adv = fgsm(model, x, y, spec)
    # with no zero gradient components every entry moves by exactly epsilon
    assert np.all(np.abs(adv - x) == 1.1)
    assert np.mean((adv - x) ** 2) == pytest.approx(1.21, abs=1e-12)


def test_ffgsm_zero_alpha_reduces_to_fgsm(setup):
    model, x, y = setup
    f = fgsm(model, x, y, AttackSpec(kind=AttackKind.FGSM, epsilon=0.5))
    ff = ffgsm(model, x, y, AttackSpec(kind=AttackKind.FFGSM, epsilon=0.5,
                                       alpha=0.0, seed=6))
    assert np.allclose(f, ff, atol=1e-15)


def test_bim_single_step_collapse(setup):
    model, x, y = setup
    f = fgsm(model, x, y, AttackSpec(kind=AttackKind.FGSM, epsilon=0.3))
    b = bim(model, x, y, AttackSpec(kind=AttackKind.BIM, epsilon=0.3,
                                    alpha=0.3, iterations=1))
    assert np.allclose(f, b, atol=1e-15)


def test_pgd_saturates_with_large_alpha(setup):
    model, x, y = setup
    spec = AttackSpec(kind=AttackKind.PGD, epsilon=0.4, alpha=1.0,
                      iterations=3, seed=7)
    adv = pgd(model, x, y, spec)
    # alpha > 2*epsilon: every component lands on the ball surface
    assert np.all(np.abs(np.abs(adv - x) - 0.4) < 1e-12)


def test_projection_bound_all_attacks(setup):
    model, x, y = setup
    for kind, fn in ((AttackKind.FFGSM, ffgsm), (AttackKind.BIM, bim),
                     (AttackKind.PGD, pgd)):
        for seed in range(10):
            spec = AttackSpec(kind=kind, epsilon=0.7, alpha=0.9,
                              iterations=4, seed=seed)
            adv = fn(model, x, y, spec)
            assert np.max(np.abs(adv - x)) <= 0.7


def test_randomized_attacks_deterministic(setup):
    model, x, y = setup
    for kind in (AttackKind.GN, AttackKind.FFGSM, AttackKind.PGD):
        spec = AttackSpec(kind=kind, epsilon=0.5, alpha=0.2, iterations=3,
                          variance=1.0, seed=8)
        a = apply_attack(model, x, y, spec)
        b = apply_attack(model, x, y, spec)
        assert np.array_equal(a, b)


def test_attack_does_not_mutate_model(setup):
    model, x, y = setup
    snapshot = [w.copy() for w in model.weights]
    pgd(model, x, y, AttackSpec(kind=AttackKind.PGD, epsilon=0.5, alpha=0.3,
                                iterations=5, seed=9))
    for w, snap in zip(model.weights, snapshot):
        assert np.array_equal(w, snap)


def test_direction_b_to_a(setup):
    model, x, y = setup
    spec = AttackSpec(kind=AttackKind.FGSM, epsilon=0.2,
                      direction=Direction.B_TO_A)
    adv = apply_attack(model, y, x, spec)
    assert adv.shape == y.shape
    assert np.max(np.abs(adv - y)) <= 0.2 + 1e-15


def test_spec_validation():
    with pytest.raises(ValueError):
        AttackSpec(kind=AttackKind.FGSM, epsilon=-0.1)
    with pytest.raises(ValueError):
        AttackSpec(kind=AttackKind.PGD, epsilon=0.5, iterations=0)


def test_single_column_input(setup):
    model, x, y = setup
    adv = fgsm(model, x[:, 0], y[:, 0],
               AttackSpec(kind=AttackKind.FGSM, epsilon=0.3))
    assert adv.shape == x[:, 0].shape
