"""Augmentation contracts: identity cases, perturbation bounds, and the
distribution of draws (KS / chi-squared at alpha = 0.01)."""

import numpy as np
import pytest
from scipy import stats

from gel.augment import SsaConfig, WtConfig, ssa, wildcard
from gel.errors import ConfigError


def batch(n=4, c=7, d=10, seed=0):
    return np.random.default_rng(seed).normal(size=(n, c, d)).astype(np.float32)


def test_gamma_zero_is_bit_identity():
    b = batch()
    out = ssa(b, SsaConfig(gamma=0.0), np.random.default_rng(1))
    assert out.tobytes() == b.tobytes()


def test_rate_zero_is_bit_identity():
    b = batch()
    out = ssa(b, SsaConfig(gamma=2.0, rate=0.0), np.random.default_rng(1))
    assert out.tobytes() == b.tobytes()


def test_at_most_one_dimension_changes_within_gamma():
    b = batch(n=16, c=11)
    gamma = 1.5
    out = ssa(b, SsaConfig(gamma=gamma), np.random.default_rng(2))
    diff = out - b
    changed = (diff != 0).sum(axis=2)
    assert changed.max() <= 1
    assert np.abs(diff).max() <= gamma


def test_pad_positions_untouched():
    b = batch(n=8, c=5)
    mask = np.zeros((8, 5), dtype=bool)
    mask[:, 3:] = True
    out = ssa(b, SsaConfig(gamma=3.0), np.random.default_rng(3), pad_mask=mask)
    np.testing.assert_array_equal(out[:, 3:], b[:, 3:])


def test_negative_gamma_rejected():
    with pytest.raises(ConfigError):
        SsaConfig(gamma=-0.1)


def test_ssa_draw_distribution():
    """u empirically uniform on [-gamma, gamma]; dimension uniform over d'."""
    gamma, d = 2.0, 10
    n_draws = 100_000
    b = np.zeros((n_draws, 1, d), dtype=np.float64)
    out = ssa(b, SsaConfig(gamma=gamma), np.random.default_rng(4))
    diff = out[:, 0, :]
    dims = diff.nonzero()[1]
    us = diff[diff != 0]
    # a draw of exactly 0.0 would hide one position; vanishing probability
    assert len(us) >= n_draws - 5

    ks = stats.kstest(us, stats.uniform(loc=-gamma, scale=2 * gamma).cdf)
    assert ks.pvalue > 0.01

    counts = np.bincount(dims, minlength=d)
    chi2 = stats.chisquare(counts)
    assert chi2.pvalue > 0.01


def test_fresh_randomness_every_call():
    b = batch()
    rng = np.random.default_rng(5)
    out1 = ssa(b, SsaConfig(gamma=2.0), rng)
    out2 = ssa(b, SsaConfig(gamma=2.0), rng)
    assert not np.array_equal(out1, out2)


def test_wildcard_identity_and_full_drop():
    b = batch()
    rng = np.random.default_rng(6)
    out0 = wildcard(b, WtConfig(p=0.0), rng)
    assert out0.tobytes() == b.tobytes()
    out1 = wildcard(b, WtConfig(p=1.0), rng)
    assert np.all(out1 == 0.0)


def test_wildcard_drop_fraction_binomial_bound():
    n_pos = 100_000
    b = np.ones((n_pos, 1, 4), dtype=np.float32)
    out = wildcard(b, WtConfig(p=0.1), np.random.default_rng(7))
    frac = float((out == 0).all(axis=2).mean())
    assert 0.094 <= frac <= 0.106


def test_wildcard_respects_pad_mask():
    b = batch(n=6, c=4)
    mask = np.zeros((6, 4), dtype=bool)
    mask[:, 2:] = True
    out = wildcard(b, WtConfig(p=1.0), np.random.default_rng(8), pad_mask=mask)
    np.testing.assert_array_equal(out[:, 2:], b[:, 2:])
    assert np.all(out[:, :2] == 0.0)


def test_wt_probability_validated():
    with pytest.raises(ConfigError):
        WtConfig(p=1.5)
