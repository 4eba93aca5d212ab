"""Negative-binomial-prior rate: quadrature formulas vs direct sums."""

import numpy as np
import pytest
from scipy.special import gammaln, xlogy

from pnrcap.analytic import holevo_g
from pnrcap.ba import mutual_information
from pnrcap.channels import build_fock_channel
from pnrcap.negbin import (
    NegBinParams,
    binomial_entropy,
    negbin_best_rate,
    negbin_conditional_entropy,
    negbin_entropy,
    negbin_mutual_info,
    negbin_prior,
    output_negbin,
)


def _negbin_pmf(ls: np.ndarray, r: float, P: float) -> np.ndarray:
    log_pmf = (
        gammaln(ls + r)
        - gammaln(ls + 1.0)
        - gammaln(r)
        + xlogy(ls, P)
        + r * np.log1p(-P)
    )
    return np.exp(log_pmf)


def _entropy_bits(p: np.ndarray) -> float:
    mask = p > 0.0
    return float(-np.sum(p[mask] * np.log2(p[mask])))


def test_negbin_params_consistency():
    params = NegBinParams(r=2.0, p=2.0 / 3.0)
    assert params.mean == pytest.approx(4.0, rel=1e-12)
    with pytest.raises(ValueError):
        NegBinParams(r=-1.0, p=0.5)
    with pytest.raises(ValueError):
        NegBinParams(r=1.0, p=1.0)


def test_negbin_prior_anchors():
    p = negbin_prior(1.0, 1.0, 10)
    assert p.probs[0] == pytest.approx(0.5, abs=1e-14)
    assert p.probs[1] == pytest.approx(0.25, abs=1e-14)

    point = negbin_prior(0.0, 2.0, 5)
    assert point.probs[0] == 1.0

    assert negbin_prior(2.0, 2.0, 5).probs[0] == pytest.approx(0.25, abs=1e-14)

    wide = negbin_prior(3.0, 0.7, 600)
    ks = np.arange(601, dtype=float)
    assert float(wide.probs @ ks) == pytest.approx(3.0, abs=1e-10)


def test_output_negbin_thinning():
    assert output_negbin(1.0, 2.0, 1.5).P == pytest.approx(2.0 / 3.5, rel=1e-14)
    assert output_negbin(0.0, 2.0, 1.5).P == 0.0
    out = output_negbin(0.5, 2.0, 1.0)
    assert out.P == pytest.approx(0.5, abs=1e-14)
    assert out.r == 1.0


def test_output_negbin_matches_binomially_thinned_prior():
    """Thinning a negative-binomial input leaves a negative binomial with the
    same shape at the detector."""
    eta, nbar, r = 0.35, 3.0, 1.7
    cutoff = 700
    prior = negbin_prior(nbar, r, cutoff)
    channel = build_fock_channel(eta, cutoff)
    marginal = channel.probs @ prior.probs
    out = output_negbin(eta, nbar, r)
    ls = np.arange(marginal.size, dtype=float)
    direct = _negbin_pmf(ls, out.r, out.P)
    assert np.max(np.abs(marginal - direct)) < 1e-12


def test_negbin_entropy_anchors_and_sums():
    assert negbin_entropy(1.0, 0.0) == 0.0
    assert negbin_entropy(1.0, 0.5) == pytest.approx(2.0, abs=1e-10)

    ls = np.arange(401, dtype=float)
    direct = _entropy_bits(_negbin_pmf(ls, 2.0, 0.6))
    assert negbin_entropy(2.0, 0.6) == pytest.approx(direct, abs=1e-8)


def test_binomial_entropy_anchors_and_sums():
    assert binomial_entropy(7, 0.0) == 0.0
    assert binomial_entropy(1, 0.5) == pytest.approx(1.0, abs=1e-12)

    ks = np.arange(11, dtype=float)
    pmf = np.exp(
        gammaln(11.0) - gammaln(ks + 1.0) - gammaln(11.0 - ks)
        + xlogy(ks, 0.3) + xlogy(10.0 - ks, 0.7)
    )
    assert binomial_entropy(10, 0.3) == pytest.approx(_entropy_bits(pmf), abs=1e-9)


def test_negbin_conditional_entropy_endpoints_and_sum():
    assert negbin_conditional_entropy(1.0, 2.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert negbin_conditional_entropy(0.0, 2.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    prior = negbin_prior(1.0, 1.0, 300)
    direct = sum(
        p_k * binomial_entropy(k, 0.5) for k, p_k in enumerate(prior.probs) if p_k > 0
    )
    assert negbin_conditional_entropy(0.5, 1.0, 1.0) == pytest.approx(direct, abs=1e-8)


def test_negbin_mutual_info_anchors():
    assert negbin_mutual_info(1.0, 1.0, 1.0) == pytest.approx(2.0, abs=1e-10)
    assert negbin_mutual_info(0.0, 5.0, 2.0) == 0.0
    assert negbin_mutual_info(0.5, 0.0, 2.0) == 0.0


def test_negbin_mutual_info_matches_matrix_path():
    """Quadrature route equals prior-through-channel mutual information."""
    eta, nbar, r = 0.5, 4.0, 2.0
    cutoff = 900
    prior = negbin_prior(nbar, r, cutoff)
    channel = build_fock_channel(eta, cutoff)
    assert negbin_mutual_info(eta, nbar, r) == pytest.approx(
        mutual_information(prior.probs, channel), abs=1e-7
    )


def test_negbin_additivity_consistency():
    """I = H(output) - H(output | input) for random parameter draws."""
    rng = np.random.default_rng(31)
    for _ in range(8):
        eta = float(rng.uniform(0.1, 1.0))
        nbar = float(rng.uniform(0.1, 8.0))
        r = float(rng.uniform(0.05, 5.0))
        out = output_negbin(eta, nbar, r)
        split = negbin_entropy(out.r, out.P) - negbin_conditional_entropy(eta, nbar, r)
        assert negbin_mutual_info(eta, nbar, r) == pytest.approx(split, abs=1e-8)


def test_negbin_best_rate_endpoints():
    rate, r_star = negbin_best_rate(1.0, 2.0)
    assert rate == pytest.approx(holevo_g(2.0), abs=1e-7)
    assert r_star == pytest.approx(1.0, abs=1e-3)

    rate, _ = negbin_best_rate(0.5, 0.0)
    assert rate == 0.0

    rate, r_star = negbin_best_rate(0.4, 3.0)
    assert np.isfinite(r_star) and r_star > 0.0
    assert 0.0 < rate < holevo_g(0.4 * 3.0)
