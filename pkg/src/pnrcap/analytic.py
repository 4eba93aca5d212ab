"""Closed-form rates and reference priors for the lossy photon channel.

All rates are in bits per channel use.  ``holevo_g`` is the entropy of a
thermal (geometric) photon-number distribution with the given mean and
doubles as the ultimate classical capacity of the pure-loss channel when
evaluated at the received mean photon number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .channels import check_transmission

__all__ = [
    "LN2",
    "PriorDistribution",
    "ExponentialIntensity",
    "binary_entropy",
    "holevo_g",
    "classical_capacity",
    "homodyne_capacity",
    "heterodyne_capacity",
    "bowen_asymptotic",
    "gordon_asymptotic",
    "thermal_prior",
    "gaussian_coherent_reference",
]

LN2 = math.log(2.0)

# Tolerances for validating distributions on construction.
_SUM_ATOL = 1e-12
_MEAN_ATOL = 1e-10


@dataclass(frozen=True)
class PriorDistribution:
    """Input distribution over a photon-cost alphabet.

    ``weights`` carries the photon cost of each symbol (Fock index, or
    detected intensity for coherent alphabets), so ``mean_photons`` is
    always well defined.  ``tail`` records mass beyond the truncation for
    priors written down from an infinite family (thermal, negative
    binomial); solver outputs always have ``tail == 0`` and then the
    probabilities alone sum to one.
    """

    probs: np.ndarray
    weights: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        probs = np.ascontiguousarray(np.asarray(self.probs, dtype=float))
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty 1-D array")
        if weights.shape != probs.shape:
            raise ValueError("weights must match probs in shape")
        if np.any(probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        tail = float(self.tail)
        if tail < 0.0:
            raise ValueError("tail must be nonnegative")
        total = probs.sum() + tail
        if abs(total - 1.0) > _SUM_ATOL:
            raise ValueError(
                f"probabilities (plus tail) must sum to 1 within {_SUM_ATOL:g}, "
                f"got {total!r}"
            )
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "tail", tail)

    @property
    def mean_photons(self) -> float:
        """Average photon cost of the represented symbols."""
        return float(self.probs @ self.weights)

    def __len__(self) -> int:
        return self.probs.size


def binary_entropy(x):
    """Shannon entropy of a Bernoulli(x) variable, in bits."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("binary_entropy argument must lie in [0, 1]")
    h = -(xlogy(x, x) + xlogy(1.0 - x, 1.0 - x)) / LN2
    return float(h) if h.ndim == 0 else h


def holevo_g(x):
    """Thermal-state entropy g(x) = (x+1)log2(x+1) - x log2 x, g(0) = 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("mean photon number must be nonnegative")
    g = ((x + 1.0) * np.log1p(x) - xlogy(x, x)) / LN2
    return float(g) if g.ndim == 0 else g


def classical_capacity(eta: float, nbar: float):
    """Ultimate classical capacity of the pure-loss channel: g(eta * nbar)."""
    eta = check_transmission(eta)
    return holevo_g(eta * np.asarray(nbar, dtype=float))


def homodyne_capacity(eta: float, nbar: float):
    """Gaussian-ensemble homodyne rate 0.5*log2(1 + 4*eta*nbar)."""
    eta = check_transmission(eta)
    s = _received_mean(eta, nbar)
    out = 0.5 * np.log1p(4.0 * s) / LN2
    return float(out) if out.ndim == 0 else out


def heterodyne_capacity(eta: float, nbar: float):
    """Gaussian-ensemble heterodyne rate log2(1 + eta*nbar)."""
    eta = check_transmission(eta)
    s = _received_mean(eta, nbar)
    out = np.log1p(s) / LN2
    return float(out) if out.ndim == 0 else out


def _received_mean(eta: float, nbar) -> np.ndarray:
    nbar = np.asarray(nbar, dtype=float)
    if np.any(nbar < 0.0):
        raise ValueError("mean photon number must be nonnegative")
    return eta * nbar


def bowen_asymptotic(eta: float, nbar: float) -> float:
    """High-signal photon-counting rate 0.5*[log2(eta*nbar) + log2(e/(pi*(1-eta)))].

    Only meaningful for eta < 1 (the expression diverges at unit
    transmissivity) and positive received mean photon number.
    """
    eta = check_transmission(eta)
    if eta >= 1.0:
        raise ValueError("asymptotic counting rate diverges at eta = 1")
    s = eta * float(nbar)
    if s <= 0.0:
        raise ValueError("received mean photon number must be positive")
    return 0.5 * (math.log2(s) + math.log2(math.e / (math.pi * (1.0 - eta))))


def gordon_asymptotic(eta: float, nbar: float) -> float:
    """Leading-order coherent-state counting rate 0.5*log2(eta*nbar)."""
    eta = check_transmission(eta)
    s = eta * float(nbar)
    if s <= 0.0:
        raise ValueError("received mean photon number must be positive")
    return 0.5 * math.log2(s)


def thermal_prior(nbar: float, cutoff: int) -> PriorDistribution:
    """Thermal photon-number prior p_k = nbar^k / (nbar+1)^(k+1), k <= cutoff.

    The probabilities are the exact untruncated values; the mass beyond the
    cutoff is reported in ``tail``.  ``nbar = 0`` gives a point mass on the
    vacuum.
    """
    nbar = float(nbar)
    if nbar < 0.0:
        raise ValueError("mean photon number must be nonnegative")
    cutoff = int(cutoff)
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    k = np.arange(cutoff + 1, dtype=float)
    if nbar == 0.0:
        probs = np.zeros(cutoff + 1)
        probs[0] = 1.0
        return PriorDistribution(probs=probs, weights=k, tail=0.0)
    log_p = xlogy(k, nbar) - (k + 1.0) * math.log1p(nbar)
    probs = np.exp(log_p)
    tail = max(0.0, 1.0 - probs.sum())
    return PriorDistribution(probs=probs, weights=k, tail=tail)


@dataclass(frozen=True)
class ExponentialIntensity:
    """Detected-intensity density of the Gaussian coherent ensemble.

    The capacity-achieving Gaussian modulation sends coherent states whose
    intensity |alpha|^2 is exponentially distributed with the given mean.
    """

    mean: float

    def __post_init__(self):
        mean = float(self.mean)
        if mean <= 0.0:
            raise ValueError("mean intensity must be positive")
        object.__setattr__(self, "mean", mean)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0.0, np.exp(-x / self.mean) / self.mean, 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0.0, -np.expm1(-x / self.mean), 0.0)
        return float(out) if out.ndim == 0 else out

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0.0) or np.any(q >= 1.0):
            raise ValueError("quantile levels must lie in [0, 1)")
        out = -self.mean * np.log1p(-q)
        return float(out) if out.ndim == 0 else out


def gaussian_coherent_reference(nbar: float) -> ExponentialIntensity:
    """Intensity law (mean nbar) of the Gaussian coherent-state ensemble."""
    return ExponentialIntensity(mean=float(nbar))
