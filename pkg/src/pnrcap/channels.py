"""Photon-counting channel models for a pure-loss optical link.

A transmissivity-``eta`` loss acting on a Fock state ``|k>`` followed by
photon-number-resolving detection yields a binomially thinned count,

    p(l | k) = C(k, l) * eta**l * (1 - eta)**(k - l),        l <= k,

while a coherent state of intensity ``|alpha|^2`` yields Poisson counts
with mean ``eta * |alpha|^2`` (a discrete-time Poisson channel).

Channel matrices are truncated at a finite output count.  The residual
probability of each column is kept in ``tail_mass`` and is *never*
folded back by renormalisation; solvers treat it as one aggregated
overflow output symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

__all__ = [
    "ChannelMatrix",
    "binomial_conditional",
    "poisson_conditional",
    "build_fock_channel",
    "build_poisson_channel",
    "default_poisson_out_cutoff",
    "mixture_identity_check",
    "check_transmission",
]

# Column totals (probs + tail) must match unity this tightly.  The slack
# accommodates log-domain construction at photon numbers in the thousands,
# where lgamma magnitudes of order 1e4 leave relative errors near 1e-12
# in each exponentiated entry; genuine construction bugs sit far above it.
STOCHASTIC_ATOL = 1e-9


def check_transmission(eta: float) -> float:
    """Validate a transmissivity value and return it as a float."""
    eta = float(eta)
    if not (0.0 <= eta <= 1.0) or math.isnan(eta):
        raise ValueError(f"transmissivity must lie in [0, 1], got {eta!r}")
    return eta


def _check_count(value, name: str) -> int:
    count = int(value)
    if count != value or count < 0:
        raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")
    return count


@dataclass(frozen=True)
class ChannelMatrix:
    """Column-stochastic table ``probs[l, i] = p(count l | input symbol i)``.

    ``tail_mass[i]`` holds the probability of any count beyond the output
    cutoff for column ``i``.  Invariant: every column of ``probs`` plus its
    tail sums to one within ``STOCHASTIC_ATOL``.
    """

    probs: np.ndarray
    tail_mass: np.ndarray

    def __post_init__(self):
        probs = np.ascontiguousarray(np.asarray(self.probs, dtype=float))
        tail = np.ascontiguousarray(np.asarray(self.tail_mass, dtype=float))
        if probs.ndim != 2:
            raise ValueError("probs must be 2-D with shape (outputs, inputs)")
        if tail.shape != (probs.shape[1],):
            raise ValueError("tail_mass needs exactly one entry per input column")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError("channel probabilities must lie in [0, 1]")
        if np.any(tail < 0.0):
            raise ValueError("tail_mass entries must be nonnegative")
        deviation = np.abs(probs.sum(axis=0) + tail - 1.0)
        if np.any(deviation > STOCHASTIC_ATOL):
            raise ValueError(
                "channel columns must be stochastic within "
                f"{STOCHASTIC_ATOL:g}; worst deviation {deviation.max():.3e}"
            )
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "tail_mass", tail)

    @property
    def n_inputs(self) -> int:
        return self.probs.shape[1]

    @property
    def out_cutoff(self) -> int:
        """Largest explicitly represented output count."""
        return self.probs.shape[0] - 1

    def augmented(self) -> np.ndarray:
        """Return probs with the tail appended as one overflow output row."""
        return np.vstack([self.probs, self.tail_mass[None, :]])


def binomial_conditional(k: int, l: int, eta: float) -> float:
    """p(l detected | k sent) through a loss of transmissivity eta.

    Evaluated in the log-gamma domain so large photon numbers stay finite.
    """
    eta = check_transmission(eta)
    k = _check_count(k, "k")
    l = _check_count(l, "l")
    if l > k:
        return 0.0
    log_p = (
        gammaln(k + 1.0)
        - gammaln(l + 1.0)
        - gammaln(k - l + 1.0)
        + xlogy(l, eta)
        + xlogy(k - l, 1.0 - eta)
    )
    return float(np.exp(log_p))


def poisson_conditional(intensity: float, l: int) -> float:
    """Poisson count probability ``e^-c c^l / l!`` at detected intensity c."""
    c = float(intensity)
    if c < 0.0 or math.isnan(c):
        raise ValueError(f"intensity must be nonnegative, got {intensity!r}")
    l = _check_count(l, "l")
    return float(np.exp(-c + xlogy(l, c) - gammaln(l + 1.0)))


def _binomial_log_grid(eta: float, in_cutoff: int, out_cutoff: int) -> np.ndarray:
    """Log binomial pmf on the (out, in) grid; -inf where l > k."""
    k = np.arange(in_cutoff + 1, dtype=float)[None, :]
    l = np.arange(out_cutoff + 1, dtype=float)[:, None]
    # gammaln at non-positive integers is +inf, which drives the invalid
    # l > k region to -inf after the subtraction -- exactly what we want.
    log_p = (
        gammaln(k + 1.0)
        - gammaln(l + 1.0)
        - gammaln(k - l + 1.0)
        + xlogy(l, eta)
        + xlogy(k - l, 1.0 - eta)
    )
    return np.where(l <= k, log_p, -np.inf)


def build_fock_channel(
    eta: float, cutoff: int, out_cutoff: int | None = None
) -> ChannelMatrix:
    """Loss channel restricted to Fock inputs |0> .. |cutoff>.

    ``out_cutoff`` defaults to ``cutoff`` (loss never adds photons); a
    smaller value truncates the output and the clipped mass per column is
    reported in ``tail_mass``.
    """
    eta = check_transmission(eta)
    cutoff = _check_count(cutoff, "cutoff")
    if out_cutoff is None:
        out_cutoff = cutoff
    out_cutoff = _check_count(out_cutoff, "out_cutoff")
    with np.errstate(invalid="ignore"):
        probs = np.exp(_binomial_log_grid(eta, cutoff, out_cutoff))
    tail = np.clip(1.0 - probs.sum(axis=0), 0.0, None)
    return ChannelMatrix(probs=probs, tail_mass=tail)


def default_poisson_out_cutoff(intensities) -> int:
    """Output cutoff leaving only ~1e-13 column tail for Poisson counts."""
    c_max = float(np.max(intensities)) if np.size(intensities) else 0.0
    return int(math.ceil(c_max + 10.0 * math.sqrt(c_max) + 25.0))


def build_poisson_channel(
    intensities, out_cutoff: int | None = None
) -> ChannelMatrix:
    """Discrete-time Poisson channel over a finite intensity alphabet.

    ``intensities`` are the detected (post-loss) means; they must be
    nonnegative and strictly increasing.
    """
    c = np.atleast_1d(np.asarray(intensities, dtype=float))
    if c.ndim != 1 or c.size == 0:
        raise ValueError("intensities must be a non-empty 1-D sequence")
    if np.any(c < 0.0) or np.any(~np.isfinite(c)):
        raise ValueError("intensities must be finite and nonnegative")
    if np.any(np.diff(c) <= 0.0):
        raise ValueError("intensities must be strictly increasing")
    if out_cutoff is None:
        out_cutoff = default_poisson_out_cutoff(c)
    out_cutoff = _check_count(out_cutoff, "out_cutoff")
    l = np.arange(out_cutoff + 1, dtype=float)[:, None]
    log_p = -c[None, :] + xlogy(l, c[None, :]) - gammaln(l + 1.0)
    probs = np.exp(log_p)
    tail = np.clip(1.0 - probs.sum(axis=0), 0.0, None)
    return ChannelMatrix(probs=probs, tail_mass=tail)


def mixture_identity_check(
    alpha_sq: float, eta: float, l: int, k_cutoff: int | None = None
) -> tuple[float, float]:
    """Compare the two routes to the coherent-state count distribution.

    Left: direct Poisson conditional at intensity ``eta * alpha_sq``.
    Right: Poisson(alpha_sq) mixture of binomially thinned Fock inputs,
    summed up to ``k_cutoff``.  Both numbers are returned so callers can
    assert agreement at their own tolerance.
    """
    alpha_sq = float(alpha_sq)
    if alpha_sq < 0.0:
        raise ValueError("alpha_sq must be nonnegative")
    eta = check_transmission(eta)
    l = _check_count(l, "l")
    if k_cutoff is None:
        k_cutoff = int(math.ceil(alpha_sq + 10.0 * math.sqrt(alpha_sq) + 30.0))
    k_cutoff = _check_count(k_cutoff, "k_cutoff")
    if k_cutoff < l:
        raise ValueError("k_cutoff must be at least l")

    lhs = poisson_conditional(eta * alpha_sq, l)

    k = np.arange(l, k_cutoff + 1, dtype=float)
    log_weight = -alpha_sq + xlogy(k, alpha_sq) - gammaln(k + 1.0)
    log_thin = (
        gammaln(k + 1.0)
        - gammaln(l + 1.0)
        - gammaln(k - l + 1.0)
        + xlogy(l, eta)
        + xlogy(k - l, 1.0 - eta)
    )
    rhs = float(np.exp(log_weight + log_thin).sum())
    return lhs, rhs
