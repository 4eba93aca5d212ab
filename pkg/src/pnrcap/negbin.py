"""Achievable rates of negative-binomial photon-number ensembles.

A negative-binomial prior with shape ``r`` and mean ``nbar`` stays in the
same family after binomial thinning, which makes the output entropy, the
conditional entropy, and their difference available as single integrals
over z in (0, 1) plus elementary closed terms.  Maximising over ``r``
gives a tight lower bound on the Fock-ensemble capacity; ``r = 1`` is a
thermal prior.

Numerics: near z = 0 the integrands are ratios of two second-order zeros,
so every bracketed factor is evaluated by a small-argument series before
the catastrophic cancellation kicks in.  The logarithmic z -> 1 endpoint
is removed by substituting z = 1 - exp(-u) and integrating over u in
(0, inf); the substitution also turns the (1-z)^(r-1) factors into plain
exponentials, so nothing overflows for r < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, xlogy

from .analytic import LN2, PriorDistribution, binary_entropy
from .channels import check_transmission

__all__ = [
    "NegBinParams",
    "OutputNegBin",
    "QuadratureError",
    "negbin_prior",
    "output_negbin",
    "negbin_entropy",
    "binomial_entropy",
    "negbin_conditional_entropy",
    "negbin_mutual_info",
    "negbin_best_rate",
]

# Absolute accuracy demanded of every integral evaluation.
_QUAD_ABS_TOL = 1e-10
_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-12, limit=400)

R_SEARCH_BOUNDS = (1e-3, 1e3)


class QuadratureError(RuntimeError):
    """Raised when an entropy integral cannot reach the required accuracy."""


@dataclass(frozen=True)
class NegBinParams:
    """Input ensemble shape/success parameters; p = mean / (mean + r)."""

    r: float
    p: float

    def __post_init__(self):
        r = float(self.r)
        p = float(self.p)
        if r <= 0.0:
            raise ValueError("shape parameter r must be positive")
        if not (0.0 <= p < 1.0):
            raise ValueError("success parameter p must lie in [0, 1)")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "p", p)

    @property
    def mean(self) -> float:
        return self.r * self.p / (1.0 - self.p)

    @classmethod
    def from_mean(cls, nbar: float, r: float) -> "NegBinParams":
        nbar = float(nbar)
        if nbar < 0.0:
            raise ValueError("mean photon number must be nonnegative")
        return cls(r=r, p=nbar / (nbar + r))


@dataclass(frozen=True)
class OutputNegBin:
    """Detected-count law: negative binomial with unchanged shape r."""

    r: float
    P: float

    def __post_init__(self):
        if float(self.r) <= 0.0:
            raise ValueError("shape parameter r must be positive")
        if not (0.0 <= float(self.P) < 1.0):
            raise ValueError("success parameter P must lie in [0, 1)")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "P", float(self.P))

    @property
    def mean(self) -> float:
        return self.r * self.P / (1.0 - self.P)


def negbin_prior(nbar: float, r: float, cutoff: int) -> PriorDistribution:
    """Negative-binomial photon-number prior truncated at ``cutoff``.

    Probabilities are the exact untruncated values with the residual mass
    reported in ``tail``; ``nbar = 0`` degenerates to the vacuum.
    """
    params = NegBinParams.from_mean(nbar, r)
    cutoff = int(cutoff)
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    k = np.arange(cutoff + 1, dtype=float)
    if params.p == 0.0:
        probs = np.zeros(cutoff + 1)
        probs[0] = 1.0
        return PriorDistribution(probs=probs, weights=k)
    log_p = (
        gammaln(k + params.r)
        - gammaln(k + 1.0)
        - gammaln(params.r)
        + xlogy(k, params.p)
        + params.r * math.log1p(-params.p)
    )
    probs = np.exp(log_p)
    tail = max(0.0, 1.0 - probs.sum())
    return PriorDistribution(probs=probs, weights=k, tail=tail)


def output_negbin(eta: float, nbar: float, r: float) -> OutputNegBin:
    """Detected-count parameters after transmissivity-eta thinning."""
    eta = check_transmission(eta)
    nbar = float(nbar)
    if nbar < 0.0:
        raise ValueError("mean photon number must be nonnegative")
    r = float(r)
    if r <= 0.0:
        raise ValueError("shape parameter r must be positive")
    s = eta * nbar
    return OutputNegBin(r=r, P=s / (s + r))


def _quad_u(integrand, name: str) -> float:
    """Integrate over u in (0, inf) and insist on near-machine accuracy."""
    value, abserr = quad(integrand, 0.0, np.inf, **_QUAD_OPTS)
    # absolute floor for tiny integrals, relative slack for large ones
    allowed = max(_QUAD_ABS_TOL, 1e-9 * abs(value))
    if abserr > allowed:
        raise QuadratureError(
            f"{name}: quadrature error estimate {abserr:.2e} exceeds "
            f"{allowed:g}"
        )
    return value


def _power_bracket(x: float, r: float) -> float:
    """(1 + x/r)^(-r) + x - 1, stable for every x >= 0.

    The terms cancel to second order near x = 0, so small arguments are
    summed from the binomial series (in powers of x, radius r) instead of
    evaluated directly.
    """
    if x == 0.0:
        return 0.0
    if x > 0.05 * min(1.0, r):
        return math.expm1(-r * math.log1p(x / r)) + x
    # series: sum_{j>=2} (-1)^j Gamma(r+j) / (Gamma(r) j! r^j) * x^j
    term = (r + 1.0) * x * x / (2.0 * r)
    total = term
    for j in range(2, 30):
        term *= -x * (r + j) / (r * (j + 1.0))
        total += term
        if abs(term) <= 1e-18 * abs(total):
            break
    return total


def _difference_bracket(y_small: float, y_large: float, r: float, linear: float) -> float:
    """(1+y_small/r)^-r - (1+y_large/r)^-r - linear, with linear = y_large - y_small.

    Vanishes to second order; evaluated by the joint series when the
    direct form would lose digits to cancellation.
    """
    if y_large == 0.0:
        return 0.0
    if y_large > 0.05 * min(1.0, r):
        a = math.expm1(-r * math.log1p(y_small / r)) if y_small > 0.0 else 0.0
        b = math.expm1(-r * math.log1p(y_large / r))
        return a - b - linear
    # joint binomial series; the j = 0, 1 terms cancel `linear` exactly
    coeff = (r + 1.0) / (2.0 * r)
    ts = coeff * y_small * y_small
    tl = coeff * y_large * y_large
    total = ts - tl
    for j in range(2, 30):
        factor = -(r + j) / (r * (j + 1.0))
        ts *= factor * y_small
        tl *= factor * y_large
        total += ts - tl
        if abs(ts) + abs(tl) <= 1e-18 * max(abs(total), 1e-300):
            break
    return total


def negbin_entropy(r: float, P: float) -> float:
    """Entropy (bits) of a negative-binomial count law with parameters (r, P)."""
    r = float(r)
    P = float(P)
    if r <= 0.0:
        raise ValueError("shape parameter r must be positive")
    if not (0.0 <= P < 1.0):
        raise ValueError("success parameter P must lie in [0, 1)")
    if P == 0.0:
        return 0.0
    mean = r * P / (1.0 - P)
    closed = r * (binary_entropy(P) - P * math.log2(r)) / (1.0 - P)

    def integrand(u: float) -> float:
        z = -math.expm1(-u)
        # (1-z)^(r-1) - 1 times exp(-u) collapses to exp(-r u) - exp(-u)
        left = math.expm1(-r * u) - math.expm1(-u)
        right = _power_bracket(mean * z, r)
        return -left * right / (u * z)

    # integral over z in (0,1) of bracket/(z ln(1-z)) after z = 1 - e^-u
    value = _quad_u(integrand, "negbin_entropy")
    return closed + value / LN2


def binomial_entropy(k: int, eta: float) -> float:
    """Entropy (bits) of Binomial(k, eta) via k*h(eta) plus one integral."""
    eta = check_transmission(eta)
    k = int(k)
    if k < 0:
        raise ValueError("photon number must be nonnegative")
    if k == 0 or eta in (0.0, 1.0):
        return 0.0
    closed = k * binary_entropy(eta)
    if k == 1:
        return closed  # the bracket vanishes identically

    def bracket(z: float) -> float:
        if k * z > 0.1:
            # z hits 1.0 exactly once exp(-u) underflows; (1-z)^k -> 0
            last = math.exp(k * math.log1p(-z)) if z < 1.0 else 0.0
            return (
                math.exp(k * math.log1p(-eta * z))
                + math.exp(k * math.log1p(-(1.0 - eta) * z))
                - last
                - 1.0
            )
        # series: sum_{j>=2} C(k,j) (-z)^j (eta^j + (1-eta)^j - 1)
        total = 0.0
        comb = k * (k - 1) / 2.0
        sign_z = z * z
        pe, pq = eta * eta, (1.0 - eta) * (1.0 - eta)
        term = comb * sign_z * (pe + pq - 1.0)
        total = term
        comb_j = comb
        zj = sign_z
        for j in range(2, min(k, 22)):
            comb_j *= (k - j) / (j + 1.0)
            zj *= -z
            pe *= eta
            pq *= 1.0 - eta
            t = comb_j * zj * (pe + pq - 1.0)
            total += t
            if abs(t) <= 1e-18 * max(abs(total), 1e-300):
                break
        return total

    def integrand(u: float) -> float:
        z = -math.expm1(-u)
        return bracket(z) * math.exp(-u) / (u * z)

    value = _quad_u(integrand, "binomial_entropy")
    return closed + value / LN2


def negbin_conditional_entropy(eta: float, nbar: float, r: float) -> float:
    """Average detected-count entropy H(Y|X) of the thinned ensemble, bits."""
    eta = check_transmission(eta)
    nbar = float(nbar)
    if nbar < 0.0:
        raise ValueError("mean photon number must be nonnegative")
    r = float(r)
    if r <= 0.0:
        raise ValueError("shape parameter r must be positive")
    if nbar == 0.0 or eta in (0.0, 1.0):
        return 0.0
    closed = nbar * binary_entropy(eta)  # equals h(eta) * p r / (1 - p)

    def bracket(z: float) -> float:
        y1 = nbar * eta * z
        y2 = nbar * (1.0 - eta) * z
        y3 = nbar * z
        # (1+y1/r)^-r + (1+y2/r)^-r - (1+y3/r)^-r - 1
        return _power_bracket(y1, r) + _power_bracket(y2, r) - _power_bracket(y3, r)

    def integrand(u: float) -> float:
        z = -math.expm1(-u)
        return bracket(z) * math.exp(-u) / (u * z)

    value = _quad_u(integrand, "negbin_conditional_entropy")
    return closed + value / LN2


def negbin_mutual_info(eta: float, nbar: float, r: float) -> float:
    """Rate (bits) of the negative-binomial ensemble, via the combined integral."""
    eta = check_transmission(eta)
    nbar = float(nbar)
    if nbar < 0.0:
        raise ValueError("mean photon number must be nonnegative")
    r = float(r)
    if r <= 0.0:
        raise ValueError("shape parameter r must be positive")
    if nbar == 0.0 or eta == 0.0:
        return 0.0
    if eta == 1.0:
        out = output_negbin(1.0, nbar, r)
        return negbin_entropy(r, out.P)

    s = eta * nbar
    closed = (
        (s + r) * binary_entropy(s / (s + r))
        - nbar * binary_entropy(eta)
        - s * math.log2(r)
    )

    def integrand(u: float) -> float:
        z = -math.expm1(-u)
        emu = math.exp(-u)
        # (1-z)^(r-1) * [(r/(r+s z))^r + s z - 1] * e^-u  ->  e^{-ru} * A(s z)
        left = math.exp(-r * u) * _power_bracket(s * z, r)
        # (r/(r+(1-eta) nbar z))^r - (r/(r+nbar z))^r - eta nbar z
        right = _difference_bracket(
            (1.0 - eta) * nbar * z, nbar * z, r, eta * nbar * z
        )
        return -(left + emu * right) / (u * z)

    value = _quad_u(integrand, "negbin_mutual_info")
    return closed + value / LN2


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def negbin_best_rate(
    eta: float,
    nbar: float,
    bounds: tuple[float, float] = R_SEARCH_BOUNDS,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """Maximise the negative-binomial rate over the shape parameter.

    Golden-section search on log r, followed by parabolic refinement of
    the final triple.  Returns ``(rate_bits, r_star)``.
    """
    eta = check_transmission(eta)
    nbar = float(nbar)
    if nbar < 0.0:
        raise ValueError("mean photon number must be nonnegative")
    if nbar == 0.0 or eta == 0.0:
        return 0.0, 1.0

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    if not lo < hi:
        raise ValueError("bounds must satisfy 0 < lower < upper")

    def f(t: float) -> float:
        return negbin_mutual_info(eta, nbar, math.exp(t))

    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > 1e-6:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = f(x2)

    # final bracketed triple for one-shot parabolic polish
    xs = [lo, (x1 if f1 >= f2 else x2), hi]
    fs = [f(xs[0]), (f1 if f1 >= f2 else f2), f(xs[2])]
    for _ in range(6):
        a, b, c = xs
        fa, fb, fc = fs
        denom = (b - a) * (fb - fc) - (b - c) * (fb - fa)
        if denom == 0.0:
            break
        x_new = b - 0.5 * ((b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)) / denom
        if not (a < x_new < c) or abs(x_new - b) < 1e-14:
            break
        f_new = f(x_new)
        if f_new > fb:
            if x_new < b:
                xs, fs = [a, x_new, b], [fa, f_new, fb]
            else:
                xs, fs = [b, x_new, c], [fb, f_new, fc]
        else:
            if x_new < b:
                xs, fs = [x_new, b, c], [f_new, fb, fc]
            else:
                xs, fs = [a, b, x_new], [fa, fb, f_new]
        if xs[2] - xs[0] < tol:
            break

    best = int(np.argmax(fs))
    return fs[best], math.exp(xs[best])
