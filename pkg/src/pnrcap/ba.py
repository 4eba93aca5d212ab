"""Constrained Blahut-Arimoto solver for finite photon-counting channels.

The solver maximises mutual information over input priors subject to an
exact mean photon-cost constraint.  Each round alternates

  1. the Bayes posterior  Phi_{x|y} = p(y|x) p_x / q(y),
  2. the tilted prior     p_x  proportional to  exp(lambda f_x) *
                          exp(sum_y p(y|x) ln Phi_{x|y}),

with the multiplier ``lambda`` re-solved every round so the updated prior
meets the cost target exactly.  Because each feasible iterate maximises
the same minorant over the feasible set, the achieved rate (which is a
true lower bound on capacity for *any* feasible prior) never decreases.

The stopping rule is the standard capacity-gap certificate: for a
feasible prior with output marginal q, and writing the cost penalty as
mu = -lambda >= 0 (the tilt multiplier lambda is nonpositive whenever
the constraint binds from above),

    capacity <= max_x [ D(p(.|x) || q) - mu (f_x - K) ],

so ``max_x[...] - rate`` bounds the remaining suboptimality.

Priors are carried in log-domain throughout, which keeps transiently
suppressed symbols recoverable and avoids overflow in the exponential
tilts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp, xlogy

from .analytic import LN2, PriorDistribution
from .channels import ChannelMatrix, build_fock_channel, check_transmission

__all__ = [
    "ConstraintSpec",
    "SolverConfig",
    "BAState",
    "CapacityResult",
    "mutual_information",
    "phi_update",
    "prior_update",
    "solve_multiplier",
    "ba_solve",
    "fock_capacity",
    "fock_out_cutoff",
]


@dataclass(frozen=True)
class ConstraintSpec:
    """Mean-cost constraint sum_x p_x * weights[x] = target."""

    weights: np.ndarray
    target: float

    def __post_init__(self):
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a non-empty 1-D array")
        if np.any(~np.isfinite(weights)) or np.any(weights < 0.0):
            raise ValueError("weights must be finite and nonnegative")
        target = float(self.target)
        if not (weights.min() <= target <= weights.max()):
            raise ValueError(
                f"target {target!r} is infeasible for weights in "
                f"[{weights.min()!r}, {weights.max()!r}]"
            )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "target", target)


@dataclass
class SolverConfig:
    """Knobs for the discrete solver.

    tolerance            certified capacity-gap threshold, in bits
    max_iterations       hard cap on Blahut-Arimoto rounds
    tail_epsilon         prior mass allowed near the Fock cutoff before
                         the alphabet is grown
    cutoff_growth        multiplicative cutoff growth factor
    cutoff_margin        number of top symbols inspected by the tail test
    initial_cutoff       starting Fock cutoff (None = automatic)
    max_cutoff           safety cap for the adaptive cutoff search
    multiplier_bracket   initial bracket for the multiplier root search
    track_history        record the per-iteration rate lower bound
    """

    tolerance: float = 1e-9
    max_iterations: int = 100_000
    tail_epsilon: float = 1e-12
    cutoff_growth: float = 1.5
    cutoff_margin: int = 10
    initial_cutoff: int | None = None
    max_cutoff: int = 20_000
    multiplier_bracket: tuple[float, float] = (-1.0, 1.0)
    track_history: bool = False


@dataclass(frozen=True)
class BAState:
    """Snapshot of one solver round (rates and gap in bits)."""

    log_prior: np.ndarray
    multiplier: float
    iteration: int
    rate_lower_bound: float
    capacity_gap: float


@dataclass(frozen=True)
class CapacityResult:
    """Converged (or best-effort) output of a capacity solve."""

    rate_bits: float
    prior: PriorDistribution
    multiplier: float
    iterations: int
    gap_bits: float
    mean_constraint_residual: float
    converged: bool
    history: tuple[float, ...] | None = None


def _augmented(channel: ChannelMatrix) -> np.ndarray:
    if not isinstance(channel, ChannelMatrix):
        raise TypeError("channel must be a ChannelMatrix")
    return channel.augmented()


def _prior_vector(prior, n: int) -> np.ndarray:
    p = prior.probs if isinstance(prior, PriorDistribution) else np.asarray(prior, float)
    p = np.ascontiguousarray(p, dtype=float)
    if p.shape != (n,):
        raise ValueError(f"prior has {p.size} entries, channel expects {n}")
    if np.any(p < 0.0):
        raise ValueError("prior probabilities must be nonnegative")
    return p


def _masked_log(values: np.ndarray) -> np.ndarray:
    """log(values) with zeros mapped to 0; callers only use masked entries."""
    out = np.zeros_like(values)
    np.log(values, out=out, where=values > 0.0)
    return out


def _divergences(P: np.ndarray, col_entropy: np.ndarray, p: np.ndarray) -> tuple:
    """Per-symbol divergences D(p(.|x) || q) in nats, plus the marginal q."""
    q = P @ p
    log_q = _masked_log(q)
    div = col_entropy - P.T @ log_q
    return div, q


def _column_entropy_term(P: np.ndarray) -> np.ndarray:
    """sum_y p(y|x) ln p(y|x) per column (the negative conditional entropy)."""
    return xlogy(P, P).sum(axis=0)


def mutual_information(prior, channel: ChannelMatrix) -> float:
    """Mutual information in bits; truncation tails count as one symbol."""
    P = _augmented(channel)
    p = _prior_vector(prior, P.shape[1])
    div, _ = _divergences(P, _column_entropy_term(P), p)
    support = p > 0.0
    return float(p[support] @ div[support] / LN2)


def phi_update(prior, channel: ChannelMatrix) -> np.ndarray:
    """Bayes posterior table of shape (n_inputs, n_outputs + 1).

    Column y holds Phi_{x|y}; outputs with zero marginal get a uniform
    column (they never contribute downstream because their joint mass
    is zero).
    """
    P = _augmented(channel)
    p = _prior_vector(prior, P.shape[1])
    joint = P * p  # broadcasts over rows
    q = joint.sum(axis=1)
    phi = np.full(P.shape, 1.0 / P.shape[1])
    np.divide(joint, q[:, None], out=phi, where=q[:, None] > 0.0)
    return phi.T


def _update_exponent(phi: np.ndarray, P: np.ndarray) -> np.ndarray:
    """b_x = sum_y p(y|x) ln Phi_{x|y} with 0 * ln 0 = 0."""
    if phi.shape != (P.shape[1], P.shape[0]):
        raise ValueError("phi must have shape (n_inputs, n_outputs + 1)")
    log_phi = np.full_like(phi, -np.inf)
    np.log(phi, out=log_phi, where=phi > 0.0)
    with np.errstate(invalid="ignore"):
        contrib = np.where(P.T > 0.0, P.T * log_phi, 0.0)
    return contrib.sum(axis=1)


def prior_update(
    phi: np.ndarray, channel: ChannelMatrix, multiplier: float, weights
) -> PriorDistribution:
    """Tilted prior p_x ~ exp(multiplier * f_x + sum_y p(y|x) ln Phi_{x|y})."""
    P = _augmented(channel)
    weights = np.asarray(weights, dtype=float)
    z = multiplier * weights + _update_exponent(phi, P)
    z_max = z.max()
    if not np.isfinite(z_max):
        raise RuntimeError("prior update produced no normalisable mass")
    p = np.exp(z - z_max)
    p /= p.sum()
    return PriorDistribution(probs=p, weights=weights)


def _tilted_stats(lam: float, f: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Mean and variance of f under the tilt p ~ exp(lam * f + b)."""
    z = lam * f + b
    z -= z.max()
    w = np.exp(z)
    w /= w.sum()
    mean = float(w @ f)
    var = float(w @ (f - mean) ** 2)
    return mean, var


def _solve_lambda(
    f: np.ndarray,
    b: np.ndarray,
    target: float,
    bracket: tuple[float, float],
    residual_tol: float,
) -> float:
    """Root of mean(lambda) = target; the mean is nondecreasing in lambda."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo >= hi:
        lo, hi = min(lo, hi) - 1.0, max(lo, hi) + 1.0

    def mean_of(lam: float) -> float:
        return _tilted_stats(lam, f, b)[0]

    step = max(1.0, hi - lo)
    for _ in range(200):
        if mean_of(hi) >= target:
            break
        lo, hi = hi, hi + step
        step *= 2.0
    else:
        raise RuntimeError("could not bracket the multiplier from above")
    step = max(1.0, hi - lo)
    for _ in range(200):
        if mean_of(lo) <= target:
            break
        lo, hi = lo - step, lo
        step *= 2.0
    else:
        raise RuntimeError("could not bracket the multiplier from below")

    lam = brentq(lambda x: mean_of(x) - target, lo, hi, xtol=1e-13, rtol=8.9e-16)

    # Newton polish: push the mean residual toward machine precision so
    # monotone-ascent bookkeeping is not polluted by constraint slack.
    for _ in range(12):
        mean, var = _tilted_stats(lam, f, b)
        if abs(mean - target) <= residual_tol or var <= 0.0:
            break
        step = (target - mean) / var
        if not np.isfinite(step) or step == 0.0:
            break
        lam += step
    return float(lam)


def solve_multiplier(
    phi: np.ndarray,
    channel: ChannelMatrix,
    constraint: ConstraintSpec,
    bracket: tuple[float, float] = (-1.0, 1.0),
) -> float:
    """Multiplier making prior_update hit the constraint target exactly."""
    f = constraint.weights
    target = constraint.target
    if not (f.min() < target < f.max()):
        raise ValueError("target must lie strictly between the extreme weights")
    b = _update_exponent(phi, _augmented(channel))
    residual_tol = 1e-12 * max(1.0, abs(target))
    return _solve_lambda(f, b, target, bracket, residual_tol)


def _tail_graft_gap(
    P: np.ndarray,
    PT: np.ndarray,
    col_entropy: np.ndarray,
    p: np.ndarray,
    rate_nats: float,
    lam: float,
    fd: np.ndarray,
) -> float:
    """Capacity-gap certificate against a tail-grafted output distribution.

    The dual bound  C <= max_x [D(p(.|x) || q~) + lam (f_x - K)]  holds for
    *any* output distribution q~ when the prior constraint is an equality.
    The iterate's own marginal makes a poor q~ on large alphabets: symbols
    far beyond the prior's bulk approach their (tiny) equilibrium weights
    only at O(slack) nats per round, and until they arrive the marginal's
    thin tail inflates the worst-case divergence.  Grafting the known
    exponential-family envelope exp(lam * f) onto the prior tail gives the
    marginal its equilibrium tail immediately, at the cost of one extra
    divergence evaluation.
    """
    k_star = int(np.flatnonzero(p >= 1e-9 * p.max())[-1])
    if k_star >= p.size - 1 or lam >= 0.0:
        return math.inf
    graft = p.copy()
    tail = p[k_star] * np.exp(lam * (fd[k_star + 1 :] - fd[k_star]))
    np.maximum(graft[k_star + 1 :], tail, out=graft[k_star + 1 :])
    graft /= graft.sum()
    q = P @ graft
    log_q = _masked_log(q)
    div = col_entropy - PT @ log_q
    return float((div + lam * fd).max() - rate_nats)


def _newton_lambda(
    f: np.ndarray,
    b: np.ndarray,
    target: float,
    lam: float,
    residual_tol: float,
) -> tuple[float, np.ndarray, np.ndarray] | None:
    """Warm-started safeguarded Newton for mean(lambda) = target.

    Returns (lambda, log_prior, prior) on success, or None when the scheme
    fails to converge (caller falls back to the bracketing solver).  The
    mean of ``f`` under the tilt is nondecreasing in lambda, so any sign
    change brackets the root; Newton steps that escape the bracket are
    replaced by bisection.
    """
    lo, hi = -np.inf, np.inf
    for _ in range(80):
        z = lam * f + b
        z -= z.max()
        w = np.exp(z)
        s = w.sum()
        p = w / s
        mean = float(p @ f)
        resid = mean - target
        if abs(resid) <= residual_tol:
            return lam, z - math.log(s), p
        if resid < 0.0:
            lo = max(lo, lam)
        else:
            hi = min(hi, lam)
        var = float(p @ (f - mean) ** 2)
        step = (target - mean) / var if var > 0.0 else math.inf
        nxt = lam + step
        if not (lo < nxt < hi) or not math.isfinite(nxt):
            if math.isfinite(lo) and math.isfinite(hi):
                nxt = 0.5 * (lo + hi)
            elif math.isfinite(lo):
                nxt = lo + max(1.0, abs(lo))
            elif math.isfinite(hi):
                nxt = hi - max(1.0, abs(hi))
            else:
                return None
            if nxt == lam:
                return None
        lam = nxt
    return None


def _log_tilt(lam: float, f: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = lam * f + b
    return z - logsumexp(z)


def _initial_log_prior(
    f: np.ndarray, constraint: ConstraintSpec | None, bracket, residual_tol: float
) -> tuple[np.ndarray, float]:
    """Exponential-family start: uniform tilt matched to the cost target."""
    zeros = np.zeros_like(f)
    if constraint is None:
        return _log_tilt(0.0, zeros, zeros), 0.0
    lam0 = _solve_lambda(f, zeros, constraint.target, bracket, residual_tol)
    return _log_tilt(lam0, f, zeros), lam0


def _restrict_to_cheapest(
    channel: ChannelMatrix, constraint: ConstraintSpec, config: SolverConfig, at_max: bool
) -> CapacityResult:
    """Handle a target pinned at an extreme weight (degenerate feasible set)."""
    f = constraint.weights
    extreme = f.max() if at_max else f.min()
    idx = np.flatnonzero(f == extreme)
    probs = np.zeros_like(f)
    if idx.size == 1:
        probs[idx[0]] = 1.0
        prior = PriorDistribution(probs=probs, weights=f)
        rate = mutual_information(prior, channel)
        return CapacityResult(
            rate_bits=rate,
            prior=prior,
            multiplier=0.0,
            iterations=0,
            gap_bits=0.0,
            mean_constraint_residual=0.0,
            converged=True,
        )
    # Several symbols share the extreme cost: solve the unconstrained
    # problem on that sub-alphabet.
    sub = ChannelMatrix(
        probs=channel.probs[:, idx], tail_mass=channel.tail_mass[idx]
    )
    result = ba_solve(sub, None, config)
    probs[idx] = result.prior.probs
    prior = PriorDistribution(probs=probs, weights=f)
    return replace(result, prior=prior, mean_constraint_residual=0.0)


def ba_solve(
    channel: ChannelMatrix,
    constraint: ConstraintSpec | None,
    config: SolverConfig | None = None,
    initial_prior=None,
) -> CapacityResult:
    """Run constrained Blahut-Arimoto to the requested gap tolerance.

    ``constraint=None`` runs the plain unconstrained algorithm (multiplier
    pinned at zero).  A target sitting exactly on the cheapest or most
    expensive symbol collapses to the corresponding degenerate ensemble.
    """
    config = config or SolverConfig()
    P = _augmented(channel)
    n = P.shape[1]

    if constraint is not None:
        f = constraint.weights
        if f.shape != (n,):
            raise ValueError("constraint weights must match the channel inputs")
        if constraint.target == f.min():
            return _restrict_to_cheapest(channel, constraint, config, at_max=False)
        if constraint.target == f.max():
            return _restrict_to_cheapest(channel, constraint, config, at_max=True)
        target = constraint.target
        residual_tol = 1e-12 * max(1.0, abs(target))
    else:
        f = np.zeros(n)
        target = 0.0
        residual_tol = 0.0

    col_entropy = _column_entropy_term(P)
    tol_nats = config.tolerance * LN2

    if initial_prior is not None:
        p0 = _prior_vector(initial_prior, n)
        if np.any(p0 <= 0.0):
            raise ValueError("initial prior must be strictly positive everywhere")
        log_p = np.log(p0 / p0.sum())
        if constraint is not None:
            # Tilt the warm start back onto the constraint set.
            lam = _solve_lambda(f, log_p, target, config.multiplier_bracket, residual_tol)
            log_p = _log_tilt(lam, f, log_p)
        else:
            lam = 0.0
    else:
        log_p = None
        lam = 0.0

    if log_p is None:
        log_p, lam = _initial_log_prior(
            f, constraint, config.multiplier_bracket, residual_tol
        )

    history: list[float] = []
    rate_nats = 0.0
    gap_nats = np.inf
    p = np.exp(log_p)
    iteration = 0
    converged = False
    # The transpose is hit with a GEMV every round; keep it contiguous.
    PT = np.ascontiguousarray(P.T)
    fd = f - target

    for iteration in range(1, config.max_iterations + 1):
        q = P @ p
        log_q = _masked_log(q)
        div = col_entropy - PT @ log_q
        rate_nats = float(p @ div)
        # Upper bound max_x [D_x - mu (f_x - K)] with penalty mu = -lambda >= 0;
        # valid for any multiplier once the iterate meets the cost target.
        gap_nats = float((div + lam * fd).max() - rate_nats)
        if gap_nats > tol_nats and constraint is not None and iteration % 256 == 0:
            gap_nats = min(
                gap_nats,
                _tail_graft_gap(P, PT, col_entropy, p, rate_nats, lam, fd),
            )
        if config.track_history:
            history.append(rate_nats / LN2)
        if gap_nats <= tol_nats:
            converged = True
            break
        # One Blahut-Arimoto round, fused: b = ln p + D is exactly
        # sum_y p(y|x) ln Phi_{x|y} for the Bayes posterior of p.
        b = log_p + div
        if constraint is not None:
            solved = _newton_lambda(f, b, target, lam, residual_tol)
            if solved is not None:
                lam, log_p, p = solved
                continue
            lam = _solve_lambda(f, b, target, (lam - 1.0, lam + 1.0), residual_tol)
        log_p = _log_tilt(lam, f, b)
        p = np.exp(log_p)

    if not converged and iteration > 0:
        # The loop body updates the prior after measuring it; refresh the
        # reported rate/gap so they describe the prior actually returned.
        q = P @ p
        log_q = _masked_log(q)
        div = col_entropy - PT @ log_q
        rate_nats = float(p @ div)
        gap_nats = float((div + lam * fd).max() - rate_nats)
        if constraint is not None:
            gap_nats = min(
                gap_nats,
                _tail_graft_gap(P, PT, col_entropy, p, rate_nats, lam, fd),
            )
        if gap_nats <= tol_nats:
            converged = True

    prior = PriorDistribution(probs=p, weights=f)
    residual = abs(prior.mean_photons - target) if constraint is not None else 0.0
    return CapacityResult(
        rate_bits=rate_nats / LN2,
        prior=prior,
        multiplier=lam,
        iterations=iteration,
        gap_bits=max(gap_nats, 0.0) / LN2,
        mean_constraint_residual=residual,
        converged=converged,
        history=tuple(history) if config.track_history else None,
    )


def fock_out_cutoff(eta: float, cutoff: int) -> int:
    """Output cutoff for a Fock channel; tight at low eta, full otherwise."""
    received = eta * cutoff
    return min(cutoff, int(math.ceil(received + 10.0 * math.sqrt(received + 1.0) + 30.0)))


def _solve_fock_at(
    eta: float, cutoff: int, nbar: float, config: SolverConfig
) -> CapacityResult:
    channel = build_fock_channel(eta, cutoff, fock_out_cutoff(eta, cutoff))
    weights = np.arange(cutoff + 1, dtype=float)
    return ba_solve(channel, ConstraintSpec(weights=weights, target=nbar), config)


def fock_capacity(
    eta: float, nbar: float, config: SolverConfig | None = None
) -> CapacityResult:
    """Capacity of the lossy channel over Fock inputs at mean photon number nbar.

    The Fock cutoff is grown until the optimal prior leaves less than
    ``tail_epsilon`` mass in the top ``cutoff_margin`` symbols and the rate
    is stable between growths (within solver noise).  A short probe solve
    estimates the converged multiplier first: the optimal prior decays like
    exp(lambda * k), which predicts the adequate cutoff directly and avoids
    re-solving at a ladder of undersized alphabets.  Warm starts are
    deliberately not carried across cutoffs; they transplant the smaller
    problem's multimodal structure, which takes longer to melt than a fresh
    exponential-family start.
    """
    eta = check_transmission(eta)
    nbar = float(nbar)
    if nbar < 0.0:
        raise ValueError("mean photon number must be nonnegative")
    config = config or SolverConfig()

    if nbar == 0.0:
        prior = PriorDistribution(probs=np.array([1.0]), weights=np.array([0.0]))
        return CapacityResult(
            rate_bits=0.0,
            prior=prior,
            multiplier=0.0,
            iterations=0,
            gap_bits=0.0,
            mean_constraint_residual=0.0,
            converged=True,
        )

    if config.initial_cutoff is not None:
        start = int(config.initial_cutoff)
    else:
        start = int(math.ceil(nbar + 10.0 * math.sqrt(nbar) + 25.0))
    start = max(
        start,
        int(math.ceil(2.5 * nbar)),
        int(math.ceil(nbar)) + config.cutoff_margin + 5,
        16,
    )
    start = min(start, config.max_cutoff)
    margin = max(int(config.cutoff_margin), 1)

    def tail_weight(res: CapacityResult) -> float:
        return float(res.prior.probs[-margin:].sum())

    probe_config = replace(
        config, max_iterations=min(config.max_iterations, 20_000)
    )
    cutoff = start
    probe = _solve_fock_at(eta, cutoff, nbar, probe_config)
    # A multiplier at or above zero means the truncated alphabet could not
    # even reach the photon budget unconstrained; the decay prediction
    # below would be meaningless, so double the probe until the constraint
    # binds from above.
    while probe.multiplier >= -1e-9 and cutoff < config.max_cutoff:
        cutoff = min(2 * cutoff, config.max_cutoff)
        probe = _solve_fock_at(eta, cutoff, nbar, probe_config)
    if probe.converged and tail_weight(probe) < config.tail_epsilon:
        return probe

    lam = probe.multiplier
    if lam < -1e-9:
        # Size the alphabet so the geometric tail sum p_max * exp(lam * k)
        # / (1 - exp(lam)) beyond cutoff - margin sits an order of
        # magnitude under the tail threshold.
        p_max = float(probe.prior.probs.max())
        k_peak = int(np.argmax(probe.prior.probs))
        need = (
            math.log(config.tail_epsilon)
            + math.log(-math.expm1(lam))
            - math.log(10.0 * p_max)
        )
        predicted = k_peak + int(math.ceil(need / lam)) + margin
        cutoff = max(cutoff, min(predicted, config.max_cutoff))

    previous_rate, previous_gap = probe.rate_bits, probe.gap_bits
    while True:
        result = _solve_fock_at(eta, cutoff, nbar, config)
        tail_ok = tail_weight(result) < config.tail_epsilon
        # Sub-tolerance iterates wobble by up to their certified gaps, so
        # the between-growth rate comparison must allow for both.
        rate_ok = abs(result.rate_bits - previous_rate) <= (
            config.tolerance + result.gap_bits + previous_gap
        )
        if tail_ok and rate_ok:
            return result
        if cutoff >= config.max_cutoff:
            return replace(result, converged=False)
        previous_rate, previous_gap = result.rate_bits, result.gap_bits
        cutoff = min(
            config.max_cutoff, int(math.ceil(cutoff * config.cutoff_growth))
        )
