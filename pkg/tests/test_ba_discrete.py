"""Constrained Blahut-Arimoto on explicit channel matrices."""

import math

import numpy as np
import pytest

from pnrcap.analytic import thermal_prior
from pnrcap.ba import (
    ConstraintSpec,
    SolverConfig,
    ba_solve,
    fock_capacity,
    mutual_information,
    phi_update,
    prior_update,
    solve_multiplier,
)
from pnrcap.channels import ChannelMatrix, build_fock_channel

BSC_CAPACITY = 1.0 - (-0.1 * math.log2(0.1) - 0.9 * math.log2(0.9))


def _bsc(crossover: float) -> ChannelMatrix:
    p = crossover
    return ChannelMatrix(
        probs=np.array([[1.0 - p, p], [p, 1.0 - p]]), tail_mass=np.zeros(2)
    )


def _random_channel(rng, n_in: int, n_out: int) -> ChannelMatrix:
    cols = rng.dirichlet(np.ones(n_out), size=n_in).T
    return ChannelMatrix(probs=cols, tail_mass=np.zeros(n_in))


def test_mutual_information_anchors():
    identity = ChannelMatrix(probs=np.eye(2), tail_mass=np.zeros(2))
    assert mutual_information(np.array([0.5, 0.5]), identity) == pytest.approx(
        1.0, abs=1e-14
    )

    constant = ChannelMatrix(
        probs=np.array([[0.3, 0.3], [0.7, 0.7]]), tail_mass=np.zeros(2)
    )
    assert mutual_information(np.array([0.2, 0.8]), constant) == pytest.approx(
        0.0, abs=1e-14
    )

    assert mutual_information(np.array([0.5, 0.5]), _bsc(0.1)) == pytest.approx(
        BSC_CAPACITY, abs=1e-14
    )


def test_mutual_information_dimension_mismatch():
    with pytest.raises(ValueError):
        mutual_information(np.array([1.0]), _bsc(0.1))


def test_phi_update_posteriors():
    identity = ChannelMatrix(probs=np.eye(2), tail_mass=np.zeros(2))
    phi = phi_update(np.array([0.3, 0.7]), identity)
    assert phi[:, :2] == pytest.approx(np.eye(2), abs=1e-14)

    constant = ChannelMatrix(
        probs=np.array([[0.3, 0.3], [0.7, 0.7]]), tail_mass=np.zeros(2)
    )
    prior = np.array([0.2, 0.8])
    phi = phi_update(prior, constant)
    for col in phi[:, :2].T:
        assert col == pytest.approx(prior, abs=1e-14)

    phi = phi_update(np.array([0.5, 0.5]), _bsc(0.1))
    assert phi[:, 0] == pytest.approx([0.9, 0.1], abs=1e-14)
    # columns over inputs always sum to one, including the tail column
    assert phi.sum(axis=0) == pytest.approx(np.ones(phi.shape[1]), abs=1e-12)


def test_prior_update_fixed_points_and_limits():
    identity = ChannelMatrix(probs=np.eye(2), tail_mass=np.zeros(2))
    phi = phi_update(np.array([0.5, 0.5]), identity)
    flat = prior_update(phi, identity, 0.0, np.array([0.0, 1.0]))
    assert flat.probs == pytest.approx([0.5, 0.5], abs=1e-14)

    # a strongly negative multiplier collapses everything onto zero cost
    squeezed = prior_update(phi, identity, -200.0, np.array([0.0, 1.0]))
    assert squeezed.probs[0] == pytest.approx(1.0, abs=1e-80)

    bsc = _bsc(0.1)
    phi = phi_update(np.array([0.5, 0.5]), bsc)
    stay = prior_update(phi, bsc, 0.0, np.array([0.0, 1.0]))
    assert stay.probs == pytest.approx([0.5, 0.5], abs=1e-14)


def test_solve_multiplier_two_point_closed_form():
    identity = ChannelMatrix(probs=np.eye(2), tail_mass=np.zeros(2))
    weights = np.array([0.0, 1.0])
    constraint = ConstraintSpec(weights=weights, target=0.5)
    phi = phi_update(np.array([0.5, 0.5]), identity)
    lam = solve_multiplier(phi, identity, constraint)
    result = prior_update(phi, identity, lam, weights)
    assert result.probs == pytest.approx([0.5, 0.5], abs=1e-10)
    assert lam == pytest.approx(0.0, abs=1e-9)  # symmetric root sits at zero

    # asymmetric target: p1 = 0.25 forces lambda = ln(p1/p0) exactly here
    constraint = ConstraintSpec(weights=weights, target=0.25)
    lam = solve_multiplier(phi, identity, constraint)
    assert lam == pytest.approx(math.log(0.25 / 0.75), abs=1e-9)


def test_constraint_spec_rejects_infeasible_target():
    with pytest.raises(ValueError):
        ConstraintSpec(weights=np.array([0.0, 1.0]), target=1.5)
    with pytest.raises(ValueError):
        ConstraintSpec(weights=np.array([0.0, 1.0]), target=-0.1)


def test_bsc_capacity_regression():
    result = ba_solve(_bsc(0.1), None, SolverConfig(tolerance=1e-12))
    assert abs(result.rate_bits - BSC_CAPACITY) < 1e-9
    assert result.converged


def test_monotone_ascent_and_residual_on_random_channels():
    """Per-iteration lower bound never decreases; constraint holds at 1e-8."""
    rng = np.random.default_rng(42)
    for _ in range(6):
        n_in = int(rng.integers(3, 9))
        n_out = int(rng.integers(2, 7))
        channel = _random_channel(rng, n_in, n_out)
        weights = np.sort(rng.uniform(0.0, 4.0, size=n_in))
        target = float(rng.uniform(weights[0] + 1e-3, weights[-1] - 1e-3))
        constraint = ConstraintSpec(weights=weights, target=target)
        result = ba_solve(
            channel, constraint, SolverConfig(tolerance=1e-10, track_history=True)
        )
        history = np.asarray(result.history)
        if history.size > 1:
            assert float(np.min(np.diff(history))) >= -1e-12
        mean = float(result.prior.probs @ weights)
        assert abs(mean - target) <= 1e-8 * max(1.0, target)
        assert result.rate_bits >= 0.0


def test_permutation_invariance():
    rng = np.random.default_rng(8)
    channel = _random_channel(rng, 5, 4)
    weights = np.arange(5, dtype=float)
    constraint = ConstraintSpec(weights=weights, target=1.7)
    config = SolverConfig(tolerance=1e-11)
    base = ba_solve(channel, constraint, config)

    perm = rng.permutation(5)
    permuted_channel = ChannelMatrix(
        probs=channel.probs[:, perm], tail_mass=channel.tail_mass[perm]
    )
    permuted = ba_solve(
        permuted_channel, ConstraintSpec(weights=weights[perm], target=1.7), config
    )
    assert abs(base.rate_bits - permuted.rate_bits) < 1e-10
    assert np.max(np.abs(base.prior.probs[perm] - permuted.prior.probs)) < 1e-8


def test_ba_solve_flags_iteration_exhaustion():
    rng = np.random.default_rng(15)
    channel = _random_channel(rng, 6, 5)
    result = ba_solve(channel, None, SolverConfig(tolerance=1e-15, max_iterations=3))
    assert not result.converged
    assert result.iterations == 3
    assert result.rate_bits >= 0.0


def test_fock_solver_lossless_point():
    result = fock_capacity(1.0, 1.0, SolverConfig(tolerance=1e-9))
    assert abs(result.rate_bits - 2.0) < 1e-6
    thermal = thermal_prior(1.0, result.prior.probs.size - 1)
    tv = 0.5 * float(np.abs(result.prior.probs - thermal.probs).sum())
    assert tv < 1e-4


def test_fock_solver_zero_budget():
    result = fock_capacity(0.7, 0.0)
    assert result.rate_bits == 0.0
    assert result.prior.probs[0] == 1.0
    assert result.converged


def test_fock_capacity_sandwich(solved):
    """At (0.5, 20) the rate lands inside the analytic sandwich bounds."""
    result = solved.fock(0.5, 20.0)
    assert 1.66 < result.rate_bits < 4.87
    assert result.gap_bits < 1e-3


def test_fock_channel_tail_aggregation():
    """Merging counts into the overflow symbol can only lose rate, and it
    loses nothing measurable once the cutoff covers the output mass."""
    weights = np.arange(41, dtype=float)
    config = SolverConfig(tolerance=1e-8)

    def solve(out_cutoff):
        channel = build_fock_channel(0.6, 40, out_cutoff)
        return ba_solve(channel, ConstraintSpec(weights=weights, target=2.0), config)

    full = solve(40)
    harsh = solve(20)
    mild = solve(38)
    assert harsh.rate_bits <= full.rate_bits + 1e-9
    assert abs(mild.rate_bits - full.rate_bits) < 1e-6
