"""Sweep/limit-study orchestration and prior structure reporting."""

import math

import numpy as np
import pytest

from pnrcap.analytic import (
    classical_capacity,
    gordon_asymptotic,
    heterodyne_capacity,
    holevo_g,
    homodyne_capacity,
)
from pnrcap.ba import SolverConfig
from pnrcap.experiments import (
    SweepGrid,
    _plateau_local_maxima,
    poisson_limit_study,
    prior_profile,
    run_sweep,
    scaled_fock_spot_check,
)
from pnrcap.poisson import ContinuousSolverConfig

FAST_FOCK = SolverConfig(tolerance=1e-6, max_iterations=200_000)
FAST_POISSON = ContinuousSolverConfig(tolerance=1e-4)


def test_sweep_grid_validation():
    with pytest.raises(ValueError):
        SweepGrid(etas=(1.2,), nbars=(1.0,))
    with pytest.raises(ValueError):
        SweepGrid(etas=(-0.1,), nbars=(1.0,))
    with pytest.raises(ValueError):
        SweepGrid(etas=(), nbars=(1.0,))
    with pytest.raises(ValueError):
        SweepGrid(etas=(0.5,), nbars=(-2.0,))


def test_sweep_grid_cells_row_major():
    grid = SweepGrid(etas=(0.25, 0.75), nbars=(1.0, 2.0, 3.0))
    assert grid.cells() == [
        (0.25, 1.0), (0.25, 2.0), (0.25, 3.0),
        (0.75, 1.0), (0.75, 2.0), (0.75, 3.0),
    ]


def test_run_sweep_records_are_consistent():
    grid = SweepGrid(etas=(0.6, 1.0), nbars=(0.4, 1.2))
    records = run_sweep(grid, fock_config=FAST_FOCK, poisson_config=FAST_POISSON)
    assert [(r.eta, r.nbar) for r in records] == grid.cells()
    for rec in records:
        s = rec.eta * rec.nbar
        assert rec.output_mean == pytest.approx(s, rel=1e-12)
        assert rec.error == ""
        assert rec.fock_converged and rec.poisson_converged
        # analytic columns are plain evaluations at the cell
        assert rec.c_hom == pytest.approx(homodyne_capacity(rec.eta, rec.nbar), rel=1e-12)
        assert rec.c_het == pytest.approx(heterodyne_capacity(rec.eta, rec.nbar), rel=1e-12)
        assert rec.c_classical == pytest.approx(
            classical_capacity(rec.eta, rec.nbar), rel=1e-12
        )
        assert rec.gordon == pytest.approx(
            gordon_asymptotic(rec.eta, rec.nbar), rel=1e-12
        )
        # ordering of the solved rates
        assert rec.r_negbin <= rec.c_fock + 1e-4
        assert rec.c_poisson <= rec.c_fock + 1e-4
        assert rec.c_fock <= holevo_g(s) + 1e-4
        assert rec.ratio == pytest.approx(rec.c_fock / rec.c_poisson, rel=1e-12)

    # lossless column reproduces the Holevo bound
    for rec in records:
        if rec.eta == 1.0:
            assert rec.c_fock == pytest.approx(holevo_g(rec.nbar), abs=5e-5)
        assert math.isnan(rec.bowen) if rec.eta == 1.0 else math.isfinite(rec.bowen)


def test_run_sweep_thread_pool_matches_serial():
    grid = SweepGrid(etas=(0.7,), nbars=(0.3, 0.9, 1.5))
    serial = run_sweep(grid, jobs=1, fock_config=FAST_FOCK, poisson_config=FAST_POISSON)
    pooled = run_sweep(grid, jobs=3, fock_config=FAST_FOCK, poisson_config=FAST_POISSON)
    for a, b in zip(serial, pooled):
        assert a.c_fock == b.c_fock
        assert a.c_poisson == b.c_poisson
        assert a.r_negbin == b.r_negbin


def test_plateau_local_maxima_synthetic():
    up_down = np.array([0.0, 1.0, 0.0, 2.0, 0.0])
    assert _plateau_local_maxima(up_down, 0.0) == (1, 3)

    # a run equal to relative 1e-9 collapses to one candidate
    plateau = np.array([0.0, 1.0, 1.0 + 1e-12, 0.5])
    assert _plateau_local_maxima(plateau, 0.0) == (1,)

    # boundaries count as smaller neighbours
    decreasing = np.array([3.0, 2.0, 1.0])
    assert _plateau_local_maxima(decreasing, 0.0) == (0,)
    increasing = np.array([1.0, 2.0, 3.0])
    assert _plateau_local_maxima(increasing, 0.0) == (2,)

    # the floor removes small bumps
    bumpy = np.array([0.0, 1.0, 0.0, 1e-12, 0.0])
    assert _plateau_local_maxima(bumpy, 1e-6) == (1,)


def test_prior_profile_lossless_is_unimodal_at_vacuum():
    profile = prior_profile(1.0, 1.0, FAST_FOCK)
    assert profile.converged
    assert profile.p0 == pytest.approx(0.5, abs=1e-3)
    assert profile.interior_maxima == ()
    assert profile.rate_bits == pytest.approx(2.0, abs=5e-5)


def test_poisson_limit_study_validates_inputs():
    with pytest.raises(ValueError):
        poisson_limit_study(0.0, (0.5, 0.25))
    with pytest.raises(ValueError):
        poisson_limit_study(1.0, (0.25, 0.5))  # not decreasing
    with pytest.raises(ValueError):
        poisson_limit_study(1.0, (0.5, 0.0))


def test_scaled_fock_spot_check_approaches_continuous_limit():
    """Lattice evaluation converges onto the continuous capacity as eta -> 0.

    At finite eta the binomial outputs are narrower than Poisson, so the
    construction lands slightly above the continuous rate; the magnitude
    of the discrepancy must shrink with eta.
    """
    gaps = []
    for eta in (0.05, 0.01, 0.002):
        check = scaled_fock_spot_check(eta, 0.5, poisson_config=FAST_POISSON)
        assert check.fock_numbers[0] == 0  # vacuum survives the rounding
        gaps.append(abs(check.shortfall))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3
