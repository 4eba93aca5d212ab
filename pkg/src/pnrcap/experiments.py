"""Tabular studies built on the capacity solvers.

Three kinds of records are produced:

  * grid sweeps over (eta, nbar) collecting every solver rate and
    analytic baseline side by side (one row per cell),
  * a fixed-output-mean limit study tracking how the Fock-ensemble
    capacity approaches the continuous Poisson-channel capacity as the
    transmissivity drops,
  * optimal-prior profiles with local-maxima metadata for the
    multimodal-structure analysis.

Grid cells are independent; ``jobs > 1`` runs them on a thread pool and
results are merged back in grid order, so output is deterministic
regardless of scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import (
    bowen_asymptotic,
    classical_capacity,
    gordon_asymptotic,
    heterodyne_capacity,
    homodyne_capacity,
)
from .ba import SolverConfig, fock_capacity, fock_out_cutoff, mutual_information
from .channels import ChannelMatrix, check_transmission
from .negbin import negbin_best_rate
from .poisson import (
    ContinuousSolverConfig,
    MassPointPrior,
    PoissonCapacityResult,
    poisson_capacity,
)

__all__ = [
    "SweepGrid",
    "SweepRecord",
    "LimitRecord",
    "PriorProfile",
    "ScaledFockCheck",
    "run_sweep",
    "capacity_ratio_grid",
    "poisson_limit_study",
    "prior_profile",
    "scaled_fock_spot_check",
]


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian (eta, nbar) grid, iterated row-major (eta outer)."""

    etas: tuple
    nbars: tuple

    def __post_init__(self):
        etas = tuple(check_transmission(e) for e in self.etas)
        nbars = tuple(float(n) for n in self.nbars)
        if not etas or not nbars:
            raise ValueError("grid axes must be non-empty")
        if any(n < 0.0 for n in nbars):
            raise ValueError("mean photon numbers must be nonnegative")
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "nbars", nbars)

    def cells(self) -> list:
        return [(eta, nbar) for eta in self.etas for nbar in self.nbars]


@dataclass(frozen=True)
class SweepRecord:
    """One grid cell: all solver rates and analytic baselines, in bits."""

    eta: float
    nbar: float
    output_mean: float
    c_fock: float
    c_poisson: float
    r_negbin: float
    r_star: float
    c_hom: float
    c_het: float
    c_classical: float
    bowen: float
    gordon: float
    fock_converged: bool
    poisson_converged: bool
    error: str = ""

    @property
    def ratio(self) -> float:
        """Fock-over-coherent capacity ratio (NaN when undefined)."""
        if not (self.c_poisson > 0.0) or math.isnan(self.c_fock):
            return float("nan")
        return self.c_fock / self.c_poisson


@dataclass(frozen=True)
class LimitRecord:
    """One step of the fixed-output-mean Poisson-limit study."""

    eta: float
    nbar: float
    output_mean: float
    c_fock: float
    c_poisson: float
    gap: float
    prior_tv: float
    fock_converged: bool
    poisson_converged: bool


@dataclass(frozen=True)
class PriorProfile:
    """Converged Fock prior with its modal structure summarised."""

    eta: float
    nbar: float
    rate_bits: float
    probs: np.ndarray
    p0: float
    interior_maxima: tuple
    converged: bool


@dataclass(frozen=True)
class ScaledFockCheck:
    """Spot check of the scaled Fock construction against the Poisson solver."""

    eta: float
    output_mean: float
    fock_numbers: np.ndarray
    ensemble_rate: float
    poisson_rate: float

    @property
    def shortfall(self) -> float:
        """Rate lost by discretising the atoms onto the Fock lattice."""
        return self.poisson_rate - self.ensemble_rate


def _map_ordered(fn, items, jobs: int) -> list:
    """Apply fn over items, possibly on a thread pool, preserving order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _quiet_value(fn, *args) -> float:
    try:
        return float(fn(*args))
    except ValueError:
        return float("nan")


def _sweep_cell(
    eta: float,
    nbar: float,
    poisson_by_mean: dict,
    fock_config: SolverConfig | None,
) -> SweepRecord:
    s = eta * nbar
    failures = []

    c_fock = float("nan")
    fock_ok = False
    try:
        fock = fock_capacity(eta, nbar, fock_config)
        c_fock, fock_ok = fock.rate_bits, fock.converged
    except Exception as exc:  # per-cell failures are recorded, not fatal
        failures.append(f"fock: {exc}")

    pois = poisson_by_mean.get(s)
    c_poisson = float("nan")
    pois_ok = False
    if isinstance(pois, PoissonCapacityResult):
        c_poisson, pois_ok = pois.rate_bits, pois.converged
    elif pois is not None:
        failures.append(f"poisson: {pois}")

    r_negbin = r_star = float("nan")
    try:
        r_negbin, r_star = negbin_best_rate(eta, nbar)
    except Exception as exc:
        failures.append(f"negbin: {exc}")

    return SweepRecord(
        eta=eta,
        nbar=nbar,
        output_mean=s,
        c_fock=c_fock,
        c_poisson=c_poisson,
        r_negbin=r_negbin,
        r_star=r_star,
        c_hom=float(homodyne_capacity(eta, nbar)),
        c_het=float(heterodyne_capacity(eta, nbar)),
        c_classical=float(classical_capacity(eta, nbar)),
        bowen=_quiet_value(bowen_asymptotic, eta, nbar),
        gordon=_quiet_value(gordon_asymptotic, eta, nbar),
        fock_converged=fock_ok,
        poisson_converged=pois_ok,
        error="; ".join(failures),
    )


def run_sweep(
    grid: SweepGrid,
    *,
    jobs: int = 1,
    fock_config: SolverConfig | None = None,
    poisson_config: ContinuousSolverConfig | None = None,
) -> list:
    """Solve every (eta, nbar) cell of the grid; records in grid order.

    The continuous Poisson capacity depends only on the detected mean
    eta*nbar, so cells sharing that product share one solve.
    """
    cells = grid.cells()
    means = sorted({eta * nbar for eta, nbar in cells})

    def solve_poisson(s):
        try:
            return poisson_capacity(s, poisson_config)
        except Exception as exc:  # recorded per cell downstream
            return exc

    poisson_by_mean = dict(zip(means, _map_ordered(solve_poisson, means, jobs)))
    work = lambda cell: _sweep_cell(cell[0], cell[1], poisson_by_mean, fock_config)
    return _map_ordered(work, cells, jobs)


def capacity_ratio_grid(
    grid: SweepGrid,
    *,
    jobs: int = 1,
    fock_config: SolverConfig | None = None,
    poisson_config: ContinuousSolverConfig | None = None,
) -> list:
    """Sweep records for the Fock/coherent ratio map (see SweepRecord.ratio)."""
    return run_sweep(
        grid, jobs=jobs, fock_config=fock_config, poisson_config=poisson_config
    )


def _alignment_tv(
    fock_probs: np.ndarray,
    eta: float,
    atoms: MassPointPrior,
    weight_floor: float = 1e-8,
) -> float:
    """Total-variation distance after aggregating both priors onto the
    dominant continuous atoms (nearest-atom cells).

    The Fock prior lives on intensities eta*k; comparing cell-by-cell
    sidesteps the lattice mismatch between the two supports.
    """
    keep = atoms.weights >= weight_floor * atoms.weights.max()
    centers = atoms.intensities[keep]
    w = np.zeros(centers.size)
    np.add.at(
        w,
        np.abs(atoms.intensities[:, None] - centers[None, :]).argmin(axis=1),
        atoms.weights,
    )
    fock_intensities = eta * np.arange(fock_probs.size)
    q = np.zeros(centers.size)
    np.add.at(
        q,
        np.abs(fock_intensities[:, None] - centers[None, :]).argmin(axis=1),
        fock_probs,
    )
    return 0.5 * float(np.abs(w - q).sum())


def poisson_limit_study(
    output_mean: float,
    etas,
    *,
    jobs: int = 1,
    fock_config: SolverConfig | None = None,
    poisson_config: ContinuousSolverConfig | None = None,
) -> list:
    """Fock capacity at fixed detected mean, versus the continuous solver.

    Inputs
    ------
    output_mean : detected mean photon number eta*nbar, held fixed
    etas        : strictly decreasing transmissivities approaching 0

    Outputs
    -------
    One LimitRecord per eta with the rate gap c_fock - c_poisson and the
    total-variation distance between the two optimal priors (the Fock
    weights are compared on the intensity cells of the continuous atoms).
    """
    s = float(output_mean)
    if s <= 0.0:
        raise ValueError("output mean must be positive")
    etas = [check_transmission(e) for e in etas]
    if not etas or any(e == 0.0 for e in etas):
        raise ValueError("etas must be positive transmissivities")
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("etas must be strictly decreasing")

    continuous = poisson_capacity(s, poisson_config)

    def solve(eta: float) -> LimitRecord:
        nbar = s / eta
        fock = fock_capacity(eta, nbar, fock_config)
        tv = _alignment_tv(fock.prior.probs, eta, continuous.mass_points)
        return LimitRecord(
            eta=eta,
            nbar=nbar,
            output_mean=s,
            c_fock=fock.rate_bits,
            c_poisson=continuous.rate_bits,
            gap=fock.rate_bits - continuous.rate_bits,
            prior_tv=tv,
            fock_converged=fock.converged,
            poisson_converged=continuous.converged,
        )

    return _map_ordered(solve, etas, jobs)


def _plateau_local_maxima(probs: np.ndarray, floor: float) -> tuple:
    """Indices of strict local maxima, treating near-equal runs as one.

    A run of values equal within relative 1e-9 counts as a single
    candidate (represented by its first index); it is a maximum when both
    flanking values are strictly smaller.  Array boundaries count as
    smaller, and candidates below ``floor`` are dropped.
    """
    n = probs.size
    maxima = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and np.isclose(probs[j + 1], probs[i], rtol=1e-9, atol=0.0):
            j += 1
        left = probs[i - 1] if i > 0 else -np.inf
        right = probs[j + 1] if j + 1 < n else -np.inf
        if probs[i] > left and probs[i] > right and probs[i] >= floor:
            maxima.append(i)
        i = j + 1
    return tuple(maxima)


def prior_profile(
    eta: float,
    nbar: float,
    config: SolverConfig | None = None,
    *,
    floor_ratio: float = 1e-8,
) -> PriorProfile:
    """Converged optimal Fock prior plus its local-maxima structure.

    ``interior_maxima`` lists the k > 0 locations of (plateau-merged)
    strict local maxima whose probability is at least ``floor_ratio``
    times the largest weight; k = 0 is reported separately as ``p0``.
    """
    result = fock_capacity(eta, nbar, config)
    probs = result.prior.probs
    floor = floor_ratio * float(probs.max())
    maxima = tuple(k for k in _plateau_local_maxima(probs, floor) if k > 0)
    return PriorProfile(
        eta=float(eta),
        nbar=float(nbar),
        rate_bits=result.rate_bits,
        probs=probs,
        p0=float(probs[0]),
        interior_maxima=maxima,
        converged=result.converged,
    )


def scaled_fock_spot_check(
    eta: float,
    output_mean: float,
    *,
    poisson_config: ContinuousSolverConfig | None = None,
) -> ScaledFockCheck:
    """Evaluate the continuous optimum on the Fock lattice at small eta.

    The optimal intensity atoms c_j are rounded to photon numbers
    k_j = round(c_j / eta) and pushed through the binomial channel.  At
    finite eta the binomial outputs are sub-Poissonian, so the achieved
    rate typically sits slightly above the continuous capacity (negative
    ``shortfall``); the discrepancy vanishes as eta -> 0.
    """
    from scipy.special import gammaln, xlogy

    eta = check_transmission(eta)
    if eta == 0.0:
        raise ValueError("the construction needs a positive transmissivity")
    continuous = poisson_capacity(output_mean, poisson_config)
    atoms = continuous.mass_points

    ks = np.rint(atoms.intensities / eta).astype(int)
    uniq, inverse = np.unique(ks, return_inverse=True)
    weights = np.zeros(uniq.size)
    np.add.at(weights, inverse, atoms.weights)

    out_cutoff = fock_out_cutoff(eta, int(uniq[-1]))
    k = uniq[None, :].astype(float)
    l = np.arange(out_cutoff + 1, dtype=float)[:, None]
    log_p = (
        gammaln(k + 1.0)
        - gammaln(l + 1.0)
        - gammaln(k - l + 1.0)
        + xlogy(l, eta)
        + xlogy(k - l, 1.0 - eta)
    )
    with np.errstate(invalid="ignore"):
        probs = np.where(l <= k, np.exp(log_p), 0.0)
    channel = ChannelMatrix(
        probs=probs, tail_mass=np.clip(1.0 - probs.sum(axis=0), 0.0, None)
    )
    rate = mutual_information(weights, channel)
    return ScaledFockCheck(
        eta=eta,
        output_mean=float(output_mean),
        fock_numbers=uniq,
        ensemble_rate=rate,
        poisson_rate=continuous.rate_bits,
    )
