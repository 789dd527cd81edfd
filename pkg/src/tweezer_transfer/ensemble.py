"""Monte Carlo ensembles of trajectories and thermal averaging.

A sweep runs independent trajectories for each beam separation, bins every
transit by its entry energy (in units of the spawn beam's depth) and counts
transits and transfers per (separation, energy) bin. The thermal efficiency
curve is the weighted mean of the per-bin transfer probabilities with the
3-D harmonic oscillator energy distribution E^2 exp(-E / kT).
"""

from __future__ import annotations

import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .dynamics import (
    CAUSE_FROM_CODE,
    IntegratorParams,
    ParticleState,
    Termination,
    TrajectoryReport,
)
from .events import AXIAL_FACTOR, CAPTURE_FACTOR, TransitRecord
from .potential import TrapConfiguration, total_potential

log = logging.getLogger(__name__)

MAX_REJECTIONS = 10_000


class UnsatisfiableSamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerParams:
    """Initial-condition distribution.

    Energies are in units of the beam-1 depth, lengths in units of the beam-1
    waist. ``min_axial_kinetic`` is the kinetic energy (units of U0) a
    particle must have on the beam axis at its spawn point; for deep energies
    the spawn point moves toward the focus to keep this margin.
    """

    seed: int = 0
    n_trajectories: int = 2000
    energy_range: tuple = (-0.95, -0.05)
    spawn_axial_distance: float = 10.0
    transverse_sigma: float = 0.5
    transits_per_trajectory: int = 4
    min_axial_kinetic: float = 0.02

    def __post_init__(self):
        e_min, e_max = self.energy_range
        if not e_min < e_max < 0:
            raise ValueError("energy_range must satisfy E_min < E_max < 0")
        if not self.spawn_axial_distance > AXIAL_FACTOR:
            raise ValueError("spawn_axial_distance must exceed the crossing half-width")
        if not self.transverse_sigma > 0:
            raise ValueError("transverse_sigma must be > 0")
        if self.n_trajectories <= 0:
            raise ValueError("n_trajectories must be > 0")
        if self.transits_per_trajectory <= 0:
            raise ValueError("transits_per_trajectory must be > 0")
        if not 0 <= self.min_axial_kinetic < 1:
            raise ValueError("min_axial_kinetic must be in [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class ThermalParams:
    temperature_fraction: float = 0.10

    def __post_init__(self):
        if not 0 < self.temperature_fraction < 1:
            raise ValueError("temperature_fraction must be in (0, 1)")


def trajectory_rng(seed: int, separation_index: int, trajectory_index: int):
    """Independent generator for one trajectory, fixed by its indices alone."""
    ss = np.random.SeedSequence(seed, spawn_key=(separation_index, trajectory_index))
    return np.random.Generator(np.random.PCG64(ss))


def sample_initial_state(
    rng: np.random.Generator, config: TrapConfiguration, sampler: SamplerParams
) -> ParticleState:
    """Random particle in beam 1 heading toward the crossing.

    The total energy is uniform over ``sampler.energy_range`` and is met
    exactly by construction: the kinetic energy is whatever remains after
    the potential at the sampled position.
    """
    b = config.beam1
    w0, u0 = b.waist, b.depth
    energy = rng.uniform(*sampler.energy_range) * u0

    axial = sampler.spawn_axial_distance * w0
    # on-axis potential -U0 / (1 + (a/zR)^2) must sit min_axial_kinetic below E
    ceiling = -energy / u0 + sampler.min_axial_kinetic
    if ceiling < 1.0:
        axial = min(axial, b.rayleigh_range * np.sqrt(1.0 / ceiling - 1.0))
    if axial < AXIAL_FACTOR * w0:
        raise UnsatisfiableSamplerError(
            f"energy {energy / u0:.4f} U0 is too deep to spawn inside beam 1"
        )
    sign = 1.0 if rng.random() < 0.5 else -1.0
    sigma = sampler.transverse_sigma * w0

    for _ in range(MAX_REJECTIONS):
        t = rng.normal(0.0, sigma, size=2)
        if np.hypot(t[0], t[1]) >= CAPTURE_FACTOR * w0:
            continue
        pos = np.array([sign * axial, t[0], t[1]])
        u = float(total_potential(config, pos))
        if u >= energy:
            continue
        speed = np.sqrt(2.0 * (energy - u) / config.particle_mass)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        direction[0] = -sign * abs(direction[0])
        return ParticleState(pos, speed * direction, 0.0)
    raise UnsatisfiableSamplerError(
        f"{MAX_REJECTIONS} consecutive rejections drawing a spawn position"
    )


def run_transits(
    state: ParticleState,
    config: TrapConfiguration,
    params: IntegratorParams,
    max_transits: int,
) -> TrajectoryReport:
    """Integrate with the compiled tracker until ``max_transits`` transits are seen.

    Equivalent to ``propagate`` with a ``TransitTracker(max_transits=...)``
    observer, without per-step Python overhead.
    """
    records = np.zeros((max_transits, _kernels.RECORD_FIELDS))
    cause, n, n_rec, max_drift, energy, pos, vel = _kernels.run_trajectory(
        config.kernel_params(),
        config.particle_mass,
        np.asarray(state.position, dtype=float),
        np.asarray(state.velocity, dtype=float),
        state.time,
        params.dt,
        params.max_steps,
        AXIAL_FACTOR,
        CAPTURE_FACTOR,
        params.escape_factor,
        records,
    )
    v = state.velocity
    e0 = 0.5 * config.particle_mass * float(v @ v) + float(
        total_potential(config, state.position)
    )
    u_scale = config.max_depth
    transits = [
        TransitRecord(int(r[0]), int(r[1]), r[2], r[3], r[4], r[5])
        for r in records[:n_rec]
    ]
    return TrajectoryReport(
        cause=CAUSE_FROM_CODE[cause],
        n_steps=int(n),
        final_state=ParticleState(pos, vel, state.time + n * params.dt),
        initial_energy=e0,
        final_energy=float(energy),
        energy_drift=(float(energy) - e0) / u_scale,
        transits=transits,
        drift_flagged=max_drift / u_scale > params.drift_tolerance,
    )


DIAGNOSTIC_FIELDS = (
    "trajectories",
    "observer_stop",
    "escaped",
    "truncated",
    "aborted_nonfinite",
    "drift_flagged",
    "steps",
)


@dataclass
class TransferHistogram:
    """Transit and transfer counts on a (separation, entry energy) grid.

    Separations are in units of w0, energy edges in units of U0 (beam 1).
    ``diagnostics`` holds one row per separation with the counts named in
    ``DIAGNOSTIC_FIELDS``.
    """

    separation_values: np.ndarray
    energy_bin_edges: np.ndarray
    transits: np.ndarray
    transfers: np.ndarray
    diagnostics: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        self.separation_values = np.asarray(self.separation_values, dtype=float)
        self.energy_bin_edges = np.asarray(self.energy_bin_edges, dtype=float)
        shape = (len(self.separation_values), len(self.energy_bin_edges) - 1)
        self.transits = np.asarray(self.transits, dtype=np.int64).reshape(shape)
        self.transfers = np.asarray(self.transfers, dtype=np.int64).reshape(shape)
        if np.any(self.transfers < 0) or np.any(self.transfers > self.transits):
            raise ValueError("counts must satisfy 0 <= transfers <= transits")

    @property
    def energy_centers(self) -> np.ndarray:
        e = self.energy_bin_edges
        return 0.5 * (e[1:] + e[:-1])

    def probabilities(self) -> np.ma.MaskedArray:
        """Transfer probability per bin; bins without transits are masked."""
        empty = self.transits == 0
        p = np.divide(
            self.transfers, np.where(empty, 1, self.transits), dtype=float
        )
        return np.ma.MaskedArray(p, mask=empty)

    def standard_errors(self) -> np.ma.MaskedArray:
        p = self.probabilities()
        n = np.ma.MaskedArray(self.transits, mask=p.mask)
        return np.sqrt(p * (1 - p) / n)


def _energy_bin(e_over_u0: float, edges: np.ndarray) -> int:
    # index of the bin containing e; -1 outside the edges
    if e_over_u0 < edges[0] or e_over_u0 > edges[-1]:
        return -1
    return min(int(np.searchsorted(edges, e_over_u0, side="right")) - 1, len(edges) - 2)


def _run_chunk(task):
    (config, sep_index, start, stop, sampler, params, edges) = task
    n_bins = len(edges) - 1
    transits = np.zeros(n_bins, dtype=np.int64)
    transfers = np.zeros(n_bins, dtype=np.int64)
    diag = dict.fromkeys(DIAGNOSTIC_FIELDS, 0)
    u0 = config.beam1.depth
    for i in range(start, stop):
        rng = trajectory_rng(sampler.seed, sep_index, i)
        state = sample_initial_state(rng, config, sampler)
        report = run_transits(state, config, params, sampler.transits_per_trajectory)
        diag["trajectories"] += 1
        diag["steps"] += report.n_steps
        if report.cause is Termination.OBSERVER_STOP:
            diag["observer_stop"] += 1
        elif report.cause is Termination.ESCAPED:
            diag["escaped"] += 1
        elif report.cause is Termination.MAX_STEPS:
            diag["truncated"] += 1
        if report.aborted:
            diag["aborted_nonfinite"] += 1
            continue
        if report.drift_flagged:
            diag["drift_flagged"] += 1
            continue
        for rec in report.transits:
            j = _energy_bin(rec.entry_energy / u0, edges)
            if j < 0:
                continue
            transits[j] += 1
            if rec.transferred:
                transfers[j] += 1
    return sep_index, transits, transfers, np.array([diag[k] for k in DIAGNOSTIC_FIELDS])


def _chunks(n: int, n_chunks: int):
    bounds = np.linspace(0, n, n_chunks + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def run_sweep(
    config: TrapConfiguration,
    separations: Sequence[float],
    sampler: SamplerParams,
    params: Optional[IntegratorParams] = None,
    energy_bin_edges: Optional[Sequence[float]] = None,
    workers: int = 1,
    chunk_size: int = 100,
) -> TransferHistogram:
    """Run ``sampler.n_trajectories`` trajectories at each separation (units of w0).

    Every trajectory draws from its own generator keyed by (seed, separation
    index, trajectory index), and shards are merged by integer addition, so
    the histogram does not depend on ``workers`` or scheduling.
    """
    separations = np.asarray(separations, dtype=float)
    if separations.size == 0:
        raise ValueError("need at least one separation")
    if config.beam2 is None:
        raise ValueError("a sweep needs two beams")
    if params is None:
        params = IntegratorParams.for_config(config)
    edges = (
        np.linspace(-1.0, 0.0, 11)
        if energy_bin_edges is None
        else np.asarray(energy_bin_edges, dtype=float)
    )
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("energy bin edges must be strictly increasing")

    w0 = config.beam1.waist
    tasks = []
    for k, d in enumerate(separations):
        cfg = config.with_separation(d * w0)
        for a, b in _chunks(sampler.n_trajectories, -(-sampler.n_trajectories // chunk_size)):
            tasks.append((cfg, k, a, b, sampler, params, edges))

    shape = (len(separations), len(edges) - 1)
    transits = np.zeros(shape, dtype=np.int64)
    transfers = np.zeros(shape, dtype=np.int64)
    diagnostics = np.zeros((len(separations), len(DIAGNOSTIC_FIELDS)), dtype=np.int64)

    if workers <= 1:
        results = map(_run_chunk, tasks)
        pool = None
    else:
        # compile in the parent so forked workers inherit the machine code
        _warm_up()
        ctx = multiprocessing.get_context("fork")
        pool = ProcessPoolExecutor(max_workers=workers, mp_context=ctx)
        results = pool.map(_run_chunk, tasks)
    try:
        for k, tr, tf, dg in results:
            transits[k] += tr
            transfers[k] += tf
            diagnostics[k] += dg
    finally:
        if pool is not None:
            pool.shutdown()

    for k, d in enumerate(separations):
        log.info(
            "separation %.4g w0: %d transits, %d transfers",
            d, transits[k].sum(), transfers[k].sum(),
        )
    return TransferHistogram(separations, edges, transits, transfers, diagnostics)


def _warm_up():
    cfg = TrapConfiguration.crossed(1e-5, 1e-6, 1e-27)
    run_transits(
        ParticleState([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
        cfg,
        IntegratorParams(dt=1e-9, max_steps=1),
        1,
    )


def thermal_weight(e_bottom, u0: float, thermal: ThermalParams = ThermalParams()):
    """Unnormalized occupation E^2 exp(-E / kT) of energy above the trap bottom.

    ``kT = temperature_fraction * u0``; zero outside ``[0, u0]``.
    """
    e = np.asarray(e_bottom, dtype=float)
    kt = thermal.temperature_fraction * u0
    w = e * e * np.exp(-e / kt)
    return np.where((e >= 0) & (e <= u0), w, 0.0)


@dataclass
class EfficiencyCurve:
    """Thermally averaged transfer efficiency per separation (masked where no data)."""

    separation_values: np.ndarray
    efficiency: np.ma.MaskedArray
    normalized: bool = False

    def normalize(self) -> "EfficiencyCurve":
        eff = self.efficiency
        if eff.count() == 0:
            return EfficiencyCurve(self.separation_values, eff.copy(), True)
        peak = eff.max()
        if peak <= 0:
            raise ValueError("cannot normalize a curve whose maximum is zero")
        return EfficiencyCurve(self.separation_values, eff / peak, True)

    def mirrored(self) -> "EfficiencyCurve":
        """Extend d >= 0 data to negative separations using z-reflection symmetry."""
        d = self.separation_values
        neg = d > 0
        seps = np.concatenate([-d[neg][::-1], d])
        eff = np.ma.concatenate([self.efficiency[neg][::-1], self.efficiency])
        return EfficiencyCurve(seps, eff, self.normalized)


def thermal_efficiency(
    hist: TransferHistogram,
    thermal: ThermalParams = ThermalParams(),
    normalize: bool = False,
) -> EfficiencyCurve:
    """Weighted mean of bin probabilities with ``thermal_weight`` at bin centers.

    Energies above the trap bottom are ``E_bottom = E + U0``; with energies in
    units of U0 this is ``center + 1``. Bins without transits are left out of
    both sums; a separation with no usable bins is masked.
    """
    p = hist.probabilities()
    w = thermal_weight(hist.energy_centers + 1.0, 1.0, thermal)
    w = np.ma.MaskedArray(np.broadcast_to(w, p.shape), mask=p.mask)
    num = (w * p).sum(axis=1)
    den = w.sum(axis=1)
    no_data = np.ma.getmaskarray(den) | (np.ma.filled(den, 0.0) <= 0)
    eff = np.ma.MaskedArray(
        np.ma.filled(num, 0.0) / np.where(no_data, 1.0, np.ma.filled(den, 1.0)),
        mask=no_data,
    )
    curve = EfficiencyCurve(hist.separation_values.copy(), eff)
    return curve.normalize() if normalize else curve
