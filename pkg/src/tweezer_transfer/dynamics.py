"""Classical equations of motion in the static crossed-beam potential.

Integration uses fixed-step velocity Verlet. The force evaluation and the
step itself run in compiled code (``_kernels``); this module provides the
Python-facing state types, a single-step function and an observer-driven
integration loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import _kernels
from .potential import TrapConfiguration, radial_trap_frequency, total_potential


class NonFiniteStateError(ArithmeticError):
    """Raised when a step produces a non-finite position, velocity or energy."""


@dataclass(frozen=True)
class ParticleState:
    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        for name in ("position", "velocity"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (3,):
                raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "time", float(self.time))

    @property
    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.position))
            and np.all(np.isfinite(self.velocity))
            and np.isfinite(self.time)
        )

    def reversed(self) -> "ParticleState":
        return ParticleState(self.position, -self.velocity, self.time)


@dataclass(frozen=True)
class IntegratorParams:
    """Fixed-step integration settings.

    ``drift_tolerance`` bounds ``|E_exit - E_entry| / U0_max`` for each
    transit; trajectories exceeding it are flagged. ``escape_factor`` is the
    axial distance (in waists) beyond which a particle counts as escaped.
    """

    dt: float
    max_steps: int = 10_000_000
    drift_tolerance: float = 1e-3
    escape_factor: float = 60.0

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be > 0")
        if int(self.max_steps) != self.max_steps or self.max_steps <= 0:
            raise ValueError("max_steps must be a positive integer")
        if not self.drift_tolerance > 0:
            raise ValueError("drift_tolerance must be > 0")
        if not self.escape_factor > 0:
            raise ValueError("escape_factor must be > 0")

    @classmethod
    def for_config(
        cls, config: TrapConfiguration, steps_per_period: float = 500.0, **kwargs
    ) -> "IntegratorParams":
        """Step resolving the fastest radial oscillation with ``steps_per_period`` steps."""
        f_max = max(radial_trap_frequency(b, config.particle_mass) for b in config.beams)
        return cls(dt=1.0 / (steps_per_period * f_max), **kwargs)


class Termination(str, enum.Enum):
    OBSERVER_STOP = "observer stop"
    ESCAPED = "escaped"
    MAX_STEPS = "max steps"
    NONFINITE = "non-finite"


CAUSE_FROM_CODE = {
    _kernels.OBSERVER_STOP: Termination.OBSERVER_STOP,
    _kernels.ESCAPED: Termination.ESCAPED,
    _kernels.MAX_STEPS: Termination.MAX_STEPS,
    _kernels.NONFINITE: Termination.NONFINITE,
}


@dataclass
class TrajectoryReport:
    cause: Termination
    n_steps: int
    final_state: ParticleState
    initial_energy: float
    final_energy: float
    # (final - initial) energy in units of the deepest beam's depth
    energy_drift: float
    transits: list = field(default_factory=list)
    drift_flagged: bool = False
    samples: Optional[np.ndarray] = None

    @property
    def aborted(self) -> bool:
        return self.cause is Termination.NONFINITE


def _acceleration(config: TrapConfiguration, pos: np.ndarray) -> np.ndarray:
    _, gx, gy, gz = _kernels.potential_and_gradient(
        config.kernel_params(), pos[0], pos[1], pos[2]
    )
    return np.array([-gx, -gy, -gz]) / config.particle_mass


def step(state: ParticleState, config: TrapConfiguration, dt: float) -> ParticleState:
    """Advance one velocity-Verlet step under the force -grad U."""
    pos = np.array(state.position)
    vel = np.array(state.velocity)
    acc = _acceleration(config, pos)
    _kernels.verlet_step(
        config.kernel_params(), 1.0 / config.particle_mass, pos, vel, acc, dt
    )
    new = ParticleState(pos, vel, state.time + dt)
    if not new.is_finite:
        raise NonFiniteStateError(f"non-finite state after step at t={new.time!r}")
    return new


def total_energy(state: ParticleState, config: TrapConfiguration) -> float:
    v = state.velocity
    return 0.5 * config.particle_mass * float(v @ v) + float(
        total_potential(config, state.position)
    )


Observer = Callable[[ParticleState, float], bool]


def propagate(
    state: ParticleState,
    config: TrapConfiguration,
    params: IntegratorParams,
    observer: Optional[Observer] = None,
    record_every: int = 0,
) -> TrajectoryReport:
    """Integrate until the observer asks to stop, the particle escapes, or max_steps.

    ``observer(state, energy)`` is called with the initial state and after
    every step; a truthy return value stops the integration. Transit records
    collected by the observer (its ``records`` attribute, if any) are copied
    into the report. With ``record_every > 0`` every n-th state is kept as a
    row (t, x, y, z, vx, vy, vz, E) in ``report.samples``.
    """
    p = config.kernel_params()
    m = config.particle_mass
    inv_m = 1.0 / m
    u_scale = config.max_depth
    esc = [params.escape_factor * b.waist for b in config.beams]
    if len(esc) == 1:
        esc.append(esc[0])

    pos = np.array(state.position)
    vel = np.array(state.velocity)
    acc = _acceleration(config, pos)
    t0 = state.time
    e0 = total_energy(state, config)
    energy = e0
    rows: List[tuple] = []

    def snapshot(t, e):
        rows.append((t, *pos, *vel, e))

    if record_every:
        snapshot(t0, e0)

    n = 0
    cause = Termination.MAX_STEPS
    if observer is not None and observer(state, e0):
        cause = Termination.OBSERVER_STOP
    else:
        while n < params.max_steps:
            u = _kernels.verlet_step(p, inv_m, pos, vel, acc, params.dt)
            n += 1
            t = t0 + n * params.dt
            energy = 0.5 * m * float(vel @ vel) + u
            if not (np.isfinite(energy) and np.all(np.isfinite(pos))):
                cause = Termination.NONFINITE
                break
            if record_every and n % record_every == 0:
                snapshot(t, energy)
            if observer is not None and observer(ParticleState(pos, vel, t), energy):
                cause = Termination.OBSERVER_STOP
                break
            if abs(pos[0]) > esc[0] or abs(pos[1]) > esc[1]:
                cause = Termination.ESCAPED
                break
            if energy > 0.0 and float(pos @ vel) > 0.0:
                cause = Termination.ESCAPED
                break

    transits = list(getattr(observer, "records", ()))
    flagged = any(
        abs(r.exit_energy - r.entry_energy) / u_scale > params.drift_tolerance
        for r in transits
    )
    final = ParticleState(pos, vel, t0 + n * params.dt)
    return TrajectoryReport(
        cause=cause,
        n_steps=n,
        final_state=final,
        initial_energy=e0,
        final_energy=energy,
        energy_drift=(energy - e0) / u_scale,
        transits=transits,
        drift_flagged=flagged,
        samples=np.array(rows) if record_every else None,
    )
