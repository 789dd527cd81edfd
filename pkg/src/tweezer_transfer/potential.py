"""Analytic potential of one or two crossed, focused Gaussian beams.

Beam 1 propagates along x with its axis at z = 0, beam 2 propagates along y
with its axis at z = d. Both foci sit at x = y = 0. The beams are treated as
mutually incoherent, so their potentials add.

All quantities are SI. Positions are arrays whose last axis has length 3;
every function broadcasts over the leading axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .constants import RB87_MASS


class Axis(enum.IntEnum):
    X = 0
    Y = 1


@dataclass(frozen=True)
class BeamGeometry:
    """A single focused Gaussian beam.

    Parameters
    ----------
    axis : Axis
        Propagation direction.
    waist : float
        1/e^2 intensity radius at the focus (m).
    wavelength : float
        Laser wavelength (m).
    vertical_offset : float
        z-position of the beam axis (m).
    depth : float
        Trap depth U0 > 0 (J); the potential at the focus is -depth.
    """

    axis: Axis
    waist: float
    wavelength: float
    depth: float
    vertical_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        for name in ("waist", "wavelength", "depth"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not np.isfinite(self.vertical_offset):
            raise ValueError("vertical_offset must be finite")
        if not self.rayleigh_range > self.waist:
            raise ValueError(
                "rayleigh range must exceed the waist (waist too small for wavelength)"
            )

    @property
    def rayleigh_range(self) -> float:
        return np.pi * self.waist**2 / self.wavelength

    def waist_at(self, a):
        """Beam radius at axial distance ``a`` from the focus."""
        return self.waist * np.sqrt(1.0 + (np.asarray(a) / self.rayleigh_range) ** 2)

    def _split(self, r):
        # axial coordinate and the two transverse offsets from the beam axis
        r = np.asarray(r, dtype=float)
        x, y, z = r[..., 0], r[..., 1], r[..., 2]
        dz = z - self.vertical_offset
        if self.axis == Axis.X:
            return x, y, dz
        return y, x, dz


@dataclass(frozen=True)
class TrapConfiguration:
    """Two orthogonally crossed beams plus the particle mass.

    ``beam2`` may be ``None`` for a single-beam landscape.
    """

    beam1: BeamGeometry
    beam2: Optional[BeamGeometry]
    particle_mass: float = RB87_MASS
    _kernel: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.beam1.axis != Axis.X or self.beam1.vertical_offset != 0.0:
            raise ValueError("beam1 must propagate along x with its axis at z = 0")
        if self.beam2 is not None and self.beam2.axis == self.beam1.axis:
            raise ValueError("beam1 and beam2 must propagate along different axes")
        if not (np.isfinite(self.particle_mass) and self.particle_mass > 0):
            raise ValueError("particle_mass must be > 0")

    @classmethod
    def crossed(
        cls,
        waist: float,
        wavelength: float,
        depth: float,
        separation: float = 0.0,
        depth2: Optional[float] = None,
        particle_mass: float = RB87_MASS,
    ) -> "TrapConfiguration":
        """Two beams with shared waist and wavelength, beam 2 raised by ``separation``."""
        b1 = BeamGeometry(Axis.X, waist, wavelength, depth)
        b2 = BeamGeometry(
            Axis.Y, waist, wavelength, depth if depth2 is None else depth2, separation
        )
        return cls(b1, b2, particle_mass)

    @property
    def beams(self) -> tuple:
        return (self.beam1,) if self.beam2 is None else (self.beam1, self.beam2)

    @property
    def separation(self) -> float:
        return 0.0 if self.beam2 is None else self.beam2.vertical_offset

    @property
    def max_depth(self) -> float:
        return max(b.depth for b in self.beams)

    @property
    def equal_depths(self) -> bool:
        return self.beam2 is not None and self.beam1.depth == self.beam2.depth

    def with_separation(self, separation: float) -> "TrapConfiguration":
        if self.beam2 is None:
            raise ValueError("single-beam configuration has no separation")
        return replace(self, beam2=replace(self.beam2, vertical_offset=separation))

    def kernel_params(self) -> np.ndarray:
        """Flat (2, 5) parameter table consumed by the compiled integrator.

        Rows are beams; columns are axis, waist, rayleigh range, depth,
        vertical offset. A missing beam 2 is encoded with zero depth.
        """
        if self._kernel is None:
            p = np.zeros((2, 5))
            for i, b in enumerate(self.beams):
                p[i] = (int(b.axis), b.waist, b.rayleigh_range, b.depth, b.vertical_offset)
            if self.beam2 is None:
                b = self.beam1
                p[1] = (int(Axis.Y), b.waist, b.rayleigh_range, 0.0, 0.0)
            p.setflags(write=False)
            object.__setattr__(self, "_kernel", p)
        return self._kernel


def beam_potential(beam: BeamGeometry, r):
    """Potential of one beam, -U0 (w0/w(a))^2 exp(-2 rho^2 / w(a)^2)."""
    a, t1, t2 = beam._split(r)
    q = 1.0 + (a / beam.rayleigh_range) ** 2
    rho2 = t1 * t1 + t2 * t2
    return -beam.depth / q * np.exp(-2.0 * rho2 / (beam.waist**2 * q))


def beam_gradient(beam: BeamGeometry, r):
    """Analytic gradient of :func:`beam_potential`; the force is its negative."""
    a, t1, t2 = beam._split(r)
    w2 = beam.waist**2
    zr2 = beam.rayleigh_range**2
    q = 1.0 + a * a / zr2
    rho2 = t1 * t1 + t2 * t2
    u = -beam.depth / q * np.exp(-2.0 * rho2 / (w2 * q))
    g_t = -4.0 * u / (w2 * q)
    g_a = u * (2.0 * a / zr2) / q * (2.0 * rho2 / (w2 * q) - 1.0)
    g_t1 = g_t * t1
    g_t2 = g_t * t2
    if beam.axis == Axis.X:
        return np.stack(np.broadcast_arrays(g_a, g_t1, g_t2), axis=-1)
    return np.stack(np.broadcast_arrays(g_t1, g_a, g_t2), axis=-1)


def total_potential(config: TrapConfiguration, r):
    return sum(beam_potential(b, r) for b in config.beams)


def total_gradient(config: TrapConfiguration, r):
    return sum(beam_gradient(b, r) for b in config.beams)


def radial_trap_frequency(beam: BeamGeometry, mass: float) -> float:
    """Small-oscillation transverse frequency at the focus, in Hz."""
    if mass <= 0:
        raise ValueError("mass must be > 0")
    return np.sqrt(4.0 * beam.depth / (mass * beam.waist**2)) / (2.0 * np.pi)


def vertical_profile(config: TrapConfiguration, z_samples):
    """Total potential along the vertical line x = y = 0."""
    z = np.asarray(z_samples, dtype=float)
    r = np.stack([np.zeros_like(z), np.zeros_like(z), z], axis=-1)
    return total_potential(config, r)


class TopologyKind(str, enum.Enum):
    SINGLE_WELL = "SingleWell"
    FLAT_BOTTOM = "FlatBottom"
    DOUBLE_WELL = "DoubleWell"


@dataclass(frozen=True)
class PotentialTopology:
    classification: TopologyKind
    minima_z: tuple
    barrier_height: float
    saddle_z: Optional[float] = None
    # absolute potential at the saddle; None without a barrier
    barrier_top: Optional[float] = None


def analyze_topology(
    config: TrapConfiguration,
    step_fraction: float = 1e-3,
    tolerance: float = 1e-6,
) -> PotentialTopology:
    """Classify the vertical profile at the crossing center.

    The profile is scanned with a step of ``step_fraction * w0`` over
    [-3 w0, d + 3 w0] and every sampled local minimum is refined with a
    bounded Brent search to ``tolerance * w0``. Two minima closer than the
    tolerance, or separated by a barrier lower than ``tolerance * U0``, count
    as flat bottom; so does a single minimum whose dimensionless curvature
    ``U'' w0^2 / U0`` is below the tolerance (the exact single/double well
    transition).
    """
    beams = config.beams
    depth_scale = sum(b.depth for b in beams)
    if not depth_scale > 0:
        raise ValueError("degenerate configuration: no beam has positive depth")
    w0 = min(b.waist for b in beams)
    u_scale = max(b.depth for b in beams)
    xtol = tolerance * w0

    offsets = [b.vertical_offset for b in beams]
    lo, hi = min(offsets) - 3.0 * w0, max(offsets) + 3.0 * w0
    n = int(np.ceil((hi - lo) / (step_fraction * w0))) + 1
    z = np.linspace(lo, hi, n)
    u = vertical_profile(config, z)

    def f(zz):
        return float(vertical_profile(config, zz))

    idx = np.flatnonzero((u[1:-1] <= u[:-2]) & (u[1:-1] < u[2:])) + 1
    dz = z[1] - z[0]
    minima = []
    for i in idx:
        res = minimize_scalar(
            f, bounds=(z[i] - dz, z[i] + dz), method="bounded", options={"xatol": xtol}
        )
        if not any(abs(res.x - m) < xtol for m in minima):
            minima.append(float(res.x))
    minima.sort()

    if len(minima) == 1:
        zm = minima[0]
        curv = _profile_curvature(config, zm)
        kind = (
            TopologyKind.FLAT_BOTTOM
            if abs(curv) * w0**2 / u_scale < tolerance
            else TopologyKind.SINGLE_WELL
        )
        return PotentialTopology(kind, (zm,), 0.0)

    if len(minima) != 2:
        raise RuntimeError(f"unexpected number of profile minima: {len(minima)}")

    z1, z2 = minima
    res = minimize_scalar(
        lambda zz: -f(zz), bounds=(z1, z2), method="bounded", options={"xatol": xtol}
    )
    top = f(res.x)
    barrier = top - min(f(z1), f(z2))
    if z2 - z1 < xtol or barrier < tolerance * u_scale:
        return PotentialTopology(TopologyKind.FLAT_BOTTOM, (0.5 * (z1 + z2),), 0.0)
    return PotentialTopology(
        TopologyKind.DOUBLE_WELL, (z1, z2), barrier, float(res.x), top
    )


def _profile_curvature(config: TrapConfiguration, z: float) -> float:
    # exact d2U/dz2 on the line x = y = 0, where both beams sit at their focus
    total = 0.0
    for b in config.beams:
        t = z - b.vertical_offset
        w2 = b.waist**2
        u = -b.depth * np.exp(-2.0 * t * t / w2)
        total += u * (16.0 * t * t / w2**2 - 4.0 / w2)
    return total


def profile_samples(config: TrapConfiguration, half_width: float = 3.0, n: int = 601):
    """Evenly spaced z samples spanning both beam axes with margin ``half_width * w0``."""
    w0 = config.beam1.waist
    offsets = [b.vertical_offset for b in config.beams]
    return np.linspace(min(offsets) - half_width * w0, max(offsets) + half_width * w0, n)

