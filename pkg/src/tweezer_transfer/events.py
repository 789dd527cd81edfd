"""Region classification and transit/transfer detection.

The crossing region is the box where the particle is within
``3 w0`` of the focus along *both* beam axes. A particle is "in beam k" when
it is farther than ``3 w0`` from the focus along beam k's axis and within the
capture radius (also ``3 w0``) of that axis. Anything else is outside.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .dynamics import total_energy
from .potential import TrapConfiguration

AXIAL_FACTOR = 3.0
CAPTURE_FACTOR = 3.0


class Region(enum.IntEnum):
    OUTSIDE = 0
    IN_BEAM1 = 1
    IN_BEAM2 = 2
    CROSSING = 3


class Beam(enum.IntEnum):
    BEAM1 = 1
    BEAM2 = 2


@dataclass(frozen=True)
class TransitRecord:
    """One passage through the crossing region."""

    entry_beam: Beam
    exit_beam: Beam
    entry_energy: float
    exit_energy: float
    entry_time: float
    exit_time: float

    def __post_init__(self):
        object.__setattr__(self, "entry_beam", Beam(self.entry_beam))
        object.__setattr__(self, "exit_beam", Beam(self.exit_beam))
        if not self.exit_time > self.entry_time:
            raise ValueError("exit_time must be later than entry_time")

    @property
    def transferred(self) -> bool:
        return self.entry_beam != self.exit_beam


def classify_region(
    position,
    config: TrapConfiguration,
    axial_factor: float = AXIAL_FACTOR,
    capture_factor: float = CAPTURE_FACTOR,
) -> Region:
    x, y, z = (float(c) for c in position)
    b1 = config.beam1
    b2 = config.beam2
    w1 = b1.waist
    w2 = b2.waist if b2 is not None else b1.waist
    z2 = b2.vertical_offset if b2 is not None else 0.0

    along1 = abs(x) >= axial_factor * w1
    along2 = abs(y) >= axial_factor * w2
    if not along1 and not along2:
        return Region.CROSSING
    if along1 and np.hypot(y, z) < capture_factor * w1:
        return Region.IN_BEAM1
    if along2 and np.hypot(x, z - z2) < capture_factor * w2:
        return Region.IN_BEAM2
    return Region.OUTSIDE


class TransitTracker:
    """Finite-state machine turning a time-ordered stream of states into transits.

    Feed states with :meth:`update`; a :class:`TransitRecord` is returned when
    a particle that last held beam membership has passed through the
    crossing region and reached beam membership again. Visiting the outside
    region forgets the entry beam.

    The tracker is also usable as a ``propagate`` observer: calling it returns
    True once ``max_transits`` records have been collected.
    """

    def __init__(
        self,
        config: TrapConfiguration,
        max_transits: Optional[int] = None,
        axial_factor: float = AXIAL_FACTOR,
        capture_factor: float = CAPTURE_FACTOR,
    ):
        self.config = config
        self.max_transits = max_transits
        self.axial_factor = axial_factor
        self.capture_factor = capture_factor
        self.records: List[TransitRecord] = []
        self.reset()

    def reset(self):
        self._beam: Optional[Beam] = None
        self._entry: Optional[tuple] = None  # (beam, energy, time) while crossing
        self._last_time = -np.inf

    def update(self, state, energy: Optional[float] = None) -> Optional[TransitRecord]:
        if state.time < self._last_time:
            raise ValueError(
                f"state at t={state.time!r} supplied after t={self._last_time!r}"
            )
        self._last_time = state.time
        region = classify_region(
            state.position, self.config, self.axial_factor, self.capture_factor
        )

        if region == Region.OUTSIDE:
            self._beam = None
            self._entry = None
            return None
        if region == Region.CROSSING:
            if self._entry is None and self._beam is not None:
                if energy is None:
                    energy = total_energy(state, self.config)
                self._entry = (self._beam, energy, state.time)
                self._beam = None
            return None

        beam = Beam(int(region))
        record = None
        if self._entry is not None:
            if energy is None:
                energy = total_energy(state, self.config)
            entry_beam, entry_energy, entry_time = self._entry
            record = TransitRecord(
                entry_beam, beam, entry_energy, energy, entry_time, state.time
            )
            self.records.append(record)
            self._entry = None
        self._beam = beam
        return record

    def __call__(self, state, energy: Optional[float] = None) -> bool:
        self.update(state, energy)
        return self.done

    @property
    def done(self) -> bool:
        return self.max_transits is not None and len(self.records) >= self.max_transits


def transfer_probability(n_transfers: int, n_transits: int) -> Optional[float]:
    """Fraction of transits that were transfers; None when there are no transits."""
    if not 0 <= n_transfers <= n_transits:
        raise ValueError(
            f"need 0 <= transfers <= transits, got {n_transfers}, {n_transits}"
        )
    if n_transits == 0:
        return None
    return n_transfers / n_transits
