"""Run configuration: TOML in laboratory units, converted to SI on load.

Keys may sit at the top level or inside tables; tables are flattened, so
``[beam] waist_um = 7.5`` and a bare ``waist_um = 7.5`` are equivalent.

Mandatory keys: ``waist_um``, ``wavelength_nm`` and one of ``depth_MHz`` /
``depth_J``. Everything else has a default, see ``DEFAULTS``.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .constants import AMU, H, KB, SPECIES_MASS_AMU
from .dynamics import IntegratorParams
from .ensemble import SamplerParams, ThermalParams
from .potential import TrapConfiguration

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

DEFAULT_SEPARATIONS = [round(0.25 * i, 2) for i in range(13)]

DEFAULTS: Dict[str, Any] = {
    "depth2_MHz": None,
    "depth2_J": None,
    "species": "Rb87",
    "mass_amu": None,
    "separations_w0": DEFAULT_SEPARATIONS,
    "seed": 0,
    "workers": 1,
    "output_dir": "out",
    # sampler
    "n_trajectories": 2000,
    "energy_min_U0": -0.95,
    "energy_max_U0": -0.05,
    "spawn_axial_w0": 10.0,
    "transverse_sigma_w0": 0.5,
    "transits_per_trajectory": 4,
    "min_axial_kinetic_U0": 0.02,
    "energy_bins": 10,
    # integrator
    "dt_s": None,
    "steps_per_radial_period": 500.0,
    "max_steps": 10_000_000,
    "drift_tolerance": 1e-3,
    "escape_w0": 60.0,
    # thermal
    "temperature_fraction": None,
    "temperature_uK": None,
    # profile / trajectory subcommands
    "profile_points": 601,
    "profile_half_width_w0": 3.0,
    "trajectory_separation_w0": 1.0,
    "trajectory_index": 0,
    "trajectory_steps": 200_000,
    "record_every": 10,
}
MANDATORY = ("waist_um", "wavelength_nm")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfiguration:
    trap: TrapConfiguration  # beam 2 at zero separation; sweeps move it
    separations: tuple  # units of w0
    sampler: SamplerParams
    integrator: IntegratorParams
    thermal: ThermalParams
    energy_bin_edges: np.ndarray  # units of U0
    output_dir: Path
    seed: int
    workers: int
    profile_points: int
    profile_half_width: float
    trajectory_separation: float
    trajectory_index: int
    trajectory_steps: int
    record_every: int

    def to_natural_units(self) -> Dict[str, Any]:
        """The configuration expressed back in laboratory units (flat dict).

        Converted floats are rounded to 15 significant digits.
        """
        b1, b2 = self.trap.beam1, self.trap.beam2
        s, it = self.sampler, self.integrator
        return {
            k: float(f"{v:.15g}") if isinstance(v, float) else v
            for k, v in self._natural_units(b1, b2, s, it).items()
        }

    def _natural_units(self, b1, b2, s, it):
        return {
            "waist_um": b1.waist * 1e6,
            "wavelength_nm": b1.wavelength * 1e9,
            "depth_MHz": b1.depth / H / 1e6,
            "depth2_MHz": b2.depth / H / 1e6,
            "mass_amu": self.trap.particle_mass / AMU,
            "separations_w0": list(self.separations),
            "seed": self.seed,
            "workers": self.workers,
            "output_dir": str(self.output_dir),
            "n_trajectories": s.n_trajectories,
            "energy_min_U0": s.energy_range[0],
            "energy_max_U0": s.energy_range[1],
            "spawn_axial_w0": s.spawn_axial_distance,
            "transverse_sigma_w0": s.transverse_sigma,
            "transits_per_trajectory": s.transits_per_trajectory,
            "min_axial_kinetic_U0": s.min_axial_kinetic,
            "energy_bins": len(self.energy_bin_edges) - 1,
            "dt_s": it.dt,
            "max_steps": it.max_steps,
            "drift_tolerance": it.drift_tolerance,
            "escape_w0": it.escape_factor,
            "temperature_fraction": self.thermal.temperature_fraction,
            "temperature_uK": self.thermal.temperature_fraction * b1.depth / KB * 1e6,
            "profile_points": self.profile_points,
            "profile_half_width_w0": self.profile_half_width,
            "trajectory_separation_w0": self.trajectory_separation,
            "trajectory_index": self.trajectory_index,
            "trajectory_steps": self.trajectory_steps,
            "record_every": self.record_every,
        }

    def with_overrides(self, seed=None, output_dir=None, workers=None):
        kw = {}
        if seed is not None:
            kw["seed"] = seed
            kw["sampler"] = replace(self.sampler, seed=seed)
        if output_dir is not None:
            kw["output_dir"] = Path(output_dir)
        if workers is not None:
            if workers < 1:
                raise ConfigError("workers", "must be >= 1")
            kw["workers"] = workers
        return replace(self, **kw) if kw else self


def _flatten(doc: dict, out: Optional[dict] = None) -> dict:
    out = {} if out is None else out
    for k, v in doc.items():
        if isinstance(v, dict):
            _flatten(v, out)
        elif k in out:
            raise ConfigError(k, "given more than once")
        else:
            out[k] = v
    return out


def _number(raw: dict, key: str, kind=float, positive=False, allow_none=False):
    value = raw.get(key)
    if value is None:
        if allow_none:
            return None
        raise ConfigError(key, "missing mandatory key")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(key, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
        if not np.isfinite(value):
            raise ConfigError(key, "must be finite")
    if positive and not value > 0:
        raise ConfigError(key, f"must be > 0, got {value!r}")
    return value


def parse_config(doc: dict, base_dir: Path = Path(".")) -> RunConfiguration:
    raw = _flatten(doc)
    unknown = sorted(set(raw) - set(DEFAULTS) - set(MANDATORY) - {"depth_MHz", "depth_J"})
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    for k in MANDATORY:
        if k not in raw:
            raise ConfigError(k, "missing mandatory key")
    merged = {**DEFAULTS, **raw}

    waist = _number(merged, "waist_um", positive=True) * 1e-6
    wavelength = _number(merged, "wavelength_nm", positive=True) * 1e-9

    def depth(mhz_key, j_key, fallback):
        if merged.get(mhz_key) is not None and merged.get(j_key) is not None:
            raise ConfigError(mhz_key, f"give either {mhz_key} or {j_key}, not both")
        if merged.get(mhz_key) is not None:
            return _number(merged, mhz_key, positive=True) * 1e6 * H
        if merged.get(j_key) is not None:
            return _number(merged, j_key, positive=True)
        if fallback is None:
            raise ConfigError(mhz_key, "missing mandatory key")
        return fallback

    depth1 = depth("depth_MHz", "depth_J", None)
    depth2 = depth("depth2_MHz", "depth2_J", depth1)

    if merged["mass_amu"] is not None:
        mass = _number(merged, "mass_amu", positive=True) * AMU
    else:
        species = merged["species"]
        if species not in SPECIES_MASS_AMU:
            raise ConfigError("species", f"unknown species {species!r}")
        mass = SPECIES_MASS_AMU[species] * AMU

    try:
        trap = TrapConfiguration.crossed(waist, wavelength, depth1, 0.0, depth2, mass)
    except ValueError as exc:
        raise ConfigError("waist_um", str(exc)) from exc

    seps = merged["separations_w0"]
    if not isinstance(seps, list) or not seps:
        raise ConfigError("separations_w0", "must be a non-empty list")
    separations = tuple(_number({"separations_w0": s}, "separations_w0") for s in seps)

    seed = _number(merged, "seed", int)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    workers = _number(merged, "workers", int, positive=True)

    e_min = _number(merged, "energy_min_U0")
    e_max = _number(merged, "energy_max_U0")
    if not e_min < e_max < 0:
        raise ConfigError("energy_min_U0", "need energy_min_U0 < energy_max_U0 < 0")
    spawn = _number(merged, "spawn_axial_w0", positive=True)
    if not spawn > 3.0:
        raise ConfigError("spawn_axial_w0", "must exceed the crossing half-width of 3")
    margin = _number(merged, "min_axial_kinetic_U0")
    if not 0 <= margin < 1:
        raise ConfigError("min_axial_kinetic_U0", "must be in [0, 1)")
    sampler = SamplerParams(
        seed=seed,
        n_trajectories=_number(merged, "n_trajectories", int, positive=True),
        energy_range=(e_min, e_max),
        spawn_axial_distance=spawn,
        transverse_sigma=_number(merged, "transverse_sigma_w0", positive=True),
        transits_per_trajectory=_number(
            merged, "transits_per_trajectory", int, positive=True
        ),
        min_axial_kinetic=margin,
    )

    dt = _number(merged, "dt_s", positive=True, allow_none=True)
    common = dict(
        max_steps=_number(merged, "max_steps", int, positive=True),
        drift_tolerance=_number(merged, "drift_tolerance", positive=True),
        escape_factor=_number(merged, "escape_w0", positive=True),
    )
    if dt is None:
        integrator = IntegratorParams.for_config(
            trap,
            _number(merged, "steps_per_radial_period", positive=True),
            **common,
        )
    else:
        integrator = IntegratorParams(dt=dt, **common)

    if merged["temperature_fraction"] is not None and merged["temperature_uK"] is not None:
        raise ConfigError(
            "temperature_fraction", "give either temperature_fraction or temperature_uK"
        )
    if merged["temperature_uK"] is not None:
        frac = _number(merged, "temperature_uK", positive=True) * 1e-6 * KB / depth1
    elif merged["temperature_fraction"] is not None:
        frac = _number(merged, "temperature_fraction")
    else:
        frac = ThermalParams().temperature_fraction
    try:
        thermal = ThermalParams(frac)
    except ValueError as exc:
        raise ConfigError("temperature_fraction", str(exc)) from exc

    n_bins = _number(merged, "energy_bins", int, positive=True)
    out_dir = Path(str(merged["output_dir"]))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    return RunConfiguration(
        trap=trap,
        separations=separations,
        sampler=sampler,
        integrator=integrator,
        thermal=thermal,
        energy_bin_edges=np.linspace(-1.0, 0.0, n_bins + 1),
        output_dir=out_dir,
        seed=seed,
        workers=workers,
        profile_points=_number(merged, "profile_points", int, positive=True),
        profile_half_width=_number(merged, "profile_half_width_w0", positive=True),
        trajectory_separation=_number(merged, "trajectory_separation_w0"),
        trajectory_index=_number(merged, "trajectory_index", int),
        trajectory_steps=_number(merged, "trajectory_steps", int, positive=True),
        record_every=_number(merged, "record_every", int, positive=True),
    )


def load_config(path) -> RunConfiguration:
    """Read a TOML run configuration and validate it.

    Relative ``output_dir`` values resolve against the current directory.
    The validated configuration is logged at INFO level in laboratory units.
    """
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError("config", f"file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from exc
    cfg = parse_config(doc)
    for key, value in cfg.to_natural_units().items():
        log.info("config %s = %r", key, value)
    return cfg
