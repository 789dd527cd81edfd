"""Compiled inner loops.

The parameter table ``p`` has one row per beam with columns
(axis, waist, rayleigh_range, depth, vertical_offset); see
``TrapConfiguration.kernel_params``. Everything here mirrors the readable
numpy implementations in ``potential`` and ``events`` and is tested against
them.
"""

import math

import numpy as np
from numba import njit

# region codes
OUTSIDE = 0
IN_BEAM1 = 1
IN_BEAM2 = 2
CROSSING = 3

# termination codes
OBSERVER_STOP = 0
ESCAPED = 1
MAX_STEPS = 2
NONFINITE = 3

# tracker states: IDLE, IN_BEAM1/IN_BEAM2 reuse the region codes, CROSSING + entry beam
TRACK_IDLE = 0

RECORD_FIELDS = 6  # entry_beam, exit_beam, entry_energy, exit_energy, entry_time, exit_time


@njit(cache=True)
def potential_and_gradient(p, x, y, z):
    u_tot = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for i in range(p.shape[0]):
        depth = p[i, 3]
        if depth == 0.0:
            continue
        w2 = p[i, 1] * p[i, 1]
        zr2 = p[i, 2] * p[i, 2]
        dz = z - p[i, 4]
        if p[i, 0] == 0.0:
            a = x
            t1 = y
        else:
            a = y
            t1 = x
        q = 1.0 + a * a / zr2
        rho2 = t1 * t1 + dz * dz
        u = -depth / q * math.exp(-2.0 * rho2 / (w2 * q))
        g_t = -4.0 * u / (w2 * q)
        g_a = u * (2.0 * a / zr2) / q * (2.0 * rho2 / (w2 * q) - 1.0)
        u_tot += u
        gz += g_t * dz
        if p[i, 0] == 0.0:
            gx += g_a
            gy += g_t * t1
        else:
            gy += g_a
            gx += g_t * t1
    return u_tot, gx, gy, gz


@njit(cache=True)
def verlet_step(p, inv_m, pos, vel, acc, dt):
    """One velocity-Verlet step in place; returns the potential at the new position."""
    h = 0.5 * dt
    for k in range(3):
        vel[k] += h * acc[k]
        pos[k] += dt * vel[k]
    u, gx, gy, gz = potential_and_gradient(p, pos[0], pos[1], pos[2])
    acc[0] = -gx * inv_m
    acc[1] = -gy * inv_m
    acc[2] = -gz * inv_m
    for k in range(3):
        vel[k] += h * acc[k]
    return u


@njit(cache=True)
def classify(p, x, y, z, axial_factor, capture_factor):
    w1 = p[0, 1]
    w2 = p[1, 1]
    a1 = abs(x)
    a2 = abs(y)
    if a1 < axial_factor * w1 and a2 < axial_factor * w2:
        return CROSSING
    dz1 = z - p[0, 4]
    dz2 = z - p[1, 4]
    if a1 >= axial_factor * w1 and y * y + dz1 * dz1 < (capture_factor * w1) ** 2:
        return IN_BEAM1
    if a2 >= axial_factor * w2 and x * x + dz2 * dz2 < (capture_factor * w2) ** 2:
        return IN_BEAM2
    return OUTSIDE


@njit(cache=True)
def run_trajectory(
    p,
    mass,
    pos0,
    vel0,
    t0,
    dt,
    max_steps,
    axial_factor,
    capture_factor,
    escape_factor,
    records,
):
    """Integrate one trajectory with the transit tracker folded into the loop.

    Fills ``records[:n]`` and returns
    (cause, n_steps, n_records, max_transit_drift, final_energy, pos, vel).
    The tracker asks to stop once ``records`` is full.
    """
    inv_m = 1.0 / mass
    pos = pos0.copy()
    vel = vel0.copy()
    u, gx, gy, gz = potential_and_gradient(p, pos[0], pos[1], pos[2])
    acc = np.empty(3)
    acc[0] = -gx * inv_m
    acc[1] = -gy * inv_m
    acc[2] = -gz * inv_m
    esc1 = escape_factor * p[0, 1]
    esc2 = escape_factor * p[1, 1]

    state = TRACK_IDLE
    entry_beam = 0
    entry_e = 0.0
    entry_t = 0.0
    n_rec = 0
    max_drift = 0.0

    energy = 0.5 * mass * (vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2) + u
    t = t0

    # the observer sees the initial state before any step is taken
    region = classify(p, pos[0], pos[1], pos[2], axial_factor, capture_factor)
    if region == IN_BEAM1 or region == IN_BEAM2:
        state = region
    capacity = records.shape[0]

    n = 0
    if capacity == 0:
        return OBSERVER_STOP, n, n_rec, max_drift, energy, pos, vel
    while n < max_steps:
        u = verlet_step(p, inv_m, pos, vel, acc, dt)
        n += 1
        t = t0 + n * dt
        energy = 0.5 * mass * (vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2) + u
        if not (math.isfinite(energy) and math.isfinite(pos[0] + pos[1] + pos[2])):
            return NONFINITE, n, n_rec, max_drift, energy, pos, vel

        region = classify(p, pos[0], pos[1], pos[2], axial_factor, capture_factor)
        if region == OUTSIDE:
            state = TRACK_IDLE
        elif region == CROSSING:
            if state == IN_BEAM1 or state == IN_BEAM2:
                entry_beam = state
                entry_e = energy
                entry_t = t
                state = CROSSING
        else:
            if state == CROSSING:
                records[n_rec, 0] = entry_beam
                records[n_rec, 1] = region
                records[n_rec, 2] = entry_e
                records[n_rec, 3] = energy
                records[n_rec, 4] = entry_t
                records[n_rec, 5] = t
                n_rec += 1
                d = abs(energy - entry_e)
                if d > max_drift:
                    max_drift = d
            state = region
            if n_rec >= capacity:
                return OBSERVER_STOP, n, n_rec, max_drift, energy, pos, vel

        if abs(pos[0]) > esc1 or abs(pos[1]) > esc2:
            return ESCAPED, n, n_rec, max_drift, energy, pos, vel
        if energy > 0.0 and pos[0] * vel[0] + pos[1] * vel[1] + pos[2] * vel[2] > 0.0:
            return ESCAPED, n, n_rec, max_drift, energy, pos, vel

    return MAX_STEPS, n, n_rec, max_drift, energy, pos, vel
