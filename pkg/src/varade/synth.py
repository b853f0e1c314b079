"""Synthetic 86-channel manipulator stream with injected collision bursts.

A fixed "program" of 30 actions (seeded by ``program_seed``) is executed in
a cycle. Each action moves every joint between two poses along a minimum-jerk
profile. IMU channels derive from the orientation trajectory; vibration noise
on the acceleration and gyro channels is low-pass (the sensors filter on
board), grows with joint speed and is scaled by a slowly wandering per-joint
intensity. Collisions are short high-frequency jolts of roughly the same
per-sample amplitude as that noise, plus a power spike. The energy meter
refreshes at ``meter_rate`` and holds its value in between. Separate streams
generated with the same ``program_seed`` share the robot program and differ
only in noise, timing jitter and collisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .data import (
    ACTION_CHANNEL,
    JOINT_COMPONENTS,
    N_JOINTS,
    POWER_CHANNELS,
    LabeledStream,
    default_schema,
    euler_to_quaternion,
    joint_channel,
)

N_ACTIONS = 30
GRAVITY = 9.81


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    cycles: int = 30
    sample_rate: float = 200.0
    anomalies: int = 0
    seed: int = 0
    program_seed: int = 0
    action_duration: tuple[float, float] = (2.0, 6.0)
    burst_duration: tuple[float, float] = (0.25, 1.0)
    # minimum quiet time before the first burst and between bursts (s)
    quiet_start: float = 10.0
    burst_gap: float = 2.0
    meter_rate: float = 5.0
    # joint noise: low-pass AR(1) with stationary std scaled by a log-normal
    # intensity that follows OU dynamics
    acc_noise: float = 0.6
    gyro_noise: float = 3.0
    noise_tau: float = 0.25
    vibration_spread: float = 0.5
    vibration_tau: float = 3.0
    # collision disturbance amplitudes
    burst_acc: float = 3.0
    burst_gyro: float = 15.0
    burst_power: float = 15.0

    def __post_init__(self):
        if self.cycles < 1:
            raise GenerationError("cycles must be >= 1")
        if self.sample_rate <= 0:
            raise GenerationError("sample_rate must be positive")
        if self.anomalies < 0:
            raise GenerationError("anomaly count must be >= 0")


@dataclass(frozen=True)
class RobotProgram:
    durations: np.ndarray  # [A] seconds
    poses: np.ndarray  # [A, J, 3] euler degrees at the start of each action
    wobble: np.ndarray  # [A, J, 3] amplitude of a mid-motion deviation, degrees
    temp_base: np.ndarray  # [J]


def make_program(cfg: SynthConfig) -> RobotProgram:
    rng = np.random.default_rng(cfg.program_seed)
    lo, hi = cfg.action_duration
    durations = rng.uniform(lo, hi, N_ACTIONS)
    poses = rng.uniform(-150.0, 150.0, (N_ACTIONS, N_JOINTS, 3))
    # wrist joints move more than the base
    poses *= np.linspace(0.4, 1.0, N_JOINTS)[None, :, None]
    # some joints stay still during some actions
    still = rng.random((N_ACTIONS, N_JOINTS)) < 0.3
    for a in range(N_ACTIONS - 1):
        poses[a + 1][still[a]] = poses[a][still[a]]
    wobble = rng.uniform(-10.0, 10.0, (N_ACTIONS, N_JOINTS, 3))
    temp_base = rng.uniform(30.0, 45.0, N_JOINTS)
    return RobotProgram(durations, poses, wobble, temp_base)


def _min_jerk(tau):
    s = tau**3 * (10 - 15 * tau + 6 * tau**2)
    ds = 30 * tau**2 * (1 - tau) ** 2
    dds = 60 * tau * (1 - tau) * (1 - 2 * tau)
    return s, ds, dds


def _rotate_gravity(q: np.ndarray) -> np.ndarray:
    """World gravity expressed in the sensor frame for unit quaternions [..., 4]."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    # third row of R^T applied to (0, 0, g) = g * third column of R
    gx = 2 * (x * z - w * y)
    gy = 2 * (y * z + w * x)
    gz = 1 - 2 * (x * x + y * y)
    return GRAVITY * np.stack([gx, gy, gz], axis=-1)


def _timeline(cfg: SynthConfig, program: RobotProgram, rng):
    # per-occurrence durations with +-5% jitter
    n_occ = cfg.cycles * N_ACTIONS
    actions = np.tile(np.arange(N_ACTIONS), cfg.cycles)
    durs = program.durations[actions] * rng.uniform(0.95, 1.05, n_occ)
    starts = np.concatenate([[0.0], np.cumsum(durs)[:-1]])
    total = float(starts[-1] + durs[-1])
    n = int(math.floor(total * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    occ = np.searchsorted(starts, t, side="right") - 1
    tau = (t - starts[occ]) / durs[occ]
    return t, actions[occ], tau, durs[occ]


def _place_bursts(cfg: SynthConfig, n: int, rng) -> list[tuple[int, int]]:
    k = cfg.anomalies
    if k == 0:
        return []
    fs = cfg.sample_rate
    lo, hi = cfg.burst_duration
    lengths = np.maximum(1, np.round(rng.uniform(lo, hi, k) * fs).astype(int))
    gap = int(round(cfg.burst_gap * fs))
    lead = int(round(cfg.quiet_start * fs))
    need = lead + int(lengths.sum()) + gap * k
    slack = n - need
    if slack < 0:
        raise GenerationError(
            f"cannot place {k} non-overlapping bursts in {n} samples (need {need}); "
            "use more cycles or fewer anomalies"
        )
    # uniform composition of the slack around the fixed-size blocks
    offsets = np.sort(rng.integers(0, slack + 1, k))
    bursts = []
    pos = lead
    prev = 0
    for off, length in zip(offsets, lengths):
        pos += int(off - prev)
        prev = off
        bursts.append((pos, pos + int(length)))
        pos += int(length) + gap
    return bursts


def _vibration(n: int, fs: float, cfg: SynthConfig, rng) -> np.ndarray:
    a = math.exp(-1.0 / (cfg.vibration_tau * fs))
    shocks = rng.standard_normal((n, N_JOINTS)) * cfg.vibration_spread * math.sqrt(1 - a * a)
    start = rng.standard_normal(N_JOINTS) * cfg.vibration_spread
    log_v, _ = lfilter([1.0], [1.0, -a], shocks, axis=0, zi=(a * start)[None, :])
    return np.exp(log_v)


def _smooth_noise(sigma: np.ndarray, k: int, fs: float, cfg: SynthConfig, rng) -> np.ndarray:
    """AR(1) noise with stationary std ``sigma[t]``, as left by the on-sensor filter."""
    rho = math.exp(-1.0 / (cfg.noise_tau * fs))
    innov = rng.standard_normal((len(sigma), k)) * (sigma * math.sqrt(1 - rho * rho))[:, None]
    start = rng.standard_normal(k) * sigma[0]
    out, _ = lfilter([1.0], [1.0, -rho], innov, axis=0, zi=(rho * start)[None, :])
    return out


def synth_generate(cfg: SynthConfig) -> LabeledStream:
    program = make_program(cfg)
    rng = np.random.default_rng(cfg.seed)
    schema = default_schema()
    fs = cfg.sample_rate

    t, action, tau, dur = _timeline(cfg, program, rng)
    n = len(t)
    values = np.zeros((n, len(schema)), dtype=np.float64)
    values[:, schema.index(ACTION_CHANNEL)] = action

    s, ds, dds = _min_jerk(tau)
    start = program.poses[action]  # [N, J, 3]
    end = program.poses[(action + 1) % N_ACTIONS]
    delta = end - start
    bump = np.sin(np.pi * tau)  # mid-motion deviation, zero at both ends
    dbump = np.pi * np.cos(np.pi * tau)
    ddbump = -(np.pi**2) * bump
    wob = program.wobble[action]
    moving = np.any(delta != 0, axis=-1, keepdims=True)  # [N, J, 1]
    wob = np.where(moving, wob, 0.0)

    euler = start + delta * s[:, None, None] + wob * bump[:, None, None]
    rate = (delta * ds[:, None, None] + wob * dbump[:, None, None]) / dur[:, None, None]  # deg/s
    accel = (delta * dds[:, None, None] + wob * ddbump[:, None, None]) / dur[:, None, None] ** 2
    speed = np.linalg.norm(rate, axis=-1)  # [N, J]

    quat = euler_to_quaternion(euler[..., 0], euler[..., 1], euler[..., 2])  # [N, J, 4]
    grav = _rotate_gravity(quat)
    # latent per-joint vibration intensity: log-OU, visible only as roughness
    vib = _vibration(n, fs, cfg, rng)  # [N, J]
    speed_gain = 1.0 + speed / 100.0
    acc_sigma = cfg.acc_noise * vib * speed_gain  # m/s^2
    gyro_sigma = cfg.gyro_noise * vib * speed_gain  # deg/s

    col = {c: i for i, c in enumerate(JOINT_COMPONENTS)}
    for j in range(N_JOINTS):
        base = schema.index(joint_channel(j, JOINT_COMPONENTS[0]))
        lin = 0.01 * accel[:, j, :]  # tangential component, arbitrary lever arm
        acc = grav[:, j, :] + lin + _smooth_noise(acc_sigma[:, j], 3, fs, cfg, rng)
        gyro = rate[:, j, :] + _smooth_noise(gyro_sigma[:, j], 3, fs, cfg, rng)
        values[:, base + col["AccX"] : base + col["AccX"] + 3] = acc
        values[:, base + col["GyroX"] : base + col["GyroX"] + 3] = gyro
        values[:, base + col["q1"] : base + col["q1"] + 4] = quat[:, j, :]
        warm = 2.0 * np.sin(2 * np.pi * t / 1800.0 + j)
        values[:, base + col["temp"]] = program.temp_base[j] + warm + 0.05 * rng.standard_normal(n)

    bursts = _place_bursts(cfg, n, rng)
    labels = np.zeros(n, dtype=np.int8)
    extra_power = np.zeros(n)
    for a, b in bursts:
        labels[a:b] = 1
        m = b - a
        tt = np.arange(m) / fs
        joints = rng.choice(N_JOINTS, size=int(rng.integers(1, 4)), replace=False)
        for j in joints:
            base = schema.index(joint_channel(j, "AccX"))
            for k in range(6):
                freq = rng.uniform(0.2, 0.45) * fs
                phase = rng.uniform(0, 2 * np.pi)
                osc = np.sin(2 * np.pi * freq * tt + phase) + 0.5 * rng.standard_normal(m)
                amp = cfg.burst_acc if k < 3 else cfg.burst_gyro
                values[a:b, base + k] += amp * rng.uniform(0.5, 1.0) * osc
        extra_power[a:b] = cfg.burst_power * rng.uniform(0.5, 1.0)

    _meter_channels(values, schema, t, speed, extra_power, cfg, rng)

    stream = LabeledStream(schema, t, values.astype(np.float32), labels)
    stream.meta.update(
        bursts=bursts,
        label_fraction=float(labels.mean()) if n else 0.0,
        burst_samples=int(labels.sum()),
        duration_s=n / fs,
        vibration=vib,
    )
    return stream


def _ou(n: int, fs: float, tau: float, spread: float, rng) -> np.ndarray:
    a = math.exp(-1.0 / (tau * fs))
    shocks = rng.standard_normal(n) * spread * math.sqrt(1 - a * a)
    out, _ = lfilter([1.0], [1.0, -a], shocks, zi=[a * spread * rng.standard_normal()])
    return out


def _meter_channels(values, schema, t, speed, extra_power, cfg: SynthConfig, rng) -> None:
    n = len(t)
    fs = cfg.sample_rate
    motion = speed.sum(axis=1)
    power = 120.0 + 0.35 * motion + extra_power + 2.0 * rng.standard_normal(n)
    pf = np.clip(0.80 + 0.12 * np.tanh(motion / 150.0) + 0.002 * rng.standard_normal(n), 0.3, 0.999)
    # the grid wanders slowly; meter read noise is small next to that
    voltage = 230.0 - 0.004 * power + _ou(n, fs, 120.0, 1.5, rng) + 0.1 * rng.standard_normal(n)
    freq = 50.0 + _ou(n, fs, 120.0, 0.03, rng) + 0.002 * rng.standard_normal(n)

    # the meter reports every 1/meter_rate seconds and holds in between
    step = max(1, int(round(fs / cfg.meter_rate)))
    held = (np.arange(n) // step) * step

    power, pf, voltage, freq = power[held], pf[held], voltage[held], freq[held]
    phase = np.degrees(np.arccos(pf))
    reactive = power * np.tan(np.arccos(pf))
    current = power / (voltage * pf)
    energy = power * (step / fs) / 3600.0  # Wh over the reporting interval
    for name, col in zip(POWER_CHANNELS, (current, freq, phase, power, pf, reactive, voltage, energy)):
        values[:, schema.index(name)] = col
