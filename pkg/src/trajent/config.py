"""Flat ``key = value`` scenario files.

Blank lines and lines starting with ``#`` are ignored. Every key must be one
of ``KEYS``; values are parsed and range-checked, and every error names the
offending key and line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channels, presets
from .linalg2q import normalize
from .unraveling import Policy

KEYS = (
    "channel.kind",
    "channel.gamma",
    "channel.nbar",
    "channel.representation",
    "policy.kind",
    "policy.sign",
    "policy.fixed_u",
    "initial.kind",
    "initial.amplitudes",
    "sim.dt",
    "sim.t_final",
    "sim.checkpoints",
    "ensemble.n_traj",
    "ensemble.n_states",
    "seed",
    "output.path",
    "output.record_states",
)

CHANNEL_KINDS = (
    "dephasing",
    "amplitude_damping",
    "thermal",
    "infinite_temperature",
    "depolarizing",
    "dephasing_and_hot_bath",
)

POLICY_KINDS = ("protection", "fixed", "dephasing_opt", "zeroT_opt", "infT_opt_plus", "localized")


class ConfigError(ValueError):
    """Invalid scenario file; ``str()`` names the key and line when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.key = key
        self.line = line


@dataclass
class RawConfig:
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def has(self, key: str) -> bool:
        return key in self.values

    def raw(self, key: str, required: bool = False, default=None):
        if key not in self.values:
            if required:
                raise ConfigError("required key is missing", key)
            return default
        return self.values[key]

    def err(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, key, self.lines.get(key))


def parse_text(text: str) -> RawConfig:
    cfg = RawConfig()
    for num, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=num)
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key (allowed: {', '.join(KEYS)})", key, num)
        if key in cfg.values:
            raise ConfigError(f"duplicate key (first set on line {cfg.lines[key]})", key, num)
        if value == "":
            raise ConfigError("empty value", key, num)
        cfg.values[key] = value
        cfg.lines[key] = num
    return cfg


def load(path) -> RawConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return parse_text(text)


# ---------------------------------------------------------------------------
# typed accessors


def get_float(cfg: RawConfig, key: str, default=None, positive=False, nonneg=False) -> float:
    raw = cfg.raw(key, required=default is None)
    if raw is None:
        return float(default)
    try:
        val = float(raw)
    except ValueError:
        raise cfg.err(key, f"expected a number, got {raw!r}") from None
    if not np.isfinite(val):
        raise cfg.err(key, "value must be finite")
    if positive and val <= 0:
        raise cfg.err(key, f"must be positive, got {val!r}")
    if nonneg and val < 0:
        raise cfg.err(key, f"must be nonnegative, got {val!r}")
    return val


def get_int(cfg: RawConfig, key: str, default=None, minimum: int | None = None) -> int:
    raw = cfg.raw(key, required=default is None)
    if raw is None:
        return int(default)
    try:
        val = int(raw)
    except ValueError:
        raise cfg.err(key, f"expected an integer, got {raw!r}") from None
    if minimum is not None and val < minimum:
        raise cfg.err(key, f"must be at least {minimum}, got {val}")
    return val


def get_bool(cfg: RawConfig, key: str, default: bool) -> bool:
    raw = cfg.raw(key)
    if raw is None:
        return default
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise cfg.err(key, f"expected a boolean, got {raw!r}")


def get_choice(cfg: RawConfig, key: str, choices, default=None) -> str:
    raw = cfg.raw(key, required=default is None)
    if raw is None:
        return default
    if raw not in choices:
        raise cfg.err(key, f"must be one of {', '.join(choices)}; got {raw!r}")
    return raw


def get_sign(cfg: RawConfig) -> int:
    raw = cfg.raw("policy.sign", default="+1")
    table = {"+": 1, "+1": 1, "1": 1, "plus": 1, "-": -1, "-1": -1, "minus": -1}
    if raw not in table:
        raise cfg.err("policy.sign", f"expected +1 or -1, got {raw!r}")
    return table[raw]


def get_float_list(cfg: RawConfig, key: str) -> list[float] | None:
    raw = cfg.raw(key)
    if raw is None:
        return None
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise cfg.err(key, f"expected a list of numbers, got {raw!r}") from None


def get_complex_list(cfg: RawConfig, key: str) -> list[complex] | None:
    raw = cfg.raw(key)
    if raw is None:
        return None
    try:
        return [complex(tok.replace(" ", "")) for tok in raw.split(",")]
    except ValueError:
        raise cfg.err(key, f"expected comma-separated complex numbers, got {raw!r}") from None


# ---------------------------------------------------------------------------
# scenario objects


def build_channel(cfg: RawConfig) -> channels.LindbladChannel:
    kind = get_choice(cfg, "channel.kind", CHANNEL_KINDS)
    gamma = get_float(cfg, "channel.gamma", 1.0, positive=True)
    if cfg.has("channel.nbar") and kind != "thermal":
        raise cfg.err("channel.nbar", "only valid with channel.kind = thermal")
    if cfg.has("channel.representation") and kind != "infinite_temperature":
        raise cfg.err("channel.representation", "only valid with channel.kind = infinite_temperature")
    if kind == "dephasing":
        return channels.dephasing(gamma)
    if kind == "amplitude_damping":
        return channels.amplitude_damping(gamma)
    if kind == "thermal":
        return channels.thermal(gamma, get_float(cfg, "channel.nbar", 0.0, nonneg=True))
    if kind == "infinite_temperature":
        rep = get_choice(cfg, "channel.representation", channels.REPRESENTATIONS, "raising_lowering")
        return channels.infinite_temperature(gamma, rep)
    if kind == "depolarizing":
        return channels.depolarizing(gamma)
    return presets.dephasing_and_hot_bath(gamma)


def build_policy(cfg: RawConfig, channel: channels.LindbladChannel) -> Policy:
    kind = get_choice(cfg, "policy.kind", POLICY_KINDS)
    sign = get_sign(cfg)
    if cfg.has("policy.fixed_u") and kind != "fixed":
        raise cfg.err("policy.fixed_u", "only valid with policy.kind = fixed")
    try:
        if kind == "fixed":
            entries = get_complex_list(cfg, "policy.fixed_u")
            if entries is None:
                raise cfg.err("policy.fixed_u", "required when policy.kind = fixed")
            L = channel.n_ops
            if len(entries) != L * L:
                raise cfg.err("policy.fixed_u", f"expected {L * L} entries for {L} operators, got {len(entries)}")
            policy = Policy("fixed", u=np.array(entries).reshape(L, L))
        else:
            policy = Policy(kind, sign=sign)
        policy.validate(channel)
    except ConfigError:
        raise
    except ValueError as exc:
        key = "policy.fixed_u" if kind == "fixed" else "policy.kind"
        raise cfg.err(key, str(exc)) from None
    return policy


def build_initial_states(cfg: RawConfig, seed: int) -> np.ndarray:
    from .ensemble import haar_random_state, initial_state_generator

    kind = get_choice(cfg, "initial.kind", ("fixed", "haar"), "fixed")
    if kind == "fixed":
        if cfg.has("ensemble.n_states"):
            raise cfg.err("ensemble.n_states", "only valid with initial.kind = haar")
        amps = get_float_list(cfg, "initial.amplitudes")
        if amps is None:
            raise cfg.err("initial.amplitudes", "required when initial.kind = fixed")
        if len(amps) != 8:
            raise cfg.err("initial.amplitudes", f"expected 8 reals (re, im for 4 amplitudes), got {len(amps)}")
        psi = np.array(amps[0::2]) + 1j * np.array(amps[1::2])
        if np.linalg.norm(psi) == 0:
            raise cfg.err("initial.amplitudes", "amplitudes are all zero")
        return normalize(psi)[None]
    if cfg.has("initial.amplitudes"):
        raise cfg.err("initial.amplitudes", "only valid with initial.kind = fixed")
    n_states = get_int(cfg, "ensemble.n_states", 1, minimum=1)
    return haar_random_state(initial_state_generator(seed), n_states)


def sim_times(cfg: RawConfig):
    """``(dt, t_final, checkpoints)`` with checkpoints snapped to multiples of dt."""
    dt = get_float(cfg, "sim.dt", 1e-3, positive=True)
    t_final = get_float(cfg, "sim.t_final", 1.0, positive=True)
    n_steps = int(round(t_final / dt))
    if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise cfg.err("sim.t_final", f"must be a positive multiple of sim.dt = {dt!r}")
    cps = get_float_list(cfg, "sim.checkpoints")
    if cps is None:
        steps = np.unique(np.rint(np.linspace(0, n_steps, 11)).astype(int))
    else:
        if not cps:
            raise cfg.err("sim.checkpoints", "list is empty")
        arr = np.asarray(cps)
        steps = np.rint(arr / dt).astype(int)
        if np.any(arr < 0) or np.any(arr > t_final + 1e-12) or np.any(np.diff(arr) <= 0):
            raise cfg.err("sim.checkpoints", "times must be increasing and within [0, sim.t_final]")
        if np.any(np.abs(steps * dt - arr) > 1e-9 * np.maximum(1.0, arr)):
            raise cfg.err("sim.checkpoints", f"times must be multiples of sim.dt = {dt!r}")
    return dt, t_final, tuple(float(np.round(s * dt, 12)) for s in steps)
