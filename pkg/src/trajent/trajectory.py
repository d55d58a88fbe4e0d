"""Single quantum trajectories of the diffusive conditional-state equation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .channels import LindbladChannel
from .entanglement import concurrence, eof_from_concurrence
from .exceptions import TrajectoryDiverged
from .linalg2q import is_normalized, normalize
from .unraveling import Policy, noise_factor, noise_from_normals

DT_WARN = 0.01


def trajectory_generator(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` under master ``seed``.

    Streams come from ``SeedSequence(seed, spawn_key=(0, index))``; spawn key
    ``(1,)`` is reserved for drawing random initial states.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(0, int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def step_count(dt: float, t_final: float) -> int:
    n = int(round(t_final / dt))
    if n < 1 or abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final={t_final!r} is not a positive multiple of dt={dt!r}")
    return n


def prepare(channel: LindbladChannel, policy: Policy) -> _kernels.Prepared:
    """Validate the pairing and precompute the step constants."""
    policy.validate(channel)
    fixed_u = policy.fixed_matrix(channel)
    fixed_B = noise_factor(fixed_u)
    return _kernels.prepare(channel.operators, policy.code, policy.sign, fixed_u, fixed_B)


def propagate(psi, channel, u, dxi, dt: float) -> np.ndarray:
    """Deterministic one-step map for a given correlation matrix and noise draw."""
    psi = np.asarray(psi, dtype=complex)
    u = np.asarray(u, dtype=complex)
    ops = getattr(channel, "operators", channel)
    prep = _kernels.prepare(ops, 0, 1.0, u, np.zeros((2 * len(u), 2 * len(u))))
    out, _ = _kernels.step_numpy(psi[None], prep, u[None], np.asarray(dxi, dtype=complex)[None], dt)
    return out[0]


def step(psi, channel: LindbladChannel, policy: Policy, dt: float, rng: np.random.Generator):
    """Advance ``psi`` by one time step, drawing noise from ``rng``.

    The correlation matrix is evaluated at the pre-step state.
    """
    psi = np.asarray(psi, dtype=complex)
    if not is_normalized(psi):
        raise ValueError("state must be normalized")
    u = policy.evaluate(psi, channel)
    z = rng.standard_normal(2 * channel.n_ops)
    dxi = noise_from_normals(noise_factor(u), z, dt)
    out = propagate(psi, channel, u, dxi, dt)
    if not np.all(np.isfinite(out)):
        raise TrajectoryDiverged("step produced non-finite amplitudes", [0])
    return out


@dataclass(frozen=True, eq=False)
class TrajectoryConfig:
    """Inputs of a single trajectory run.

    Attributes
    ----------
    initial_state : ndarray, shape (4,)
    channel : LindbladChannel
    policy : Policy
    dt : float
        Time step in units of the inverse channel rate.
    t_final : float
        Must be an integer multiple of ``dt``.
    seed : int
    record_stride : int
        Observables are recorded every ``record_stride`` steps and at ``t_final``.
    """

    initial_state: np.ndarray
    channel: LindbladChannel
    policy: Policy
    dt: float = 1e-3
    t_final: float = 1.0
    seed: int = 0
    record_stride: int = 1
    record_states: bool = False
    record_currents: bool = False
    backend: str | None = None

    def __post_init__(self):
        psi = np.asarray(self.initial_state, dtype=complex)
        if psi.shape != (4,):
            raise ValueError(f"initial state must have 4 amplitudes, got {psi.shape}")
        object.__setattr__(self, "initial_state", normalize(psi))
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be a positive integer")
        step_count(self.dt, self.t_final)
        if self.dt * self.channel.max_rate > DT_WARN:
            warnings.warn(
                f"dt * max rate = {self.dt * self.channel.max_rate:.3g} exceeds {DT_WARN}",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def n_steps(self) -> int:
        return step_count(self.dt, self.t_final)

    def record_steps(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, int(self.record_stride))
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    concurrence: np.ndarray
    eof: np.ndarray
    states: np.ndarray | None = None
    currents: np.ndarray | None = None
    fallback_events: int = 0
    localization_residual: float = 0.0
    meta: dict = field(default_factory=dict)


def run(config: TrajectoryConfig, index: int = 0) -> TrajectoryRecord:
    """Integrate one trajectory; deterministic in ``(config, seed, index)``."""
    prep = prepare(config.channel, config.policy)
    rec = config.record_steps()
    buf = _kernels.run_batch(
        config.initial_state[None],
        prep,
        config.dt,
        config.n_steps,
        rec,
        [trajectory_generator(config.seed, index)],
        store_states=config.record_states,
        store_currents=config.record_currents,
        backend=config.backend,
    )
    if buf.diverged[0]:
        raise TrajectoryDiverged("trajectory produced non-finite amplitudes", [index])
    conc = buf.conc[0]
    return TrajectoryRecord(
        times=rec * config.dt,
        concurrence=conc,
        eof=eof_from_concurrence(conc),
        states=buf.states[0] if config.record_states else None,
        currents=buf.currents[0] if config.record_currents else None,
        fallback_events=int(buf.fallback[0]),
        localization_residual=float(buf.eq43[0]),
        meta={"initial_concurrence": concurrence(config.initial_state)},
    )
