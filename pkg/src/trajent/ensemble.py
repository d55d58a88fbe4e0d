"""Monte Carlo ensembles of trajectories and the studies built on them.

Trajectories are split into fixed-size chunks that run on a thread pool.
Trajectory ``i`` always draws from its own stream (see
``trajectory_generator``) and chunk boundaries do not depend on the worker
count, so every statistic is bit-identical for any number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .channels import LindbladChannel
from .entanglement import (
    concurrence,
    eof_from_concurrence,
    k_of_u,
    trace_norm_assistance,
    w_function,
    wootters_concurrence,
    x_function,
)
from .exceptions import TrajectoryDiverged
from .linalg2q import local_unitary, normalize, projector, trace_distance
from .oracle import (
    dephasing_bounds,
    evolve_to,
    exact_dephasing_measures,
    exact_zeroT_measures,
    exponential_bound,
    infT_bell_bound,
    zeroT_bounds,
)
from .trajectory import prepare, step_count, trajectory_generator
from .unraveling import Policy

CHUNK = 64
HIST_BINS = 64
ORACLE_STEP = 1e-3


def resolve_workers(workers: int | None = None) -> int:
    """Explicit argument, else ``TRAJENT_WORKERS``, else the CPU count."""
    if workers is None:
        env = os.environ.get("TRAJENT_WORKERS", "").strip()
        workers = int(env) if env else (os.cpu_count() or 1)
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"worker count must be positive, got {workers}")
    return workers


def initial_state_generator(seed: int) -> np.random.Generator:
    """Stream reserved for random initial states under master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(1,))
    return np.random.Generator(np.random.PCG64(ss))


def haar_random_state(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniformly distributed pure states: i.i.d. complex Gaussians, normalized."""
    shape = (4,) if size is None else (int(size), 4)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return normalize(z)


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True, eq=False)
class EnsembleConfig:
    """Ensemble of ``n_traj`` trajectories sharing a channel and policy.

    Attributes
    ----------
    initial_states : ndarray, shape (m, 4)
        Trajectory ``i`` starts from ``initial_states[i % m]``.
    checkpoints : sequence of float
        Times at which statistics are collected; each a multiple of ``dt``.
    record_states : bool
        Keep conditional states at checkpoints to rebuild ``rho``.
    """

    channel: LindbladChannel
    policy: Policy
    initial_states: np.ndarray
    n_traj: int
    checkpoints: tuple
    dt: float = 1e-3
    seed: int = 0
    record_states: bool = True
    workers: int | None = None
    backend: str | None = None
    with_oracle: bool = True

    def __post_init__(self):
        psi = np.atleast_2d(np.asarray(self.initial_states, dtype=complex))
        if psi.shape[-1] != 4 or psi.ndim != 2 or len(psi) < 1:
            raise ValueError("initial_states must have shape (m, 4)")
        object.__setattr__(self, "initial_states", normalize(psi))
        if int(self.n_traj) < 1:
            raise ValueError("n_traj must be at least 1")
        cps = tuple(float(t) for t in self.checkpoints)
        if not cps or any(t < 0 for t in cps) or list(cps) != sorted(cps):
            raise ValueError("checkpoints must be a nonempty increasing list of times >= 0")
        object.__setattr__(self, "checkpoints", cps)
        for t in cps:
            if t > 0:
                step_count(self.dt, t)

    @property
    def t_final(self) -> float:
        return self.checkpoints[-1]

    @property
    def n_steps(self) -> int:
        return 0 if self.t_final == 0 else step_count(self.dt, self.t_final)

    def record_steps(self) -> np.ndarray:
        return np.array([int(round(t / self.dt)) for t in self.checkpoints], dtype=np.int64)

    def start_index(self) -> np.ndarray:
        return np.arange(int(self.n_traj)) % len(self.initial_states)


@dataclass
class EnsembleStats:
    """Per-checkpoint statistics of an ensemble (arrays indexed by checkpoint)."""

    times: np.ndarray
    mean_C: np.ndarray
    se_C: np.ndarray
    var_C: np.ndarray
    histogram: np.ndarray
    mean_EoF: np.ndarray
    rho: np.ndarray | None
    rho_se: np.ndarray | None
    oracle_rho: np.ndarray | None
    oracle_C: np.ndarray
    oracle_CA: np.ndarray
    bound: np.ndarray
    trace_dist: np.ndarray
    concurrences: np.ndarray
    fallback_events: int
    localization_residual: float
    n_traj: int
    meta: dict = field(default_factory=dict)

    def trace_tolerance(self) -> np.ndarray:
        """``max(5e-3, 3 SE)`` with SE the Frobenius norm of the entrywise errors of rho."""
        se = np.zeros_like(self.times) if self.rho_se is None else self.rho_se
        return np.maximum(5e-3, 3.0 * se)


# ---------------------------------------------------------------------------
# execution


def _chunks(n: int, size: int = CHUNK):
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def run_trajectories(config: EnsembleConfig):
    """Integrate every trajectory; returns the filled output buffers."""
    prep = prepare(config.channel, config.policy)
    backend = _kernels.resolve_backend(config.backend)
    rec = config.record_steps()
    n = int(config.n_traj)
    L = config.channel.n_ops
    starts = config.initial_states[config.start_index()]
    buf = _kernels.BlockBuffers.allocate(n, len(rec), L, 0, config.record_states, False)

    def work(span):
        a, b = span
        gens = [trajectory_generator(config.seed, i) for i in range(a, b)]
        out = _kernels.run_batch(
            starts[a:b], prep, config.dt, config.n_steps, rec, gens,
            store_states=config.record_states, backend=backend,
        )
        return span, out

    spans = _chunks(n)
    workers = min(resolve_workers(config.workers), len(spans))
    if workers == 1:
        results = [work(s) for s in spans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, spans))
    for (a, b), out in results:
        buf.conc[a:b] = out.conc
        if config.record_states:
            buf.states[a:b] = out.states
        buf.fallback[a:b] = out.fallback
        buf.eq43[a:b] = out.eq43
        buf.diverged[a:b] = out.diverged
    if np.any(buf.diverged):
        bad = np.flatnonzero(buf.diverged).tolist()
        raise TrajectoryDiverged(f"{len(bad)} trajectories diverged", bad)
    return buf


def _local_rate_if_constant(channel, policy, psi):
    """``k`` when the mean concurrence of this pairing decays exponentially, else None."""
    if not channel.is_local:
        return None
    if policy.kind in ("protection", "fixed"):
        try:
            return k_of_u(channel, policy.fixed_matrix(channel))
        except ValueError:
            return None
    if policy.kind == "localized":
        # k is independent of diagonal phases when every tr(J^2) - (tr J)^2/2 vanishes
        coeff = [np.trace(j @ j) - 0.5 * np.trace(j) ** 2 for j in channel.single_qubit]
        if np.max(np.abs(coeff)) < 1e-14:
            return k_of_u(channel, -np.eye(channel.n_ops))
    return None


def expected_curve(channel, policy, psi0, times) -> np.ndarray:
    """Closed-form mean concurrence of the unraveling, NaN where none is known."""
    times = np.asarray(times, dtype=float)
    c0 = concurrence(psi0)
    k = _local_rate_if_constant(channel, policy, psi0)
    if k is not None:
        return exponential_bound(c0, k, times)
    rate = channel.rate
    if policy.kind == "dephasing_opt":
        return dephasing_bounds(c0, max(c0, x_function(psi0)), policy.sign, times, rate)
    if policy.kind == "zeroT_opt":
        return zeroT_bounds(c0, abs(psi0[3]) ** 2, policy.sign, times, rate)
    if policy.kind == "infT_opt_plus":
        return infT_bell_bound(c0, rate, times)
    return np.full(times.shape, np.nan)


def _rho_stats(states):
    """Mean projector and the Frobenius norm of its entrywise standard errors."""
    n = states.shape[0]
    proj = projector(states)  # (n, K, 4, 4)
    rho = proj.mean(axis=0)
    if n > 1:
        var = proj.real.var(axis=0, ddof=1) + proj.imag.var(axis=0, ddof=1)
        se = np.sqrt(np.sum(var, axis=(-1, -2)) / n)
    else:
        se = np.zeros(rho.shape[0])
    return rho, se


def run_ensemble(config: EnsembleConfig) -> EnsembleStats:
    """Run the ensemble and reduce it to per-checkpoint statistics."""
    buf = run_trajectories(config)
    conc = buf.conc
    n = conc.shape[0]
    times = np.asarray(config.checkpoints, dtype=float)
    mean_c = conc.mean(axis=0)
    var_c = conc.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean_c)
    se_c = np.sqrt(var_c / n)
    hist = np.stack(
        [np.histogram(conc[:, j], bins=HIST_BINS, range=(0.0, 1.0))[0] for j in range(len(times))]
    )
    mean_eof = eof_from_concurrence(conc).mean(axis=0)

    starts = config.start_index()
    counts = np.bincount(starts, minlength=len(config.initial_states))
    weights = counts / counts.sum()
    curves = np.array(
        [expected_curve(config.channel, config.policy, p, times) for p in config.initial_states]
    )
    bound = weights @ curves

    rho = rho_se = oracle_rho = None
    oracle_c = np.full(len(times), np.nan)
    oracle_ca = np.full(len(times), np.nan)
    trace_dist = np.full(len(times), np.nan)
    if config.with_oracle:
        rho0 = np.einsum("m,mab->ab", weights, projector(config.initial_states))
        oracle_rho = evolve_to(rho0, config.channel, times, ORACLE_STEP / config.channel.max_rate)
        oracle_c = wootters_concurrence(oracle_rho)
        oracle_ca = trace_norm_assistance(oracle_rho)
    if config.record_states:
        rho, rho_se = _rho_stats(buf.states)
        if oracle_rho is not None:
            trace_dist = trace_distance(rho, oracle_rho)
    return EnsembleStats(
        times=times,
        mean_C=mean_c,
        se_C=se_c,
        var_C=var_c,
        histogram=hist,
        mean_EoF=mean_eof,
        rho=rho,
        rho_se=rho_se,
        oracle_rho=oracle_rho,
        oracle_C=np.atleast_1d(oracle_c),
        oracle_CA=np.atleast_1d(oracle_ca),
        bound=bound,
        trace_dist=trace_dist,
        concurrences=conc,
        fallback_events=int(buf.fallback.sum()),
        localization_residual=float(buf.eq43.max()),
        n_traj=n,
    )


# ---------------------------------------------------------------------------
# studies


@dataclass
class BoundStudy:
    """Exact measure against analytic bound for many random initial states.

    ``exact``, ``bound`` and ``ratio`` have shape ``(K, n_states)``. For the
    upper bound (``sign=+1``) the exact value is the concurrence; for the lower
    bound it is the concurrence of assistance.
    """

    channel: str
    sign: int
    times: np.ndarray
    c0: np.ndarray
    exact: np.ndarray
    bound: np.ndarray
    ratio: np.ndarray
    violations: np.ndarray
    equality_gap: float
    within_20pct: np.ndarray
    identity_gap: float

    def cdf(self, k: int):
        """Sorted ratios at checkpoint ``k`` and their empirical CDF."""
        r = np.sort(self.ratio[k])
        return r, np.arange(1, r.size + 1) / r.size


def _safe_ratio(num, den):
    out = np.ones_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    out[~nz & (num > 0)] = np.inf
    return out


def bound_performance_study(channel: str, sign: int, times, n_states: int, seed: int = 0,
                            rate: float = 1.0, tol: float = 1e-9) -> BoundStudy:
    """Compare closed-form exact measures with the adaptive-unraveling bounds.

    Parameters
    ----------
    channel : {"dephasing", "zeroT"}
    sign : {+1, -1}
        +1 checks the concurrence upper bound, -1 the assistance lower bound.
    """
    if channel not in ("dephasing", "zeroT"):
        raise ValueError(f"channel must be 'dephasing' or 'zeroT', got {channel!r}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    times = np.asarray(times, dtype=float)
    psi = haar_random_state(initial_state_generator(seed), n_states)
    c0 = concurrence(psi)
    x0 = x_function(psi)
    w0 = w_function(psi)
    p11 = np.abs(psi[:, 3]) ** 2
    t = times[:, None]
    if channel == "dephasing":
        exact_c, exact_ca = exact_dephasing_measures(c0, x0, w0, t, rate)
        bound = dephasing_bounds(c0, x0, sign, t, rate)
    else:
        exact_c, exact_ca = exact_zeroT_measures(c0, p11, t, rate)
        bound = zeroT_bounds(c0, p11, sign, t, rate)
    exact = exact_c if sign == 1 else exact_ca
    ratio = _safe_ratio(exact, bound)
    if sign == 1:
        violations = np.sum(exact > bound + tol, axis=1)
        good = np.where(bound > 0, exact >= 0.8 * bound, True)
    else:
        violations = np.sum(exact < bound - tol, axis=1)
        good = bound >= 0.8 * exact
    within = good.mean(axis=1)
    # exact and bound coincide for states with C0 = X0 (a vanishing amplitude)
    eq_psi = psi.copy()
    eq_psi[:, 3] = 0.0
    eq_psi = normalize(eq_psi)
    ec0, ex0, ew0 = concurrence(eq_psi), x_function(eq_psi), w_function(eq_psi)
    ep11 = np.abs(eq_psi[:, 3]) ** 2
    if channel == "dephasing":
        e_c, e_ca = exact_dephasing_measures(ec0, ex0, ew0, t, rate)
        e_b = dephasing_bounds(ec0, np.maximum(ec0, ex0), sign, t, rate)
    else:
        e_c, e_ca = exact_zeroT_measures(ec0, ep11, t, rate)
        e_b = zeroT_bounds(ec0, ep11, sign, t, rate)
    eq_gap = float(np.max(np.abs((e_c if sign == 1 else e_ca) - e_b)))
    identity_gap = float("nan")
    if channel == "zeroT" and sign == 1:
        identity_gap = float(np.max(np.abs(bound - exact_c)))
    return BoundStudy(channel, sign, times, c0, exact, bound, ratio, violations, eq_gap,
                      within, identity_gap)


@dataclass
class LocalizationReport:
    times: np.ndarray
    mean_C: np.ndarray
    var_C: np.ndarray
    threshold: float
    passed: np.ndarray
    mean_EoF: np.ndarray
    eof_of_mean: np.ndarray
    expected: np.ndarray
    identity_residual: float
    stats: EnsembleStats


def localization_study(channel, policy, psi0, n_traj: int, times, dt: float = 1e-3,
                       seed: int = 0, workers: int | None = None,
                       backend: str | None = None) -> LocalizationReport:
    """Ensemble spread of concurrence under a noise-cancelling unraveling."""
    if policy.kind not in ("protection", "localized"):
        raise ValueError("localization_study expects the protection or localized policy")
    cfg = EnsembleConfig(channel, policy, np.asarray(psi0)[None], n_traj, tuple(times), dt,
                         seed, record_states=False, workers=workers, backend=backend,
                         with_oracle=False)
    stats = run_ensemble(cfg)
    c0 = concurrence(psi0)
    threshold = 1e-6 * max(c0 * c0, 1e-6)
    return LocalizationReport(
        times=stats.times,
        mean_C=stats.mean_C,
        var_C=stats.var_C,
        threshold=threshold,
        passed=stats.var_C < threshold,
        mean_EoF=stats.mean_EoF,
        eof_of_mean=eof_from_concurrence(stats.mean_C),
        expected=stats.bound,
        identity_residual=stats.localization_residual,
        stats=stats,
    )


def haar_invariance_sample(rng: np.random.Generator, n: int):
    """Concurrences of ``n`` Haar states before and after one fixed local unitary.

    The second sample uses fresh draws so the two are independent.
    """
    first = concurrence(haar_random_state(rng, n))
    u = local_unitary(rng)
    second = concurrence(haar_random_state(rng, n) @ u.T)
    return first, second
