"""Deterministic references: a Lindblad integrator and closed-form curves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .entanglement import trace_norm_assistance, wootters_concurrence
from .exceptions import TrajentError
from .linalg2q import is_density_matrix, projector

TRACE_TOL = 1e-8


class TraceDrift(TrajentError, ArithmeticError):
    """The master-equation integrator lost trace beyond tolerance."""


# ---------------------------------------------------------------------------
# master equation


def lindblad_rhs(rho, ops) -> np.ndarray:
    """``sum_k J rho J^dag - 1/2 {J^dag J, rho}`` for batched ``rho`` (..., 4, 4)."""
    ops = np.asarray(getattr(ops, "operators", ops), dtype=complex)
    ops_dag = np.conj(np.swapaxes(ops, -1, -2))
    jdj = np.einsum("kab,kbc->ac", ops_dag, ops)
    jump = np.einsum("kab,...bc,kcd->...ad", ops, rho, ops_dag)
    return jump - 0.5 * (jdj @ rho + rho @ jdj)


@dataclass(frozen=True, eq=False)
class MasterConfig:
    """Initial density matrix (or batch), channel, fixed step and horizon."""

    initial: np.ndarray
    channel: object
    dt: float = 1e-3
    t_final: float = 1.0

    def __post_init__(self):
        rho = np.asarray(self.initial, dtype=complex)
        if rho.shape[-2:] != (4, 4):
            raise ValueError(f"initial density matrix must be 4x4, got {rho.shape}")
        if not is_density_matrix(rho):
            raise ValueError("initial matrix is not a valid density matrix")
        object.__setattr__(self, "initial", rho)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")


def integrate_master(config: MasterConfig, times=None):
    """Classical RK4 integration of the Lindblad equation.

    Parameters
    ----------
    config : MasterConfig
    times : array_like, optional
        Output times (each a multiple of ``dt`` within ``[0, t_final]``).
        Defaults to every step.

    Returns
    -------
    times : ndarray, shape (K,)
    rhos : ndarray, shape (K, ..., 4, 4)
    """
    ops = np.asarray(getattr(config.channel, "operators", config.channel), dtype=complex)
    dt = float(config.dt)
    n_steps = int(round(config.t_final / dt))
    if times is None:
        out_steps = np.arange(n_steps + 1)
    else:
        out_steps = np.rint(np.asarray(times, dtype=float) / dt).astype(np.int64)
        if np.any(np.abs(out_steps * dt - np.asarray(times)) > 1e-9) or np.any(out_steps > n_steps):
            raise ValueError("output times must be multiples of dt within [0, t_final]")
    wanted = {}
    for idx, s in enumerate(out_steps):
        wanted.setdefault(int(s), []).append(idx)
    rho = np.array(config.initial, dtype=complex)
    out = np.empty((len(out_steps),) + rho.shape, dtype=complex)
    last = int(out_steps.max()) if len(out_steps) else 0
    for s in range(last + 1):
        for idx in wanted.get(s, ()):
            out[idx] = rho
        if s == last:
            break
        k1 = lindblad_rhs(rho, ops)
        k2 = lindblad_rhs(rho + 0.5 * dt * k1, ops)
        k3 = lindblad_rhs(rho + 0.5 * dt * k2, ops)
        k4 = lindblad_rhs(rho + dt * k3, ops)
        rho = rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
        tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
        if np.max(np.abs(tr - 1.0)) > TRACE_TOL:
            raise TraceDrift(f"trace drifted to {tr.flat[np.argmax(np.abs(tr - 1))]:.12g}")
        rho = rho / tr[..., None, None]
    return out_steps * dt, out


def evolve_to(rho0, channel, times, max_step: float = 1e-3):
    """RK4 states at arbitrary increasing ``times`` using steps no longer than ``max_step``.

    Each interval between consecutive output times is split into equal steps,
    so outputs need not be multiples of a global step.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    rho = np.array(rho0, dtype=complex)
    out = np.empty((len(times),) + rho.shape, dtype=complex)
    t_prev = 0.0
    for idx, t in enumerate(times):
        span = t - t_prev
        if span > 0:
            n = int(np.ceil(span / max_step - 1e-9))
            _, rr = integrate_master(MasterConfig(rho, channel, span / n, span), [span])
            rho = rr[0]
        out[idx] = rho
        t_prev = t
    return out


def master_measures(psi0, channel, times, dt: float = 1e-3):
    """Wootters concurrence and concurrence of assistance of ``rho(t)`` from pure ``psi0``.

    ``psi0`` may be a batch (n, 4); outputs have shape (K, n) or (K,).
    """
    rho0 = projector(np.asarray(psi0, dtype=complex))
    rhos = evolve_to(rho0, channel, times, dt)
    return wootters_concurrence(rhos), trace_norm_assistance(rhos)


# ---------------------------------------------------------------------------
# closed-form curves


def exponential_bound(c0, k, t):
    """``C0 exp(-k t)``."""
    if np.any(np.asarray(k) < 0):
        raise ValueError("k must be nonnegative")
    return np.asarray(c0) * np.exp(-np.asarray(k) * np.asarray(t))


def _check_cx(c0, x0):
    c0, x0 = np.asarray(c0, float), np.asarray(x0, float)
    if np.any(c0 < -1e-12) or np.any(x0 > 1 + 1e-12) or np.any(c0 > x0 + 1e-12):
        raise ValueError("dephasing bounds need 0 <= C0 <= X0 <= 1")
    return c0, x0


def dephasing_bounds(c0, x0, sign: int, t, gamma: float = 1.0):
    """``max(0, C0 (1+e)/2 -/+ X0 (1-e)/2)`` with ``e = exp(-gamma t)``.

    ``sign=+1`` is the upper bound on concurrence, ``sign=-1`` the lower bound
    on concurrence of assistance.
    """
    c0, x0 = _check_cx(c0, x0)
    e = np.exp(-gamma * np.asarray(t, float))
    return np.maximum(0.0, 0.5 * c0 * (1 + e) - sign * 0.5 * x0 * (1 - e))


def dephasing_separability_time(c0: float, x0: float, gamma: float = 1.0) -> float:
    """Time at which the upper dephasing bound reaches zero (``inf`` if never)."""
    _check_cx(c0, x0)
    if x0 <= c0 or x0 == 0.0:
        return float("inf")
    if c0 == 0.0:
        return 0.0
    return float(-np.log((x0 - c0) / (x0 + c0)) / gamma)


def zeroT_bounds(c0, p11, sign: int, t, gamma: float = 1.0):
    """``max(0, e (C0 -/+ 2 p11 (1-e)))`` with ``e = exp(-gamma t)``."""
    p11 = np.asarray(p11, float)
    if np.any(p11 < 0) or np.any(p11 > 1):
        raise ValueError("p11 must lie in [0, 1]")
    e = np.exp(-gamma * np.asarray(t, float))
    return np.maximum(0.0, e * (np.asarray(c0) - sign * 2.0 * p11 * (1 - e)))


def infT_bell_bound(c0, rate: float, t):
    """``max(0, exp(-2 G t) (C0 - sinh(2 G t)))`` for Bell-class initial states."""
    x = 2.0 * rate * np.asarray(t, float)
    return np.maximum(0.0, np.exp(-x) * (np.asarray(c0) - np.sinh(x)))


def infT_separability_time(c0: float, rate: float) -> float:
    return float(np.arcsinh(c0) / (2.0 * rate))


def exact_dephasing_measures(c0, x0, w0, t, gamma: float = 1.0):
    """Exact concurrence and concurrence of assistance under local dephasing.

    Valid for pure initial states with invariants ``C0, X0, W0``.
    """
    e = np.exp(-gamma * np.asarray(t, float))
    a = 1.0 - e
    c0, x0, w0 = (np.asarray(v, float) for v in (c0, x0, w0))
    conc = 0.5 * (-a * x0 + np.sqrt(a * a * w0 * w0 + 4 * e * c0 * c0))
    assist = 0.5 * (a * x0 + np.sqrt(a * a * x0 * x0 + 4 * e * c0 * c0))
    return np.maximum(0.0, conc), assist


def exact_zeroT_measures(c0, p11, t, gamma: float = 1.0):
    """Exact concurrence and concurrence of assistance under zero-temperature damping."""
    e = np.exp(-gamma * np.asarray(t, float))
    a = 1.0 - e
    c0, p11 = np.asarray(c0, float), np.asarray(p11, float)
    conc = np.maximum(0.0, e * (c0 - 2 * p11 * a))
    assist = e * (2 * p11 * a + np.sqrt(4 * p11 * p11 * a * a + c0 * c0))
    return conc, assist


# ---------------------------------------------------------------------------
# labelled curves

BOUND_LABELS = (
    "exp_local",
    "dephasing_plus",
    "dephasing_minus",
    "zeroT_plus",
    "zeroT_minus",
    "infT_bell_plus",
    "appC_dephasing_C",
    "appC_dephasing_CA",
    "appC_zeroT_C",
    "appC_zeroT_CA",
)


@dataclass(frozen=True)
class BoundCurve:
    """A named analytic curve with its parameters.

    ``params`` holds ``c0``, ``x0``, ``w0``, ``p11``, ``rate`` and, for
    ``exp_local``, ``k``.
    """

    label: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in BOUND_LABELS:
            raise ValueError(f"unknown bound label {self.label!r}; expected one of {BOUND_LABELS}")

    @property
    def evaluator(self) -> Callable:
        p = self.params
        r = p.get("rate", 1.0)
        table = {
            "exp_local": lambda t: exponential_bound(p["c0"], p["k"], t),
            "dephasing_plus": lambda t: dephasing_bounds(p["c0"], p["x0"], +1, t, r),
            "dephasing_minus": lambda t: dephasing_bounds(p["c0"], p["x0"], -1, t, r),
            "zeroT_plus": lambda t: zeroT_bounds(p["c0"], p["p11"], +1, t, r),
            "zeroT_minus": lambda t: zeroT_bounds(p["c0"], p["p11"], -1, t, r),
            "infT_bell_plus": lambda t: infT_bell_bound(p["c0"], r, t),
            "appC_dephasing_C": lambda t: exact_dephasing_measures(p["c0"], p["x0"], p["w0"], t, r)[0],
            "appC_dephasing_CA": lambda t: exact_dephasing_measures(p["c0"], p["x0"], p["w0"], t, r)[1],
            "appC_zeroT_C": lambda t: exact_zeroT_measures(p["c0"], p["p11"], t, r)[0],
            "appC_zeroT_CA": lambda t: exact_zeroT_measures(p["c0"], p["p11"], t, r)[1],
        }
        return table[self.label]

    def __call__(self, t):
        return self.evaluator(t)
