"""Entanglement measures and the stochastic increment of concurrence.

Pure-state quantities accept batched states of shape ``(..., 4)``; the
increment amplitudes (``drift_v``, ``noise_f`` and friends) act on a single
state.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DegenerateConcurrence, MaximalConcurrence, NonLocalInput
from .linalg2q import SPIN_FLIP_MATRIX

EPS_C = 1e-12
"""Concurrence below which the phase ``c/C`` is treated as undefined."""

EPS_MAX = 1e-9
"""Distance from ``C = 1`` below which entropy derivatives are refused."""


def _ops(channel) -> np.ndarray:
    ops = getattr(channel, "operators", channel)
    ops = np.asarray(ops, dtype=complex)
    if ops.ndim == 2:
        ops = ops[None]
    return ops


# ---------------------------------------------------------------------------
# pure-state measures


def preconcurrence(psi) -> np.ndarray | complex:
    """``c = <psi|spin_flip(psi)> = 2 (psi01* psi10* - psi00* psi11*)``."""
    p = np.conj(np.asarray(psi, dtype=complex))
    c = 2.0 * (p[..., 1] * p[..., 2] - p[..., 0] * p[..., 3])
    return complex(c) if c.ndim == 0 else c


def concurrence(psi):
    c = np.abs(preconcurrence(psi))
    return float(c) if np.ndim(c) == 0 else c


def x_function(psi):
    """``2 (|psi01 psi10| + |psi00 psi11|)``, an upper bound on concurrence."""
    p = np.asarray(psi, dtype=complex)
    x = 2.0 * (np.abs(p[..., 1] * p[..., 2]) + np.abs(p[..., 0] * p[..., 3]))
    return float(x) if x.ndim == 0 else x


def w_function(psi):
    """``2 (|psi01 psi10| - |psi00 psi11|)``."""
    p = np.asarray(psi, dtype=complex)
    w = 2.0 * (np.abs(p[..., 1] * p[..., 2]) - np.abs(p[..., 0] * p[..., 3]))
    return float(w) if w.ndim == 0 else w


# ---------------------------------------------------------------------------
# mixed-state measures


def _wootters_lambdas(rho) -> np.ndarray:
    """Decreasing square roots of the eigenvalues of ``rho (SyxSy) rho* (SyxSy)``.

    With ``rho = X X^dagger`` the square roots are the singular values of
    ``X^T (SyxSy) X``, which avoids the non-Hermitian eigenproblem.
    """
    rho = np.asarray(rho, dtype=complex)
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    w, v = np.linalg.eigh(rho)
    x = v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]
    m = np.swapaxes(x, -1, -2) @ SPIN_FLIP_MATRIX @ x
    return np.linalg.svd(m, compute_uv=False)


def wootters_concurrence(rho):
    """Mixed-state concurrence ``max(0, l1 - l2 - l3 - l4)`` (batched)."""
    lam = _wootters_lambdas(rho)
    c = np.clip(lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3], 0.0, 1.0)
    return float(c) if c.ndim == 0 else c


def trace_norm_assistance(rho):
    """Sum of the Wootters square roots ``l1 + l2 + l3 + l4``.

    For two qubits this equals the concurrence of assistance.
    """
    s = np.sum(_wootters_lambdas(rho), axis=-1)
    return float(s) if s.ndim == 0 else s


# ---------------------------------------------------------------------------
# entanglement of formation


def binary_entropy(x):
    """``-x log2 x - (1-x) log2 (1-x)`` with ``0 log 0 = 0``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for part in (x, 1.0 - x):
        mask = part > 0.0
        out[mask] -= part[mask] * np.log2(part[mask])
    return float(out) if out.ndim == 0 else out


def eof_from_concurrence(c):
    """Entanglement of formation of a two-qubit state with concurrence ``c``."""
    c = np.clip(np.asarray(c, dtype=float), 0.0, 1.0)
    return binary_entropy(0.5 * (1.0 + np.sqrt(1.0 - c * c)))


def eof_pure(psi):
    return eof_from_concurrence(concurrence(psi))


def eof_derivatives(c: float) -> tuple[float, float]:
    """First and second derivative of ``eof_from_concurrence`` at ``0 < c < 1``."""
    if c <= EPS_C:
        raise DegenerateConcurrence(f"entropy derivatives undefined at C={c:g}")
    if 1.0 - c <= EPS_MAX:
        raise MaximalConcurrence(f"entropy derivatives diverge at C={c:g}")
    s = np.sqrt(1.0 - c * c)
    x = 0.5 * (1.0 + s)
    log_ratio = np.log2(x / (1.0 - x))
    d1 = c / (2.0 * s) * log_ratio
    d2 = log_ratio / (2.0 * s**3) - 1.0 / (s * s * np.log(2.0))
    return float(d1), float(d2)


# ---------------------------------------------------------------------------
# concurrence increment amplitudes


def _phase_or_raise(psi, ops, local_ok: bool):
    """Return ``(c, C)``; ``None`` signals the exact-zero shortcut."""
    c = preconcurrence(psi)
    cc = abs(c)
    if cc == 0.0 and local_ok:
        return None
    if cc <= EPS_C:
        raise DegenerateConcurrence(f"concurrence {cc:g} is below {EPS_C:g}")
    return c, cc


def _is_local_ops(channel) -> bool:
    return bool(getattr(channel, "is_local", False))


def drift_v(psi, channel, u) -> float:
    """Deterministic amplitude ``V`` of the concurrence increment.

    Evaluates the general four-term expression, valid for nonlocal
    operators and nonlocal ``u``.
    """
    ops = _ops(channel)
    u = np.asarray(u, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    pc = _phase_or_raise(psi, ops, _is_local_ops(channel))
    if pc is None:
        return 0.0
    c, cc = pc
    S = SPIN_FLIP_MATRIX
    jpsi = ops @ psi  # (L, 4)
    jdj = np.einsum("kab,kbc->ac", np.conj(np.swapaxes(ops, -1, -2)), ops)
    t1 = psi @ S @ (jdj @ psi)
    jt = jpsi @ S @ psi  # <J~_k> = psi^T S J_k psi (S symmetric)
    t2 = np.sum(np.abs(jt) ** 2) / c
    t3 = c / cc**2 * (jt @ np.conj(u) @ jt)
    pair = jpsi @ S @ jpsi.T  # <(J_k psi)~ | J_l psi>
    t4 = np.sum(pair * np.conj(u))
    return float(-np.real(c / cc * (t1 - t2 + t3 - t4)))


def noise_f(psi, channel) -> np.ndarray:
    """Noise amplitude ``F_k = (c/C)(<J~_k> - c* <J_k>)``; independent of ``u``."""
    ops = _ops(channel)
    psi = np.asarray(psi, dtype=complex)
    pc = _phase_or_raise(psi, ops, True)
    if pc is None:
        return np.zeros(len(ops), dtype=complex)
    c, cc = pc
    jpsi = ops @ psi
    jt = jpsi @ SPIN_FLIP_MATRIX @ psi
    je = jpsi @ np.conj(psi)
    return c / cc * (jt - np.conj(c) * je)


def k_of_u(channel, u) -> float:
    """Decay rate of the mean concurrence for local channels and local ``u``.

    Uses traces of the stored single-qubit operators.
    """
    qubits = getattr(channel, "qubits", None)
    singles = getattr(channel, "single_qubit", None)
    if qubits is None or singles is None or any(q is None for q in qubits):
        raise NonLocalInput("k(u) requires every operator to act on a single qubit")
    u = np.asarray(u, dtype=complex)
    n = len(qubits)
    if u.shape != (n, n):
        raise ValueError(f"u has shape {u.shape}, channel has {n} operators")
    for k in range(n):
        for m in range(n):
            if qubits[k] != qubits[m] and abs(u[k, m]) > 1e-12:
                raise NonLocalInput(f"u[{k},{m}] couples operators on different qubits")
    total = 0.0
    for k in range(n):
        jk = singles[k]
        trk = np.trace(jk)
        total += 0.5 * np.real(np.trace(np.conj(jk.T) @ jk) - 0.5 * abs(trk) ** 2)
    cross = 0.0 + 0.0j
    for k in range(n):
        for m in range(n):
            if qubits[k] != qubits[m]:
                continue
            jk, jm = singles[k], singles[m]
            cross += np.conj(u[k, m]) * (np.trace(jk @ jm) - 0.5 * np.trace(jk) * np.trace(jm))
    return float(total + 0.5 * np.real(cross))


def dC_increment(psi, channel, u, dxi, dt: float) -> float:
    """Predicted concurrence change ``V dt + 2 Re(dxi^dagger F)`` over one step.

    The factor 2 on the noise term follows from the modulus rule applied to the
    preconcurrence increment, whose noise part is ``2 <psi~|f>``.
    """
    f = noise_f(psi, channel)
    if not np.any(f) and abs(preconcurrence(psi)) == 0.0:
        return 0.0
    v = drift_v(psi, channel, u)
    return float(v * dt + 2.0 * np.real(np.vdot(np.asarray(dxi, dtype=complex), f)))


def eof_drift(psi, channel, u) -> float:
    """Ito drift of the entanglement of formation along a trajectory.

    ``h'(C) V + h''(C) Re(F^T u* F + |F|^2)`` with derivatives taken with
    respect to concurrence.
    """
    cc = concurrence(psi)
    d1, d2 = eof_derivatives(cc)
    u = np.asarray(u, dtype=complex)
    v = drift_v(psi, channel, u)
    f = noise_f(psi, channel)
    quad = np.real(f @ np.conj(u) @ f + np.vdot(f, f))
    return float(d1 * v + d2 * quad)


def noise_quadratic(psi, channel, u) -> complex:
    """``F^T u* F + |F|^2``, the Ito variance coefficient of ``dC`` up to a factor."""
    f = noise_f(psi, channel)
    return complex(f @ np.conj(np.asarray(u, dtype=complex)) @ f + np.vdot(f, f))
