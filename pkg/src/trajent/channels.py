"""Lindblad channels as ordered operator lists with qubit-locality tags.

Operator order is part of the public contract because correlation matrices
index into it:

* ``dephasing``: ``sqrt(g) P0 (x) I, I (x) sqrt(g) P0`` with ``P0 = |0><0|``
* ``thermal``: ``sqrt(g-) s- (x) I, I (x) sqrt(g-) s-, sqrt(g+) s+ (x) I, I (x) sqrt(g+) s+``
* ``infinite_temperature`` (raising_lowering): thermal order with ``g- = g+ = Gamma``
* ``infinite_temperature`` (hermitian_xy): ``sqrt(G) sx, sqrt(G) sy`` per qubit
* ``depolarizing``: ``sqrt(g) sx, sqrt(g) sy, sqrt(g) sz`` per qubit
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg2q import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    embed,
)

_P0 = SIGMA_MINUS @ SIGMA_PLUS

REPRESENTATIONS = ("raising_lowering", "hermitian_xy")


@dataclass(frozen=True, eq=False)
class LindbladChannel:
    """Ordered Lindblad operators with per-operator locality metadata.

    Attributes
    ----------
    operators : ndarray, shape (L, 4, 4)
        Full two-qubit operators, rates folded in as ``sqrt(rate)`` prefactors.
    qubits : tuple
        Qubit index (1 or 2) for local operators, ``None`` for nonlocal ones.
    single_qubit : tuple
        The 2x2 operator behind each local entry, ``None`` otherwise.
    kind : str
        Constructor family, used to match adaptive policies.
    rate : float
        Characteristic rate of the family (``gamma`` or ``Gamma``).
    params : dict
        Constructor arguments kept for reporting.
    """

    operators: np.ndarray
    qubits: tuple
    single_qubit: tuple
    kind: str = "custom"
    rate: float = 1.0
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ops = np.array(self.operators, dtype=complex)
        if ops.ndim != 3 or ops.shape[1:] != (4, 4) or ops.shape[0] < 1:
            raise ValueError(f"operators must have shape (L, 4, 4) with L >= 1, got {ops.shape}")
        if not np.all(np.isfinite(ops)):
            raise ValueError("operators must be finite")
        if len(self.qubits) != len(ops) or len(self.single_qubit) != len(ops):
            raise ValueError("qubits and single_qubit must have one entry per operator")
        singles = []
        for k, (q, s) in enumerate(zip(self.qubits, self.single_qubit)):
            if q is None:
                singles.append(None)
                continue
            s = np.array(s, dtype=complex)
            if not np.array_equal(embed(s, q), ops[k]):
                raise ValueError(f"operator {k} does not equal the embedding of its single-qubit form")
            s.setflags(write=False)
            singles.append(s)
        ops.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "single_qubit", tuple(singles))
        object.__setattr__(self, "qubits", tuple(self.qubits))

    @property
    def n_ops(self) -> int:
        return self.operators.shape[0]

    @property
    def is_local(self) -> bool:
        return all(q is not None for q in self.qubits)

    @property
    def hermitian_flags(self) -> tuple[bool, ...]:
        return tuple(
            bool(np.allclose(j, np.conj(j.T), atol=1e-14, rtol=0.0)) for j in self.operators
        )

    @property
    def is_hermitian(self) -> bool:
        return all(self.hermitian_flags)

    @property
    def max_rate(self) -> float:
        """Largest ``||J_k||^2`` (spectral norm), the fastest time scale."""
        return float(max(np.linalg.norm(j, 2) ** 2 for j in self.operators))

    def occupied_qubits(self) -> set[int]:
        return {q for q in self.qubits if q is not None}


def _local(kind, rate, parts, params) -> LindbladChannel:
    ops = [embed(s, q) for s, q in parts]
    return LindbladChannel(
        operators=np.array(ops),
        qubits=tuple(q for _, q in parts),
        single_qubit=tuple(s for s, _ in parts),
        kind=kind,
        rate=rate,
        params=params,
    )


def _check_rate(name: str, value: float, allow_zero: bool = False) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = "nonnegative" if allow_zero else "positive"
        raise ValueError(f"{name} must be {bound} and finite, got {value!r}")
    return value


def _check_qubits(qubits) -> tuple[int, ...]:
    qubits = tuple(int(q) for q in qubits)
    if not qubits or any(q not in (1, 2) for q in qubits) or len(set(qubits)) != len(qubits):
        raise ValueError(f"qubits must be a nonempty subset of (1, 2), got {qubits!r}")
    return qubits


def from_operators(operators, kind: str = "custom") -> LindbladChannel:
    """Wrap arbitrary 4x4 operators; locality is not inferred."""
    ops = np.asarray(operators, dtype=complex)
    if ops.ndim == 2:
        ops = ops[None]
    return LindbladChannel(ops, (None,) * len(ops), (None,) * len(ops), kind=kind)


def dephasing(gamma: float, qubits=(1, 2)) -> LindbladChannel:
    """Pure dephasing ``sqrt(gamma) |0><0|`` on each listed qubit."""
    gamma = _check_rate("gamma", gamma)
    qs = _check_qubits(qubits)
    parts = [(np.sqrt(gamma) * _P0, q) for q in qs]
    return _local("dephasing", gamma, parts, {"gamma": gamma, "qubits": qs})


def amplitude_damping(gamma: float, qubits=(1, 2)) -> LindbladChannel:
    gamma = _check_rate("gamma", gamma)
    qs = _check_qubits(qubits)
    parts = [(np.sqrt(gamma) * SIGMA_MINUS, q) for q in qs]
    return _local("amplitude_damping", gamma, parts, {"gamma": gamma, "qubits": qs})


def thermal(gamma: float, nbar: float) -> LindbladChannel:
    """Thermal bath on both qubits with emission ``g(n+1)`` and absorption ``g n``.

    For ``nbar == 0`` the absorption operators vanish and the two-operator
    amplitude-damping channel is returned.
    """
    gamma = _check_rate("gamma", gamma)
    nbar = _check_rate("nbar", nbar, allow_zero=True)
    if nbar == 0.0:
        return amplitude_damping(gamma)
    g_em = gamma * (nbar + 1.0)
    g_ab = gamma * nbar
    parts = [
        (np.sqrt(g_em) * SIGMA_MINUS, 1),
        (np.sqrt(g_em) * SIGMA_MINUS, 2),
        (np.sqrt(g_ab) * SIGMA_PLUS, 1),
        (np.sqrt(g_ab) * SIGMA_PLUS, 2),
    ]
    params = {"gamma": gamma, "nbar": nbar, "gamma_em": g_em, "gamma_ab": g_ab}
    return _local("thermal", gamma, parts, params)


def infinite_temperature(
    rate: float, representation: str = "raising_lowering", qubits=(1, 2)
) -> LindbladChannel:
    """Infinite-temperature bath with equal excitation and decay rate.

    ``raising_lowering`` uses ``sqrt(rate) s-/s+`` in thermal order.
    ``hermitian_xy`` uses ``sqrt(rate) sx, sqrt(rate) sy`` per qubit, which
    generates the same master equation as ``raising_lowering`` at twice the rate.
    """
    rate = _check_rate("rate", rate)
    qs = _check_qubits(qubits)
    r = np.sqrt(rate)
    if representation == "raising_lowering":
        parts = [(r * SIGMA_MINUS, q) for q in qs] + [(r * SIGMA_PLUS, q) for q in qs]
    elif representation == "hermitian_xy":
        parts = [(r * op, q) for q in qs for op in (SIGMA_X, SIGMA_Y)]
    else:
        raise ValueError(f"representation must be one of {REPRESENTATIONS}, got {representation!r}")
    params = {"rate": rate, "representation": representation, "qubits": qs}
    return _local("infinite_temperature", rate, parts, params)


def depolarizing(gamma: float, qubits=(1, 2)) -> LindbladChannel:
    gamma = _check_rate("gamma", gamma)
    qs = _check_qubits(qubits)
    parts = [(np.sqrt(gamma) * op, q) for q in qs for op in (SIGMA_X, SIGMA_Y, SIGMA_Z)]
    return _local("depolarizing", gamma, parts, {"gamma": gamma, "qubits": qs})


def compose(*channels: LindbladChannel) -> LindbladChannel:
    """Concatenate local channels acting on disjoint qubits, preserving order."""
    if not channels:
        raise ValueError("compose needs at least one channel")
    seen: set[int] = set()
    for ch in channels:
        if not ch.is_local:
            raise ValueError("compose accepts local channels only")
        occ = ch.occupied_qubits()
        if occ & seen:
            raise ValueError(f"channels overlap on qubit(s) {sorted(occ & seen)}")
        seen |= occ
    if len(channels) == 1:
        return channels[0]
    return LindbladChannel(
        operators=np.concatenate([ch.operators for ch in channels]),
        qubits=sum((ch.qubits for ch in channels), ()),
        single_qubit=sum((ch.single_qubit for ch in channels), ()),
        kind="composite",
        rate=max(ch.rate for ch in channels),
        params={"parts": [ch.kind for ch in channels]},
    )


def operator_blocks(channel: LindbladChannel) -> dict:
    """Indices of the operators acting on each qubit (``None`` for nonlocal)."""
    blocks: dict = {}
    for k, q in enumerate(channel.qubits):
        blocks.setdefault(q, []).append(k)
    return blocks
