"""Diffusive unravelings: correlation matrices, noise sampling and policies.

An unraveling is fixed by a complex symmetric ``L x L`` matrix ``u`` with
``E[dxi dxi^dagger] = I dt`` and ``E[dxi dxi^T] = u dt``. The real covariance
of ``(Re dxi, Im dxi)`` is ``R dt`` with

    R = 1/2 [[I + Re u, Im u], [Im u, I - Re u]]

and ``u`` is realizable iff ``R`` is positive semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entanglement import EPS_C
from .exceptions import (
    ChannelMismatch,
    DegenerateConcurrence,
    EligibilityError,
    NonLocalInput,
    UnphysicalUnraveling,
)
from .linalg2q import SPIN_FLIP_MATRIX

PHYS_TOL = 1e-10
SYM_TOL = 1e-12
UNITARY_TOL = 1e-8
F_ZERO = 1e-15

# integer codes shared with the compiled kernels
FIXED, DEPHASING_OPT, ZEROT_OPT, INFT_PLUS, LOCALIZED = range(5)

KINDS = ("fixed", "protection", "dephasing_opt", "zeroT_opt", "infT_opt_plus", "localized")


# ---------------------------------------------------------------------------
# correlation matrices


def physicality_matrix(u) -> np.ndarray:
    """The ``2L x 2L`` real covariance (per unit time) of the noise quadratures."""
    u = np.asarray(u, dtype=complex)
    n = u.shape[-1]
    eye = np.eye(n)
    top = np.concatenate([eye + u.real, u.imag], axis=-1)
    bot = np.concatenate([u.imag, eye - u.real], axis=-1)
    return 0.5 * np.concatenate([top, bot], axis=-2)


def is_symmetric(u, tol: float = SYM_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    return bool(np.max(np.abs(u - np.swapaxes(u, -1, -2)), initial=0.0) <= tol)


def physicality_check(u, tol: float = PHYS_TOL) -> bool:
    """True iff ``u`` is symmetric and ``R`` has no eigenvalue below ``-tol``."""
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or not np.all(np.isfinite(u)):
        return False
    if not is_symmetric(u):
        return False
    return bool(np.linalg.eigvalsh(physicality_matrix(u)).min() >= -tol)


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    return bool(np.max(np.abs(u @ np.conj(u.T) - np.eye(u.shape[0]))) < tol)


def noise_factor(u) -> np.ndarray:
    """Symmetric square root ``B`` of ``R`` so that ``B z`` has covariance ``R``.

    For symmetric unitary ``u`` the matrix ``R`` is an orthogonal projector and
    ``B = R``; otherwise an eigendecomposition with clamped eigenvalues is used.
    """
    u = np.asarray(u, dtype=complex)
    R = physicality_matrix(u)
    if is_unitary(u):
        return R
    w, v = np.linalg.eigh(R)
    if w.min() < -PHYS_TOL:
        raise UnphysicalUnraveling(f"R has eigenvalue {w.min():.3e}; u is not physical")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def noise_from_normals(B, z, dt: float) -> np.ndarray:
    """Map standard normals ``z`` (..., 2L) to complex increments ``dxi`` (..., L)."""
    x = np.sqrt(dt) * (np.asarray(z) @ np.asarray(B).T)
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def sample_noise(u, dt: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw correlated complex Wiener increments for correlation matrix ``u``.

    Parameters
    ----------
    u : array_like, shape (L, L)
        Symmetric correlation matrix.
    dt : float
        Time step; increments have variance proportional to ``dt``.
    rng : numpy.random.Generator
    size : int, optional
        Number of independent draws. ``None`` returns a single ``(L,)`` vector.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    u = np.asarray(u, dtype=complex)
    if not is_symmetric(u):
        raise UnphysicalUnraveling("u must be symmetric")
    B = noise_factor(u)
    shape = (2 * u.shape[0],) if size is None else (int(size), 2 * u.shape[0])
    return noise_from_normals(B, rng.standard_normal(shape), dt)


def measurement_current(psi, channel, u, dxi, dt: float) -> np.ndarray:
    """Complex current ``Y_l = sum_k <J_k>* u_kl + <J_l> + dxi_l / dt``."""
    ops = np.asarray(getattr(channel, "operators", channel), dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    e = (ops @ psi) @ np.conj(psi)
    return np.conj(e) @ np.asarray(u, dtype=complex) + e + np.asarray(dxi) / dt


# ---------------------------------------------------------------------------
# state-dependent correlation matrices (batched, numpy)


def _preconc(psi):
    p = np.conj(psi)
    return 2.0 * (p[..., 1] * p[..., 2] - p[..., 0] * p[..., 3])


def _unit_phase(z):
    """``z/|z|`` with the convention ``1`` at ``z = 0``."""
    a = np.abs(z)
    safe = np.where(a > 0, a, 1.0)
    return np.where(a > 0, z / safe, 1.0 + 0.0j)


def noise_f_batch(psi, ops, c=None):
    """``F`` for a batch of states (n, 4); rows with ``C = 0`` give zeros."""
    if c is None:
        c = _preconc(psi)
    jpsi = np.einsum("kab,nb->nka", ops, psi)
    jt = np.einsum("nka,ab,nb->nk", jpsi, SPIN_FLIP_MATRIX, psi)
    je = np.einsum("nka,na->nk", jpsi, np.conj(psi))
    ph = _unit_phase(c)
    return ph[:, None] * (jt - np.conj(c)[:, None] * je)


def policy_matrices(psi, ops, code: int, sign: float, fixed_u):
    """Correlation matrices for a batch of states.

    Returns
    -------
    u : ndarray, shape (n, L, L)
    fallback : ndarray of bool, shape (n,)
        Rows where concurrence was below ``EPS_C`` and ``-I`` was substituted.
    """
    psi = np.asarray(psi, dtype=complex)
    n = psi.shape[0]
    L = ops.shape[0]
    if code == FIXED:
        return np.broadcast_to(fixed_u, (n, L, L)).copy(), np.zeros(n, dtype=bool)
    c = _preconc(psi)
    fallback = np.abs(c) <= EPS_C
    ec = _unit_phase(c)
    u = np.zeros((n, L, L), dtype=complex)
    if code == DEPHASING_OPT:
        ea = _unit_phase(psi[:, 1] * psi[:, 2])
        eb = _unit_phase(psi[:, 0] * psi[:, 3])
        diag = sign * 0.5 * ec * (ea - eb)
        off = -sign * 0.5 * ec * (ea + eb)
        u[:, 0, 0] = u[:, 1, 1] = diag
        u[:, 0, 1] = u[:, 1, 0] = off
    elif code == ZEROT_OPT:
        off = -sign * _unit_phase(c * psi[:, 3] ** 2)
        u[:, 0, 1] = u[:, 1, 0] = off
    elif code == INFT_PLUS:
        a = -ec * _unit_phase(psi[:, 3]) ** 2
        b = -ec * _unit_phase(psi[:, 0]) ** 2
        u[:, 0, 1] = u[:, 1, 0] = a
        u[:, 2, 3] = u[:, 3, 2] = b
    elif code == LOCALIZED:
        f = noise_f_batch(psi, ops, c)
        big = np.abs(f) > F_ZERO
        d = np.where(big, -_unit_phase(f) ** 2, -1.0 + 0.0j)
        idx = np.arange(L)
        u[:, idx, idx] = d
    else:
        raise ValueError(f"unknown policy code {code}")
    if np.any(fallback):
        u[fallback] = -np.eye(L)
    return u, fallback


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True, eq=False)
class Policy:
    """A fixed or state-adaptive unraveling.

    Attributes
    ----------
    kind : str
        One of ``KINDS``.
    sign : int
        Branch selector (+1 or -1) for the two-branch adaptive families.
    u : ndarray or None
        The matrix for ``fixed`` policies.
    """

    kind: str
    sign: int = 1
    u: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")
        if self.kind == "fixed":
            if self.u is None:
                raise ValueError("fixed policy needs a matrix u")
            u = np.array(self.u, dtype=complex)
            if u.ndim != 2 or u.shape[0] != u.shape[1]:
                raise ValueError(f"u must be square, got shape {u.shape}")
            if not is_symmetric(u):
                raise UnphysicalUnraveling("u must be symmetric")
            if not physicality_check(u):
                raise UnphysicalUnraveling("R = 1/2[[I+Re u, Im u],[Im u, I-Re u]] is not PSD")
            u.setflags(write=False)
            object.__setattr__(self, "u", u)

    @property
    def code(self) -> int:
        return {
            "fixed": FIXED,
            "protection": FIXED,
            "dephasing_opt": DEPHASING_OPT,
            "zeroT_opt": ZEROT_OPT,
            "infT_opt_plus": INFT_PLUS,
            "localized": LOCALIZED,
        }[self.kind]

    @property
    def is_adaptive(self) -> bool:
        return self.code != FIXED

    def fixed_matrix(self, channel) -> np.ndarray:
        """The constant matrix for fixed policies (``-I`` for protection)."""
        L = channel.n_ops
        if self.kind == "protection":
            return -np.eye(L, dtype=complex)
        if self.kind == "fixed":
            return np.array(self.u)
        # fallback matrix used by the kernels at vanishing concurrence
        return -np.eye(L, dtype=complex)

    def validate(self, channel) -> None:
        """Check that this policy can drive ``channel``; raise otherwise."""
        L = channel.n_ops
        if self.kind == "protection":
            if not channel.is_local:
                raise EligibilityError("protection needs every Lindblad operator to be local")
            if not channel.is_hermitian:
                bad = [k for k, h in enumerate(channel.hermitian_flags) if not h]
                raise EligibilityError(
                    f"protection needs Hermitian Lindblad operators; operators {bad} are not"
                )
        elif self.kind == "fixed":
            if self.u.shape != (L, L):
                raise ValueError(f"u has shape {self.u.shape}, channel has {L} operators")
        elif self.kind == "dephasing_opt":
            if channel.kind != "dephasing" or L != 2:
                raise ChannelMismatch("dephasing_opt needs the two-qubit dephasing channel")
        elif self.kind == "zeroT_opt":
            if channel.kind != "amplitude_damping" or L != 2:
                raise ChannelMismatch("zeroT_opt needs two-qubit amplitude damping")
        elif self.kind == "infT_opt_plus":
            rep = channel.params.get("representation")
            if channel.kind != "infinite_temperature" or rep != "raising_lowering" or L != 4:
                raise ChannelMismatch(
                    "infT_opt_plus needs the two-qubit infinite-temperature channel "
                    "in raising_lowering form"
                )
        elif self.kind == "localized":
            if not channel.is_local:
                raise NonLocalInput("localized policy needs local Lindblad operators")

    def evaluate_flagged(self, psi, channel) -> tuple[np.ndarray, bool]:
        """Correlation matrix at ``psi`` and whether the fallback was used."""
        psi = np.asarray(psi, dtype=complex)
        u, fb = policy_matrices(
            psi[None], channel.operators, self.code, float(self.sign), self.fixed_matrix(channel)
        )
        return u[0], bool(fb[0])

    def evaluate(self, psi, channel, strict: bool = False) -> np.ndarray:
        """Correlation matrix at ``psi``.

        With ``strict=True`` an adaptive policy raises ``DegenerateConcurrence``
        instead of falling back to ``-I`` at vanishing concurrence.
        """
        u, fb = self.evaluate_flagged(psi, channel)
        if fb and strict:
            raise DegenerateConcurrence("adaptive phase undefined at vanishing concurrence")
        return u


def protection_policy() -> Policy:
    return Policy("protection")


def fixed_policy(u) -> Policy:
    return Policy("fixed", u=u)


def dephasing_opt_policy(sign: int = 1) -> Policy:
    return Policy("dephasing_opt", sign=sign)


def zeroT_opt_policy(sign: int = 1) -> Policy:
    return Policy("zeroT_opt", sign=sign)


def infT_opt_plus_policy() -> Policy:
    return Policy("infT_opt_plus")


def localized_policy() -> Policy:
    return Policy("localized")
