"""Batch integrators for the conditional-state equation.

Two interchangeable backends advance a batch of trajectories through a block
of pre-drawn standard normals:

* a numba ``@njit(nogil=True)`` kernel looping over trajectories and steps,
* a numpy fallback vectorized over the batch.

Setting ``TRAJENT_DISABLE_NUMBA=1`` selects the numpy path by default.

Each step applies the exponential map

    psi' = normalize(exp(G) psi)
    G = sum_k [-1/2 (J_k^dag J_k - 2 <J_k>* J_k) dt + dxi_k* (J_k - <J_k>)]
        - 1/2 sum_kl u*_kl (J_k - <J_k>)(J_l - <J_l>) dt

with scalar multiples of the identity dropped (they only change norm and
global phase). To first order this is the Euler-Maruyama increment; the last
term removes the Ito correction generated by the exponential's second-order
part. For local ``u`` the map factorizes into single-qubit maps, so the
concurrence changes only through local determinants.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .entanglement import EPS_C
from .unraveling import (
    FIXED,
    LOCALIZED,
    noise_f_batch,
    physicality_matrix,
    policy_matrices,
)

try:  # pragma: no cover - exercised implicitly by the chosen backend
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("TRAJENT_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"backend must be 'numba' or 'numpy', got {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not available")
    return backend


TAYLOR_RADIUS = 0.5
TAYLOR_TOL = 1e-17
TAYLOR_MAX = 40


@dataclass(frozen=True)
class Prepared:
    """Channel- and policy-derived constants shared by every step."""

    ops: np.ndarray  # (L, 4, 4)
    jdj: np.ndarray  # sum_k J_k^dag J_k
    pairs: np.ndarray  # (L, L, 4, 4) products J_k J_l
    code: int
    sign: float
    fixed_u: np.ndarray  # (L, L)
    fixed_B: np.ndarray  # (2L, 2L)
    fixed_Q: np.ndarray  # sum_kl u*_kl J_k J_l for fixed u


def prepare(ops, code: int, sign: float, fixed_u, fixed_B) -> Prepared:
    ops = np.ascontiguousarray(ops, dtype=np.complex128)
    jdj = np.einsum("kba,kbc->ac", np.conj(ops), ops)
    pairs = np.ascontiguousarray(np.einsum("kab,lbc->klac", ops, ops))
    fixed_u = np.ascontiguousarray(fixed_u, dtype=np.complex128)
    fixed_Q = np.einsum("kl,klab->ab", np.conj(fixed_u), pairs)
    return Prepared(
        ops=ops,
        jdj=np.ascontiguousarray(jdj),
        pairs=pairs,
        code=int(code),
        sign=float(sign),
        fixed_u=fixed_u,
        fixed_B=np.ascontiguousarray(fixed_B, dtype=np.float64),
        fixed_Q=np.ascontiguousarray(fixed_Q),
    )


@dataclass
class BlockBuffers:
    """Per-batch outputs filled block by block.

    ``conc`` holds concurrence at record steps (NaN after divergence),
    ``states`` the recorded states when requested, ``currents`` the per-step
    measurement currents when requested.
    """

    conc: np.ndarray
    states: np.ndarray
    fallback: np.ndarray
    eq43: np.ndarray
    currents: np.ndarray
    diverged: np.ndarray
    store_states: bool
    store_currents: bool

    @classmethod
    def allocate(cls, n: int, n_rec: int, n_ops: int, n_steps: int, store_states: bool,
                 store_currents: bool) -> "BlockBuffers":
        return cls(
            conc=np.full((n, n_rec), np.nan),
            states=np.zeros((n, n_rec if store_states else 0, 4), dtype=np.complex128),
            fallback=np.zeros(n, dtype=np.int64),
            eq43=np.zeros(n),
            currents=np.zeros((n, n_steps if store_currents else 0, n_ops), dtype=np.complex128),
            diverged=np.zeros(n, dtype=np.bool_),
            store_states=store_states,
            store_currents=store_currents,
        )


# ---------------------------------------------------------------------------
# numpy backend


def _expm_apply_numpy(G, psi):
    """``exp(G) psi`` row by row via sub-stepped Taylor series."""
    nrm = np.max(np.sum(np.abs(G), axis=-1), axis=-1)
    m = np.maximum(1, np.ceil(nrm / TAYLOR_RADIUS)).astype(np.int64)
    Gs = G / m[:, None, None]
    v = psi.copy()
    for r in range(int(m.max())):
        act = m > r
        out = v[act]
        term = out.copy()
        g = Gs[act]
        for k in range(1, TAYLOR_MAX + 1):
            term = np.einsum("nab,nb->na", g, term) / k
            out = out + term
            if np.max(np.sum(np.abs(term), axis=-1)) < TAYLOR_TOL:
                break
        v[act] = out
    return v


def step_numpy(psi, prep: Prepared, u, dxi, dt: float):
    """One exponential step for a batch with given ``u`` (n, L, L) and ``dxi`` (n, L)."""
    ops = prep.ops
    jp = np.einsum("kab,nb->nka", ops, psi)
    e = np.einsum("nka,na->nk", jp, np.conj(psi))
    w = np.einsum("nkl,nl->nk", np.conj(u), e)
    a = dt * np.conj(e) + np.conj(dxi) + dt * w
    q = np.einsum("nkl,klab->nab", np.conj(u), prep.pairs)
    G = -0.5 * dt * prep.jdj + np.einsum("nk,kab->nab", a, ops) - 0.5 * dt * q
    out = _expm_apply_numpy(G, psi)
    norm = np.linalg.norm(out, axis=-1)
    return out / norm[:, None], e


def _conc_numpy(psi):
    p = np.conj(psi)
    c = np.abs(2.0 * (p[:, 1] * p[:, 2] - p[:, 0] * p[:, 3]))
    return np.where(c <= EPS_C, 0.0, c)


def advance_numpy(psi, prep: Prepared, dt, z, step0, rec_steps, final, buf: BlockBuffers,
                  rows=None):
    """Advance ``psi`` in place through ``z.shape[1]`` steps (numpy backend)."""
    n = psi.shape[0]
    L = prep.ops.shape[0]
    m = z.shape[1]
    sq = np.sqrt(dt)
    rows = np.arange(n) if rows is None else rows
    rec_pos = {int(s): r for r, s in enumerate(rec_steps)}
    for j in range(m + 1):
        s = step0 + j
        if j == m and not final:
            break
        r = rec_pos.get(s)
        if r is not None:
            ok = ~buf.diverged[rows]
            cval = _conc_numpy(psi)
            buf.conc[rows, r] = np.where(ok, cval, np.nan)
            if buf.store_states:
                buf.states[rows, r] = psi
        if j == m:
            break
        u, fb = policy_matrices(psi, prep.ops, prep.code, prep.sign, prep.fixed_u)
        if prep.code == FIXED:
            B = prep.fixed_B
            x = sq * (z[:, j] @ B.T)
        else:
            B = physicality_matrix(u)
            x = sq * np.einsum("nij,nj->ni", B, z[:, j])
        dxi = x[:, :L] + 1j * x[:, L:]
        if prep.code == LOCALIZED:
            f = noise_f_batch(psi, prep.ops)
            idx = np.arange(L)
            res = np.abs(np.sum(np.conj(u[:, idx, idx]) * f * f + np.abs(f) ** 2, axis=-1))
            buf.eq43[rows] = np.maximum(buf.eq43[rows], res)
        live = ~buf.diverged[rows]
        buf.fallback[rows] += (fb & live).astype(np.int64)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            # non-finite rows are caught below and frozen
            new, e = step_numpy(psi, prep, u, dxi, dt)
        if buf.store_currents:
            cur = np.einsum("nk,nkl->nl", np.conj(e), u) + e + dxi / dt
            buf.currents[rows, s] = cur
        bad = ~np.all(np.isfinite(new), axis=-1)
        if np.any(bad):
            buf.diverged[rows[bad]] = True
            new[bad] = psi[bad]
        keep = buf.diverged[rows]
        psi[:] = np.where(keep[:, None], psi, new)


# ---------------------------------------------------------------------------
# numba backend

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _unit(z):
        a = abs(z)
        if a > 0.0:
            return z / a
        return 1.0 + 0.0j

    @njit(cache=True, nogil=True)
    def _policy_nb(p, e, jt, code, sign, fixed_u, u):
        """Fill ``u`` for the state ``p``; return True when falling back to -I."""
        L = u.shape[0]
        if code == FIXED:
            for k in range(L):
                for l in range(L):
                    u[k, l] = fixed_u[k, l]
            return False
        c = 2.0 * (np.conj(p[1]) * np.conj(p[2]) - np.conj(p[0]) * np.conj(p[3]))
        for k in range(L):
            for l in range(L):
                u[k, l] = 0.0
        if abs(c) <= EPS_C:
            for k in range(L):
                u[k, k] = -1.0
            return True
        ec = c / abs(c)
        if code == 1:
            ea = _unit(p[1] * p[2])
            eb = _unit(p[0] * p[3])
            d = sign * 0.5 * ec * (ea - eb)
            o = -sign * 0.5 * ec * (ea + eb)
            u[0, 0] = d
            u[1, 1] = d
            u[0, 1] = o
            u[1, 0] = o
        elif code == 2:
            o = -sign * _unit(c * p[3] * p[3])
            u[0, 1] = o
            u[1, 0] = o
        elif code == 3:
            e11 = _unit(p[3])
            e00 = _unit(p[0])
            a = -ec * e11 * e11
            b = -ec * e00 * e00
            u[0, 1] = a
            u[1, 0] = a
            u[2, 3] = b
            u[3, 2] = b
        else:
            for k in range(L):
                f = ec * (jt[k] - np.conj(c) * e[k])
                if abs(f) > 1e-15:
                    ph = f / abs(f)
                    u[k, k] = -ph * ph
                else:
                    u[k, k] = -1.0
        return False

    @njit(cache=True, nogil=True)
    def _advance_nb(psi, ops, jdj, pairs, code, sign, fixed_u, fixed_B, fixed_Q, dt, z,
                    step0, rec_steps, final, conc, states, store_states, fallback, eq43,
                    currents, store_currents, diverged):
        n = psi.shape[0]
        L = ops.shape[0]
        m = z.shape[1]
        K = rec_steps.shape[0]
        sq = np.sqrt(dt)
        p = np.empty(4, dtype=np.complex128)
        sp = np.empty(4, dtype=np.complex128)
        jp = np.empty((L, 4), dtype=np.complex128)
        e = np.empty(L, dtype=np.complex128)
        jt = np.empty(L, dtype=np.complex128)
        u = np.empty((L, L), dtype=np.complex128)
        B = np.empty((2 * L, 2 * L))
        x = np.empty(2 * L)
        dxi = np.empty(L, dtype=np.complex128)
        G = np.empty((4, 4), dtype=np.complex128)
        v = np.empty(4, dtype=np.complex128)
        term = np.empty(4, dtype=np.complex128)
        tmp = np.empty(4, dtype=np.complex128)
        for i in range(n):
            for a in range(4):
                p[a] = psi[i, a]
            r = np.searchsorted(rec_steps, step0)
            for j in range(m + 1):
                s = step0 + j
                if j == m and not final:
                    break
                while r < K and rec_steps[r] == s:
                    if diverged[i]:
                        conc[i, r] = np.nan
                    else:
                        cv = abs(2.0 * (np.conj(p[1]) * np.conj(p[2]) - np.conj(p[0]) * np.conj(p[3])))
                        conc[i, r] = 0.0 if cv <= EPS_C else cv
                    if store_states:
                        for a in range(4):
                            states[i, r, a] = p[a]
                    r += 1
                if j == m or diverged[i]:
                    continue
                # expectations <J_k> and <J~_k>
                sp[0] = -p[3]
                sp[1] = p[2]
                sp[2] = p[1]
                sp[3] = -p[0]
                for k in range(L):
                    ek = 0.0j
                    tk = 0.0j
                    for a in range(4):
                        acc = 0.0j
                        for b in range(4):
                            acc += ops[k, a, b] * p[b]
                        jp[k, a] = acc
                        ek += np.conj(p[a]) * acc
                        tk += sp[a] * acc
                    e[k] = ek
                    jt[k] = tk
                fb = _policy_nb(p, e, jt, code, sign, fixed_u, u)
                if fb:
                    fallback[i] += 1
                # noise
                if code == FIXED:
                    for a in range(2 * L):
                        for b in range(2 * L):
                            B[a, b] = fixed_B[a, b]
                else:
                    for k in range(L):
                        for l in range(L):
                            re = u[k, l].real
                            im = u[k, l].imag
                            dg = 1.0 if k == l else 0.0
                            B[k, l] = 0.5 * (dg + re)
                            B[k, L + l] = 0.5 * im
                            B[L + k, l] = 0.5 * im
                            B[L + k, L + l] = 0.5 * (dg - re)
                for a in range(2 * L):
                    acc = 0.0
                    for b in range(2 * L):
                        acc += B[a, b] * z[i, j, b]
                    x[a] = sq * acc
                for k in range(L):
                    dxi[k] = x[k] + 1j * x[L + k]
                if code == LOCALIZED:
                    c = 2.0 * (np.conj(p[1]) * np.conj(p[2]) - np.conj(p[0]) * np.conj(p[3]))
                    if abs(c) > 0.0:
                        ec = c / abs(c)
                        res = 0.0j
                        for k in range(L):
                            f = ec * (jt[k] - np.conj(c) * e[k])
                            res += np.conj(u[k, k]) * f * f + f * np.conj(f)
                        if abs(res) > eq43[i]:
                            eq43[i] = abs(res)
                if store_currents:
                    for l in range(L):
                        acc = e[l] + dxi[l] / dt
                        for k in range(L):
                            acc += np.conj(e[k]) * u[k, l]
                        currents[i, s, l] = acc
                # generator
                for a in range(4):
                    for b in range(4):
                        G[a, b] = -0.5 * dt * jdj[a, b]
                if code == FIXED:
                    for a in range(4):
                        for b in range(4):
                            G[a, b] -= 0.5 * dt * fixed_Q[a, b]
                else:
                    for k in range(L):
                        for l in range(L):
                            ukl = np.conj(u[k, l])
                            if ukl != 0.0:
                                for a in range(4):
                                    for b in range(4):
                                        G[a, b] -= 0.5 * dt * ukl * pairs[k, l, a, b]
                for k in range(L):
                    wk = 0.0j
                    for l in range(L):
                        wk += np.conj(u[k, l]) * e[l]
                    ak = dt * np.conj(e[k]) + np.conj(dxi[k]) + dt * wk
                    for a in range(4):
                        for b in range(4):
                            G[a, b] += ak * ops[k, a, b]
                # exp(G) p by sub-stepped Taylor series
                nrm = 0.0
                for a in range(4):
                    rs = 0.0
                    for b in range(4):
                        rs += abs(G[a, b])
                    if rs > nrm:
                        nrm = rs
                msub = int(np.ceil(nrm / TAYLOR_RADIUS))
                if msub < 1:
                    msub = 1
                inv = 1.0 / msub
                for a in range(4):
                    v[a] = p[a]
                for _ in range(msub):
                    for a in range(4):
                        term[a] = v[a]
                    for kk in range(1, TAYLOR_MAX + 1):
                        tn = 0.0
                        for a in range(4):
                            acc = 0.0j
                            for b in range(4):
                                acc += G[a, b] * term[b]
                            tmp[a] = acc * (inv / kk)
                        for a in range(4):
                            term[a] = tmp[a]
                            v[a] += tmp[a]
                            tn += abs(tmp[a])
                        if tn < TAYLOR_TOL:
                            break
                nn = 0.0
                for a in range(4):
                    nn += v[a].real * v[a].real + v[a].imag * v[a].imag
                nn = np.sqrt(nn)
                if not np.isfinite(nn) or nn == 0.0:
                    diverged[i] = True
                    continue
                for a in range(4):
                    p[a] = v[a] / nn
            for a in range(4):
                psi[i, a] = p[a]


def advance(psi, prep: Prepared, dt, z, step0, rec_steps, final, buf: BlockBuffers,
            backend: str):
    """Advance a batch through one block of normals with the chosen backend."""
    if backend == "numba":
        _advance_nb(
            psi, prep.ops, prep.jdj, prep.pairs, prep.code, prep.sign, prep.fixed_u,
            prep.fixed_B, prep.fixed_Q, float(dt), z, int(step0), rec_steps, bool(final),
            buf.conc, buf.states, buf.store_states, buf.fallback, buf.eq43, buf.currents,
            buf.store_currents, buf.diverged,
        )
    else:
        advance_numpy(psi, prep, dt, z, step0, rec_steps, final, buf)


BLOCK_STEPS = 2048


def run_batch(psi0, prep: Prepared, dt: float, n_steps: int, rec_steps, generators,
              store_states: bool = False, store_currents: bool = False,
              backend: str | None = None, block_steps: int = BLOCK_STEPS) -> BlockBuffers:
    """Integrate a batch of trajectories, drawing normals block by block.

    Each trajectory consumes its own generator sequentially, so the result
    does not depend on ``block_steps`` or on how trajectories are batched.
    """
    backend = resolve_backend(backend)
    psi = np.array(psi0, dtype=np.complex128, order="C")
    n = psi.shape[0]
    L = prep.ops.shape[0]
    rec_steps = np.ascontiguousarray(rec_steps, dtype=np.int64)
    buf = BlockBuffers.allocate(n, len(rec_steps), L, n_steps, store_states, store_currents)
    step0 = 0
    while True:
        mb = min(block_steps, n_steps - step0)
        z = np.empty((n, mb, 2 * L))
        for i, g in enumerate(generators):
            z[i] = g.standard_normal((mb, 2 * L))
        final = step0 + mb == n_steps
        advance(psi, prep, dt, z, step0, rec_steps, final, buf, backend)
        step0 += mb
        if final:
            break
    return buf

