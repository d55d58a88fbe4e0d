"""Fast built-in invariant checks, one printed line per check."""

from __future__ import annotations

import time
import traceback

import numpy as np

from . import _kernels, channels, oracle, presets
from .ensemble import (
    EnsembleConfig,
    bound_performance_study,
    haar_random_state,
    run_ensemble,
)
from .entanglement import (
    concurrence,
    drift_v,
    k_of_u,
    noise_f,
    preconcurrence,
    w_function,
    wootters_concurrence,
    x_function,
)
from .linalg2q import projector, spin_flip, tilde_expectation
from .trajectory import prepare, trajectory_generator
from .unraveling import (
    dephasing_opt_policy,
    fixed_policy,
    physicality_check,
    protection_policy,
    sample_noise,
    zeroT_opt_policy,
)


def _spin_flip(rng, n):
    psi = haar_random_state(rng, n)
    back = np.array([spin_flip(spin_flip(p)) for p in psi])
    ident = max(abs(tilde_expectation(np.eye(4), p) - np.conj(preconcurrence(p))) for p in psi)
    return max(np.max(np.abs(back - psi)), ident) < 1e-12


def _wootters_pure(rng, n):
    psi = haar_random_state(rng, n)
    return np.max(np.abs(wootters_concurrence(projector(psi)) - concurrence(psi))) < 1e-9


def _local_factorization(rng, n):
    ch = channels.thermal(1.0, 0.7)
    u = np.zeros((4, 4), complex)
    u[0, 0], u[2, 2], u[0, 2], u[2, 0] = 0.3, -0.2j, 0.1, 0.1
    k = k_of_u(ch, u)
    worst = 0.0
    for p in haar_random_state(rng, n):
        worst = max(worst, abs(drift_v(p, ch, u) + k * concurrence(p)))
        ops = ch.operators
        e = (ops @ p) @ np.conj(p)
        tr = np.array([np.trace(s) for s in ch.single_qubit])
        worst = max(worst, np.max(np.abs(noise_f(p, ch) - concurrence(p) * (0.5 * tr - e))))
    return worst < 1e-12


def _protection(rng, n):
    ch = presets.dephasing_and_hot_bath()
    prep = prepare(ch, protection_policy())
    psi0 = presets.uneven_state()
    rec = np.arange(0, 1001, 50)
    buf = _kernels.run_batch(np.tile(psi0, (n, 1)), prep, 1e-3, 1000, rec,
                             [trajectory_generator(1, i) for i in range(n)])
    return np.max(np.abs(buf.conc - concurrence(psi0))) < 1e-9


def _noise_moments(rng, n):
    ok = True
    for u in (np.zeros((2, 2)), np.eye(2), -np.eye(2), np.array([[0.5, -0.5j], [-0.5j, 0.5]])):
        d = sample_noise(u, 1.0, rng, size=n)
        m1 = d.T @ np.conj(d) / n
        m2 = d.T @ d / n
        ok &= np.max(np.abs(m1 - np.eye(2))) < 5 / np.sqrt(n)
        ok &= np.max(np.abs(m2 - u)) < 5 / np.sqrt(n)
    return bool(ok)


def _exact_vs_master(rng, n):
    psi = haar_random_state(rng, n)
    times = [0.3, 1.0]
    c0, x0, w0, p11 = concurrence(psi), x_function(psi), w_function(psi), np.abs(psi[:, 3]) ** 2
    wc, _ = oracle.master_measures(psi, channels.dephasing(1.0), times)
    ex, _ = oracle.exact_dephasing_measures(c0, x0, w0, np.array(times)[:, None])
    wz, _ = oracle.master_measures(psi, channels.amplitude_damping(1.0), times)
    ez, _ = oracle.exact_zeroT_measures(c0, p11, np.array(times)[:, None])
    return max(np.max(np.abs(wc - ex)), np.max(np.abs(wz - ez))) < 1e-6


def _bound_ordering(rng, n):
    up = bound_performance_study("dephasing", 1, [0.25, 1.0], n, seed=3)
    lo = bound_performance_study("dephasing", -1, [0.25, 1.0], n, seed=3)
    zt = bound_performance_study("zeroT", 1, [0.25, 1.0], n, seed=3)
    return (up.violations.sum() == 0 and lo.violations.sum() == 0
            and up.equality_gap < 1e-12 and zt.identity_gap < 1e-12)


def _policy_physical(rng, n):
    psi = haar_random_state(rng, n)
    deph, amp = channels.dephasing(1.0), channels.amplitude_damping(1.0)
    for p in psi:
        for pol, ch in ((dephasing_opt_policy(1), deph), (dephasing_opt_policy(-1), deph),
                        (zeroT_opt_policy(1), amp), (zeroT_opt_policy(-1), amp)):
            if not physicality_check(pol.evaluate(p, ch)):
                return False
    return True


def _backends_agree(rng, n):
    if not _kernels.HAVE_NUMBA:
        return True
    ch = channels.dephasing(1.0)
    prep = prepare(ch, dephasing_opt_policy(1))
    psi0 = np.tile(presets.uneven_state(), (n, 1))
    rec = np.array([0, 100, 200])
    out = [
        _kernels.run_batch(psi0, prep, 1e-3, 200, rec, [trajectory_generator(2, i) for i in range(n)],
                           backend=b).conc
        for b in ("numba", "numpy")
    ]
    return np.max(np.abs(out[0] - out[1])) < 1e-10


def _workers_deterministic(rng, n):
    res = []
    for w in (1, 4):
        cfg = EnsembleConfig(channels.dephasing(1.0), fixed_policy(np.eye(2)),
                             presets.uneven_state()[None], n, (0.1, 0.2), seed=5, workers=w)
        res.append(run_ensemble(cfg))
    return (np.array_equal(res[0].concurrences, res[1].concurrences)
            and np.array_equal(res[0].rho, res[1].rho))


CHECKS = [
    ("spin flip involution and tilde identity", _spin_flip, 200, 50),
    ("Wootters concurrence of pure states", _wootters_pure, 500, 100),
    ("local drift and noise factorization", _local_factorization, 200, 50),
    ("protection keeps concurrence on every trajectory", _protection, 50, 10),
    ("noise second moments", _noise_moments, 200_000, 50_000),
    ("closed forms against master equation", _exact_vs_master, 20, 5),
    ("analytic bound ordering and identities", _bound_ordering, 10_000, 1000),
    ("adaptive policies emit physical matrices", _policy_physical, 1000, 200),
    ("numba and numpy backends agree", _backends_agree, 8, 4),
    ("ensemble independent of worker count", _workers_deterministic, 200, 100),
]


def run_selftest(quick: bool = False, seed: int = 2024) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    start = time.perf_counter()
    for name, func, n_full, n_quick in CHECKS:
        t0 = time.perf_counter()
        try:
            ok = bool(func(rng, n_quick if quick else n_full))
            detail = ""
        except Exception as exc:  # noqa: BLE001 - report and keep going
            ok = False
            detail = f" ({type(exc).__name__}: {exc})"
            traceback.print_exc()
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}  [{time.perf_counter() - t0:.1f}s]{detail}")
    print(f"{'all checks passed' if all_ok else 'some checks FAILED'} in {time.perf_counter() - start:.1f}s")
    return all_ok
