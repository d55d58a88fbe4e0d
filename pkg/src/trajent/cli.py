"""Command-line entry point.

Subcommands read a flat ``key = value`` scenario file and write CSV to
``output.path`` (or stdout). Exit codes: 0 success, 1 runtime failure,
2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .entanglement import concurrence, k_of_u, w_function, wootters_concurrence, x_function
from .oracle import BoundCurve, evolve_to, exact_dephasing_measures, exact_zeroT_measures
from .linalg2q import projector

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

SIMULATE_HEADER = ["t", "mean_C", "se_C", "var_C", "mean_EoF", "oracle_C", "oracle_CA",
                   "bound_value", "trace_dist"]
BOUNDS_HEADER = ["t", "label", "value"]
STUDY_HEADER = ["t", "C0", "exact", "bound", "ratio"]
ORACLE_HEADER = ["t", "wootters_C", "appC_C", "appC_CA"]


def fmt(x) -> str:
    """Round-trip representation of a float (``repr``), strings passed through."""
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(header, rows, path: str | None) -> None:
    """Write all rows at once; files are written to a temp name then renamed."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# scenario assembly (validation errors surface as ConfigError)


class Scenario:
    def __init__(self, raw: cfgmod.RawConfig, need_policy: bool):
        self.raw = raw
        self.seed = cfgmod.get_int(raw, "seed", 0, minimum=0)
        self.channel = cfgmod.build_channel(raw)
        self.policy = cfgmod.build_policy(raw, self.channel) if need_policy else None
        if not need_policy and raw.has("policy.kind"):
            # still validated so that typos are reported
            self.policy = cfgmod.build_policy(raw, self.channel)
        self.sign = cfgmod.get_sign(raw)
        self.dt, self.t_final, self.checkpoints = cfgmod.sim_times(raw)
        self.n_traj = cfgmod.get_int(raw, "ensemble.n_traj", 1000, minimum=1)
        self.record_states = cfgmod.get_bool(raw, "output.record_states", True)
        self.output = raw.raw("output.path")
        self.initial_kind = cfgmod.get_choice(raw, "initial.kind", ("fixed", "haar"), "fixed")

    def initial_states(self) -> np.ndarray:
        return cfgmod.build_initial_states(self.raw, self.seed)


def _bound_curves(sc: Scenario, psi0) -> list[BoundCurve]:
    """Analytic curves that apply to the scenario's channel and initial state."""
    ch = sc.channel
    p = {
        "c0": concurrence(psi0),
        "x0": max(concurrence(psi0), x_function(psi0)),
        "w0": w_function(psi0),
        "p11": abs(psi0[3]) ** 2,
        "rate": ch.rate,
    }
    curves = []
    k = None
    if sc.policy is not None and sc.policy.kind in ("fixed", "protection") and ch.is_local:
        try:
            k = k_of_u(ch, sc.policy.fixed_matrix(ch))
        except ValueError:
            k = None
    kind = ch.kind
    if kind == "dephasing":
        k = ch.rate if k is None else k
        labels = ["dephasing_plus", "dephasing_minus", "appC_dephasing_C", "appC_dephasing_CA"]
    elif kind == "amplitude_damping":
        k = ch.rate if k is None else k
        labels = ["zeroT_plus", "zeroT_minus", "appC_zeroT_C", "appC_zeroT_CA"]
    elif kind == "infinite_temperature" and ch.params.get("representation") == "raising_lowering":
        k = 4.0 * ch.rate if k is None else k
        labels = ["infT_bell_plus"]
    else:
        labels = []
    if k is not None:
        curves.append(BoundCurve("exp_local", {**p, "k": k}))
    curves.extend(BoundCurve(lab, p) for lab in labels)
    return curves


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(sc: Scenario, out: str | None) -> None:
    from .ensemble import EnsembleConfig, run_ensemble

    ens = EnsembleConfig(
        channel=sc.channel,
        policy=sc.policy,
        initial_states=sc.initial_states(),
        n_traj=sc.n_traj,
        checkpoints=sc.checkpoints,
        dt=sc.dt,
        seed=sc.seed,
        record_states=sc.record_states,
    )
    stats = run_ensemble(ens)
    rows = zip(stats.times, stats.mean_C, stats.se_C, stats.var_C, stats.mean_EoF,
               stats.oracle_C, stats.oracle_CA, stats.bound, stats.trace_dist)
    write_csv(SIMULATE_HEADER, rows, out)


def cmd_bounds(sc: Scenario, out: str | None) -> None:
    psi0 = sc.initial_states()[0]
    times = np.asarray(sc.checkpoints)
    rows = []
    for curve in _bound_curves(sc, psi0):
        for t, v in zip(times, np.broadcast_to(curve(times), times.shape)):
            rows.append((t, curve.label, v))
    write_csv(BOUNDS_HEADER, rows, out)


def cmd_study(sc: Scenario, out: str | None) -> None:
    from .ensemble import bound_performance_study

    kinds = {"dephasing": "dephasing", "amplitude_damping": "zeroT"}
    if sc.channel.kind not in kinds:
        raise cfgmod.ConfigError("study supports dephasing and amplitude_damping", "channel.kind",
                                 sc.raw.lines.get("channel.kind"))
    n_states = cfgmod.get_int(sc.raw, "ensemble.n_states", 1000, minimum=1)
    res = bound_performance_study(kinds[sc.channel.kind], sc.sign, sc.checkpoints, n_states,
                                  seed=sc.seed, rate=sc.channel.rate)
    rows = []
    for k, t in enumerate(res.times):
        for c0, ex, b, r in zip(res.c0, res.exact[k], res.bound[k], res.ratio[k]):
            rows.append((t, c0, ex, b, r))
    write_csv(STUDY_HEADER, rows, out)
    bad = int(res.violations.sum())
    if bad:
        raise RuntimeError(f"{bad} bound violations beyond tolerance")


def cmd_oracle(sc: Scenario, out: str | None) -> None:
    psi0 = sc.initial_states()[0]
    times = np.asarray(sc.checkpoints)
    rhos = evolve_to(projector(psi0), sc.channel, times, 1e-3 / sc.channel.max_rate)
    wc = np.atleast_1d(wootters_concurrence(rhos))
    c0, x0, w0 = concurrence(psi0), x_function(psi0), w_function(psi0)
    if sc.channel.kind == "dephasing":
        ac, aca = exact_dephasing_measures(c0, x0, w0, times, sc.channel.rate)
    elif sc.channel.kind == "amplitude_damping":
        ac, aca = exact_zeroT_measures(c0, abs(psi0[3]) ** 2, times, sc.channel.rate)
    else:
        ac = aca = np.full(times.shape, np.nan)
    write_csv(ORACLE_HEADER, zip(times, wc, ac, aca), out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajent",
        description="Diffusive quantum trajectories for two-qubit entanglement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "ensemble statistics over time"),
        ("bounds", "analytic bound curves"),
        ("study", "exact measure vs bound for random initial states"),
        ("oracle", "master-equation concurrence against closed forms"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="key = value scenario file")
        p.add_argument("-o", "--output", help="CSV path (overrides output.path; '-' for stdout)")
    st = sub.add_parser("selftest", help="run the built-in invariant checks")
    st.add_argument("--quick", action="store_true", help="smaller sample sizes")
    return parser


COMMANDS = {
    "simulate": (cmd_simulate, True),
    "bounds": (cmd_bounds, False),
    "study": (cmd_study, False),
    "oracle": (cmd_oracle, False),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "selftest":
        from .selftest import run_selftest

        return EXIT_OK if run_selftest(quick=args.quick) else EXIT_RUNTIME
    func, need_policy = COMMANDS[args.command]
    try:
        raw = cfgmod.load(args.config)
        sc = Scenario(raw, need_policy)
        out = args.output if args.output is not None else sc.output
    except cfgmod.ConfigError as exc:
        print(f"trajent: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        func(sc, out)
    except cfgmod.ConfigError as exc:
        print(f"trajent: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"trajent: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
