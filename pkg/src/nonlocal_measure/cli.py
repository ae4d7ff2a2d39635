"""Command line front end.

Exit codes: 0 success, 2 usage error, 3 invalid variable or input,
4 more than half of the runs exhausted ``--max-rounds``.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, analysis, plotting
from .protocols import run_product_basis_protocol, run_three_party, run_universal_two_party
from .qsim import PAULI_X, SimulationError, Site
from .records import ProtocolConfig
from .report import Report
from .variables import BUILTINS, NonlocalVariable, VariableFormatError, builtin, computational_variable, eq1_variable, load

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_EXHAUSTED = 4

SUBCOMMANDS = ("demo-eq1", "universal", "three-party", "signaling-demo", "termination-stats", "resources")


@dataclass(frozen=True)
class RunSpec:
    subcommand: str
    variable: str | None = None
    K: int = 1
    max_rounds: int = 50
    trials: int = 1000
    seed: int = 0
    output: str | None = None
    fmt: str = "table"
    state: str = "random"
    figures: bool = True


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonlocal-measure",
        description="Simulate instantaneous verification measurements of nonlocal variables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, trials, max_rounds=50):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=_positive, default=trials)
        p.add_argument("--max-rounds", type=_positive, default=max_rounds)
        p.add_argument("--K", type=_positive, default=1, help="qubits per party")
        p.add_argument("--output", "-o", help="report file; figures are written next to it")
        p.add_argument("--format", dest="fmt", choices=("table", "kv"), default="table")
        p.add_argument("--no-figures", dest="figures", action="store_false")

    variable_help = f"built-in name ({', '.join(sorted(BUILTINS))}) or a variable file"
    p = sub.add_parser("demo-eq1", help="product-basis example, every eigenstate")
    common(p, trials=1000)
    for name, trials, rounds, required in (("universal", 2000, 50, True), ("three-party", 300, 3, True)):
        p = sub.add_parser(name, help=f"{name} protocol on one input state")
        common(p, trials=trials, max_rounds=rounds)
        p.add_argument("--variable", required=required, help=variable_help)
        p.add_argument("--state", default="random",
                       help="random | eigen:<column> | superpose:<column>,<column>,... (columns from 1)")
    p = sub.add_parser("signaling-demo", help="ideal von Neumann measurement lets Alice signal")
    common(p, trials=10000)
    p = sub.add_parser("termination-stats", help="round at which the two-party protocol ends")
    common(p, trials=4000)
    p.add_argument("--variable", help=variable_help)
    p = sub.add_parser("resources", help="EPR pairs needed per round")
    common(p, trials=1, max_rounds=4)
    return parser


def parse_args(argv: list[str] | None = None) -> RunSpec:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    variable = getattr(ns, "variable", None)
    if variable is not None and variable not in BUILTINS:
        path = Path(variable)
        if not path.is_file() or not os.access(path, os.R_OK):
            parser.error(f"--variable {variable!r} is neither a built-in nor a readable file")
    return RunSpec(
        subcommand=ns.subcommand,
        variable=variable,
        K=ns.K,
        max_rounds=ns.max_rounds,
        trials=ns.trials,
        seed=ns.seed,
        output=ns.output,
        fmt=ns.fmt,
        state=getattr(ns, "state", "random"),
        figures=ns.figures,
    )


class _Invalid(Exception):
    pass


def _load_variable(name: str) -> NonlocalVariable:
    if name in BUILTINS:
        return builtin(name)
    try:
        return load(name)
    except (VariableFormatError, SimulationError, ValueError) as exc:
        raise _Invalid(f"invalid variable file {name}: {exc}") from None


def _input_state(spec: RunSpec, variable: NonlocalVariable) -> np.ndarray:
    kind, _, arg = spec.state.partition(":")
    try:
        if kind == "random":
            rng = np.random.default_rng(spec.seed)
            v = rng.normal(size=variable.dim) + 1j * rng.normal(size=variable.dim)
            return v / np.linalg.norm(v)
        cols = [int(c) - 1 for c in arg.split(",")]
    except ValueError:
        raise _Invalid(f"bad --state {spec.state!r}") from None
    if not cols or any(not 0 <= c < variable.dim for c in cols) or kind not in ("eigen", "superpose"):
        raise _Invalid(f"bad --state {spec.state!r} for a variable of dimension {variable.dim}")
    if kind == "eigen" and len(cols) != 1:
        raise _Invalid("eigen: takes a single column")
    v = variable.eigenbasis[:, cols].sum(axis=1)
    return v / np.linalg.norm(v)


def _header(report: Report, spec: RunSpec, K: int, rounds: int, k_alice: int | None = None,
            simulated_pairs: int | None = None) -> None:
    """Fields every report carries; the budget is analytic unless simulated_pairs is given."""
    k_alice = K if k_alice is None else k_alice
    report.add("version", __version__)
    report.add("seed", spec.seed)
    report.add("K", K)
    report.add("N", 4 ** K)
    report.add("M", 4 ** (K + k_alice))
    report.add("rounds", rounds)
    if simulated_pairs is None:
        budget = analysis.resource_count(K, rounds=rounds, k_alice=k_alice)
        report.add("budget.model", "analytic")
        report.add("budget.epr_pairs_total", budget.epr_pairs_total)
        report.add("budget.channels_per_round", budget.channels_per_round)
    else:
        report.add("budget.model", "simulated-active-path")
        report.add("budget.epr_pairs_total", simulated_pairs)


def _figure_path(spec: RunSpec, name: str) -> Path | None:
    if not spec.output or not spec.figures:
        return None
    out = Path(spec.output)
    return out.with_name(f"{out.stem}.{name}.png")


def _distribution_table(report: Report, results, born) -> analysis.Distribution | None:
    decoded = [r for r in results if r.decoded]
    t = report.table("eigenvalues", ["eigenvalue", "count", "frequency", "born"])
    if not decoded:
        return None
    empirical = analysis.decoded_distribution(decoded)
    for k in sorted(set(empirical.probs) | set(born.probs)):
        t.rows.append([k, sum(r.eigenvalue == k for r in decoded), empirical[k], born[k]])
    report.add("tvd_to_born", empirical.tvd(born))
    return empirical


def _rounds_table(report: Report, results) -> None:
    t = report.table("rounds", ["round", "decoded", "exhausted"])
    for r in sorted({res.rounds_used for res in results}):
        t.rows.append([
            r,
            sum(res.decoded and res.rounds_used == r for res in results),
            sum(not res.decoded and res.rounds_used == r for res in results),
        ])


def _run_protocol(spec: RunSpec, report: Report, three_party: bool) -> int:
    variable = _load_variable(spec.variable)
    state = _input_state(spec, variable)
    sites = {Site.A, Site.B, Site.C} if three_party else {Site.A, Site.B}
    if set(variable.partition) != sites:
        raise _Invalid(f"{spec.subcommand} needs a variable over sites {sorted(s.value for s in sites)}")
    config = ProtocolConfig(max_rounds=spec.max_rounds, seed=spec.seed,
                            resource_accounting="simulated-active-path" if three_party else "analytic")
    runner_fn = run_three_party if three_party else run_universal_two_party
    results = analysis.run_trials(lambda rng: runner_fn(variable, state, config, rng)[0], spec.seed, spec.trials)
    K, k_alice = variable.partition[Site.B], variable.partition[Site.A]
    if three_party:
        _header(report, spec, K, spec.max_rounds, k_alice,
                simulated_pairs=sum(r.epr_pairs_consumed for r in results))
    else:
        _header(report, spec, K, spec.max_rounds, k_alice)
    report.add("variable", variable.name or spec.variable)
    report.add("state", spec.state)
    report.add("trials", spec.trials)
    n_dec = sum(r.decoded for r in results)
    report.add("decoded", n_dec)
    report.add("exhausted", spec.trials - n_dec)
    report.add("mean_rounds", float(np.mean([r.rounds_used for r in results])))
    born = analysis.born_distribution(variable, state)
    empirical = _distribution_table(report, results, born)
    _rounds_table(report, results)
    path = _figure_path(spec, "eigenvalues")
    if path is not None and empirical is not None:
        plotting.distribution_figure(empirical, born, path, title=f"{spec.subcommand}: {variable.name}")
        report.add("figure.eigenvalues", path.name)
    return EXIT_EXHAUSTED if 2 * (spec.trials - n_dec) > spec.trials else EXIT_OK


def _demo_eq1(spec: RunSpec, report: Report) -> int:
    variable = eq1_variable()
    _header(report, spec, 1, 1)
    report.add("trials_per_state", spec.trials)
    t = report.table("eq1", ["input", "label1", "label2", "label3", "label4", "correct"])
    inputs = [(f"Psi{i + 1}", variable.column(i), i + 1) for i in range(4)]
    inputs.append(("(Psi1+Psi3)/sqrt2", (variable.column(0) + variable.column(2)) / np.sqrt(2), None))
    for j, (name, state, expected) in enumerate(inputs):
        counts = [0] * 4
        for i in range(spec.trials):
            counts[run_product_basis_protocol(state, analysis.trial_rng(spec.seed, i, stream=j)).label - 1] += 1
        t.rows.append([name, *counts, "n/a" if expected is None else counts[expected - 1] == spec.trials])
    return EXIT_OK


def _signaling(spec: RunSpec, report: Report) -> int:
    _header(report, spec, 1, 1)
    p_flip, p_noflip = analysis.signaling_demo_von_neumann()
    report.add("p_noflip", p_noflip)
    report.add("p_flip", p_flip)
    report.add("signaling_gap", p_flip - p_noflip)
    mc_flip, mc_noflip = analysis.signaling_demo_monte_carlo(spec.trials, spec.seed)
    report.add("mc.trials", spec.trials)
    report.add("mc.p_flip", mc_flip)
    report.add("mc.p_noflip", mc_noflip)
    t = report.table("no_signaling", ["procedure", "max_deviation"])
    v = eq1_variable()
    psi1 = v.column(0)
    t.rows.append(["product-basis", analysis.no_signaling_audit(analysis.product_basis_view(psi1), PAULI_X)])
    t.rows.append(["universal-round1",
                   analysis.no_signaling_audit(analysis.universal_round1_view(v, psi1), PAULI_X)])
    t.rows.append(["ideal-von-neumann", analysis.no_signaling_audit(analysis.von_neumann_view(v, psi1), PAULI_X)])
    return EXIT_OK


def _termination(spec: RunSpec, report: Report) -> int:
    if spec.variable is not None:
        variable = _load_variable(spec.variable)
        if set(variable.partition) != {Site.A, Site.B}:
            raise _Invalid("termination-stats needs a two-party variable")
    else:
        variable = computational_variable(spec.K, spec.K)
    K = variable.partition[Site.B]
    law = analysis.TerminationLaw.for_k(K, variable.partition[Site.A])
    config = ProtocolConfig(max_rounds=spec.max_rounds, seed=spec.seed)
    state = variable.column(0)
    if spec.trials < 1000:
        raise _Invalid("termination-stats needs at least 1000 trials")
    stats = analysis.empirical_termination(
        lambda rng: run_universal_two_party(variable, state, config, rng)[0], spec.trials, spec.seed, law)
    _header(report, spec, K, spec.max_rounds, variable.partition[Site.A])
    report.add("variable", variable.name)
    report.add("trials", spec.trials)
    report.add("exhausted", stats.exhausted)
    report.add("chi2", stats.chi2)
    report.add("dof", stats.dof)
    report.add("p_value", stats.p_value)
    report.add("cumulative_r2", stats.cumulative_frequency(2))
    report.add("cumulative_r2_law", law.cumulative(2))
    t = report.table("termination", ["round", "count", "frequency", "law"])
    for r in range(1, stats.max_rounds + 1):
        t.rows.append([r, stats.counts.get(r, 0), stats.frequency(r), law.per_round(r)])
    path = _figure_path(spec, "termination")
    if path is not None:
        plotting.termination_figure(stats, path)
        report.add("figure.termination", path.name)
    return EXIT_EXHAUSTED if 2 * stats.exhausted > spec.trials else EXIT_OK


def _resources(spec: RunSpec, report: Report) -> int:
    budget = analysis.resource_count(spec.K, rounds=spec.max_rounds)
    _header(report, spec, spec.K, spec.max_rounds)
    t = report.table("resources", ["round", "clusters", "channels", "epr_pairs", "cumulative", "success_by_round"])
    total = 0
    for r in range(1, spec.max_rounds + 1):
        total += budget.pairs_per_round[r - 1]
        t.rows.append([r, budget.clusters_per_round[r - 1], budget.channels_per_round[r - 1],
                       budget.pairs_per_round[r - 1], total, analysis.termination_law(spec.K, r)])
    path = _figure_path(spec, "resources")
    if path is not None:
        plotting.resources_figure(budget, path)
        report.add("figure.resources", path.name)
    return EXIT_OK


def execute(spec: RunSpec, stdout=None) -> int:
    """Run ``spec``, write its report, and return the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    report = Report(spec.subcommand)
    handlers = {
        "demo-eq1": _demo_eq1,
        "universal": lambda s, r: _run_protocol(s, r, three_party=False),
        "three-party": lambda s, r: _run_protocol(s, r, three_party=True),
        "signaling-demo": _signaling,
        "termination-stats": _termination,
        "resources": _resources,
    }
    try:
        status = handlers[spec.subcommand](spec, report)
    except _Invalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report.add("exit_status", status)
    text = report.render(spec.fmt)
    if spec.output:
        Path(spec.output).write_text(text)
    else:
        stdout.write(text)
    return status


def main(argv: list[str] | None = None) -> int:
    try:
        spec = parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors, --help, --version
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return execute(spec)


if __name__ == "__main__":
    sys.exit(main())
