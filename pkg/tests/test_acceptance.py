"""End-to-end acceptance criteria, each checked at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the
terminal summary.  Run alone with ``pytest -m acceptance -s``.
"""
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, haar_state
from nonlocal_measure.analysis import (
    TerminationLaw, born_distribution, decoded_distribution, empirical_termination, enumerated_clusters,
    no_signaling_audit, product_basis_view, resource_count, run_trials, run_until_decoded,
    signaling_demo_monte_carlo, signaling_demo_von_neumann, trial_rng, universal_round1_view,
    von_neumann_view,
)
from nonlocal_measure.protocols import run_product_basis_protocol, run_three_party, run_universal_two_party
from nonlocal_measure.qsim import PAULI_X, QuantumRegister, Site, fidelity
from nonlocal_measure.records import ProtocolConfig
from nonlocal_measure.teleport import BellOutcome, open_channel, pauli_of, teleport_system
from nonlocal_measure.variables import (
    bell_basis_variable, computational_variable, eq1_variable, ghz_basis_variable, random_variable,
)

pytestmark = pytest.mark.acceptance

A, B, C = Site.A, Site.B, Site.C
CONFIG = ProtocolConfig(max_rounds=50)


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_teleportation_identity():
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        psi = haar_state(rng, 2)
        for o in BellOutcome:
            reg = QuantumRegister()
            q = reg.allocate_qubit(B, psi)
            chan = open_channel(reg, B, A, 1)
            teleport_system(reg, [q], chan, rng, force=[o])
            f = fidelity(reg.statevector([chan.remote[0]]), pauli_of(o).matrix @ psi)
            worst = max(worst, abs(f - 1))
    report(1, worst < 1e-10, f"max |fidelity - 1| = {worst:.2e} over 200 states x 4 outcomes")


def test_02_product_basis_example():
    v = eq1_variable()
    correct = []
    for col in range(4):
        labels = [run_product_basis_protocol(v.column(col), trial_rng(202, i)).label for i in range(1000)]
        correct.append(sum(label == col + 1 for label in labels))
    report(2, correct == [1000] * 4, f"correct per eigenstate {correct} of 1000")


def test_03_universal_certainty():
    variables = [eq1_variable(), bell_basis_variable(), random_variable({A: 1, B: 1}, 2024)]
    worst_terminating, wrong = None, 0
    for v in variables:
        for col in range(4):
            runner = lambda rng: run_universal_two_party(v, v.column(col), CONFIG, rng)[0]
            results = run_until_decoded(runner, 303 + col, 500)
            decoded = [r for r in results if r.decoded]
            wrong += sum(r.eigenvalue != v.eigenvalues[col] for r in decoded)
            worst_terminating = len(decoded) if worst_terminating is None else min(worst_terminating, len(decoded))
    report(3, wrong == 0 and worst_terminating >= 500,
           f"{wrong} wrong decodes; >= {worst_terminating} terminating runs in each of 12 cases")


def test_04_born_statistics():
    eq1 = eq1_variable()
    cases = [
        (eq1, (eq1.column(0) + eq1.column(2)) / np.sqrt(2)),
        (bell_basis_variable(), haar_state(np.random.default_rng(404), 4)),
    ]
    tvds = []
    for k, (v, psi) in enumerate(cases):
        runner = lambda rng: run_universal_two_party(v, psi, CONFIG, rng)[0]
        results = run_until_decoded(runner, 404 + k, 5000)
        tvds.append(decoded_distribution(results).tvd(born_distribution(v, psi)))
    report(4, max(tvds) < 0.05, "TVD to Born " + ", ".join(f"{t:.4f}" for t in tvds) + " (limit 0.05)")


def test_05_termination_law():
    v = computational_variable()
    psi = haar_state(np.random.default_rng(505), 4)
    trials = 4000
    runner = lambda rng: run_universal_two_party(v, psi, CONFIG, rng)[0]
    stats = empirical_termination(runner, trials, seed=505, law=TerminationLaw.for_k(1))
    p2 = 0.296875
    sigma = np.sqrt(p2 * (1 - p2) / trials)
    c2 = stats.cumulative_frequency(2)
    ok = stats.p_value > 0.01 and abs(c2 - p2) <= 3 * sigma
    report(5, ok, f"chi2={stats.chi2:.2f} dof={stats.dof} p={stats.p_value:.3f}; "
                  f"cumulative(2)={c2:.4f} vs {p2} (3 sigma = {3 * sigma:.4f})")


def test_06_signaling_gap():
    p_flip, p_noflip = signaling_demo_von_neumann()
    exact = abs(p_flip - 0.5) < 1e-10 and abs(p_noflip) < 1e-10
    n = 10000
    mc_flip, mc_noflip = signaling_demo_monte_carlo(n, seed=606)
    sigma = np.sqrt(0.25 / n)
    mc = abs(mc_flip - 0.5) <= 3 * sigma and mc_noflip == 0
    report(6, exact and mc, f"exact ({p_flip:.12g}, {p_noflip:.12g}); "
                            f"Monte Carlo ({mc_flip:.4f}, {mc_noflip:.4f}) at {n} trials")


def test_07_no_signaling():
    eq1 = eq1_variable()
    psi = haar_state(np.random.default_rng(707), 4)
    product = no_signaling_audit(product_basis_view(psi), PAULI_X)
    universal = max(
        no_signaling_audit(universal_round1_view(v, psi), PAULI_X)
        for v in (eq1, bell_basis_variable(), random_variable({A: 1, B: 1}, 7))
    )
    oracle = no_signaling_audit(von_neumann_view(eq1, eq1.column(0)), PAULI_X)
    ok = product < 1e-10 and universal < 1e-10 and oracle > 0.2
    report(7, ok, f"deviation product-basis {product:.1e}, universal {universal:.1e}, "
                  f"oracle projection {oracle:.3f}")


def test_08_verification_not_preparation():
    """Input |down_z up_x>, Bob's outcome Psi+: the label is right, the state is not."""
    v = eq1_variable()
    run = run_product_basis_protocol(v.column(2), np.random.default_rng(808), force=BellOutcome.PSI_PLUS)
    f_in = fidelity(run.post_state, v.column(2))
    f_other = fidelity(run.post_state, v.column(3))
    ok = run.label == 3 and f_in < 1 - 1e-6
    report(8, ok, f"decoded label {run.label}; fidelity with input {f_in:.3g}, "
                  f"with |down_z down_x> {f_other:.3g}")


def test_09_lazy_channel_equivalence():
    v = random_variable({A: 1, B: 1}, 909)
    psi = haar_state(np.random.default_rng(909), 4)
    trials = 4000

    def key(res):
        return (res.status.value, res.rounds_used, res.eigenvalue)

    lazy = [run_universal_two_party(v, psi, CONFIG, trial_rng(909, i))[0] for i in range(trials)]
    full = [
        run_universal_two_party(v, psi, CONFIG, trial_rng(909, i), inactive_clusters=1,
                                aux_rng=trial_rng(909, i, stream=1))[0]
        for i in range(trials)
    ]
    counts = {}
    for sign, results in ((1, lazy), (-1, full)):
        for r in results:
            counts[key(r)] = counts.get(key(r), 0) + sign
    tvd = 0.5 * sum(abs(c) for c in counts.values()) / trials
    report(9, tvd <= 0.02, f"TVD of (status, round, eigenvalue) with one inactive cluster = {tvd:.4f}")


def test_10_resources():
    totals = [resource_count(1, rounds=r).epr_pairs_total for r in range(1, 5)]
    channels = list(resource_count(1, rounds=4).channels_per_round)
    enumerated = [2 * c for c in enumerated_clusters(1, 4)]
    ok = totals == [3, 15, 195, 2895] and channels == enumerated
    report(10, ok, f"EPR pairs {totals}; channels {channels}, enumerated {enumerated}")


def test_11_three_party():
    v = ghz_basis_variable()
    config = ProtocolConfig(max_rounds=5)
    terminating, wrong = 0, 0
    for col in range(8):
        runner = lambda rng: run_three_party(v, v.column(col), config, rng)[0]
        for res in run_trials(runner, 1100 + col, 300):
            if res.decoded:
                terminating += 1
                wrong += res.eigenvalue != v.eigenvalues[col]
    report(11, wrong == 0 and terminating > 0,
           f"{terminating} terminating runs over 8 x 300 seeds, {wrong} wrong")
