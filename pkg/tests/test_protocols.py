import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import haar_state, seeds
from nonlocal_measure.protocols import (
    _AliceKnowledge, _two_party_distortion, alice_round_correction, decode_column,
    decode_product_basis, ideal_projective_measurement, merge_records, product_basis_protocol_on,
    project_onto_eigenspace, run_product_basis_protocol, run_three_party, run_universal_two_party,
)
from nonlocal_measure.qsim import LocalityError, QuantumRegister, Site, fidelity
from nonlocal_measure.records import ProtocolConfig, Record, Transcript, TranscriptError
from nonlocal_measure.analysis import enumerate_branches
from nonlocal_measure.teleport import BellOutcome, PauliFrame, open_channel, outcomes_from_index, teleport_system
from nonlocal_measure.variables import (
    NonlocalVariable, bell_basis_variable, eq1_variable, ghz_basis_variable, random_variable,
)

A, B, C = Site.A, Site.B, Site.C
O = BellOutcome


# -- product-basis example -------------------------------------------------------

@pytest.mark.parametrize("col", range(4))
def test_product_basis_eigenstates(col):
    v = eq1_variable()
    for seed in range(100):
        run = run_product_basis_protocol(v.column(col), np.random.default_rng(seed))
        assert run.label == col + 1


@pytest.mark.parametrize("outcome", list(BellOutcome))
@pytest.mark.parametrize("col", range(4))
def test_product_basis_every_forced_outcome(col, outcome):
    run = run_product_basis_protocol(eq1_variable().column(col), np.random.default_rng(0), force=outcome)
    assert run.label == col + 1


def test_product_basis_decode_table():
    # z line: X and Y flip; x line: Z and Y flip
    assert decode_product_basis(O.PSI_MINUS, 0, 0) == 1
    assert decode_product_basis(O.PHI_MINUS, 0, 0) == 2
    assert decode_product_basis(O.PSI_PLUS, 0, 1) == 2
    assert decode_product_basis(O.PSI_MINUS, 1, 1) == 4
    assert decode_product_basis(O.PSI_PLUS, 1, 1) == 3
    assert decode_product_basis(O.PHI_MINUS, 1, 1) == 4
    assert decode_product_basis(O.PHI_PLUS, 1, 0) == 4


def test_product_basis_superposition_statistics():
    v = eq1_variable()
    psi = (v.column(0) + v.column(2)) / np.sqrt(2)
    n = 5000
    rng = np.random.default_rng(11)
    labels = [run_product_basis_protocol(psi, rng).label for _ in range(n)]
    assert set(labels) <= {1, 3}
    assert abs(labels.count(1) / n - 0.5) < 3 * np.sqrt(0.25 / n)


def test_product_basis_needs_channel():
    reg = QuantumRegister()
    qa, qb = reg.allocate_state([A, B], eq1_variable().column(0))
    with pytest.raises(ValueError, match="channel"):
        product_basis_protocol_on(reg, qa, qb, None, np.random.default_rng(0))


def test_verification_does_not_prepare():
    v = eq1_variable()
    run = run_product_basis_protocol(v.column(2), np.random.default_rng(0), force=O.PSI_PLUS)
    assert run.label == 3
    assert np.isclose(fidelity(run.post_state, v.column(3)), 1)
    assert fidelity(run.post_state, v.column(2)) < 1 - 1e-6


def test_product_basis_merge_from_transcripts():
    run = run_product_basis_protocol(eq1_variable().column(1), np.random.default_rng(3))
    assert merge_records(run.transcripts, eq1_variable()) == 2


# -- Alice's corrections ---------------------------------------------------------

def test_round_one_correction_is_inverse_eigenbasis():
    for v in (eq1_variable(), bell_basis_variable(), random_variable({A: 1, B: 1}, 2)):
        assert np.allclose(alice_round_correction(v, 1, (), []), v.eigenbasis.conj().T)


def test_correction_history_must_match_round():
    with pytest.raises(ValueError):
        alice_round_correction(eq1_variable(), 2, (), [])
    with pytest.raises(ValueError):
        alice_round_correction(eq1_variable(), 0, (), [])


@given(seeds, st.integers(1, 4))
@settings(max_examples=25, deadline=None)
def test_incremental_tracker_matches_pure_function(seed, rounds):
    rng = np.random.default_rng(seed)
    v = random_variable({A: 1, B: 1}, seed % 7)
    address = [int(rng.integers(2, 5))] + [int(rng.integers(2, 17)) for _ in range(rounds - 2)]
    address = address[:rounds - 1]
    history = [tuple(outcomes_from_index(int(rng.integers(1, 17)), 2)) for _ in range(rounds - 1)]
    k = _AliceKnowledge(v.eigenbasis)
    for j, (e, h) in enumerate(zip(address, history)):
        k.advance(_two_party_distortion(1, 1, j, e), PauliFrame.from_outcomes(h))
    assert np.allclose(k.correction(), alice_round_correction(v, rounds, address, history), atol=1e-12)


@pytest.mark.parametrize("path", [[1], [2, 1], [4, 16, 1], [3, 5, 9, 1]])
def test_forced_paths_decode_every_eigenstate(path):
    """Whatever the distortions before the final round, Bob's qubits end in a z product state."""
    config = ProtocolConfig(max_rounds=10)
    for v in (eq1_variable(), bell_basis_variable(), random_variable({A: 1, B: 1}, 9)):
        for col in range(4):
            for seed in range(5):
                res, tr = run_universal_two_party(v, v.column(col), config,
                                                  np.random.default_rng(seed), forced=path)
                assert res.decoded and res.rounds_used == len(path)
                assert res.eigenstate_label == col
                assert [r.address for r in tr[B].records("bell")] == [tuple(path[:j]) for j in range(len(path))]


@pytest.mark.parametrize("col", range(4))
def test_sampled_runs_decode_eigenstates(col):
    v = random_variable({A: 1, B: 1}, 4)
    config = ProtocolConfig(max_rounds=50)
    for seed in range(40):
        res, _ = run_universal_two_party(v, v.column(col), config, np.random.default_rng(seed))
        if res.decoded:
            assert res.eigenvalue == v.eigenvalues[col]


def test_unequal_partition():
    v = random_variable({A: 2, B: 1}, 1)
    config = ProtocolConfig(max_rounds=3)
    for col in range(8):
        res, _ = run_universal_two_party(v, v.column(col), config, np.random.default_rng(col),
                                         forced=[3, 40, 1])
        assert res.eigenstate_label == col


def test_exhaustion():
    v = eq1_variable()
    res, _ = run_universal_two_party(v, v.column(0), ProtocolConfig(max_rounds=2),
                                     np.random.default_rng(0), forced=[2, 2])
    assert not res.decoded and res.rounds_used == 2 and res.eigenvalue is None


def test_analytic_and_simulated_pair_counts():
    v = eq1_variable()
    res, _ = run_universal_two_party(v, v.column(0), ProtocolConfig(max_rounds=5),
                                     np.random.default_rng(0), forced=[2, 1])
    assert res.epr_pairs_consumed == 15
    res, _ = run_universal_two_party(v, v.column(0), ProtocolConfig(5, resource_accounting="simulated-active-path"),
                                     np.random.default_rng(0), forced=[2, 1])
    assert res.epr_pairs_consumed == 3 + 4


def test_two_party_rejects_three_site_variable():
    with pytest.raises(ValueError):
        run_universal_two_party(ghz_basis_variable(), ghz_basis_variable().column(0), ProtocolConfig())


# -- merge -------------------------------------------------------------------------

def _copy(t: Transcript, keep=lambda r: True) -> Transcript:
    out = Transcript(t.party)
    for r in t:
        if keep(r):
            out.add(r)
    return out


def test_merge_is_deterministic_and_order_free():
    v = bell_basis_variable()
    res, tr = run_universal_two_party(v, v.column(2), ProtocolConfig(), np.random.default_rng(0),
                                      forced=[2, 7, 1])
    assert merge_records(tr, v) == merge_records({B: tr[B], A: tr[A]}, v) == v.eigenvalues[2]


def test_merge_rejects_missing_round():
    v = bell_basis_variable()
    _, tr = run_universal_two_party(v, v.column(2), ProtocolConfig(), np.random.default_rng(0),
                                    forced=[2, 7, 1])
    with pytest.raises(TranscriptError):
        decode_column({A: _copy(tr[A], lambda r: r.round != 2), B: tr[B]})
    with pytest.raises(TranscriptError):
        decode_column({A: tr[A], B: _copy(tr[B], lambda r: not (r.kind == "bell" and r.round == 2))})
    with pytest.raises(TranscriptError):
        decode_column({A: tr[B], B: tr[A]})
    with pytest.raises(TranscriptError):
        decode_column({A: tr[A]})


def test_merge_rejects_address_mismatch():
    v = bell_basis_variable()
    _, tr = run_universal_two_party(v, v.column(0), ProtocolConfig(), np.random.default_rng(0),
                                    forced=[2, 1])
    bob = Transcript(B)
    for r in tr[B]:
        bob.add(Record(B, r.round, r.kind, (3,) if r.kind == "z" else r.address, r.outcomes, r.bits, r.dest))
    with pytest.raises(TranscriptError):
        decode_column({A: tr[A], B: bob})


# -- lazy channels -----------------------------------------------------------------

def test_inactive_clusters_do_not_touch_active_path():
    v = random_variable({A: 1, B: 1}, 3)
    psi = haar_state(np.random.default_rng(5), 4)
    config = ProtocolConfig(max_rounds=20, resource_accounting="simulated-active-path")
    for seed in range(30):
        plain, t0 = run_universal_two_party(v, psi, config, np.random.default_rng(seed))
        lazy, t1 = run_universal_two_party(v, psi, config, np.random.default_rng(seed),
                                           inactive_clusters=2, aux_rng=np.random.default_rng(seed + 99))
        assert (plain.status, plain.rounds_used, plain.eigenvalue) == (lazy.status, lazy.rounds_used, lazy.eigenvalue)
        assert list(t0[B]) == list(t1[B])
        if plain.rounds_used >= 2:
            assert lazy.epr_pairs_consumed == plain.epr_pairs_consumed + 2 * 2 * 2
            assert len(t1[A].records("bell", round=2)) == 3


def test_inactive_cluster_leaves_bob_halves_maximally_mixed():
    """Averaged over Alice's outcomes, Bob's halves of an unused cluster carry nothing."""
    v = eq1_variable()

    def run(source):
        reg = QuantumRegister()
        idle = open_channel(reg, B, A, 2)
        reg.apply(alice_round_correction(v, 2, (3,), [(O.PSI_PLUS, O.PHI_MINUS)]), idle.remote)
        back = open_channel(reg, A, B, 2)
        teleport_system(reg, list(idle.remote), back, source)
        return reg.reduced_density(list(idle.local) + list(back.remote))

    rho = sum(p * r for p, r in enumerate_branches(run))
    assert np.allclose(rho, np.eye(16) / 16, atol=1e-12)


# -- three parties -----------------------------------------------------------------

@pytest.mark.parametrize("forced", [[(1, 1)], [(3, 2), (1, 1)], [(2, 4), (16, 9), (1, 1)]])
def test_three_party_forced_success(forced):
    v = ghz_basis_variable()
    for col in range(8):
        res, tr = run_three_party(v, v.column(col), ProtocolConfig(max_rounds=5),
                                  np.random.default_rng(col), forced=forced)
        assert res.decoded and res.rounds_used == len(forced)
        assert res.eigenstate_label == col
        assert merge_records(tr, v) == v.eigenvalues[col]


def test_three_party_random_variable():
    v = random_variable({A: 1, B: 1, C: 1}, 8)
    for col in range(8):
        res, _ = run_three_party(v, v.column(col), ProtocolConfig(max_rounds=5),
                                 np.random.default_rng(col), forced=[(3, 2), (1, 1)])
        assert res.eigenstate_label == col


def test_three_party_first_round_termination_rate():
    v = ghz_basis_variable()
    n = 4000
    done = sum(
        run_three_party(v, v.column(0), ProtocolConfig(max_rounds=1), np.random.default_rng(s))[0].decoded
        for s in range(n)
    )
    p = 1 / 16
    assert abs(done / n - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_three_party_rejects_two_site_variable():
    with pytest.raises(ValueError):
        run_three_party(eq1_variable(), eq1_variable().column(0), ProtocolConfig())


# -- ideal projective measurement --------------------------------------------------

def test_ideal_measurement_on_eigenstate():
    v = bell_basis_variable()
    value, post = ideal_projective_measurement(v, v.column(1), np.random.default_rng(0))
    assert value == 2 and np.isclose(fidelity(post, v.column(1)), 1)


def test_ideal_measurement_degenerate_eigenspace():
    bell = bell_basis_variable()
    v = NonlocalVariable({A: 1, B: 1}, bell.eigenbasis, (0, 1, 1, 1), "triplet")
    psi = (bell.column(1) + bell.column(3)) / np.sqrt(2)
    value, post = ideal_projective_measurement(v, psi, np.random.default_rng(0))
    assert value == 1 and np.isclose(fidelity(post, psi), 1)


def test_ideal_measurement_needs_oracle_mode():
    v = eq1_variable()
    reg = QuantumRegister()
    qs = reg.allocate_state(v.sites, v.column(0))
    with pytest.raises(LocalityError):
        project_onto_eigenspace(v, reg, qs, np.random.default_rng(0), oracle_mode=False)
