import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kossakowski_closed_form, ladder, lindblad_oracle, random_density, sandwich_oracle
from relaxsim import quantum as qm
from relaxsim.cptp import choi_check, choi_matrix, choi_spectrum, trace_residual
from relaxsim.errors import ParameterError, SolverFault, TruncationError, UnsupportedError
from relaxsim.fock import FermionMode, FockOperators, anticommutator, commutator, embed
from relaxsim.model import ModeParams, Statistics, UnitsConfig


def mode_with_delta(delta, m=1.0, w=1.0, beta=1.0, gp=1.0):
    return ModeParams(m, w, beta, gamma_q=(delta + 1) * gp / (m * w) ** 2, gamma_p=gp)


def generator(delta=0.0, n=12, **kw):
    return qm.Generator([qm.boson_mode(mode_with_delta(delta, **kw), n)])


# ----------------------------------------------------------------- operators


class TestFock:
    def test_matches_independent_ladder(self):
        ops = FockOperators(9, 1.7, 0.6, UnitsConfig(hbar=0.5))
        a, ad, q, p, h = ladder(9, 1.7, 0.6, 0.5)
        for mine, ref in ((ops.a, a), (ops.q, q), (ops.p, p), (ops.hamiltonian, h)):
            np.testing.assert_allclose(mine, ref, atol=1e-15)

    @given(st.integers(2, 40), st.floats(0.2, 5), st.floats(0.2, 5))
    def test_canonical_commutator_on_interior(self, n, m, w):
        assert FockOperators(n, m, w).commutator_residual() < 1e-12 * max(1.0, n)

    def test_read_only(self):
        with pytest.raises(ValueError):
            FockOperators(4).a[0, 1] = 2.0

    def test_rejects_tiny_truncation(self):
        with pytest.raises(ParameterError):
            FockOperators(1)

    def test_embed(self):
        x = np.array([[0, 1], [1, 0]])
        big = embed(x, 1, [3, 2])
        np.testing.assert_array_equal(big, np.kron(np.eye(3), x))


def test_fermion_algebra():
    f = FermionMode(1.4, 0.8, UnitsConfig(hbar=1.3))
    assert max(f.anticommutation_residuals().values()) < 1e-15
    np.testing.assert_allclose(np.sort(f.energies), [-0.5 * 1.3 * 0.8, 0.5 * 1.3 * 0.8])
    np.testing.assert_allclose(commutator(f.number, f.a), -f.a, atol=1e-15)
    np.testing.assert_allclose(anticommutator(f.a, f.a), 0, atol=1e-15)


# ----------------------------------------------------------------- states


class TestDensityMatrix:
    def test_validation(self):
        with pytest.raises(ParameterError):
            qm.DensityMatrix(np.diag([0.5, 0.6]))
        with pytest.raises(ParameterError):
            qm.DensityMatrix(np.array([[0.5, 1], [0, 0.5]]))
        with pytest.raises(ParameterError):
            qm.DensityMatrix(np.diag([1.2, -0.2]))

    def test_gibbs_and_coherent(self):
        ops = FockOperators(40)
        g = qm.DensityMatrix.gibbs(ops.hamiltonian, 2.0).data
        np.testing.assert_allclose(np.diag(g)[1:10] / np.diag(g)[:9], np.exp(-2.0))
        c = qm.DensityMatrix.coherent(ops, 1.5).data
        assert np.trace(c @ ops.a) == pytest.approx(1.5, abs=1e-10)

    @given(st.integers(2, 12), st.integers(0, 2**32 - 1))
    def test_random_states_are_valid(self, n, seed):
        rho = qm.DensityMatrix.random(n, np.random.default_rng(seed)).data
        assert np.trace(rho).real == pytest.approx(1.0)
        assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_truncation_rule():
    assert qm.truncation_for(ModeParams(beta=1.0)) == 28
    assert qm.truncation_for(ModeParams(beta=100.0)) == 8


# ----------------------------------------------------------------- generators


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 2), st.floats(0.3, 3), st.floats(0.3, 3), st.floats(0.2, 4), st.floats(0.05, 2))
def test_rhs_matches_independent_oracles(delta, m, w, beta, gp):
    n = 14
    pm = mode_with_delta(delta, m, w, beta, gp)
    gen = qm.Generator([qm.boson_mode(pm, n)])
    rho = random_density(n, np.random.default_rng(0))
    inner = slice(0, n - 2)
    scale = max(1.0, np.abs(gen.rhs(rho)).max())
    ref_tcl = lindblad_oracle(rho, n, m, w, beta, pm.gamma_q, gp)
    ref_sw = sandwich_oracle(rho, n, m, w, beta, pm.gamma_q, gp)
    assert np.abs(gen.rhs(rho) - ref_tcl)[inner, inner].max() <= 1e-10 * scale
    assert np.abs(gen.sandwich(rho) - ref_sw)[inner, inner].max() <= 1e-10 * scale


def test_rotation_symmetry_between_couplings():
    # gamma_q and gamma_p enter symmetrically under q -> p/(m w), p -> -m w q
    a = mode_with_delta(0.7, gp=0.4)
    b = ModeParams(1, 1, 1, gamma_q=a.gamma_p, gamma_p=a.gamma_q)
    ga = qm.Generator([qm.boson_mode(a, 16)])
    gb = qm.Generator([qm.boson_mode(b, 16)])
    # the rotation is (-i)^n in the number basis
    u = np.diag((-1j) ** np.arange(16))
    rho = random_density(16, np.random.default_rng(1))
    lhs = u @ ga.sandwich(rho) @ u.conj().T
    rhs = gb.sandwich(u @ rho @ u.conj().T)
    assert np.abs(lhs - rhs)[:14, :14].max() < 1e-12


def test_kossakowski_matches_closed_form():
    for delta in (-1.0, -0.3, 0.0, 1.5):
        pm = mode_with_delta(delta, 1.2, 0.9, 2.0, 0.3)
        k = qm.kossakowski_matrix(qm.build_lindblad_set(qm.boson_mode(pm, 10)))
        np.testing.assert_allclose(k.matrix.real, kossakowski_closed_form(1.2, 0.9, 2.0, pm.gamma_q, 0.3),
                                   atol=1e-12)
        assert k.expansion_residual < 1e-12
        assert k.is_psd() == (delta == 0.0 or np.linalg.det(kossakowski_closed_form(1.2, 0.9, 2.0, pm.gamma_q, 0.3)) >= 0)


def test_imaginary_rates_rejected():
    # delta + 2 < 0 is unreachable from nonnegative couplings, so build the mode by hand
    pm = ModeParams(gamma_q=0.0, gamma_p=1.0)
    object.__setattr__(pm, "gamma_q", -2.0)
    with pytest.raises(ParameterError):
        qm.build_lindblad_set(qm.boson_mode(pm, 4))


def test_sandwich_exponent_guard():
    gen = qm.Generator([qm.boson_mode(ModeParams(beta=200.0), 10)])
    with pytest.raises(TruncationError):
        gen.sandwich(np.eye(10) / 10)


def test_trace_and_hermiticity_preserved():
    gen = generator(-0.6)
    rho = random_density(12, np.random.default_rng(2))
    d = gen.rhs(rho)
    assert abs(np.trace(d)) < 1e-13
    np.testing.assert_allclose(d, d.conj().T, atol=1e-13)


def test_superoperator_matches_rhs():
    gen = generator(0.4, n=6)
    rho = random_density(6, np.random.default_rng(3))
    vec = gen.superoperator() @ rho.ravel(order="F")
    np.testing.assert_allclose(vec.reshape(6, 6, order="F"), gen.rhs(rho), atol=1e-13)


def test_two_mode_product_stationary_state():
    modes = [qm.boson_mode(ModeParams(1, 1, 0.7, gamma_q=1, gamma_p=1), 8),
             qm.boson_mode(ModeParams(1, 1.5, 1.3, gamma_q=0.2, gamma_p=0.45), 6)]
    gen = qm.Generator(modes)
    rho = qm.stationary_state(gen)
    ref = np.kron(qm.DensityMatrix.gibbs(modes[0].ops.hamiltonian, 0.7).data,
                  qm.DensityMatrix.gibbs(modes[1].ops.hamiltonian, 1.3).data)
    # truncation tails limit agreement near the edges of the Fock space
    assert np.abs(rho - ref)[:8, :8].max() < 1e-3


def test_fermion_generator_only_at_gksl_point():
    with pytest.raises(UnsupportedError):
        qm.fermion_generator(ModeParams(gamma_q=0.0, gamma_p=1.0, statistics=Statistics.FERMION))


def test_fermion_sandwich_equals_tcl():
    pm = ModeParams(1.3, 0.7, 1.4, gamma_q=0.8 / 0.91**2, gamma_p=0.8, statistics=Statistics.FERMION)
    gen = qm.fermion_generator(pm)
    rho = random_density(2, np.random.default_rng(4))
    np.testing.assert_allclose(gen.rhs(rho), gen.sandwich(rho), atol=1e-14)


# ----------------------------------------------------------------- evolution and thermodynamics


def test_coherent_amplitude_decay_rate():
    gen = generator(0.0, n=40)
    ev = qm.evolve(qm.DensityMatrix.coherent(gen.modes[0].ops, 2.0), gen, [0, 0.5, 1.0])
    a = gen.modes[0].ops.a
    amp = [abs(np.trace(r @ a)) for r in ev.states]
    g1, g2 = gen.lindblads[0].gammas
    assert np.log(amp[1] / amp[2]) / 0.5 == pytest.approx(g1**2 - g2**2, rel=1e-6)


def test_evolve_step_limit_and_grid():
    gen = generator()
    rho0 = np.eye(12) / 12
    with pytest.raises(ParameterError):
        qm.evolve(rho0, gen, [0, 1], dt=1.0)
    with pytest.raises(ParameterError):
        qm.evolve(rho0, gen, [1, 0])


def test_positivity_loss_is_a_solver_fault_for_gksl():
    gen = generator(0.0, n=6)
    bad = np.diag([1.2, -0.2, 0, 0, 0, 0]).astype(complex)
    with pytest.raises(SolverFault):
        qm.evolve(bad, gen, [0, 0.1])


def test_positivity_loss_is_recorded_for_non_gksl():
    gen = generator(-1.0, n=6, beta=5.0, gp=0.1)
    bad = np.diag([1.2, -0.2, 0, 0, 0, 0]).astype(complex)
    ev = qm.evolve(bad, gen, [0, 0.1])
    assert ev.findings


def test_entropy_functions():
    assert qm.von_neumann_entropy(np.eye(4) / 4) == pytest.approx(np.log(4))
    assert qm.von_neumann_entropy(np.diag([1.0, 0.0])) == 0.0
    # inflow into an empty level has unbounded entropy rate
    assert qm.entropy_rate(np.diag([1.0, 0.0]), np.diag([-1.0, 1.0])) == np.inf


def test_entropy_production_vanishes_at_equilibrium():
    gen = generator(0.0, n=20)
    rho = qm.stationary_state(gen)
    ep = qm.entropy_production(rho, gen.rhs(rho), gen.betas, gen.mode_hamiltonians)
    assert abs(ep) < 1e-9


def test_heat_current():
    h = np.diag([0.0, 1.0])
    assert qm.quantum_heat_current(np.diag([-0.1, 0.1]), h) == pytest.approx(0.1)


# ----------------------------------------------------------------- complete positivity


def test_choi_of_identity_channel():
    gen = generator(n=4)
    c = choi_matrix(gen, 0.0)
    assert trace_residual(c, 4) < 1e-15
    w = np.linalg.eigvalsh(c)
    assert w.max() == pytest.approx(4.0) and abs(w[:-1]).max() < 1e-12


def test_choi_spectrum_gksl_point():
    rep = choi_spectrum(generator(0.0, n=10), 1e-3)
    assert rep.positive and rep.trace_residual < 1e-12


def test_choi_check_report_fields():
    pm = mode_with_delta(-1.0, beta=5.0, gp=0.1)
    rep = choi_check(lambda n: qm.Generator([qm.boson_mode(pm, n)]), 12)
    assert rep.to_dict()["verdict"] == "CPTP: false"
    assert rep.n_max == 12 and rep.t_small > 0
