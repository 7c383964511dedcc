import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaxsim.errors import DimensionError, ParameterError, UndefinedDeltaError
from relaxsim.model import (CustomPotentialHamiltonian, HarmonicHamiltonian, ModeParams, OmegaSchedule,
                            Statistics, UnitsConfig, delta_parameter, hamiltonian_energy,
                            quartic_potential)

positive = st.floats(0.1, 10.0)


def test_units_reject_nonpositive():
    with pytest.raises(ParameterError):
        UnitsConfig(hbar=0.0)
    with pytest.raises(ParameterError):
        UnitsConfig(k_boltzmann=math.inf)


@pytest.mark.parametrize("field", ["mass", "omega", "beta"])
def test_mode_params_positive(field):
    with pytest.raises(ParameterError):
        ModeParams(**{field: -1.0})


def test_bath_activity():
    assert ModeParams(gamma_q=0, gamma_p=0).bath_active is False
    assert ModeParams().bath_active is True
    with pytest.raises(ParameterError):
        ModeParams(gamma_q=0, gamma_p=0, bath_active=True)


def test_statistics_coerced():
    assert ModeParams(statistics="fermion").statistics is Statistics.FERMION


@given(m=positive, w=positive, gp=positive, d=st.floats(-1.0, 3.0))
def test_delta_round_trip(m, w, gp, d):
    gq = (d + 1) * gp / (m * w) ** 2
    assert delta_parameter(ModeParams(m, w, 1.0, gamma_q=gq, gamma_p=gp)) == pytest.approx(d, abs=1e-9)


def test_delta_undefined_without_gamma_p():
    with pytest.raises(UndefinedDeltaError, match="undefined delta"):
        delta_parameter(ModeParams(gamma_q=1.0, gamma_p=0.0))


def test_gksl_point():
    assert ModeParams(2.0, 0.5, 1.0, gamma_q=0.3, gamma_p=0.3).delta == 0.0


class TestSchedule:
    def test_interpolates_and_clamps(self):
        s = OmegaSchedule((0.0, 1.0), (1.0, 3.0))
        assert s(-1) == 1.0 and s(0.5) == 2.0 and s(5) == 3.0

    def test_quench(self):
        s = OmegaSchedule.from_knots([[0.0, 1.0], [1.0, 1.0], [1.0, 2.0]])
        assert s(0.999) == 1.0 and s(1.0) == 2.0

    @pytest.mark.parametrize("times,values", [((1.0, 0.0), (1.0, 1.0)), ((0.0,), (-1.0,)), ((), ())])
    def test_rejects(self, times, values):
        with pytest.raises(ParameterError):
            OmegaSchedule(times, values)


class TestHarmonic:
    def test_energy_and_gradients(self):
        H = HarmonicHamiltonian((ModeParams(2.0, 3.0),))
        q = np.array([[0.5]])
        p = np.array([[1.0]])
        assert H.energy(q, p) == pytest.approx(0.25 + 0.5 * 2 * 9 * 0.25)
        assert H.grad_q(q, p)[0, 0] == pytest.approx(18 * 0.5)
        assert H.grad_p(q, p)[0, 0] == pytest.approx(0.5)

    @settings(max_examples=30)
    @given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0, 2))
    def test_chain_gradient_matches_finite_differences(self, qs, kappa):
        H = HarmonicHamiltonian(tuple(ModeParams(1.0, 1.0 + i) for i in range(3)), coupling=kappa)
        q = np.array(qs)[:, None]
        p = np.zeros_like(q)
        h = 1e-6
        fd = np.array([(H.energy(q + h * e, p) - H.energy(q - h * e, p)) / (2 * h)
                       for e in np.eye(3)[:, :, None]])
        np.testing.assert_allclose(H.grad_q(q, p)[:, 0], fd, atol=1e-6)

    def test_quadratic_form_reproduces_energy(self, rng):
        H = HarmonicHamiltonian(tuple(ModeParams(1.5, 0.8 + i) for i in range(3)), coupling=0.4)
        x = rng.normal(size=6)
        e = H.energy(x[:3, None], x[3:, None])
        assert e == pytest.approx(0.5 * x @ H.quadratic_form() @ x)

    def test_schedule_changes_omega(self):
        H = HarmonicHamiltonian((ModeParams(),), schedules=(OmegaSchedule((0, 1), (1, 2)),))
        assert H.is_time_dependent()
        assert H.omega_at(1.0)[0, 0] == 2.0

    def test_shape_check(self):
        H = HarmonicHamiltonian((ModeParams(),), dim=2)
        with pytest.raises(DimensionError):
            hamiltonian_energy(H, np.zeros((1, 3)), np.zeros((1, 3)))

    def test_rejects_bad_construction(self):
        with pytest.raises(ParameterError):
            HarmonicHamiltonian(())
        with pytest.raises(ParameterError):
            HarmonicHamiltonian((ModeParams(),), schedules=(None, None))


def test_quartic_gradient_matches_numeric():
    modes = (ModeParams(1.2, 0.9),)
    v, g = quartic_potential(modes, 0.7)
    analytic = CustomPotentialHamiltonian(modes, v, g)
    numeric = CustomPotentialHamiltonian(modes, v)
    q = np.array([[[0.3]], [[-1.7]]])
    np.testing.assert_allclose(analytic.grad_q(q, q), numeric.grad_q(q, q), rtol=1e-7)
