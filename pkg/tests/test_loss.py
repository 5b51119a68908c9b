import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from robflogit.loss import (
    LossSpec,
    bigG,
    deviance,
    logistic,
    nu,
    phi,
    phi_and_score,
    psi,
    rho,
    score,
)

CL = LossSpec.classical()
CH = LossSpec.croux_haesbroeck(0.5)
EC = math.exp(-math.sqrt(0.5))

finite_t = st.floats(-30, 30, allow_nan=False)
specs = st.sampled_from([CL, CH, LossSpec.croux_haesbroeck(0.2), LossSpec.croux_haesbroeck(2.0)])


def test_lossspec_rejects_bad_inputs():
    with pytest.raises(ValueError):
        LossSpec("huber")
    with pytest.raises(ValueError):
        LossSpec.croux_haesbroeck(0.0)


@pytest.mark.parametrize("t, expected", [(0.0, 0.5), (math.log(3), 0.75)])
def test_logistic_values(t, expected):
    assert logistic(t) == pytest.approx(expected, abs=1e-15)


@given(finite_t)
def test_logistic_symmetry(t):
    assert abs(logistic(-t) - (1 - logistic(t))) <= 1e-15


def test_logistic_saturates_without_overflow():
    with np.errstate(all="raise"):
        v = logistic(np.array([-800.0, 800.0]))
    assert v[0] == 0.0 and v[1] == 1.0


def test_deviance_values():
    assert deviance(1, 0) == pytest.approx(math.log(2), abs=1e-15)
    assert deviance(1, 2) == pytest.approx(-math.log(1 / (1 + math.exp(-2))), abs=1e-15)
    assert deviance(1, 2) == pytest.approx(0.126928, abs=1e-6)


@given(finite_t)
def test_deviance_symmetry(t):
    assert abs(deviance(0, t) - deviance(1, -t)) <= 1e-15


def test_deviance_finite_for_huge_predictors():
    assert np.isfinite(deviance(1, -1e6)) and np.isfinite(deviance(0, 1e6))


def test_rho_values():
    assert rho(CH, 0.0) == 0.0
    assert rho(CH, 0.25) == pytest.approx(0.25 * EC, abs=1e-15)
    assert rho(CH, 0.25) == pytest.approx(0.123267, abs=1e-6)
    assert rho(CH, 1e8) == pytest.approx(1.92997, abs=1e-5)
    assert CH.rho_sup == pytest.approx(float(rho(CH, 1e8)), abs=1e-12)


def test_rho_continuous_at_knot():
    c = CH.c
    left, right = rho(CH, c), rho(CH, np.nextafter(c, np.inf))
    assert abs(left - right) <= 1e-12


def test_rho_psi_reject_negative_arguments():
    with pytest.raises(ValueError):
        rho(CH, -0.1)
    with pytest.raises(ValueError):
        psi(CL, -1.0)


def test_psi_values():
    assert psi(CH, 0.1) == pytest.approx(EC, abs=1e-15)
    assert psi(CH, 0.1) == pytest.approx(0.493069, abs=1e-6)
    assert psi(CH, 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert np.all(psi(CL, np.linspace(0, 5, 7)) == 1.0)


@pytest.mark.parametrize("t", [0.1, 0.5 - 1e-3, 0.5 + 1e-3, 2.0])
def test_psi_is_derivative_of_rho(t):
    h = 1e-6
    fd = (rho(CH, t + h) - rho(CH, t - h)) / (2 * h)
    assert fd == pytest.approx(float(psi(CH, t)), abs=1e-6)


@given(st.floats(0, 50), st.floats(0, 50))
def test_rho_nondecreasing_and_bounded(a, b):
    lo, hi = sorted((a, b))
    assert rho(CH, lo) <= rho(CH, hi) + 1e-15
    assert rho(CH, hi) <= CH.rho_sup + 1e-12


@pytest.mark.parametrize("c", [0.2, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("u", [1e-9, 1e-4, 0.05, 0.3, 0.6, 0.9, 1.0])
def test_bigG_matches_adaptive_quadrature(c, u):
    spec = LossSpec.croux_haesbroeck(c)
    knot = math.exp(-c)

    def integrand(v):
        return float(psi(spec, -math.log(v)))

    pts = [knot] if 0 < knot < u else None
    ref, _ = quad(integrand, 0, u, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)
    assert abs(bigG(spec, u) - ref) <= 1e-10


def test_bigG_values():
    for spec in (CL, CH):
        assert bigG(spec, 0.0) == 0.0
    assert bigG(CL, 1.0) == 1.0
    seg = bigG(CH, 1.0) - bigG(CH, math.exp(-0.5))
    assert seg == pytest.approx((1 - math.exp(-0.5)) * EC, abs=1e-14)


def test_bigG_rejects_outside_unit_interval():
    with pytest.raises(ValueError):
        bigG(CH, 1.5)
    with pytest.raises(ValueError):
        bigG(CH, -0.1)


def test_phi_classical_values():
    assert phi(CL, 1, 0) == pytest.approx(math.log(2) + 1, abs=1e-15)
    t = np.linspace(-10, 10, 201)
    for y in (0, 1):
        assert np.max(np.abs(phi(CL, y, t) - deviance(y, t) - 1)) <= 1e-12


def test_phi_two_forms_agree():
    t = np.linspace(-10, 10, 401)
    F = logistic(t)
    for y in (0, 1):
        alt = (y * rho(CH, -np.log(F)) + bigG(CH, F)
               + (1 - y) * rho(CH, -np.log1p(-F)) + bigG(CH, 1 - F))
        assert np.max(np.abs(phi(CH, y, t) - alt)) <= 1e-12


def test_nu_values():
    assert nu(CH, 0.0) == pytest.approx(math.exp(-math.sqrt(math.log(2))), abs=1e-15)
    assert nu(CH, 0.0) == pytest.approx(0.434937, abs=1e-6)
    assert np.all(nu(CL, np.linspace(-5, 5, 11)) == 1.0)
    assert abs(nu(CH, 3.0) - nu(CH, -3.0)) <= 1e-15


def test_score_values():
    assert score(CH, 1, 0.0) == pytest.approx(-0.5 * 0.434937, abs=1e-6)


@given(specs, finite_t)
def test_score_vanishes_at_fitted_probability(spec, t):
    assert abs(score(spec, logistic(t), t)) <= 1e-15


@pytest.mark.parametrize("spec", [CL, CH])
@pytest.mark.parametrize("y", [0, 1])
def test_score_matches_central_differences(spec, y):
    h = 1e-5
    t = np.linspace(-10, 10, 81)
    fd = (phi(spec, y, t + h) - phi(spec, y, t - h)) / (2 * h)
    an = score(spec, y, t)
    assert np.all(np.abs(fd - an) <= 1e-6 * np.maximum(1.0, np.abs(an)))


@settings(max_examples=200)
@given(specs, st.sampled_from([0.0, 1.0]), st.floats(-700, 700))
def test_fused_evaluation_matches_separate_calls(spec, y, t):
    v, g = phi_and_score(spec, y, t)
    assert v == pytest.approx(float(phi(spec, y, t)), rel=1e-13, abs=1e-15)
    assert g == pytest.approx(float(score(spec, y, t)), rel=1e-13, abs=1e-300)


@given(specs, st.floats(-1e4, 1e4))
def test_phi_finite_everywhere(spec, t):
    for y in (0, 1):
        assert np.isfinite(phi(spec, y, t))
