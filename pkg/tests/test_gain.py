import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.errors import InvalidInputError, SynthesisError
from services.gain_service import (
    GammaSet,
    KVector,
    alpha2_star,
    alpha_from_k,
    backstepping_transform,
    butterworth_poles,
    certify_chain,
    certify_chi_closed_loop,
    certify_pair,
    charpoly_mismatch,
    chi_matrix,
    gamma_from_family,
    get_gain_service,
    k_from_alpha,
    kvector_from_polynomial,
    max_sym_eig,
    pd_gains_from_poles,
    phi_matrix,
    step_certificate,
    synthesize_alpha_chain,
)
from services.normal_form_service import BetaBound

BUTTERWORTH_A1 = 2.613125929752753
BUTTERWORTH_A2 = 3.414213562373095


@pytest.fixture(scope="module")
def chain():
    return synthesize_alpha_chain(BetaBound(beta_min=0.5, beta_max=1.5), alpha1=1.0, growth=1.1)


def test_newton_family():
    gamma = gamma_from_family("newton", omega=1.0)
    assert_allclose(gamma.gamma, [1.0, 4.0, 6.0, 4.0])
    assert_allclose(gamma.coefficients(), [1.0, 4.0, 6.0, 4.0, 1.0])
    assert_allclose(np.abs(gamma.poles()), 1.0, atol=1e-3)


def test_butterworth_family_omega_two():
    poles = butterworth_poles(2.0)
    assert_allclose(np.abs(poles), 2.0, atol=1e-12)
    assert np.all(poles.real < 0)
    gamma = gamma_from_family("butterworth", omega=2.0)
    assert_allclose(gamma.gamma, [16.0, BUTTERWORTH_A1 * 8, BUTTERWORTH_A2 * 4, BUTTERWORTH_A1 * 2], rtol=1e-12)
    assert_allclose(np.sort(np.abs(gamma.poles())), 2.0, atol=1e-9)


def test_modal_family_places_given_poles():
    poles = [-1.0, -2.0, complex(-1.5, 0.5), complex(-1.5, -0.5)]
    gamma = gamma_from_family("modal", poles=poles)
    assert_allclose(gamma.coefficients(), np.real(np.poly(poles)), rtol=1e-12)


def test_modal_family_needs_conjugates():
    with pytest.raises(InvalidInputError, match="conjugate"):
        gamma_from_family("modal", poles=[-1.0, -2.0, complex(-1.5, 0.5), complex(-1.5, 0.7)])


def test_explicit_family_must_be_hurwitz():
    with pytest.raises(InvalidInputError, match="Hurwitz"):
        gamma_from_family("explicit", values=[1.0, 1.0, 1.0, 1.0])
    assert_allclose(gamma_from_family("explicit", values=[1.0, 4.0, 6.0, 4.0]).gamma, [1.0, 4.0, 6.0, 4.0])


def test_family_needs_positive_omega():
    with pytest.raises(InvalidInputError):
        gamma_from_family("newton", omega=0.0)
    with pytest.raises(InvalidInputError):
        gamma_from_family("chebyshev", omega=1.0)


def test_kvector_from_polynomial_places_frozen_poles():
    gamma = gamma_from_family("butterworth", omega=1.5)
    k = kvector_from_polynomial(gamma)
    assert_allclose(k.as_array(), -gamma.gamma)
    assert charpoly_mismatch(chi_matrix(k, 1.0), gamma.coefficients()) < 1e-12


def test_pd_gains_from_poles():
    pd = pd_gains_from_poles([-2.0, -2.0], [complex(-1.5, 1.0), complex(-1.5, -1.0)])
    assert_allclose(pd.k1, [4.0, 3.25])
    assert_allclose(pd.k2, [4.0, 3.0])
    assert_allclose(np.sort(np.linalg.eigvals(pd.channel_matrix(0)).real), [-2.0, -2.0], atol=1e-6)


def test_kvector_sign_rules():
    with pytest.raises(InvalidInputError):
        KVector(-1.0, -1.0, 0.0, -1.0)
    KVector(0.0, 0.0, 0.0, 0.0, allow_zero=True)
    with pytest.raises(InvalidInputError):
        KVector(0.0, 0.0, 1.0, 0.0, allow_zero=True)


def test_alpha2_threshold_value():
    assert alpha2_star(1.0, 0.5) == pytest.approx(3.0)
    assert alpha2_star(2.0, 1.0) == pytest.approx((12.0 + 9.0) / 4.0)


@pytest.mark.parametrize("alpha1", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta_min", [0.5, 1.0])
def test_pair_certificate_threshold_is_sharp(alpha1, beta_min):
    beta = BetaBound(beta_min=beta_min, beta_max=1.5)
    star = alpha2_star(alpha1, beta_min)
    assert certify_pair(alpha1, 1.01 * star, beta) < 0
    assert certify_pair(alpha1, 0.99 * star, beta) >= 0


def test_chain_synthesis(chain):
    assert chain.alphas[1] > 3.0
    assert all(a > 0 for a in chain.alphas)
    assert all(m < 0 for m in chain.margins.values())
    assert set(chain.margins) == {"alpha2", "alpha3", "alpha4"}


def test_vertex_certificate_covers_interior(chain):
    for beta in np.linspace(0.5, 1.5, 50):
        assert max_sym_eig(step_certificate(chain.alphas, 4, beta)) < 0


def test_chain_certificate(chain):
    cert = certify_chain(chain)
    assert cert.passed
    assert_allclose(cert.transform, backstepping_transform(chain.alphas))
    assert cert.condition >= 1.0
    expected = 2.0 * math.log(1e3 * cert.condition) / abs(cert.margin)
    assert cert.horizon == pytest.approx(expected)


def test_k_alpha_round_trip(chain):
    k = k_from_alpha(chain)
    assert np.all(k.as_array() < 0)
    assert_allclose(alpha_from_k(k), chain.alphas, rtol=1e-12)


def test_chi_matrix_hurwitz_at_vertices(chain):
    k = k_from_alpha(chain)
    for beta in (0.5, 1.0, 1.5):
        assert np.all(np.linalg.eigvals(chi_matrix(k, beta)).real < 0)


def test_synthesis_rejects_bad_inputs():
    beta = BetaBound.from_saturation(0.5)
    with pytest.raises(InvalidInputError):
        synthesize_alpha_chain(beta, alpha1=0.0)
    with pytest.raises(InvalidInputError):
        synthesize_alpha_chain(beta, growth=1.0)


def test_synthesis_error_carries_margins(monkeypatch):
    import services.gain_service as gain_service

    monkeypatch.setattr(gain_service, "certify_pair", lambda a1, a2, beta: 1.0)
    with pytest.raises(SynthesisError) as info:
        synthesize_alpha_chain(BetaBound.from_saturation(0.5), growth=2.0)
    assert info.value.margins["alpha2"] == 1.0


def test_chi_trials_on_synthesized_chain(chain):
    cert = certify_chi_closed_loop(k_from_alpha(chain), chain.beta, trials=20, seed=3)
    assert cert.vertex_ok
    assert cert.descent_checked
    assert cert.decayed == 20
    assert cert.max_descent_violation <= 1e-8
    assert cert.passed


@pytest.mark.slow
def test_chi_trials_hundred_signals(chain):
    cert = certify_chi_closed_loop(k_from_alpha(chain), chain.beta, trials=100, seed=0)
    assert cert.passed
    assert cert.worst_ratio < 1e-3


def test_chi_trials_are_deterministic(chain):
    k = k_from_alpha(chain)
    a = certify_chi_closed_loop(k, chain.beta, trials=4, seed=11, steps=500)
    b = certify_chi_closed_loop(k, chain.beta, trials=4, seed=11, steps=500)
    assert a.worst_ratio == b.worst_ratio


def test_chi_vertex_failure_is_reported():
    # s^4 + s^3 + 3s^2 + beta s + beta/2 is Hurwitz only for beta < 2.5
    k = KVector(-0.5, -1.0, -3.0, -1.0)
    cert = certify_chi_closed_loop(k, BetaBound(beta_min=0.5, beta_max=4.0), trials=5)
    assert not cert.vertex_ok
    assert not cert.passed
    assert cert.failures


def test_closed_loop_b_polynomial():
    from services.controller_service import closed_loop_b_matrix

    for gamma in (gamma_from_family("newton", omega=1.0), gamma_from_family("newton", omega=2.0),
                  gamma_from_family("butterworth", omega=1.0)):
        assert charpoly_mismatch(closed_loop_b_matrix(gamma), gamma.coefficients(), power=4) < 1e-9


def test_gain_report():
    gammas = [gamma_from_family("newton", omega=1.0), gamma_from_family("butterworth", omega=2.0)]
    pd = pd_gains_from_poles([-2.0, -2.0], [-2.0, -2.0])
    report, passed = get_gain_service().build_report(BetaBound(beta_min=0.5, beta_max=1.5), trials=10,
                                                     pd=pd, gammas=gammas)
    assert passed
    assert report["chain"]["alphas"][1] > 3.0
    assert report["pd"]["altitude"]["hurwitz"]
    assert_allclose(report["families"][1]["pole_magnitudes"], 2.0, atol=1e-9)


def test_gamma_set_rejects_nonpositive():
    with pytest.raises(InvalidInputError):
        GammaSet(gamma=np.array([1.0, -4.0, 6.0, 4.0]), family="explicit")


def test_wrong_sign_k_fails_vertex_check():
    k = KVector.from_array([1.0, -1.0, -1.0, -1.0], unchecked=True)
    cert = certify_chi_closed_loop(k, BetaBound(beta_min=0.5, beta_max=1.5), trials=5)
    assert not cert.vertex_ok
    assert not cert.passed
    assert len(cert.failures) == 2
    with pytest.raises(InvalidInputError):
        KVector.from_array([1.0, -1.0, -1.0, -1.0])


@pytest.mark.parametrize("beta", [0.5, 0.8, 1.0, 1.5])
def test_y_dynamics_are_similar_to_chi_dynamics(chain, beta):
    A = chi_matrix(k_from_alpha(chain), beta)
    T = backstepping_transform(chain.alphas)
    Phi = phi_matrix(chain.alphas, beta)
    scale = np.max(np.abs(Phi))
    assert_allclose(T @ A @ np.linalg.inv(T), Phi, atol=1e-9 * scale)
    assert_allclose(np.poly(A), np.poly(Phi), rtol=1e-9, atol=1e-9 * scale ** 4)


def test_alpha2_threshold_monotonicity():
    betas = np.linspace(0.1, 2.0, 40)
    assert np.all(np.diff([alpha2_star(1.0, b) for b in betas]) < 0)
    alphas = np.linspace(1.0, 5.0, 40)
    assert np.all(np.diff([alpha2_star(a, 0.5) for a in alphas]) > 0)


@pytest.mark.slow
def test_vertex_certificate_covers_random_intervals():
    rng = np.random.default_rng(2024)
    worst = -math.inf
    for _ in range(500):
        beta = BetaBound(beta_min=rng.uniform(0.3, 1.0), beta_max=rng.uniform(1.0, 1.8))
        ch = synthesize_alpha_chain(beta, alpha1=rng.uniform(0.5, 2.0))
        for b in rng.uniform(beta.beta_min, beta.beta_max, 50):
            worst = max(worst, max_sym_eig(step_certificate(ch.alphas, 4, b)))
    assert worst < 0
