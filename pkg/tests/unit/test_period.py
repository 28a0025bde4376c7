"""
Unit tests for crysdr.services.period: θ, A_crys, β, A_st and the
semistable cocycle on small finite models.
"""

from math import factorial

import pytest

from crysdr.core.exceptions import (
    ModelUnavailable,
    NonzeroConstantTerm,
    NotAnAutomorphism,
    NotEisenstein,
    PrecisionExceedsDepth,
)
from crysdr.services.pd import gamma
from crysdr.services.period import (
    GaloisElement,
    PeriodModel,
    acrys_morphism_check,
    acrys_truncation,
    ast_check,
    ast_truncation,
    beta,
    beta_report,
    fontaine_sequence_valuations,
    galois_act,
    ker_theta_check,
    st_cocycle,
    st_cocycle_identity,
    theta_equivariance,
    theta_homomorphism,
)


class TestPeriodModel:
    """Construction limits of the finite model."""

    def test_precision_beyond_depth(self):
        with pytest.raises(PrecisionExceedsDepth):
            PeriodModel(2, 3, 1)

    def test_zero_depth(self):
        with pytest.raises(ModelUnavailable):
            PeriodModel(2, 1, 0)

    def test_not_eisenstein(self):
        with pytest.raises(NotEisenstein):
            PeriodModel(2, 1, 1, eisenstein=[1, 1])

    def test_theta_of_teichmuller_is_sharp(self):
        model = PeriodModel(2, 2, 1)
        assert model.theta(model.teichmuller(model.pi_flat)) == model.sharp(model.pi_flat)


class TestTheta:
    """θ: A_inf -> O/p^n."""

    def setup_method(self):
        self.model = PeriodModel(2, 2, 1)

    def test_kernel_generator(self):
        result = ker_theta_check(self.model)
        assert result["theta_xi"] == "0"
        assert result["e"] == 1
        assert result["xi_mod_p_valuation"] == "1"

    def test_ring_homomorphism(self):
        result = theta_homomorphism(self.model, 10, seed=1)
        assert result["passed"], result["failures"]

    def test_equivariance(self):
        sigma = GaloisElement(PeriodModel(3, 2, 1), 2, 1)
        assert theta_equivariance(sigma.model, sigma, cases=10, seed=1)["passed"]


class TestGalois:
    """σ(z) = z^c, σ(w) = z^a w."""

    def setup_method(self):
        self.model = PeriodModel(3, 1, 1)

    def test_compose(self):
        sigma = GaloisElement(self.model, 2, 1)
        composed = sigma.compose(GaloisElement(self.model, 2, 1))
        assert (composed.c, composed.a) == (4, 3)
        assert composed.chi == 1

    def test_non_unit_character(self):
        with pytest.raises(NotAnAutomorphism):
            GaloisElement(self.model, 3, 0)

    def test_needs_roots_of_unity(self):
        model = PeriodModel(3, 1, 1, roots_of_unity=False)
        with pytest.raises(ModelUnavailable):
            GaloisElement(model, 2, 0)


class TestAcrysEnvelope:
    """A_crys as the pd-envelope of (E(u), v - 1), u -> [π̲], v -> [ε̲]."""

    def setup_method(self):
        self.acrys = acrys_truncation(3, 2, 1, 3)
        self.u = self.acrys.teichmuller_pi()
        self.v = self.acrys.teichmuller_eps()

    def test_generators_are_the_ideal_elements(self):
        assert self.acrys.equal(self.acrys.xi_poly, self.acrys.y_xi())
        assert self.acrys.equal(self.v - 1, self.acrys.y_eps())
        assert self.acrys.pd_form(self.v - 1) == self.acrys.y_eps()

    def test_xi_realizes_to_e_of_teichmuller_pi(self):
        assert self.acrys.realize(self.acrys.xi_poly) == self.acrys.model.xi()

    def test_xi_has_divided_powers(self):
        square = self.acrys.xi_poly ** 2
        assert self.acrys.equal(self.acrys.divided_power(2, self.acrys.xi_poly) * 2, square)
        assert self.acrys.hodge_level(self.acrys.divided_power(2, self.acrys.xi_poly)) == 2

    def test_unit_has_no_divided_powers(self):
        with pytest.raises(NonzeroConstantTerm):
            self.acrys.divided_power(2, self.u)

    def test_theta_kills_fil1(self):
        assert self.acrys.theta(self.acrys.y_xi()).is_zero()
        assert self.acrys.theta(self.v - 1).is_zero()
        model = self.acrys.model
        assert self.acrys.theta(self.u) == model.sharp(model.pi_flat)

    def test_frobenius_on_divided_powers_of_xi(self):
        result = self.acrys.phi_xi_check()
        assert result["realizes_phi_xi"]
        assert result["envelope_image_is_E_of_u_p"]
        assert result["divided_power_failures"] == []
        assert result["passed"]

    def test_frobenius_on_gamma_two(self):
        phi_y = self.acrys.frobenius(self.acrys.y_xi())
        phi_gamma = self.acrys.frobenius(self.acrys.pd.gamma_var("y_xi", 2))
        assert self.acrys.equal(phi_gamma * 2, phi_y * phi_y)

    def test_ring_maps_respect_products(self):
        sigma = GaloisElement(self.acrys.model, 2, 1)
        result = acrys_morphism_check(self.acrys, sigma, cases=5, seed=3)
        assert result["passed"], result["failures"]

    def test_pd_elements_need_a_model(self):
        with pytest.raises(ModelUnavailable):
            galois_act(GaloisElement(self.acrys.model, 2, 1), self.acrys.y_xi())

    def test_without_roots_of_unity(self):
        acrys = acrys_truncation(2, 2, 1, 2, roots_of_unity=False)
        assert acrys.pd.variables == ("y_xi",)
        with pytest.raises(ModelUnavailable):
            acrys.y_eps()
        assert acrys.phi_xi_check()["passed"]


class TestBeta:
    """β = log[ε̲] in Fil^1 with σ(β) = χ(σ)β."""

    def setup_method(self):
        self.acrys = acrys_truncation(3, 2, 1, 3)
        self.sigma = GaloisElement(self.acrys.model, 2, 1)

    def test_beta_report(self):
        report = beta_report(self.acrys, self.sigma)
        assert report["equivariant"]
        assert report["hodge_level"] == 1
        assert report["frobenius_is_p_beta"]
        assert report["val_eps1_minus_one"] == "1/2"

    def test_beta_is_the_log_series_of_eps_minus_one(self):
        value = beta(self.acrys)
        z = self.acrys.pd_form(self.acrys.teichmuller_eps() - 1)
        expected = z - self.acrys.divided_power(2, self.acrys.teichmuller_eps() - 1)
        for j in range(3, self.acrys.pd.weight_cap + 1):
            term = gamma(j, z) * factorial(j - 1)
            expected = expected + term if j % 2 else expected - term
        assert self.acrys.equal(value, expected)

    def test_beta_of_eps_power(self):
        model = self.acrys.model
        value = beta(self.acrys, model.eps_flat ** 2)
        assert self.acrys.equal(value, beta(self.acrys) * 2)

    def test_galois_acts_on_beta_by_character(self):
        value = beta(self.acrys)
        moved = galois_act(self.sigma, value, self.acrys)
        assert self.acrys.equal(moved, value * self.sigma.chi, 1)
        assert self.acrys.equal(moved, value * self.sigma.chi)

    def test_phi_xi(self):
        assert self.acrys.phi_xi_check()["passed"]

    def test_st_cocycle_is_a_beta(self):
        value = st_cocycle(self.acrys, self.sigma)
        assert value["a"] == 1
        assert value["equals_a_beta"]

    def test_cocycle_identity(self):
        tau = GaloisElement(self.acrys.model, 1, 1)
        assert st_cocycle_identity(self.acrys, self.sigma, tau)["holds"]
        assert st_cocycle_identity(self.acrys, tau, self.sigma)["holds"]

    def test_trivial_sigma_gives_zero(self):
        value = st_cocycle(self.acrys, GaloisElement(self.acrys.model, 1, 0))
        assert value["a"] == 0
        assert value["element"].is_zero()


class TestAst:
    """Monodromy and Frobenius on A_st."""

    def setup_method(self):
        self.ast = ast_truncation(2, 2, 1, 2)

    def test_n_phi_is_p_phi_n(self):
        result = ast_check(self.ast, cases=3, seed=1)
        assert result["generator"]["N_phi_equals_p_phi_N"]
        assert result["kills_acrys"]
        assert result["passed"]

    def test_monodromy_on_divided_powers(self):
        X = self.ast.X()
        gamma_two = self.ast.pd.gamma_var("X", 2)
        assert self.ast.monodromy(X + 1) == X + 1
        assert self.ast.monodromy(gamma_two) == X + gamma_two * 2

    def test_monodromy_kills_acrys(self):
        value = self.ast.embed(self.ast.acrys.y_xi() + self.ast.acrys.y_eps())
        assert self.ast.monodromy(value).is_zero()

    def test_x_is_in_the_pd_ideal(self):
        x = self.ast.ring.gen("x")
        assert self.ast.equal(x, self.ast.X())
        assert self.ast.theta(self.ast.X() * self.ast.teichmuller_pi()).is_zero()


class TestFontaineSequence:
    """val(g'(ζ_{p^k})) = k - 1/(p-1)."""

    @pytest.mark.parametrize("p,k,expected", [(3, 1, "1/2"), (2, 2, "1"), (5, 1, "3/4")])
    def test_valuation(self, p, k, expected):
        assert fontaine_sequence_valuations(p, k)["g_prime_valuation"] == expected

    def test_depth_must_be_positive(self):
        with pytest.raises(ModelUnavailable):
            fontaine_sequence_valuations(3, 0)
