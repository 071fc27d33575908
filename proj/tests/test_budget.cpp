#include <catch2/catch_amalgamated.hpp>

#include "ioncav/budget.hpp"
#include "ioncav/errors.hpp"
#include "ioncav/rng.hpp"
#include "ioncav/units.hpp"

using namespace ioncav;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

// Golden values for the closed-form efficiency budget. Each number is frozen
// from the defining formula evaluated by hand; tolerances are the acceptance
// bands of the published system values they must reproduce.

TEST_CASE("cooperativity from (g_obs, kappa, gamma)", "[budget]") {
    const double g = rad_from_2pi_mhz(1.8);
    const double kappa = rad_from_2pi_mhz(25.0);
    const double gamma = rad_from_2pi_mhz(2.11);
    const double c0 = budget::cooperativity(g, kappa, gamma);
    CHECK_THAT(c0, WithinAbs(0.0307109004739336, 1e-12)); // 1.8^2/(2*25*2.11)
    CHECK_THAT(c0, WithinAbs(0.0307, 5e-4));
    // unit independence: 2pi cancels
    CHECK_THAT(budget::cooperativity(1.8, 25.0, 2.11), WithinRel(c0, 1e-13));
}

TEST_CASE("emission probability into the mode", "[budget]") {
    CHECK_THAT(budget::emission_probability(0.032), WithinAbs(0.0601503759398496, 1e-12));
    CHECK_THAT(budget::emission_probability(0.032), WithinAbs(0.0602, 1e-4));
    CHECK(budget::emission_probability(0.0) == 0.0);
    // monotone, bounded by 1
    double prev = 0.0;
    for (double c : {0.01, 0.1, 1.0, 10.0, 1e4}) {
        const double p = budget::emission_probability(c);
        CHECK(p > prev);
        CHECK(p < 1.0);
        prev = p;
    }
}

TEST_CASE("detected fraction per excitation", "[budget]") {
    const budget::efficiency_chain chain{}; // 0.32, 0.90, 0.75, 0.25
    const double eta = budget::detection_chain(0.0602, chain);
    CHECK_THAT(eta, WithinAbs(0.0032508, 1e-10));
    CHECK_THAT(eta, WithinAbs(0.0033, 2e-4)); // 0.33% +- 0.02 pp
    CHECK(eta < 0.0602);
}

TEST_CASE("fraction emitted into the fiber", "[budget]") {
    const double eta_fiber = budget::fiber_emission(0.0602, 0.32, 0.90);
    CHECK_THAT(eta_fiber, WithinAbs(0.0173376, 1e-10));
    CHECK_THAT(eta_fiber, WithinAbs(0.018, 1e-3)); // 1.8% +- 0.1 pp
}

TEST_CASE("mirror out-coupling and in-coupling", "[budget]") {
    const budget::mirror_budget m{100.0, 10.0, 200.0};
    const double eta_ht = budget::mirror_outcoupling(m);
    CHECK_THAT(eta_ht, WithinAbs(0.3225806451612903, 1e-12)); // 100/310
    CHECK_THAT(eta_ht, WithinAbs(0.3226, 1e-4));

    const double eta_in = budget::ideal_incoupling(m);
    CHECK_THAT(eta_in, WithinAbs(0.8740894901144641, 1e-12)); // 1-(110/310)^2
    CHECK_THAT(eta_in, WithinAbs(0.874, 1e-3));

    // impedance-matched cavity couples perfectly
    CHECK_THAT(budget::ideal_incoupling({210.0, 10.0, 200.0}), WithinAbs(1.0, 1e-12));

    // out-coupling fractions of one polarization add to 1
    const double f_ht = 100.0 / 310.0, f_lt = 10.0 / 310.0, f_loss = 200.0 / 310.0;
    CHECK_THAT(f_ht + f_lt + f_loss, WithinAbs(1.0, 1e-15));
}

TEST_CASE("mode matching from measured vs ideal in-coupling", "[budget]") {
    const double eps = budget::mode_matching(0.80, 0.8740894901144641);
    CHECK_THAT(eps, WithinAbs(0.9152380952380953, 1e-12));
    CHECK_THAT(eps, WithinAbs(0.915, 1e-3));
}

TEST_CASE("coupling on the strongest transition from the observed coupling", "[budget]") {
    const double g_bar = budget::g_bar_from_observed(rad_from_2pi_mhz(1.8));
    CHECK_THAT(to_2pi_mhz(g_bar), WithinAbs(1.5588457268119895, 1e-9));
    CHECK_THAT(to_2pi_mhz(g_bar), WithinAbs(1.559, 1e-3));
}

TEST_CASE("inverse chain: total efficiency back to cooperativity", "[budget]") {
    const budget::efficiency_chain chain{};
    const auto inv = budget::invert_detection_chain(0.0033, chain, rad_from_2pi_mhz(25.0),
                                                    rad_from_2pi_mhz(2.11));
    CHECK_THAT(inv.p_emit, WithinAbs(0.0611111111111111, 1e-10));
    CHECK_THAT(inv.c0, WithinAbs(0.0325443786982248, 1e-10)); // 11/338
    CHECK_THAT(inv.c0, WithinAbs(0.0325, 5e-4));
    CHECK_THAT(to_2pi_mhz(inv.g_obs), WithinAbs(1.85295, 1e-4));
}

TEST_CASE("forward and inverse chains are mutually inverse", "[budget]") {
    const double kappa = rad_from_2pi_mhz(25.0), gamma = rad_from_2pi_mhz(2.11);
    rng r(20260819);
    for (int i = 0; i < 200; ++i) {
        const budget::efficiency_chain chain{0.1 + 0.8 * r.uniform(), 0.1 + 0.8 * r.uniform(),
                                             0.1 + 0.8 * r.uniform(), 0.1 + 0.8 * r.uniform()};
        const double c0 = 1e-3 + 0.3 * r.uniform();
        const double eta = budget::detection_chain(budget::emission_probability(c0), chain);
        const auto inv = budget::invert_detection_chain(eta, chain, kappa, gamma);
        REQUIRE_THAT(inv.c0, WithinRel(c0, 1e-12));
        REQUIRE_THAT(inv.g_obs, WithinRel(std::sqrt(2.0 * c0 * kappa * gamma), 1e-12));
    }
}

TEST_CASE("cavity linewidth from finesse and geometry", "[budget]") {
    const double kappa = budget::kappa_from_geometry(2.0e4, 170e-6);
    CHECK_THAT(to_2pi_mhz(kappa), WithinAbs(22.0435630882353, 1e-6));
    CHECK_THAT(to_2pi_mhz(kappa), WithinAbs(22.1, 0.1));
}

TEST_CASE("branching to the ground state under cavity enhancement", "[budget]") {
    const double b = budget::purcell_branching(0.982, 0.032);
    CHECK_THAT(b, WithinAbs(0.9229323308270677, 1e-12)); // 0.982/1.064
    CHECK_THAT(b, WithinAbs(0.923, 1e-3));
    // enhancement can only lower the free-space branching fraction
    CHECK(b < 0.982);
}

TEST_CASE("single-photon absorption chain", "[budget]") {
    const budget::absorption_factors f{}; // 0.91, 0.75, 0.9, 0.8
    const double p1 = budget::absorption_chain(0.032, f, 1.0);
    CHECK_THAT(p1, WithinAbs(0.0314496, 1e-10));
    CHECK_THAT(p1, WithinAbs(0.031, 1e-3)); // 3.1% +- 0.1 pp
    const double p2 = budget::absorption_chain(0.032, f, 0.58);
    CHECK_THAT(p2, WithinAbs(0.018240768, 1e-10));
    CHECK_THAT(p2, WithinAbs(0.018, 3e-3)); // 1.8% +- 0.3 pp
}

TEST_CASE("budget functions reject out-of-domain inputs", "[budget]") {
    CHECK_THROWS_AS(budget::cooperativity(-1.0, 1.0, 1.0), validation_error);
    CHECK_THROWS_AS(budget::cooperativity(1.0, 0.0, 1.0), validation_error);
    CHECK_THROWS_AS(budget::emission_probability(-0.1), validation_error);
    CHECK_THROWS_AS(budget::detection_chain(1.2, budget::efficiency_chain{}), validation_error);
    CHECK_THROWS_AS(budget::detection_chain(0.05, budget::efficiency_chain{0.0, 0.9, 0.75, 0.25}),
                    validation_error);
    CHECK_THROWS_AS(budget::mirror_outcoupling({0.0, 0.0, 0.0}), validation_error);
    CHECK_THROWS_AS(budget::mode_matching(0.9, 0.8), validation_error); // measured > ideal
    // efficiency product 0.054: eta_total >= 0.054 would need p_emit >= 1
    CHECK_THROWS_AS(budget::invert_detection_chain(0.06, budget::efficiency_chain{}, 1.0, 1.0),
                    validation_error);
    CHECK_THROWS_AS(budget::kappa_from_geometry(0.0, 170e-6), validation_error);
    CHECK_THROWS_AS(budget::purcell_branching(1.2, 0.032), validation_error);
    CHECK_THROWS_AS(budget::absorption_chain(0.032, budget::absorption_factors{}, -0.5),
                    validation_error);
}
