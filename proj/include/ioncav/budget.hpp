#pragma once

// Closed-form efficiency budget of the ion-cavity interface: every factor
// between "excitation of the ion" and "click behind the fiber" as an explicit
// function, plus the inverse chain used to deduce the cooperativity from a
// measured total efficiency. Pure arithmetic, no simulation state.

#include <cmath>
#include <string>
#include <vector>

#include "ioncav/errors.hpp"
#include "ioncav/units.hpp"

namespace ioncav::budget {

namespace detail {
inline void require(bool ok, std::vector<std::string>& v, const std::string& msg) {
    if (!ok) v.push_back(msg);
}
inline void finish(std::vector<std::string>& v) {
    if (!v.empty()) throw validation_error(std::move(v));
}
inline void check_prob(double p, const char* name, std::vector<std::string>& v) {
    require(p > 0.0 && p <= 1.0, v, std::string(name) + " must be in (0, 1]");
}
} // namespace detail

// Mirror power budget per round trip, in ppm: transmission of the
// high-transmission (fiber-side) mirror, of the low-transmission mirror,
// and all other intracavity losses.
struct mirror_budget {
    double t_ht_ppm = 100.0;
    double t_lt_ppm = 10.0;
    double loss_ppm = 200.0;

    double total_ppm() const { return t_ht_ppm + t_lt_ppm + loss_ppm; }

    void validate() const {
        std::vector<std::string> v;
        detail::require(t_ht_ppm > 0.0, v, "mirror_budget.t_ht_ppm must be > 0");
        detail::require(t_lt_ppm >= 0.0, v, "mirror_budget.t_lt_ppm must be >= 0");
        detail::require(loss_ppm >= 0.0, v, "mirror_budget.loss_ppm must be >= 0");
        detail::require(total_ppm() > 0.0, v, "mirror_budget total must be > 0");
        detail::finish(v);
    }
};

// Efficiency factors between emission into the mode and a detector click.
struct efficiency_chain {
    double eta_mirror = 0.32; // photon leaves through the HT mirror
    double eps_mode = 0.90;   // cavity-to-fiber mode overlap
    double eta_path = 0.75;   // optical path transmission
    double eta_det = 0.25;    // detector quantum efficiency

    void validate() const {
        std::vector<std::string> v;
        detail::check_prob(eta_mirror, "efficiency_chain.eta_mirror", v);
        detail::check_prob(eps_mode, "efficiency_chain.eps_mode", v);
        detail::check_prob(eta_path, "efficiency_chain.eta_path", v);
        detail::check_prob(eta_det, "efficiency_chain.eta_det", v);
        detail::finish(v);
    }

    double product() const { return eta_mirror * eps_mode * eta_path * eta_det; }
};

// C0 = g^2 / (2 kappa gamma); any consistent angular-rate unit.
inline double cooperativity(double g, double kappa, double gamma) {
    std::vector<std::string> v;
    detail::require(g >= 0.0, v, "cooperativity: g must be >= 0");
    detail::require(kappa > 0.0, v, "cooperativity: kappa must be > 0");
    detail::require(gamma > 0.0, v, "cooperativity: gamma must be > 0");
    detail::finish(v);
    return g * g / (2.0 * kappa * gamma);
}

// Probability that one excitation emits a photon into the cavity mode:
// p = 2C0 / (2C0 + 1).
inline double emission_probability(double c0) {
    if (c0 < 0.0) throw validation_error("emission_probability: c0 must be >= 0");
    return 2.0 * c0 / (2.0 * c0 + 1.0);
}

// Detected fraction per excitation: p_emit * eta_mirror * eps_mode * eta_path * eta_det.
inline double detection_chain(double p_emit, const efficiency_chain& chain) {
    std::vector<std::string> v;
    detail::require(p_emit >= 0.0 && p_emit <= 1.0, v,
                    "detection_chain: p_emit must be in [0, 1]");
    detail::finish(v);
    chain.validate();
    return p_emit * chain.product();
}

// Fraction of excitations that puts a photon into the fiber mode:
// p_emit * eta_mirror * eps_mode.
inline double fiber_emission(double p_emit, double eta_mirror, double eps_mode) {
    std::vector<std::string> v;
    detail::require(p_emit >= 0.0 && p_emit <= 1.0, v, "fiber_emission: p_emit must be in [0, 1]");
    detail::check_prob(eta_mirror, "fiber_emission: eta_mirror", v);
    detail::check_prob(eps_mode, "fiber_emission: eps_mode", v);
    detail::finish(v);
    return p_emit * eta_mirror * eps_mode;
}

// Probability that an intracavity photon leaves through the HT mirror.
inline double mirror_outcoupling(const mirror_budget& m) {
    m.validate();
    return m.t_ht_ppm / m.total_ppm();
}

// In-coupling efficiency of a mode-matched beam on resonance:
// 1 - ((t_ht - t_lt - loss) / (t_ht + t_lt + loss))^2.
inline double ideal_incoupling(const mirror_budget& m) {
    m.validate();
    const double r = (m.t_ht_ppm - m.t_lt_ppm - m.loss_ppm) / m.total_ppm();
    return 1.0 - r * r;
}

// Spatial mode overlap deduced from measured vs ideal in-coupling.
inline double mode_matching(double eta_in_measured, double eta_in_ideal) {
    std::vector<std::string> v;
    detail::check_prob(eta_in_ideal, "mode_matching: eta_in_ideal", v);
    detail::require(eta_in_measured > 0.0, v, "mode_matching: eta_in_measured must be > 0");
    detail::require(eta_in_measured <= eta_in_ideal + 1e-12, v,
                    "mode_matching: measured in-coupling exceeds the ideal value");
    detail::finish(v);
    return eta_in_measured / eta_in_ideal;
}

// The observed coupling averages over the two polarization channels of the
// emitting transition; the strongest single transition couples at
// g_bar = sqrt(3/4) * g_obs.
inline double g_bar_from_observed(double g_obs) {
    if (g_obs < 0.0) throw validation_error("g_bar_from_observed: g_obs must be >= 0");
    return std::sqrt(0.75) * g_obs;
}

struct inversion_result {
    double p_emit = 0.0;
    double c0 = 0.0;
    double g_obs = 0.0; // rad/s when kappa, gamma are rad/s
};

// Invert the detection chain: measured total efficiency -> emission
// probability -> cooperativity -> observed coupling.
inline inversion_result invert_detection_chain(double eta_total, const efficiency_chain& chain,
                                               double kappa, double gamma) {
    chain.validate();
    std::vector<std::string> v;
    detail::require(eta_total > 0.0, v, "invert_detection_chain: eta_total must be > 0");
    detail::require(kappa > 0.0, v, "invert_detection_chain: kappa must be > 0");
    detail::require(gamma > 0.0, v, "invert_detection_chain: gamma must be > 0");
    detail::finish(v);
    inversion_result r;
    r.p_emit = eta_total / chain.product();
    if (r.p_emit >= 1.0)
        throw validation_error(
            "invert_detection_chain: eta_total implies emission probability >= 1");
    r.c0 = r.p_emit / (2.0 * (1.0 - r.p_emit));
    r.g_obs = std::sqrt(2.0 * r.c0 * kappa * gamma);
    return r;
}

// Field decay rate of a two-mirror cavity: kappa = 2 pi c / (4 L F), rad/s.
inline double kappa_from_geometry(double finesse, double length_m) {
    std::vector<std::string> v;
    detail::require(finesse > 0.0, v, "kappa_from_geometry: finesse must be > 0");
    detail::require(length_m > 0.0, v, "kappa_from_geometry: length_m must be > 0");
    detail::finish(v);
    return 2.0 * pi * speed_of_light / (4.0 * length_m * finesse);
}

// Branching into the ground state with the cavity channel open:
// b_s / (1 + 2C0). The cavity adds a decay channel to the metastable
// manifold, so the value is slightly below the free-space branching b_s.
inline double purcell_branching(double b_s, double c0) {
    std::vector<std::string> v;
    detail::check_prob(b_s, "purcell_branching: b_s", v);
    detail::require(c0 >= 0.0, v, "purcell_branching: c0 must be >= 0");
    detail::finish(v);
    return b_s / (1.0 + 2.0 * c0);
}

// Factors of the single-photon absorption chain.
struct absorption_factors {
    double branching = 0.91;  // excitation ends in the ground state
    double cg_weight = 0.75;  // coupling weight of the addressed transition
    double prep = 0.9;        // initial-state preparation fidelity
    double incoupling = 0.8;  // measured cavity in-coupling

    void validate() const {
        std::vector<std::string> v;
        detail::check_prob(branching, "absorption_factors.branching", v);
        detail::check_prob(cg_weight, "absorption_factors.cg_weight", v);
        detail::check_prob(prep, "absorption_factors.prep", v);
        detail::check_prob(incoupling, "absorption_factors.incoupling", v);
        detail::finish(v);
    }
};

// p_abs = 2C0 * branching * cg_weight * prep * incoupling * reduction.
// `micromotion_reduction` rescales for residual ion motion (1 = none).
inline double absorption_chain(double c0, const absorption_factors& f,
                               double micromotion_reduction = 1.0) {
    f.validate();
    std::vector<std::string> v;
    detail::require(c0 >= 0.0, v, "absorption_chain: c0 must be >= 0");
    detail::require(micromotion_reduction >= 0.0 && micromotion_reduction <= 1.0, v,
                    "absorption_chain: micromotion_reduction must be in [0, 1]");
    detail::finish(v);
    return 2.0 * c0 * f.branching * f.cg_weight * f.prep * f.incoupling * micromotion_reduction;
}

} // namespace ioncav::budget
