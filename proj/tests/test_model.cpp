#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ioncav/errors.hpp"
#include "ioncav/model.hpp"
#include "ioncav/units.hpp"

using namespace ioncav;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

cavity_qed_params ref() { return cavity_qed_params::reference(); }

lindblad_model emission_ref(int n_max = 1, double beta = 0.0) {
    const auto scheme = level_scheme::yb174();
    micromotion_params mm;
    mm.beta = beta;
    return build_emission_model(ref(), branching_params{}, scheme,
                                transition_table::yb174(scheme), mm, n_max);
}

// sum over channels of <i| L^dag L |i>
double outflow_rate(const lindblad_model& m, int flat,
                    auto&& keep) {
    double rate = 0.0;
    for (const auto& ch : m.channels) {
        if (!keep(ch.tag)) continue;
        rate += (mat(ch.op).col(flat)).squaredNorm();
    }
    return rate;
}

} // namespace

TEST_CASE("reference parameters are mutually consistent", "[model]") {
    const auto p = ref();
    CHECK_THAT(to_2pi_mhz(p.g_bar), WithinAbs(1.6, 1e-12));
    CHECK_THAT(to_2pi_mhz(p.kappa), WithinAbs(25.0, 1e-12));
    CHECK_THAT(to_2pi_mhz(p.gamma), WithinAbs(2.11, 1e-12));
    // excited-state lifetime 1/(2 gamma) must reproduce 37.7 ns
    CHECK_THAT(p.lifetime() * 1e9, WithinAbs(37.7, 0.1));
    CHECK_NOTHROW(p.validate());

    auto bad = p;
    bad.kappa = 0.0;
    CHECK_THROWS_AS(bad.validate(), validation_error);
}

TEST_CASE("branching validation", "[model]") {
    CHECK_NOTHROW(branching_params{}.validate());
    CHECK_THAT(branching_params{}.b_s, WithinAbs(0.982, 1e-15));
    branching_params bad{0.982, 0.02};
    CHECK_THROWS_AS(bad.validate(), validation_error);
}

TEST_CASE("coherent couplings carry the angular-momentum weights", "[model]") {
    const auto m = emission_ref(1);
    const auto& sp = m.space;
    const mat h = mat(m.h0);
    const double g = ref().g_bar;

    const int e_m = sp.scheme().index_of(state_kind::e_level, -0.5);
    const int e_p = sp.scheme().index_of(state_kind::e_level, 0.5);
    const int d_33 = sp.scheme().index_of(state_kind::d_level, -1.5);
    const int d_1 = sp.scheme().index_of(state_kind::d_level, 0.5);

    CHECK(is_hermitian(h, 1e-9));
    // strongest transition couples at g_bar, its partner at g_bar/sqrt(3)
    CHECK_THAT(std::abs(h(sp.flat_index(d_33, 1, 0), sp.flat_index(e_m, 0, 0))),
               WithinRel(g, 1e-12));
    CHECK_THAT(std::abs(h(sp.flat_index(d_1, 0, 1), sp.flat_index(e_m, 0, 0))),
               WithinRel(g / std::sqrt(3.0), 1e-12));
    // mirrored weights for the other excited sublevel
    CHECK_THAT(std::abs(h(sp.flat_index(sp.scheme().index_of(state_kind::d_level, 1.5), 0, 1),
                          sp.flat_index(e_p, 0, 0))),
               WithinRel(g, 1e-12));
    // no pi-polarized cavity coupling: d[-1/2] never acquires a photon coherently
    CHECK_THAT(std::abs(h(sp.flat_index(sp.scheme().index_of(state_kind::d_level, -0.5), 1, 0),
                          sp.flat_index(e_m, 0, 0))),
               WithinAbs(0.0, 1e-15));

    // decoupled ion: no coherent term at all (zero shifts, no drive)
    auto params = ref();
    params.g_bar = 0.0;
    const auto scheme = level_scheme::yb174();
    const auto m0 = build_emission_model(params, branching_params{}, scheme,
                                         transition_table::yb174(scheme), {}, 1);
    CHECK(mat(m0.h0).norm() == 0.0);
}

TEST_CASE("cavity decay splits by the mirror budget", "[model]") {
    const auto m = emission_ref(1);
    const auto& sp = m.space;
    const double two_kappa = 2.0 * ref().kappa;

    for (pol p : {pol::sigma_plus, pol::sigma_minus}) {
        const int flat = (p == pol::sigma_plus) ? sp.flat_index(0, 1, 0) : sp.flat_index(0, 0, 1);
        const auto is_cavity = [&](const channel_tag& t) {
            return (t.kind == channel_kind::mirror_ht || t.kind == channel_kind::mirror_lt ||
                    t.kind == channel_kind::cavity_loss) &&
                   t.p == p;
        };
        // per polarization the three cavity channels add up to the full 2 kappa
        CHECK_THAT(outflow_rate(m, flat, is_cavity), WithinRel(two_kappa, 1e-12));
        // split proportional to (t_ht : t_lt : loss) = (100 : 10 : 200)
        const auto only = [&](channel_kind k) {
            return [&, k](const channel_tag& t) { return t.kind == k && t.p == p; };
        };
        CHECK_THAT(outflow_rate(m, flat, only(channel_kind::mirror_ht)),
                   WithinRel(two_kappa * 100.0 / 310.0, 1e-12));
        CHECK_THAT(outflow_rate(m, flat, only(channel_kind::mirror_lt)),
                   WithinRel(two_kappa * 10.0 / 310.0, 1e-12));
        CHECK_THAT(outflow_rate(m, flat, only(channel_kind::cavity_loss)),
                   WithinRel(two_kappa * 200.0 / 310.0, 1e-12));
    }
}

TEST_CASE("free-space decay totals 2 gamma from each excited sublevel", "[model]") {
    const auto m = emission_ref(1);
    const auto& sp = m.space;
    const double two_gamma = 2.0 * ref().gamma;
    const auto spont = [](const channel_tag& t) {
        return t.kind == channel_kind::spont_to_sink || t.kind == channel_kind::spont_to_d;
    };
    for (int e : sp.scheme().e_indices()) {
        CHECK_THAT(outflow_rate(m, sp.flat_index(e, 0, 0), spont), WithinRel(two_gamma, 1e-12));
        // branching split
        const auto to_sink = [](const channel_tag& t) {
            return t.kind == channel_kind::spont_to_sink;
        };
        CHECK_THAT(outflow_rate(m, sp.flat_index(e, 0, 0), to_sink),
                   WithinRel(two_gamma * 0.982, 1e-12));
    }
    // single sigma+ decay channel of e[-1/2]: weight 1/2 of the D branch
    const int e_m = sp.scheme().index_of(state_kind::e_level, -0.5);
    const auto sigma_plus_d = [](const channel_tag& t) {
        return t.kind == channel_kind::spont_to_d && t.p == pol::sigma_plus;
    };
    CHECK_THAT(outflow_rate(m, sp.flat_index(e_m, 0, 0), sigma_plus_d),
               WithinRel(two_gamma * 0.018 * 0.5, 1e-12));
}

TEST_CASE("the sink level has no outgoing atomic coupling", "[model]") {
    const auto m = emission_ref(1);
    const auto& sp = m.space;
    const int s = sp.scheme().sink_index();
    for (const auto& ch : m.channels) {
        if (ch.tag.kind == channel_kind::mirror_ht || ch.tag.kind == channel_kind::mirror_lt ||
            ch.tag.kind == channel_kind::cavity_loss)
            continue; // photon decay acts regardless of the atomic state
        CHECK((mat(ch.op) * sp.basis_state(s, 1, 0)).norm() == 0.0);
        CHECK((mat(ch.op) * sp.basis_state(s, 0, 0)).norm() == 0.0);
    }
    // and the Hamiltonian never moves population out of the sink
    CHECK((mat(m.h0) * sp.basis_state(s, 0, 0)).norm() == 0.0);
}

TEST_CASE("micromotion switches the model time dependence", "[model]") {
    const auto still = emission_ref(1, 0.0);
    CHECK_FALSE(still.time_dependent());

    const auto moving = emission_ref(1, 1.0);
    CHECK(moving.time_dependent());
    CHECK_THAT(moving.mod_amplitude, WithinRel(1.0 * rad_from_2pi_mhz(22.0), 1e-12));
    // modulation shifts only the excited manifold
    const mat hm = mat(moving.h_mod);
    const auto& sp = moving.space;
    CHECK_THAT(hm(sp.flat_index(4, 0, 0), sp.flat_index(4, 0, 0)).real(), WithinAbs(1.0, 1e-15));
    CHECK_THAT(hm(sp.flat_index(0, 0, 0), sp.flat_index(0, 0, 0)).real(), WithinAbs(0.0, 1e-15));
    // integrator step cap resolves the modulation period
    CHECK(moving.suggested_max_step() <= (two_pi / moving.mod_omega) / 20.0 + 1e-18);
    // decay budget is untouched by the modulation
    const double out_still = mat(still.sum_ldl())(sp.flat_index(4, 0, 0), sp.flat_index(4, 0, 0)).real();
    const double out_moving =
        mat(moving.sum_ldl())(sp.flat_index(4, 0, 0), sp.flat_index(4, 0, 0)).real();
    CHECK_THAT(out_moving, WithinRel(out_still, 1e-13));
}

TEST_CASE("drive polarization follows the waveplate angle", "[model]") {
    const auto scheme = level_scheme::yb174();
    const auto table = transition_table::yb174(scheme);
    drive_params drive;
    drive.amplitude = 0.01 * ref().kappa;

    const auto at = [&](double theta) {
        drive.waveplate_angle_deg = theta;
        return build_absorption_model(ref(), branching_params{}, scheme, table, drive, {}, 1);
    };

    const auto& sp = at(5.0).model.space;
    const auto drive_entry = [&](const lindblad_model& m, pol p) {
        const int row = (p == pol::sigma_plus) ? sp.flat_index(6, 1, 0) : sp.flat_index(6, 0, 1);
        return std::abs(mat(m.h0)(row, sp.flat_index(6, 0, 0)));
    };

    // 5 deg: pure sigma+; 50 deg: pure sigma-; 27.5 deg: balanced
    auto b = at(5.0);
    CHECK_THAT(drive_entry(b.model, pol::sigma_plus), WithinRel(drive.amplitude, 1e-12));
    CHECK_THAT(drive_entry(b.model, pol::sigma_minus), WithinAbs(0.0, 1e-15));
    b = at(50.0);
    CHECK_THAT(drive_entry(b.model, pol::sigma_plus), WithinAbs(0.0, 1e-12));
    CHECK_THAT(drive_entry(b.model, pol::sigma_minus), WithinRel(drive.amplitude, 1e-12));
    b = at(27.5);
    CHECK_THAT(drive_entry(b.model, pol::sigma_plus),
               WithinRel(drive.amplitude / std::sqrt(2.0), 1e-12));
    CHECK_THAT(drive_entry(b.model, pol::sigma_minus),
               WithinRel(drive.amplitude / std::sqrt(2.0), 1e-12));

    // drive intensities repeat every 90 degrees
    for (double theta : {0.0, 13.0, 41.0, 77.5}) {
        const auto a1 = at(theta), a2 = at(theta + 90.0);
        for (pol p : {pol::sigma_plus, pol::sigma_minus})
            CHECK_THAT(drive_entry(a1.model, p), WithinRel(drive_entry(a2.model, p), 1e-12) || WithinAbs(0.0, 1e-9));
    }

    // weak-drive bookkeeping
    CHECK_THAT(at(5.0).n_empty, WithinRel(std::pow(drive.amplitude / ref().kappa, 2.0), 1e-12));
    CHECK_FALSE(at(5.0).weak_drive_warning);
    drive.amplitude = 2.0 * ref().kappa;
    CHECK(at(5.0).weak_drive_warning);
}

TEST_CASE("drive calibration reproduces the in-coupling convention", "[model]") {
    // flux through all cavity channels of the empty resonant cavity,
    // 2 kappa (eta/kappa)^2, must equal eta_in * photon input rate
    const double kappa = ref().kappa;
    const double r_in = 3.2e5; // photons/s
    const double eta_in = 0.80;
    const double eta = drive_amplitude_for_input_rate(r_in, kappa, eta_in);
    CHECK_THAT(2.0 * kappa * std::pow(eta / kappa, 2.0), WithinRel(eta_in * r_in, 1e-12));
}

TEST_CASE("excitation transfer map", "[model]") {
    const auto scheme = level_scheme::yb174();
    const auto table = transition_table::yb174(scheme);
    const hilbert_space sp(scheme, 1);
    const mat u = instantaneous_excitation(sp, table, pi); // pulse area pi

    // prepared sublevel transfers completely to the target excited state
    const vec from_prep = u * sp.basis_state(0, 0, 0);
    CHECK_THAT(atomic_population(from_prep, sp, 4), WithinAbs(1.0, 1e-12));

    // the same beam drives the neighboring sublevel at 1/sqrt(3) the rate
    const vec from_res = u * sp.basis_state(1, 0, 0);
    const double expected = std::pow(std::sin(pi / (2.0 * std::sqrt(3.0))), 2.0);
    CHECK_THAT(atomic_population(from_res, sp, 5), WithinAbs(expected, 1e-12));

    // sublevels with no sigma+ partner are untouched
    CHECK_THAT(atomic_population(vec(u * sp.basis_state(2, 0, 0)), sp, 2), WithinAbs(1.0, 1e-12));
    CHECK_THAT(atomic_population(vec(u * sp.basis_state(3, 0, 0)), sp, 3), WithinAbs(1.0, 1e-12));

    // half-area pulse leaves an equal superposition
    const mat u_half = instantaneous_excitation(sp, table, pi / 2.0);
    CHECK_THAT(atomic_population(vec(u_half * sp.basis_state(0, 0, 0)), sp, 4), WithinAbs(0.5, 1e-12));

    // unitarity
    CHECK((u.adjoint() * u - mat::Identity(sp.dim(), sp.dim())).norm() < 1e-12);
}

TEST_CASE("square pulse term", "[model]") {
    const auto scheme = level_scheme::yb174();
    const auto table = transition_table::yb174(scheme);
    const hilbert_space sp(scheme, 1);
    const auto p = excitation_pulse(sp, table, seconds_from_ns(2.7));
    CHECK_THAT(p.rabi_rate * p.duration, WithinRel(pi, 1e-12)); // default area pi
    const mat op = mat(p.op);
    CHECK(is_hermitian(op, 1e-12));
    CHECK_THAT(std::abs(op(sp.flat_index(4, 0, 0), sp.flat_index(0, 0, 0))), WithinAbs(1.0, 1e-13));
    CHECK_THAT(std::abs(op(sp.flat_index(5, 0, 0), sp.flat_index(1, 0, 0))),
               WithinAbs(1.0 / std::sqrt(3.0), 1e-13));
}

TEST_CASE("preparation distribution", "[model]") {
    preparation_params prep;
    const auto d = prep.d_distribution();
    CHECK_THAT(d[0], WithinAbs(0.9, 1e-15));
    CHECK_THAT(d[1] + d[2] + d[3], WithinAbs(0.1, 1e-12));
    CHECK_NOTHROW(prep.validate());

    preparation_params bad;
    bad.fidelity = 0.9;
    bad.residual = {0.2, 0.2, 0.2};
    CHECK_THROWS_AS(bad.validate(), validation_error);

    preparation_params ideal;
    ideal.fidelity = 1.0;
    ideal.residual = {0.0, 0.0, 0.0};
    CHECK_NOTHROW(ideal.validate());
    CHECK_THAT(ideal.d_distribution()[0], WithinAbs(1.0, 1e-15));
}
