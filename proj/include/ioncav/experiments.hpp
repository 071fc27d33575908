#pragma once

// Declarative experiment runner: a versioned JSON config describes one
// protocol replica; running it produces CSV/JSON artifacts plus a manifest
// with a config snapshot and per-output checksums. Same config + same seed
// reproduces byte-identical CSV and result bodies.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ioncav/budget.hpp"
#include "ioncav/errors.hpp"
#include "ioncav/fits.hpp"
#include "ioncav/io.hpp"
#include "ioncav/master_equation.hpp"
#include "ioncav/model.hpp"
#include "ioncav/observables.hpp"
#include "ioncav/rng.hpp"
#include "ioncav/trajectories.hpp"
#include "ioncav/units.hpp"
#include "ioncav/version.hpp"

namespace ioncav {

enum class experiment_kind {
    emit_histogram,
    g2,
    spin_photon,
    absorption_sweep,
    saturation_curve,
    budget_report,
};

inline std::string to_string(experiment_kind k) {
    switch (k) {
    case experiment_kind::emit_histogram: return "emit_histogram";
    case experiment_kind::g2: return "g2";
    case experiment_kind::spin_photon: return "spin_photon";
    case experiment_kind::absorption_sweep: return "absorption_sweep";
    case experiment_kind::saturation_curve: return "saturation_curve";
    case experiment_kind::budget_report: return "budget_report";
    }
    throw validation_error("unknown experiment kind");
}

inline std::optional<experiment_kind> experiment_from_string(std::string_view s) {
    for (auto k : {experiment_kind::emit_histogram, experiment_kind::g2,
                   experiment_kind::spin_photon, experiment_kind::absorption_sweep,
                   experiment_kind::saturation_curve, experiment_kind::budget_report})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

struct system_config {
    double g_bar_2pi_mhz = 1.6;
    double kappa_2pi_mhz = 25.0;
    double gamma_2pi_mhz = 2.11;
    double mirror_ht_ppm = 100.0;
    double mirror_lt_ppm = 10.0;
    double mirror_loss_ppm = 200.0;
    double branching_sink = 0.982;
    double branching_d = 0.018;
    double rf_frequency_2pi_mhz = 22.0;
    double micromotion_beta = 0.0;
};

struct geometry_config {
    double finesse = 2.0e4;
    double length_um = 170.0;
};

struct preparation_config {
    double fidelity = 0.9;
    std::array<double, 3> residual = {1.0 / 30.0, 1.0 / 30.0, 1.0 / 30.0};
};

struct detection_config {
    double eta_mirror = 0.32;
    double eps_mode = 0.90;
    double eta_path = 0.75;
    double eta_det = 0.25;
    double background_rate_hz = 0.0;
    double dark_rate_hz = 0.0;
    double pol_mixing = 0.0;
};

struct readout_config {
    double dark_given_down = 0.98;
    double bright_given_up = 0.98;
};

struct protocol_config {
    std::string excitation = "instantaneous"; // or "pulsed"
    double pulse_ns = 2.7;
    double cycle_us = 4.0;
    double t_end_ns = 400.0;
    long long n_trajectories = 10000;
    long long n_cycles = 200000;
    double arrival_lo_ns = 0.0;
    double arrival_hi_ns = 400.0;
    int arrival_bins = 80;
    double fit_start_ns = 25.0;
    double g2_window_lo_ns = 20.0; // measured from the end of the excitation
    double g2_window_hi_ns = 150.0;
    int g2_max_lag = 10;
    double spin_window_lo_ns = 0.0;
    double spin_window_hi_ns = 400.0;
    double probe_us = 170.0;
    double photons_in = 5.0;
    double input_coupling = 0.8;
    double detuning_2pi_mhz = 0.0;
    std::vector<double> waveplate_deg = {5, 20, 35, 50, 65, 80, 95, 110, 125, 140};
    double waveplate_single_deg = 5.0;
    std::vector<double> photon_numbers = {30, 40, 50, 60, 70, 80};
    long long shots_per_point = 2000;
    int n_max_emission = 1;
    int n_max_absorption = 2;
};

namespace detail {

// Reads known keys out of one JSON object, remembering what it consumed so
// unknown fields can be reported by name. Type mismatches are collected, not
// thrown, so one pass reports every problem at once.
struct cfg_reader {
    const nlohmann::json* j;
    std::string prefix;
    std::vector<std::string>* issues;
    std::set<std::string> seen;

    bool has(const char* key) const { return j && j->contains(key); }

    template <typename F>
    void with(const char* key, bool want_ok, const char* type_msg, F&& use) {
        if (!j) return;
        const auto it = j->find(key);
        if (it == j->end()) return;
        seen.insert(key);
        if (!want_ok) {
            issues->push_back(prefix + key + ": " + type_msg);
            return;
        }
        use(*it);
    }

    void num(const char* key, double& out) {
        if (!j) return;
        const auto it = j->find(key);
        if (it == j->end()) return;
        seen.insert(key);
        if (it->is_number()) out = it->get<double>();
        else issues->push_back(prefix + key + ": must be a number");
    }

    void integer(const char* key, long long& out) {
        if (!j) return;
        const auto it = j->find(key);
        if (it == j->end()) return;
        seen.insert(key);
        if (it->is_number_integer()) out = it->get<long long>();
        else issues->push_back(prefix + key + ": must be an integer");
    }

    void integer(const char* key, int& out) {
        long long wide = out;
        integer(key, wide);
        out = int(wide);
    }

    void uinteger(const char* key, std::uint64_t& out, bool& given) {
        if (!j) return;
        const auto it = j->find(key);
        if (it == j->end()) return;
        seen.insert(key);
        if (it->is_number_unsigned() || (it->is_number_integer() && it->get<long long>() >= 0)) {
            out = it->get<std::uint64_t>();
            given = true;
        } else {
            issues->push_back(prefix + key + ": must be a non-negative integer");
        }
    }

    void str(const char* key, std::string& out) {
        if (!j) return;
        const auto it = j->find(key);
        if (it == j->end()) return;
        seen.insert(key);
        if (it->is_string()) out = it->get<std::string>();
        else issues->push_back(prefix + key + ": must be a string");
    }

    void numbers(const char* key, std::vector<double>& out) {
        if (!j) return;
        const auto it = j->find(key);
        if (it == j->end()) return;
        seen.insert(key);
        if (!it->is_array()) {
            issues->push_back(prefix + key + ": must be an array of numbers");
            return;
        }
        std::vector<double> vals;
        for (const auto& e : *it) {
            if (!e.is_number()) {
                issues->push_back(prefix + key + ": must be an array of numbers");
                return;
            }
            vals.push_back(e.get<double>());
        }
        out = std::move(vals);
    }

    void numbers3(const char* key, std::array<double, 3>& out, bool& given) {
        std::vector<double> vals;
        const bool had = has(key);
        numbers(key, vals);
        if (!had) return;
        if (vals.size() == 3) {
            std::copy(vals.begin(), vals.end(), out.begin());
            given = true;
        } else if (!vals.empty() || j->at(key).is_array()) {
            issues->push_back(prefix + key + ": must hold exactly 3 numbers");
        }
    }

    // an object-valued sub-block; returns a reader scoped to it
    cfg_reader block(const char* key) {
        if (!j) return {nullptr, prefix + key + ".", issues, {}};
        const auto it = j->find(key);
        if (it == j->end()) return {nullptr, prefix + key + ".", issues, {}};
        seen.insert(key);
        if (!it->is_object()) {
            issues->push_back(prefix + key + ": must be an object");
            return {nullptr, prefix + key + ".", issues, {}};
        }
        return {&*it, prefix + key + ".", issues, {}};
    }

    // call last: anything not consumed and not documentation is a violation
    void finish() {
        if (!j) return;
        for (const auto& el : j->items())
            if (!seen.count(el.key()) && el.key().rfind("comment", 0) != 0)
                issues->push_back(prefix + el.key() + ": unknown field");
    }
};

inline void check_range(std::vector<std::string>& v, bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
}

} // namespace detail

struct run_config {
    int schema_version = 1;
    std::optional<experiment_kind> experiment;
    std::string output_dir;
    std::uint64_t base_seed = 0;
    bool seed_given = false;
    int threads = 1;
    system_config system;
    geometry_config geometry;
    preparation_config preparation;
    detection_config detection;
    readout_config readout;
    protocol_config protocol;
    std::vector<std::string> parse_issues;

    static run_config from_json(const nlohmann::json& j) {
        run_config c;
        if (!j.is_object()) {
            c.parse_issues.push_back("config: top level must be a JSON object");
            return c;
        }
        detail::cfg_reader root{&j, "", &c.parse_issues, {}};
        long long sv = c.schema_version;
        root.integer("schema_version", sv);
        c.schema_version = int(sv);
        std::string exp_name;
        root.str("experiment", exp_name);
        if (!exp_name.empty()) {
            c.experiment = experiment_from_string(exp_name);
            if (!c.experiment)
                c.parse_issues.push_back("experiment: unknown name '" + exp_name + "'");
        }
        root.str("output_dir", c.output_dir);
        root.uinteger("base_seed", c.base_seed, c.seed_given);
        root.integer("threads", c.threads);

        auto sys = root.block("system");
        sys.num("g_bar_2pi_mhz", c.system.g_bar_2pi_mhz);
        sys.num("kappa_2pi_mhz", c.system.kappa_2pi_mhz);
        sys.num("gamma_2pi_mhz", c.system.gamma_2pi_mhz);
        sys.num("mirror_ht_ppm", c.system.mirror_ht_ppm);
        sys.num("mirror_lt_ppm", c.system.mirror_lt_ppm);
        sys.num("mirror_loss_ppm", c.system.mirror_loss_ppm);
        sys.num("branching_sink", c.system.branching_sink);
        sys.num("branching_d", c.system.branching_d);
        sys.num("rf_frequency_2pi_mhz", c.system.rf_frequency_2pi_mhz);
        sys.num("micromotion_beta", c.system.micromotion_beta);
        sys.finish();

        auto geo = root.block("geometry");
        geo.num("finesse", c.geometry.finesse);
        geo.num("length_um", c.geometry.length_um);
        geo.finish();

        auto prep = root.block("preparation");
        prep.num("fidelity", c.preparation.fidelity);
        bool residual_given = false;
        prep.numbers3("residual", c.preparation.residual, residual_given);
        prep.finish();
        if (!residual_given) {
            // residual population defaults to an even split of what remains
            const double r = (1.0 - c.preparation.fidelity) / 3.0;
            c.preparation.residual = {r, r, r};
        }

        auto det = root.block("detection");
        det.num("eta_mirror", c.detection.eta_mirror);
        det.num("eps_mode", c.detection.eps_mode);
        det.num("eta_path", c.detection.eta_path);
        det.num("eta_det", c.detection.eta_det);
        det.num("background_rate_hz", c.detection.background_rate_hz);
        det.num("dark_rate_hz", c.detection.dark_rate_hz);
        det.num("pol_mixing", c.detection.pol_mixing);
        det.finish();

        auto ro = root.block("readout");
        ro.num("dark_given_down", c.readout.dark_given_down);
        ro.num("bright_given_up", c.readout.bright_given_up);
        ro.finish();

        auto pr = root.block("protocol");
        pr.str("excitation", c.protocol.excitation);
        pr.num("pulse_ns", c.protocol.pulse_ns);
        pr.num("cycle_us", c.protocol.cycle_us);
        pr.num("t_end_ns", c.protocol.t_end_ns);
        pr.integer("n_trajectories", c.protocol.n_trajectories);
        pr.integer("n_cycles", c.protocol.n_cycles);
        pr.num("arrival_lo_ns", c.protocol.arrival_lo_ns);
        pr.num("arrival_hi_ns", c.protocol.arrival_hi_ns);
        pr.integer("arrival_bins", c.protocol.arrival_bins);
        pr.num("fit_start_ns", c.protocol.fit_start_ns);
        pr.num("g2_window_lo_ns", c.protocol.g2_window_lo_ns);
        pr.num("g2_window_hi_ns", c.protocol.g2_window_hi_ns);
        pr.integer("g2_max_lag", c.protocol.g2_max_lag);
        pr.num("spin_window_lo_ns", c.protocol.spin_window_lo_ns);
        pr.num("spin_window_hi_ns", c.protocol.spin_window_hi_ns);
        pr.num("probe_us", c.protocol.probe_us);
        pr.num("photons_in", c.protocol.photons_in);
        pr.num("input_coupling", c.protocol.input_coupling);
        pr.num("detuning_2pi_mhz", c.protocol.detuning_2pi_mhz);
        pr.numbers("waveplate_deg", c.protocol.waveplate_deg);
        pr.num("waveplate_single_deg", c.protocol.waveplate_single_deg);
        pr.numbers("photon_numbers", c.protocol.photon_numbers);
        pr.integer("shots_per_point", c.protocol.shots_per_point);
        pr.integer("n_max_emission", c.protocol.n_max_emission);
        pr.integer("n_max_absorption", c.protocol.n_max_absorption);
        pr.finish();

        root.finish();
        return c;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = schema_version;
        if (experiment) j["experiment"] = to_string(*experiment);
        if (!output_dir.empty()) j["output_dir"] = output_dir;
        j["base_seed"] = base_seed;
        j["threads"] = threads;
        j["system"] = {{"g_bar_2pi_mhz", system.g_bar_2pi_mhz},
                       {"kappa_2pi_mhz", system.kappa_2pi_mhz},
                       {"gamma_2pi_mhz", system.gamma_2pi_mhz},
                       {"mirror_ht_ppm", system.mirror_ht_ppm},
                       {"mirror_lt_ppm", system.mirror_lt_ppm},
                       {"mirror_loss_ppm", system.mirror_loss_ppm},
                       {"branching_sink", system.branching_sink},
                       {"branching_d", system.branching_d},
                       {"rf_frequency_2pi_mhz", system.rf_frequency_2pi_mhz},
                       {"micromotion_beta", system.micromotion_beta}};
        j["geometry"] = {{"finesse", geometry.finesse}, {"length_um", geometry.length_um}};
        j["preparation"] = {{"fidelity", preparation.fidelity},
                            {"residual", preparation.residual}};
        j["detection"] = {{"eta_mirror", detection.eta_mirror},
                          {"eps_mode", detection.eps_mode},
                          {"eta_path", detection.eta_path},
                          {"eta_det", detection.eta_det},
                          {"background_rate_hz", detection.background_rate_hz},
                          {"dark_rate_hz", detection.dark_rate_hz},
                          {"pol_mixing", detection.pol_mixing}};
        j["readout"] = {{"dark_given_down", readout.dark_given_down},
                        {"bright_given_up", readout.bright_given_up}};
        j["protocol"] = {{"excitation", protocol.excitation},
                         {"pulse_ns", protocol.pulse_ns},
                         {"cycle_us", protocol.cycle_us},
                         {"t_end_ns", protocol.t_end_ns},
                         {"n_trajectories", protocol.n_trajectories},
                         {"n_cycles", protocol.n_cycles},
                         {"arrival_lo_ns", protocol.arrival_lo_ns},
                         {"arrival_hi_ns", protocol.arrival_hi_ns},
                         {"arrival_bins", protocol.arrival_bins},
                         {"fit_start_ns", protocol.fit_start_ns},
                         {"g2_window_lo_ns", protocol.g2_window_lo_ns},
                         {"g2_window_hi_ns", protocol.g2_window_hi_ns},
                         {"g2_max_lag", protocol.g2_max_lag},
                         {"spin_window_lo_ns", protocol.spin_window_lo_ns},
                         {"spin_window_hi_ns", protocol.spin_window_hi_ns},
                         {"probe_us", protocol.probe_us},
                         {"photons_in", protocol.photons_in},
                         {"input_coupling", protocol.input_coupling},
                         {"detuning_2pi_mhz", protocol.detuning_2pi_mhz},
                         {"waveplate_deg", protocol.waveplate_deg},
                         {"waveplate_single_deg", protocol.waveplate_single_deg},
                         {"photon_numbers", protocol.photon_numbers},
                         {"shots_per_point", protocol.shots_per_point},
                         {"n_max_emission", protocol.n_max_emission},
                         {"n_max_absorption", protocol.n_max_absorption}};
        return j;
    }

    void validate(experiment_kind kind) const {
        using detail::check_range;
        std::vector<std::string> v = parse_issues;
        check_range(v, schema_version == 1, "schema_version: expected 1");
        if (experiment && *experiment != kind)
            v.push_back("experiment: config names '" + to_string(*experiment) +
                        "' but '" + to_string(kind) + "' was requested");
        if (!seed_given) v.push_back("base_seed: required, runs must be explicitly seeded");
        check_range(v, threads >= 1 && threads <= 256, "threads: must be in [1, 256]");

        check_range(v, system.g_bar_2pi_mhz >= 0.0, "system.g_bar_2pi_mhz: must be >= 0");
        check_range(v, system.kappa_2pi_mhz > 0.0, "system.kappa_2pi_mhz: must be > 0");
        check_range(v, system.gamma_2pi_mhz > 0.0, "system.gamma_2pi_mhz: must be > 0");
        check_range(v, system.mirror_ht_ppm > 0.0, "system.mirror_ht_ppm: must be > 0");
        check_range(v, system.mirror_lt_ppm >= 0.0, "system.mirror_lt_ppm: must be >= 0");
        check_range(v, system.mirror_loss_ppm >= 0.0, "system.mirror_loss_ppm: must be >= 0");
        check_range(v, system.branching_sink > 0.0 && system.branching_sink < 1.0,
                    "system.branching_sink: must be in (0, 1)");
        check_range(v, system.branching_d > 0.0 && system.branching_d < 1.0,
                    "system.branching_d: must be in (0, 1)");
        check_range(v, std::abs(system.branching_sink + system.branching_d - 1.0) <= 1e-9,
                    "system.branching_sink + system.branching_d: must sum to 1");
        check_range(v, system.rf_frequency_2pi_mhz > 0.0,
                    "system.rf_frequency_2pi_mhz: must be > 0");
        check_range(v, system.micromotion_beta >= 0.0, "system.micromotion_beta: must be >= 0");

        check_range(v, geometry.finesse > 0.0, "geometry.finesse: must be > 0");
        check_range(v, geometry.length_um > 0.0, "geometry.length_um: must be > 0");

        check_range(v, preparation.fidelity > 0.0 && preparation.fidelity <= 1.0,
                    "preparation.fidelity: must be in (0, 1]");
        double pop = preparation.fidelity;
        bool res_ok = true;
        for (const double r : preparation.residual) {
            if (r < 0.0) res_ok = false;
            pop += r;
        }
        check_range(v, res_ok, "preparation.residual: entries must be >= 0");
        check_range(v, std::abs(pop - 1.0) <= 1e-9,
                    "preparation: fidelity + residuals must sum to 1");

        const auto prob = [&](double x, const char* name) {
            check_range(v, x >= 0.0 && x <= 1.0, std::string(name) + ": must be in [0, 1]");
        };
        prob(detection.eta_mirror, "detection.eta_mirror");
        prob(detection.eps_mode, "detection.eps_mode");
        prob(detection.eta_path, "detection.eta_path");
        prob(detection.eta_det, "detection.eta_det");
        prob(detection.pol_mixing, "detection.pol_mixing");
        check_range(v, detection.background_rate_hz >= 0.0,
                    "detection.background_rate_hz: must be >= 0");
        check_range(v, detection.dark_rate_hz >= 0.0, "detection.dark_rate_hz: must be >= 0");
        prob(readout.dark_given_down, "readout.dark_given_down");
        prob(readout.bright_given_up, "readout.bright_given_up");

        const auto& p = protocol;
        check_range(v, p.excitation == "instantaneous" || p.excitation == "pulsed",
                    "protocol.excitation: must be 'instantaneous' or 'pulsed'");
        check_range(v, p.pulse_ns > 0.0, "protocol.pulse_ns: must be > 0");
        check_range(v, p.cycle_us > 0.0, "protocol.cycle_us: must be > 0");
        check_range(v, p.t_end_ns > 0.0, "protocol.t_end_ns: must be > 0");
        check_range(v, p.arrival_bins >= 1, "protocol.arrival_bins: must be >= 1");
        check_range(v, p.arrival_hi_ns > p.arrival_lo_ns && p.arrival_lo_ns >= 0.0,
                    "protocol.arrival window: must be a forward interval at t >= 0");
        check_range(v, p.fit_start_ns >= 0.0, "protocol.fit_start_ns: must be >= 0");
        check_range(v, p.g2_window_hi_ns > p.g2_window_lo_ns && p.g2_window_lo_ns >= 0.0,
                    "protocol.g2 window: must be a forward interval at t >= 0");
        check_range(v, p.g2_max_lag >= 1, "protocol.g2_max_lag: must be >= 1");
        check_range(v, p.spin_window_hi_ns > p.spin_window_lo_ns && p.spin_window_lo_ns >= 0.0,
                    "protocol.spin window: must be a forward interval at t >= 0");
        check_range(v, p.probe_us > 0.0, "protocol.probe_us: must be > 0");
        check_range(v, p.photons_in > 0.0, "protocol.photons_in: must be > 0");
        check_range(v, p.input_coupling > 0.0 && p.input_coupling <= 1.0,
                    "protocol.input_coupling: must be in (0, 1]");
        check_range(v, p.n_max_emission >= 1 && p.n_max_emission <= 5,
                    "protocol.n_max_emission: must be in [1, 5]");
        check_range(v, p.n_max_absorption >= 1 && p.n_max_absorption <= 5,
                    "protocol.n_max_absorption: must be in [1, 5]");

        // every observation window must fit inside the repetition cycle
        const double cycle_ns = p.cycle_us * 1000.0;
        const double pulse_len = p.excitation == "pulsed" ? p.pulse_ns : 0.0;
        check_range(v, p.t_end_ns <= cycle_ns, "protocol.t_end_ns: exceeds the cycle");
        check_range(v, p.arrival_hi_ns <= cycle_ns, "protocol.arrival_hi_ns: exceeds the cycle");
        check_range(v, pulse_len + p.g2_window_hi_ns <= cycle_ns,
                    "protocol.g2_window_hi_ns: exceeds the cycle");
        check_range(v, p.spin_window_hi_ns <= cycle_ns,
                    "protocol.spin_window_hi_ns: exceeds the cycle");

        switch (kind) {
        case experiment_kind::emit_histogram:
            check_range(v, p.n_trajectories >= 1, "protocol.n_trajectories: must be >= 1");
            break;
        case experiment_kind::g2:
        case experiment_kind::spin_photon:
            check_range(v, p.n_cycles >= 1, "protocol.n_cycles: must be >= 1");
            break;
        case experiment_kind::absorption_sweep: {
            check_range(v, !p.waveplate_deg.empty(), "protocol.waveplate_deg: must not be empty");
            break;
        }
        case experiment_kind::saturation_curve: {
            check_range(v, !p.photon_numbers.empty(),
                        "protocol.photon_numbers: must not be empty");
            for (const double n : p.photon_numbers)
                if (!(n > 0.0)) {
                    v.push_back("protocol.photon_numbers: entries must be > 0");
                    break;
                }
            check_range(v, p.shots_per_point >= 1, "protocol.shots_per_point: must be >= 1");
            break;
        }
        case experiment_kind::budget_report: break;
        }

        if (!v.empty()) throw validation_error(std::move(v));
    }
};

namespace detail {

inline cavity_qed_params make_params(const run_config& c) {
    cavity_qed_params p;
    p.g_bar = rad_from_2pi_mhz(c.system.g_bar_2pi_mhz);
    p.kappa = rad_from_2pi_mhz(c.system.kappa_2pi_mhz);
    p.gamma = rad_from_2pi_mhz(c.system.gamma_2pi_mhz);
    p.mirrors = {c.system.mirror_ht_ppm, c.system.mirror_lt_ppm, c.system.mirror_loss_ppm};
    return p;
}

inline branching_params make_branching(const run_config& c) {
    return {c.system.branching_sink, c.system.branching_d};
}

inline micromotion_params make_micromotion(const run_config& c) {
    micromotion_params mm;
    mm.omega_rf = rad_from_2pi_mhz(c.system.rf_frequency_2pi_mhz);
    mm.beta = c.system.micromotion_beta;
    return mm;
}

inline preparation_params make_prep(const run_config& c) {
    preparation_params p;
    p.fidelity = c.preparation.fidelity;
    p.residual = c.preparation.residual;
    return p;
}

inline detection_model make_detection(const run_config& c) {
    detection_model d;
    d.eta_mirror = c.detection.eta_mirror;
    d.eps_mode = c.detection.eps_mode;
    d.eta_path = c.detection.eta_path;
    d.eta_det = c.detection.eta_det;
    d.background_rate = c.detection.background_rate_hz;
    d.dark_rate = c.detection.dark_rate_hz;
    d.pol_mixing = c.detection.pol_mixing;
    return d;
}

inline readout_model make_readout(const run_config& c) {
    readout_model r;
    r.dark_given_down = c.readout.dark_given_down;
    r.bright_given_up = c.readout.bright_given_up;
    return r;
}

inline lindblad_model make_emission(const run_config& c, bool pulsed, int n_max) {
    const auto scheme = level_scheme::yb174();
    const auto table = transition_table::yb174(scheme);
    auto m = build_emission_model(make_params(c), make_branching(c), scheme, table,
                                  make_micromotion(c), n_max);
    if (pulsed)
        m.pulse = excitation_pulse(m.space, table, seconds_from_ns(c.protocol.pulse_ns));
    return m;
}

// Prepared D-state mixture; for instantaneous excitation each component is
// rotated through the zero-length pulse unitary before the run starts.
inline std::vector<std::pair<double, vec>> initial_mixture(const lindblad_model& m,
                                                           const run_config& c, bool pulsed) {
    const auto weights = make_prep(c).d_distribution();
    std::vector<std::pair<double, vec>> mix;
    mat u;
    if (!pulsed)
        u = instantaneous_excitation(m.space, transition_table::yb174(m.space.scheme()));
    for (int i = 0; i < 4; ++i) {
        if (weights[std::size_t(i)] <= 0.0) continue;
        vec s = m.space.basis_state(i, 0, 0);
        if (!pulsed) s = vec(u * s);
        mix.emplace_back(weights[std::size_t(i)], s);
    }
    return mix;
}

struct runner_output {
    nlohmann::json result;
    std::vector<std::pair<std::string, std::string>> files; // name -> body
};

inline runner_output run_emit(const run_config& c, std::uint64_t seed) {
    const bool pulsed = c.protocol.excitation == "pulsed";
    const auto m = make_emission(c, pulsed, c.protocol.n_max_emission);
    trajectory_options topt;
    topt.t_end = seconds_from_ns(c.protocol.t_end_ns);
    topt.threads = c.threads;
    const auto batch =
        run_trajectories(m, initial_mixture(m, c, pulsed),
                         std::size_t(c.protocol.n_trajectories), seed, topt);

    std::size_t n_cavity = 0, n_mirror = 0;
    std::uint64_t n_ht = 0;
    for (const auto& tr : batch) {
        bool any_cavity = false, any_mirror = false;
        for (const auto& jp : tr.jumps) {
            const auto kind = m.channels[std::size_t(jp.channel)].tag.kind;
            if (kind == channel_kind::mirror_ht) ++n_ht;
            if (kind == channel_kind::mirror_ht || kind == channel_kind::mirror_lt)
                any_mirror = true;
            if (m.channels[std::size_t(jp.channel)].tag.is_cavity()) any_cavity = true;
        }
        n_cavity += any_cavity;
        n_mirror += any_mirror;
    }

    arrival_options aopt;
    aopt.t_lo = seconds_from_ns(c.protocol.arrival_lo_ns);
    aopt.t_hi = seconds_from_ns(c.protocol.arrival_hi_ns);
    aopt.bins = c.protocol.arrival_bins;
    const histogram h = time_arrival_histogram(m, batch, make_detection(c), aopt, seed);

    csv_builder csv({"bin_start_ns", "bin_end_ns", "counts"});
    std::vector<double> fit_t, fit_y;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        const double lo = ns_from_seconds(h.edges[i]);
        const double hi = ns_from_seconds(h.edges[i + 1]);
        csv.row({lo, hi, double(h.counts[i])});
        const double center = 0.5 * (lo + hi);
        if (center > c.protocol.fit_start_ns) {
            fit_t.push_back(center);
            fit_y.push_back(double(h.counts[i]));
        }
    }

    runner_output out;
    out.result["n_trajectories"] = c.protocol.n_trajectories;
    out.result["cavity_jump_fraction"] = double(n_cavity) / double(batch.size());
    out.result["mirror_jump_fraction"] = double(n_mirror) / double(batch.size());
    out.result["ht_jump_count"] = n_ht;
    out.result["detected_counts"] = h.total();
    try {
        const auto fit = fit_exponential(fit_t, fit_y);
        out.result["tau_fit_ns"] = fit.tau;
        out.result["fit_amplitude"] = fit.amplitude;
    } catch (const fit_error& e) {
        out.result["tau_fit_ns"] = nullptr;
        out.result["fit_note"] = e.what();
    }
    out.files.emplace_back("arrival.csv", std::move(csv.body));
    return out;
}

inline runner_output run_g2(const run_config& c, std::uint64_t seed) {
    const bool pulsed = c.protocol.excitation == "pulsed";
    const auto m = make_emission(c, pulsed, c.protocol.n_max_emission);
    trajectory_options topt;
    topt.t_end = seconds_from_ns(c.protocol.t_end_ns);
    topt.threads = c.threads;
    const auto batch = run_trajectories(m, initial_mixture(m, c, pulsed),
                                        std::size_t(c.protocol.n_cycles), seed, topt);

    const double t0 = pulsed ? seconds_from_ns(c.protocol.pulse_ns) : 0.0;
    g2_options gopt;
    gopt.window_lo = t0 + seconds_from_ns(c.protocol.g2_window_lo_ns);
    gopt.window_hi = t0 + seconds_from_ns(c.protocol.g2_window_hi_ns);
    gopt.max_lag = c.protocol.g2_max_lag;
    const auto g = coincidence_histogram(m, batch, make_detection(c), gopt, seed);

    csv_builder csv({"lag_cycles", "coincidences"});
    double side_sum = 0.0;
    for (int lag = -g.max_lag; lag <= g.max_lag; ++lag) {
        csv.row({double(lag), g.at(lag)});
        if (lag != 0) side_sum += g.at(lag);
    }
    const double n = double(g.n_cycles);
    const double window = gopt.window_hi - gopt.window_lo;
    const double b =
        (c.detection.background_rate_hz + c.detection.dark_rate_hz) * window; // per detector
    const double pa = double(g.clicks_a) / n, pb = double(g.clicks_b) / n;

    runner_output out;
    out.result["n_cycles"] = g.n_cycles;
    out.result["clicks_a"] = g.clicks_a;
    out.result["clicks_b"] = g.clicks_b;
    out.result["zero_lag"] = g.at(0);
    out.result["side_mean"] = side_sum / double(2 * g.max_lag);
    // same-cycle pairs from an ideal single-photon stream are impossible, so
    // the zero-lag expectation is accidentals only: N (b (pa + pb) - b^2)
    out.result["background_per_detector_per_cycle"] = b;
    out.result["accidental_prediction"] = n * (b * (pa + pb) - b * b);
    out.files.emplace_back("g2.csv", std::move(csv.body));
    return out;
}

inline runner_output run_spin(const run_config& c, std::uint64_t seed) {
    const bool pulsed = c.protocol.excitation == "pulsed";
    const auto m = make_emission(c, pulsed, c.protocol.n_max_emission);
    trajectory_options topt;
    topt.t_end = seconds_from_ns(c.protocol.t_end_ns);
    topt.threads = c.threads;
    const auto batch = run_trajectories(m, initial_mixture(m, c, pulsed),
                                        std::size_t(c.protocol.n_cycles), seed, topt);

    spin_photon_options sopt;
    sopt.t_lo = seconds_from_ns(c.protocol.spin_window_lo_ns);
    sopt.t_hi = seconds_from_ns(c.protocol.spin_window_hi_ns);
    const auto s =
        spin_photon_correlation(m, batch, make_detection(c), make_readout(c), sopt, seed);

    const double window = sopt.t_hi - sopt.t_lo;
    const double b = (c.detection.background_rate_hz + c.detection.dark_rate_hz) * window;
    const double bg_expected = double(s.n_cycles) * (1.0 - std::exp(-2.0 * b));
    const double heralds = double(s.heralds_plus() + s.heralds_minus());

    runner_output out;
    out.result["n_cycles"] = s.n_cycles;
    out.result["heralds_plus"] = s.heralds_plus();
    out.result["heralds_minus"] = s.heralds_minus();
    out.result["counts"] = {{"plus_dark", s.counts[0][0]},
                            {"plus_bright", s.counts[0][1]},
                            {"minus_dark", s.counts[1][0]},
                            {"minus_bright", s.counts[1][1]}};
    out.result["p_down_given_plus"] = s.heralds_plus() ? s.p_dark_given_plus() : 0.0;
    out.result["p_up_given_minus"] = s.heralds_minus() ? s.p_bright_given_minus() : 0.0;
    out.result["herald_ratio"] = s.heralds_minus() ? s.herald_ratio() : 0.0;
    // diagnostic scale of background-born heralds; the rates themselves are
    // config inputs, echoed through the manifest
    out.result["background_heralds_expected"] = bg_expected;
    out.result["background_herald_fraction"] = heralds > 0.0 ? bg_expected / heralds : 0.0;
    return out;
}

inline runner_output run_absorption(const run_config& c, std::uint64_t seed) {
    (void)seed; // deterministic density-matrix probe, no sampling
    const auto scheme = level_scheme::yb174();
    const auto table = transition_table::yb174(scheme);
    const auto params = make_params(c);
    const double probe = seconds_from_us(c.protocol.probe_us);
    const double rate_in = c.protocol.photons_in / probe;

    const auto weights = make_prep(c).d_distribution();
    runner_output out;
    csv_builder csv({"waveplate_deg", "p_shelved", "p_abs_per_photon"});
    nlohmann::json by_angle = nlohmann::json::object();
    std::vector<std::string> warnings;
    double n_empty_max = 0.0, p_max = 0.0, theta_max = 0.0;

    for (const double theta : c.protocol.waveplate_deg) {
        drive_params dp;
        dp.waveplate_angle_deg = theta;
        dp.detuning = rad_from_2pi_mhz(c.protocol.detuning_2pi_mhz);
        dp.amplitude =
            drive_amplitude_for_input_rate(rate_in, params.kappa, c.protocol.input_coupling);
        auto build = build_absorption_model(params, make_branching(c), scheme, table, dp,
                                            make_micromotion(c), c.protocol.n_max_absorption);
        n_empty_max = std::max(n_empty_max, build.n_empty);

        const auto& space = build.model.space;
        mat rho0 = mat::Zero(space.dim(), space.dim());
        for (int i = 0; i < 4; ++i) {
            if (weights[std::size_t(i)] <= 0.0) continue;
            const vec s = space.basis_state(i, 0, 0);
            rho0 += weights[std::size_t(i)] * (s * s.adjoint());
        }
        const auto states = evolve_master(build.model, rho0, {0.0, probe});
        double p_shelved = atomic_population(states.back(), space, space.scheme().sink_index());
        if (p_shelved < 0.0 && p_shelved > -1e-10) p_shelved = 0.0; // integration roundoff
        const double p_abs = absorption_per_photon(p_shelved, c.protocol.photons_in);

        csv.row({theta, p_shelved, p_abs});
        by_angle[format_double(theta)] = p_abs;
        if (p_abs > p_max) {
            p_max = p_abs;
            theta_max = theta;
        }
        if (build.weak_drive_warning)
            warnings.push_back("waveplate " + format_double(theta) +
                               " deg: probe beyond the weak-drive regime, <n>_empty = " +
                               format_double(build.n_empty));
    }

    out.result["p_abs_per_photon"] = by_angle;
    out.result["p_abs_max"] = p_max;
    out.result["theta_at_max_deg"] = theta_max;
    out.result["n_empty_max"] = n_empty_max;
    out.result["warnings"] = warnings;
    out.files.emplace_back("sweep.csv", std::move(csv.body));
    return out;
}

inline runner_output run_saturation(const run_config& c, std::uint64_t seed) {
    const auto scheme = level_scheme::yb174();
    const auto table = transition_table::yb174(scheme);
    const auto params = make_params(c);
    const double probe = seconds_from_us(c.protocol.probe_us);
    const auto weights = make_prep(c).d_distribution();

    csv_builder csv({"photons_in", "p_shelved_model", "shots", "counts", "p_shelved_observed"});
    std::vector<double> ns, ps, ws;
    std::vector<std::string> warnings;
    for (std::size_t i = 0; i < c.protocol.photon_numbers.size(); ++i) {
        const double n_ph = c.protocol.photon_numbers[i];
        drive_params dp;
        dp.waveplate_angle_deg = c.protocol.waveplate_single_deg;
        dp.detuning = rad_from_2pi_mhz(c.protocol.detuning_2pi_mhz);
        dp.amplitude = drive_amplitude_for_input_rate(n_ph / probe, params.kappa,
                                                      c.protocol.input_coupling);
        auto build = build_absorption_model(params, make_branching(c), scheme, table, dp,
                                            make_micromotion(c), c.protocol.n_max_absorption);
        const auto& space = build.model.space;
        mat rho0 = mat::Zero(space.dim(), space.dim());
        for (int a = 0; a < 4; ++a) {
            if (weights[std::size_t(a)] <= 0.0) continue;
            const vec s = space.basis_state(a, 0, 0);
            rho0 += weights[std::size_t(a)] * (s * s.adjoint());
        }
        const auto states = evolve_master(build.model, rho0, {0.0, probe});
        double p_model = atomic_population(states.back(), space, space.scheme().sink_index());
        p_model = std::clamp(p_model, 0.0, 1.0);
        if (build.weak_drive_warning)
            warnings.push_back("photons_in " + format_double(n_ph) +
                               ": probe beyond the weak-drive regime, <n>_empty = " +
                               format_double(build.n_empty));

        // one simulated measurement run: shots Bernoulli trials on the model
        rng r(derive_seed(seed, 13, i));
        const long long shots = c.protocol.shots_per_point;
        long long counts = 0;
        for (long long k = 0; k < shots; ++k) counts += r.bernoulli(p_model);
        const double p_obs = double(counts) / double(shots);
        csv.row({n_ph, p_model, double(shots), double(counts), p_obs});
        ns.push_back(n_ph);
        ps.push_back(p_obs);
        ws.push_back(double(shots));
    }

    runner_output out;
    out.result["warnings"] = warnings;
    try {
        const auto fit = fit_saturation(ns, ps, ws);
        out.result["n0_fit"] = fit.n0;
        out.result["p_abs_fit"] = 1.0 / fit.n0;
        out.result["fit_rms_residual"] = fit.rms_residual;
        out.result["poor_fit"] = fit.poor_fit;
    } catch (const fit_error& e) {
        out.result["n0_fit"] = nullptr;
        out.result["fit_note"] = e.what();
    }
    out.files.emplace_back("saturation.csv", std::move(csv.body));
    return out;
}

inline runner_output run_budget(const run_config& c, std::uint64_t seed) {
    (void)seed; // closed-form arithmetic only
    const double g_obs = c.system.g_bar_2pi_mhz * std::sqrt(4.0 / 3.0);
    const double c_obs =
        budget::cooperativity(g_obs, c.system.kappa_2pi_mhz, c.system.gamma_2pi_mhz);
    const double c_bare = budget::cooperativity(c.system.g_bar_2pi_mhz, c.system.kappa_2pi_mhz,
                                                c.system.gamma_2pi_mhz);
    const double p_emit = budget::emission_probability(c_obs);
    const budget::mirror_budget mirrors{c.system.mirror_ht_ppm, c.system.mirror_lt_ppm,
                                        c.system.mirror_loss_ppm};
    const budget::efficiency_chain chain{c.detection.eta_mirror, c.detection.eps_mode,
                                         c.detection.eta_path, c.detection.eta_det};
    const double eta_total = budget::detection_chain(p_emit, chain);
    const double ideal_in = budget::ideal_incoupling(mirrors);
    const auto inverted = budget::invert_detection_chain(
        eta_total, chain, rad_from_2pi_mhz(c.system.kappa_2pi_mhz),
        rad_from_2pi_mhz(c.system.gamma_2pi_mhz));
    const budget::absorption_factors factors{0.91, 0.75, c.preparation.fidelity,
                                             c.protocol.input_coupling};
    const double carrier =
        c.system.micromotion_beta > 0.0
            ? std::pow(std::cyl_bessel_j(0, c.system.micromotion_beta), 2.0)
            : 1.0;

    runner_output out;
    out.result["g_bar_2pi_mhz"] = c.system.g_bar_2pi_mhz;
    out.result["g_observed_2pi_mhz"] = g_obs;
    out.result["g_bar_from_observed_2pi_mhz"] = budget::g_bar_from_observed(g_obs);
    out.result["cooperativity_bare"] = c_bare;
    out.result["cooperativity_observed"] = c_obs;
    out.result["emission_probability"] = p_emit;
    out.result["detection_chain"] = eta_total;
    out.result["fiber_emission"] =
        budget::fiber_emission(p_emit, c.detection.eta_mirror, c.detection.eps_mode);
    out.result["mirror_outcoupling"] = budget::mirror_outcoupling(mirrors);
    out.result["ideal_incoupling"] = ideal_in;
    out.result["mode_matching"] = budget::mode_matching(c.protocol.input_coupling, ideal_in);
    out.result["inverted_cooperativity"] = inverted.c0;
    out.result["kappa_geometry_2pi_mhz"] =
        to_2pi_mhz(budget::kappa_from_geometry(c.geometry.finesse, c.geometry.length_um * 1e-6));
    out.result["purcell_branching"] = budget::purcell_branching(c.system.branching_sink, c_obs);
    out.result["purcell_note"] =
        "closed form b_sink / (1 + 2 C) evaluated at the observed cooperativity; coarser "
        "single-digit roundings of the same quantity are sometimes quoted near 0.91";
    out.result["absorption_chain"] = budget::absorption_chain(c_obs, factors, 1.0);
    out.result["micromotion_carrier_weight"] = carrier;
    out.result["absorption_chain_with_micromotion"] =
        budget::absorption_chain(c_obs, factors, carrier);
    return out;
}

inline runner_output dispatch(experiment_kind kind, const run_config& c, std::uint64_t seed) {
    switch (kind) {
    case experiment_kind::emit_histogram: return run_emit(c, seed);
    case experiment_kind::g2: return run_g2(c, seed);
    case experiment_kind::spin_photon: return run_spin(c, seed);
    case experiment_kind::absorption_sweep: return run_absorption(c, seed);
    case experiment_kind::saturation_curve: return run_saturation(c, seed);
    case experiment_kind::budget_report: return run_budget(c, seed);
    }
    throw validation_error("unknown experiment kind");
}

} // namespace detail

struct run_outcome {
    nlohmann::json result;
    std::vector<std::string> files; // written artifacts, manifest not included
    std::string out_dir;
};

inline run_outcome run_experiment(experiment_kind kind, const run_config& cfg,
                                  const std::string& out_dir,
                                  std::optional<std::uint64_t> seed_override = {}) {
    cfg.validate(kind);
    if (out_dir.empty()) throw validation_error("output directory: must not be empty");
    const std::uint64_t seed = seed_override.value_or(cfg.base_seed);
    const auto t_start = std::chrono::steady_clock::now();

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    nlohmann::json outputs = nlohmann::json::array();
    try {
        auto ro = detail::dispatch(kind, cfg, seed);
        ro.result["manifest"] = "manifest.json";
        const auto put = [&](const std::string& name, const std::string& body) {
            atomic_write_file((fs::path(out_dir) / name).string(), body);
            written.push_back(name);
            outputs.push_back({{"file", name}, {"fnv1a64", hex16(fnv1a64(body))}});
        };
        for (const auto& [name, body] : ro.files) put(name, body);
        put("result.json", ro.result.dump(2) + "\n");

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        nlohmann::json manifest;
        manifest["tool"] = version_string;
        manifest["experiment"] = to_string(kind);
        manifest["seed"] = seed;
        manifest["config"] = cfg.to_json();
        manifest["wall_seconds"] = wall;
        manifest["outputs"] = outputs;
        atomic_write_file((fs::path(out_dir) / "manifest.json").string(),
                          manifest.dump(2) + "\n");
        return {std::move(ro.result), std::move(written), out_dir};
    } catch (...) {
        // no partial artifact sets: a failed run leaves nothing behind
        for (const auto& name : written) {
            std::error_code ignored;
            fs::remove(fs::path(out_dir) / name, ignored);
        }
        throw;
    }
}

// In-memory evaluation: the result JSON alone, no artifacts and no manifest.
inline nlohmann::json evaluate_experiment(experiment_kind kind, const run_config& cfg,
                                          std::optional<std::uint64_t> seed_override = {}) {
    cfg.validate(kind);
    return detail::dispatch(kind, cfg, seed_override.value_or(cfg.base_seed)).result;
}

struct compare_entry {
    std::string name;
    double observed = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct compare_report {
    std::vector<compare_entry> entries;
    std::vector<std::string> schema_errors;

    bool pass() const {
        if (!schema_errors.empty()) return false;
        for (const auto& e : entries)
            if (!e.pass) return false;
        return true;
    }
};

namespace detail {
inline void flatten_numeric(const nlohmann::json& j, const std::string& prefix,
                            std::map<std::string, double>& out) {
    if (j.is_object()) {
        for (const auto& el : j.items())
            flatten_numeric(el.value(), prefix.empty() ? el.key() : prefix + "." + el.key(),
                            out);
    } else if (j.is_array()) {
        std::size_t i = 0;
        for (const auto& e : j) flatten_numeric(e, prefix + "." + std::to_string(i++), out);
    } else if (j.is_number()) {
        out[prefix] = j.get<double>();
    }
    // strings, booleans, nulls are bookkeeping, not compared quantities
}
} // namespace detail

// Per-quantity comparison of a result document against a golden document.
// Every numeric quantity in the golden must exist in the result (schema) and
// agree within the named absolute tolerance (default exact).
inline compare_report compare_results(const nlohmann::json& result, const nlohmann::json& golden,
                                      const nlohmann::json& tolerances = {}) {
    std::map<std::string, double> r, g, tol;
    detail::flatten_numeric(result, "", r);
    detail::flatten_numeric(golden, "", g);
    if (!tolerances.is_null()) detail::flatten_numeric(tolerances, "", tol);

    compare_report rep;
    for (const auto& [name, expected] : g) {
        const auto it = r.find(name);
        if (it == r.end()) {
            rep.schema_errors.push_back("missing quantity in result: " + name);
            continue;
        }
        compare_entry e;
        e.name = name;
        e.observed = it->second;
        e.expected = expected;
        const auto t = tol.find(name);
        e.tolerance = t == tol.end() ? 0.0 : t->second;
        e.pass = std::isfinite(e.observed) && std::abs(e.observed - e.expected) <= e.tolerance;
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

} // namespace ioncav
