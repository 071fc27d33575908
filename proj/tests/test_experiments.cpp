#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "ioncav/budget.hpp"
#include "ioncav/experiments.hpp"
#include "ioncav/io.hpp"

using namespace ioncav;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

// fresh scratch directory per test run, removed on destruction
struct scratch_dir {
    fs::path path;
    explicit scratch_dir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ioncav_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~scratch_dir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

json minimal_config(const std::string& experiment) {
    json j;
    j["schema_version"] = 1;
    j["base_seed"] = 20260819;
    j["experiment"] = experiment;
    return j;
}

std::set<std::string> files_in(const std::string& dir) {
    std::set<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) out.insert(e.path().filename().string());
    return out;
}

double csv_cell(const csv_table& t, const std::string& col, std::size_t row) {
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        if (t.columns[c] == col) return t.rows.at(row).at(c);
    throw std::runtime_error("column not found: " + col);
}

} // namespace

TEST_CASE("doubles format with shortest round-trip decimals", "[io]") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(35.4) == "35.4");
    CHECK(format_double(5.0) == "5");
    CHECK(format_double(-2.5) == "-2.5");
    CHECK(format_double(0.0) == "0");

    rng r(7);
    for (int i = 0; i < 200; ++i) {
        const double x = (r.uniform() - 0.5) * std::pow(10.0, int(r.uniform() * 40) - 20);
        const std::string s = format_double(x);
        CHECK(std::strtod(s.c_str(), nullptr) == x);
    }
}

TEST_CASE("checksums match the reference implementation", "[io]") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("hello") == 0xa430d84680aabd0bull);
    CHECK(hex16(0xcbf29ce484222325ull) == "cbf29ce484222325");
    CHECK(hex16(0x1ull) == "0000000000000001");
}

TEST_CASE("atomic writes leave complete files and no debris", "[io]") {
    scratch_dir dir("io_atomic");
    const std::string p = dir.sub("out.txt");
    atomic_write_file(p, "first\n");
    CHECK(read_file(p) == "first\n");
    atomic_write_file(p, "second\n");
    CHECK(read_file(p) == "second\n");
    CHECK(files_in(dir.path.string()) == std::set<std::string>{"out.txt"});
    REQUIRE_THROWS_AS(read_file(dir.sub("missing.txt")), validation_error);
}

TEST_CASE("csv bodies parse back including comment lines", "[io]") {
    const std::string body = "# manifest: manifest.json\na,b\n1.5,2\n-0.25,1e-3\n";
    const csv_table t = parse_csv(body);
    REQUIRE(t.columns == std::vector<std::string>{"a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][0] == 1.5);
    CHECK(t.rows[0][1] == 2.0);
    CHECK(t.rows[1][0] == -0.25);
    CHECK(t.rows[1][1] == 1e-3);
}

TEST_CASE("experiment names round-trip through the enum", "[experiments]") {
    for (auto k : {experiment_kind::emit_histogram, experiment_kind::g2,
                   experiment_kind::spin_photon, experiment_kind::absorption_sweep,
                   experiment_kind::saturation_curve, experiment_kind::budget_report}) {
        const auto back = experiment_from_string(to_string(k));
        REQUIRE(back.has_value());
        CHECK(*back == k);
    }
    CHECK(!experiment_from_string("nonsense").has_value());
}

TEST_CASE("configs parse with defaults and round-trip", "[experiments]") {
    const auto cfg = run_config::from_json(minimal_config("emit_histogram"));
    CHECK(cfg.base_seed == 20260819u);
    CHECK(cfg.threads == 1);
    CHECK_THAT(cfg.system.g_bar_2pi_mhz, WithinRel(1.6, 1e-12));
    CHECK_THAT(cfg.system.kappa_2pi_mhz, WithinRel(25.0, 1e-12));
    CHECK_THAT(cfg.system.gamma_2pi_mhz, WithinRel(2.11, 1e-12));
    CHECK_THAT(cfg.protocol.pulse_ns, WithinRel(2.7, 1e-12));
    CHECK_THAT(cfg.protocol.cycle_us, WithinRel(4.0, 1e-12));
    CHECK_THAT(cfg.protocol.probe_us, WithinRel(170.0, 1e-12));
    CHECK(cfg.protocol.photon_numbers.size() == 6); // 30..80 in steps of 10
    CHECK(cfg.protocol.waveplate_deg.front() == 5.0);
    CHECK(cfg.protocol.waveplate_deg.back() == 140.0);

    // a config serialized and reparsed is the same config
    const json snap = cfg.to_json();
    const auto cfg2 = run_config::from_json(snap);
    CHECK(cfg2.to_json() == snap);

    // comment fields are documentation, not data
    json with_comment = minimal_config("g2");
    with_comment["comment"] = "anything";
    with_comment["system"] = {{"comment_origin", "measured"}, {"kappa_2pi_mhz", 30.0}};
    const auto cfg3 = run_config::from_json(with_comment);
    CHECK_THAT(cfg3.system.kappa_2pi_mhz, WithinRel(30.0, 1e-12));
}

TEST_CASE("validation reports every violated field at once", "[experiments]") {
    json j = minimal_config("emit_histogram");
    j.erase("base_seed");
    j["protocol"] = {{"pulse_ns", -1.0}, {"n_trajectories", 0}};
    j["detection"] = {{"eta_det", 1.7}};
    j["unknown_block"] = 1;
    try {
        const auto cfg = run_config::from_json(j);
        cfg.validate(experiment_kind::emit_histogram);
        FAIL("expected a validation error");
    } catch (const validation_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("base_seed") != std::string::npos);
        CHECK(msg.find("pulse_ns") != std::string::npos);
        CHECK(msg.find("n_trajectories") != std::string::npos);
        CHECK(msg.find("eta_det") != std::string::npos);
        CHECK(msg.find("unknown_block") != std::string::npos);
    }

    // windows must fit inside the repetition cycle
    json k = minimal_config("g2");
    k["protocol"] = {{"cycle_us", 0.0001}};
    const auto cfg = run_config::from_json(k);
    REQUIRE_THROWS_AS(cfg.validate(experiment_kind::g2), validation_error);
}

TEST_CASE("emission runs write a complete, checksummed artifact set", "[experiments]") {
    scratch_dir dir("emit");
    json j = minimal_config("emit_histogram");
    j["detection"] = {{"eps_mode", 1.0}, {"eta_path", 1.0}, {"eta_det", 1.0}};
    j["preparation"] = {{"fidelity", 1.0}};
    j["protocol"] = {{"n_trajectories", 4000},
                     {"arrival_hi_ns", 150.0},
                     {"arrival_bins", 15},
                     {"t_end_ns", 150.0}};
    const auto cfg = run_config::from_json(j);
    const auto out = run_experiment(experiment_kind::emit_histogram, cfg, dir.sub("run1"));

    // the artifact set is exactly what the manifest lists
    const auto listed = files_in(dir.sub("run1"));
    std::set<std::string> expected(out.files.begin(), out.files.end());
    expected.insert("manifest.json");
    CHECK(listed == expected);
    CHECK(expected.count("arrival.csv") == 1);
    CHECK(expected.count("result.json") == 1);

    // manifest: config snapshot, version, wall time, per-output checksums
    const json manifest = json::parse(read_file(dir.sub("run1/manifest.json")));
    CHECK(manifest.at("tool").get<std::string>() == version_string);
    CHECK(manifest.at("experiment").get<std::string>() == "emit_histogram");
    CHECK(manifest.at("seed").get<std::uint64_t>() == cfg.base_seed);
    CHECK(manifest.at("config").at("base_seed").get<std::uint64_t>() == cfg.base_seed);
    CHECK(manifest.at("wall_seconds").get<double>() >= 0.0);
    for (const auto& entry : manifest.at("outputs")) {
        const std::string name = entry.at("file").get<std::string>();
        const std::string body = read_file(dir.sub("run1/" + name));
        CHECK(entry.at("fnv1a64").get<std::string>() == hex16(fnv1a64(body)));
    }

    // every result file points back at the manifest
    const std::string csv = read_file(dir.sub("run1/arrival.csv"));
    CHECK(csv.rfind("# manifest: manifest.json\n", 0) == 0);
    const json result = json::parse(read_file(dir.sub("run1/result.json")));
    CHECK(result.at("manifest").get<std::string>() == "manifest.json");

    // full thinning and no background: detected counts = high-transmission jumps
    const csv_table t = parse_csv(csv);
    double total = 0.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) total += csv_cell(t, "counts", r);
    CHECK(result.at("detected_counts").get<double>() == total);
    CHECK(result.at("ht_jump_count").get<double>() == total);
    const double tau = result.at("tau_fit_ns").get<double>();
    CHECK(tau > 15.0);
    CHECK(tau < 80.0);
    CHECK(result.at("cavity_jump_fraction").get<double>() > 0.02);
    CHECK(result.at("cavity_jump_fraction").get<double>() < 0.12);

    // same seed, different worker count: byte-identical bodies
    json j3 = j;
    j3["threads"] = 3;
    const auto cfg3 = run_config::from_json(j3);
    run_experiment(experiment_kind::emit_histogram, cfg3, dir.sub("run3"));
    CHECK(read_file(dir.sub("run3/arrival.csv")) == csv);
    CHECK(read_file(dir.sub("run3/result.json")) == read_file(dir.sub("run1/result.json")));

    // a different seed changes the data
    const auto out5 = run_experiment(experiment_kind::emit_histogram, cfg, dir.sub("run5"),
                                     std::uint64_t{555});
    const json manifest5 = json::parse(read_file(dir.sub("run5/manifest.json")));
    CHECK(manifest5.at("seed").get<std::uint64_t>() == 555u);
    CHECK(read_file(dir.sub("run5/arrival.csv")) != csv);
}

TEST_CASE("invalid runs leave no outputs behind", "[experiments]") {
    scratch_dir dir("invalid");
    json j = minimal_config("emit_histogram");
    j["protocol"] = {{"n_trajectories", 0}};
    const auto cfg = run_config::from_json(j);
    REQUIRE_THROWS_AS(run_experiment(experiment_kind::emit_histogram, cfg, dir.sub("bad")),
                      validation_error);
    CHECK(!fs::exists(dir.sub("bad")));
}

TEST_CASE("budget report reproduces the efficiency chain", "[experiments]") {
    scratch_dir dir("budget");
    const auto cfg = run_config::from_json(minimal_config("budget_report"));
    const auto out = run_experiment(experiment_kind::budget_report, cfg, dir.sub("run"));
    const json r = json::parse(read_file(dir.sub("run/result.json")));

    const double g_obs = cfg.system.g_bar_2pi_mhz * std::sqrt(4.0 / 3.0);
    const double c_obs = budget::cooperativity(g_obs, 25.0, 2.11);
    CHECK_THAT(r.at("cooperativity_observed").get<double>(), WithinRel(c_obs, 1e-12));
    CHECK_THAT(r.at("emission_probability").get<double>(),
               WithinRel(budget::emission_probability(c_obs), 1e-12));
    CHECK_THAT(r.at("mirror_outcoupling").get<double>(), WithinRel(100.0 / 310.0, 1e-12));
    CHECK_THAT(r.at("ideal_incoupling").get<double>(), WithinAbs(0.874, 1e-3));
    CHECK_THAT(r.at("detection_chain").get<double>(), WithinAbs(0.0033, 2e-4));
    CHECK_THAT(r.at("fiber_emission").get<double>(), WithinAbs(0.018, 1e-3));
    CHECK_THAT(r.at("kappa_geometry_2pi_mhz").get<double>(), WithinAbs(22.04, 0.05));
    CHECK_THAT(r.at("purcell_branching").get<double>(), WithinAbs(0.9223, 1e-3));
    CHECK_THAT(r.at("absorption_chain").get<double>(), WithinAbs(0.0314, 5e-4));

    // in-memory evaluation returns the same numbers without touching disk
    const auto direct = evaluate_experiment(experiment_kind::budget_report, cfg);
    CHECK_THAT(direct.at("cooperativity_observed").get<double>(), WithinRel(c_obs, 1e-12));
    CHECK(!direct.contains("manifest"));
}

TEST_CASE("comparison reports per-quantity outcomes", "[experiments]") {
    const json result = {{"manifest", "manifest.json"},
                         {"tau_fit_ns", 40.0},
                         {"nested", {{"value", 2.0}}}};
    json golden = {{"manifest", "other.json"}, {"tau_fit_ns", 35.4}, {"nested", {{"value", 2.0}}}};
    const json tol = {{"tau_fit_ns", 2.0}};

    // identical numerics pass regardless of bookkeeping strings
    const auto same = compare_results(result, result, tol);
    CHECK(same.pass());

    const auto rep = compare_results(result, golden, tol);
    CHECK(!rep.pass());
    bool found = false;
    for (const auto& e : rep.entries)
        if (e.name == "tau_fit_ns") {
            found = true;
            CHECK(!e.pass);
            CHECK_THAT(e.observed, WithinRel(40.0, 1e-12));
            CHECK_THAT(e.expected, WithinRel(35.4, 1e-12));
            CHECK_THAT(e.tolerance, WithinRel(2.0, 1e-12));
        }
    CHECK(found);

    // a golden quantity missing from the result is a schema error
    golden["extra_quantity"] = 1.0;
    const auto broken = compare_results(result, golden, tol);
    CHECK(!broken.schema_errors.empty());
    CHECK(broken.schema_errors.front().find("extra_quantity") != std::string::npos);
    CHECK(!broken.pass());
}

TEST_CASE("absorption sweeps expose the polarization selection rule", "[experiments]") {
    scratch_dir dir("absorb");
    json j = minimal_config("absorption_sweep");
    j["preparation"] = {{"fidelity", 1.0}, {"residual", {0.0, 0.0, 0.0}}};
    j["protocol"] = {{"probe_us", 2.0},
                     {"photons_in", 1.0},
                     {"waveplate_deg", {5.0, 50.0, 95.0}},
                     {"n_max_absorption", 2}};
    const auto cfg = run_config::from_json(j);
    run_experiment(experiment_kind::absorption_sweep, cfg, dir.sub("run"));

    const csv_table t = parse_csv(read_file(dir.sub("run/sweep.csv")));
    REQUIRE(t.rows.size() == 3);
    const double p5 = csv_cell(t, "p_abs_per_photon", 0);
    const double p50 = csv_cell(t, "p_abs_per_photon", 1);
    const double p95 = csv_cell(t, "p_abs_per_photon", 2);
    CHECK(p5 > 0.01);
    CHECK(p5 < 0.10);
    CHECK_THAT(p95, WithinRel(p5, 1e-6)); // 90 degree periodicity
    CHECK(std::abs(p50) < 1e-8);          // pure sigma- drive cannot excite from the prepared state

    const json r = json::parse(read_file(dir.sub("run/result.json")));
    CHECK_THAT(r.at("p_abs_per_photon").at("5").get<double>(), WithinRel(p5, 1e-12));
    CHECK(r.at("warnings").empty());
    CHECK(r.at("n_empty_max").get<double>() < 0.1);

    // an over-strong probe completes but carries a warning
    json jw = minimal_config("absorption_sweep");
    jw["protocol"] = {{"probe_us", 0.5},
                      {"photons_in", 100.0},
                      {"waveplate_deg", {50.0}},
                      {"n_max_absorption", 1}};
    const auto cfgw = run_config::from_json(jw);
    run_experiment(experiment_kind::absorption_sweep, cfgw, dir.sub("warn"));
    const json rw = json::parse(read_file(dir.sub("warn/result.json")));
    CHECK(!rw.at("warnings").empty());
}

TEST_CASE("saturation curves recover the photon budget scale", "[experiments]") {
    scratch_dir dir("sat");
    json j = minimal_config("saturation_curve");
    j["preparation"] = {{"fidelity", 1.0}, {"residual", {0.0, 0.0, 0.0}}};
    j["protocol"] = {{"probe_us", 2.0},
                     {"photon_numbers", {10.0, 30.0, 60.0}},
                     {"shots_per_point", 500},
                     {"waveplate_single_deg", 5.0},
                     {"n_max_absorption", 2}};
    const auto cfg = run_config::from_json(j);
    run_experiment(experiment_kind::saturation_curve, cfg, dir.sub("run"));

    const csv_table t = parse_csv(read_file(dir.sub("run/saturation.csv")));
    REQUIRE(t.rows.size() == 3);
    CHECK(csv_cell(t, "p_shelved_model", 0) < csv_cell(t, "p_shelved_model", 1));
    CHECK(csv_cell(t, "p_shelved_model", 1) < csv_cell(t, "p_shelved_model", 2));
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(csv_cell(t, "shots", r) == 500.0);
        CHECK(csv_cell(t, "counts", r) <= 500.0);
    }

    const json r = json::parse(read_file(dir.sub("run/result.json")));
    const double n0 = r.at("n0_fit").get<double>();
    CHECK(n0 > 15.0);
    CHECK(n0 < 45.0);
    CHECK_THAT(r.at("p_abs_fit").get<double>(), WithinRel(1.0 / n0, 1e-12));
}

TEST_CASE("photon statistics and spin runs produce conditional summaries", "[experiments]") {
    scratch_dir dir("stats");
    json jg = minimal_config("g2");
    jg["detection"] = {{"eps_mode", 1.0}, {"eta_path", 1.0}, {"eta_det", 1.0}};
    jg["preparation"] = {{"fidelity", 1.0}};
    jg["protocol"] = {{"excitation", "pulsed"}, {"n_cycles", 1500}, {"t_end_ns", 200.0},
                      {"n_max_emission", 2}};
    const auto cfg_g = run_config::from_json(jg);
    run_experiment(experiment_kind::g2, cfg_g, dir.sub("g2"));
    const json rg = json::parse(read_file(dir.sub("g2/result.json")));
    CHECK(rg.at("zero_lag").get<double>() <= 2.0);
    CHECK(rg.at("clicks_a").get<double>() + rg.at("clicks_b").get<double>() > 0.0);
    const csv_table tg = parse_csv(read_file(dir.sub("g2/g2.csv")));
    CHECK(tg.rows.size() == 21); // lags -10..10

    json js = minimal_config("spin_photon");
    js["detection"] = {{"eps_mode", 1.0}, {"eta_path", 1.0}, {"eta_det", 1.0}};
    js["preparation"] = {{"fidelity", 1.0}};
    js["readout"] = {{"dark_given_down", 1.0}, {"bright_given_up", 1.0}};
    js["protocol"] = {{"n_cycles", 1500}, {"t_end_ns", 400.0}};
    const auto cfg_s = run_config::from_json(js);
    run_experiment(experiment_kind::spin_photon, cfg_s, dir.sub("spin"));
    const json rs = json::parse(read_file(dir.sub("spin/result.json")));
    CHECK(rs.at("p_down_given_plus").get<double>() == 1.0);
    CHECK(rs.at("p_up_given_minus").get<double>() == 1.0);
    const double ratio = rs.at("herald_ratio").get<double>();
    CHECK(ratio > 1.8);
    CHECK(ratio < 5.0);
    CHECK(rs.at("background_heralds_expected").get<double>() == 0.0);
}
