// Command-line front end: one experiment per process, driven by a JSON
// config. Exit codes: 0 success, 1 invalid config or arguments, 2 numerical
// failure, 3 comparison failure.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ioncav/errors.hpp"
#include "ioncav/experiments.hpp"
#include "ioncav/io.hpp"
#include "ioncav/version.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_numerical = 2;
constexpr int exit_comparison = 3;

nlohmann::json load_json(const std::string& path) {
    const std::string text = ioncav::read_file(path);
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw ioncav::validation_error(path + ": not valid JSON");
    return j;
}

struct run_args {
    std::string config_path = "configs/reference.json";
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

int run_one(ioncav::experiment_kind kind, const run_args& a) {
    auto cfg = ioncav::run_config::from_json(load_json(a.config_path));
    const std::string out = !a.out_dir.empty() ? a.out_dir : cfg.output_dir;
    if (out.empty()) {
        // the budget report is pure algebra; without an output directory it
        // just prints, leaving no artifacts
        if (kind == ioncav::experiment_kind::budget_report) {
            std::cout << ioncav::evaluate_experiment(kind, cfg, a.seed).dump(2) << "\n";
            return exit_ok;
        }
        throw ioncav::validation_error("output directory: pass --out or set output_dir");
    }

    const auto outcome = ioncav::run_experiment(kind, cfg, out, a.seed);
    if (kind == ioncav::experiment_kind::budget_report)
        std::cout << outcome.result.dump(2) << "\n";
    std::cerr << ioncav::to_string(kind) << ": wrote " << outcome.files.size() + 1
              << " files to " << outcome.out_dir << "\n";
    return exit_ok;
}

int run_compare(const std::string& result_path, const std::string& golden_path,
                const std::string& tolerances_path) {
    const nlohmann::json result = load_json(result_path);
    const nlohmann::json golden = load_json(golden_path);
    nlohmann::json tol;
    if (!tolerances_path.empty()) tol = load_json(tolerances_path);

    const auto rep = ioncav::compare_results(result, golden, tol);
    for (const auto& err : rep.schema_errors) std::cout << "[SCHEMA] " << err << "\n";
    for (const auto& e : rep.entries)
        std::cout << (e.pass ? "[PASS] " : "[FAIL] ") << e.name << ": observed " << e.observed
                  << ", expected " << e.expected << ", tolerance " << e.tolerance << "\n";
    if (!rep.schema_errors.empty()) {
        std::cout << "comparison: schema mismatch\n";
        return exit_invalid;
    }
    std::cout << (rep.pass() ? "comparison: all quantities within tolerance\n"
                             : "comparison: some quantities out of tolerance\n");
    return rep.pass() ? exit_ok : exit_comparison;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fiber-cavity single-ion simulator and efficiency-budget toolkit"};
    app.set_version_flag("--version", ioncav::version_string);
    app.require_subcommand(1);

    run_args args;
    ioncav::experiment_kind chosen{};
    for (auto kind : {ioncav::experiment_kind::emit_histogram, ioncav::experiment_kind::g2,
                      ioncav::experiment_kind::spin_photon,
                      ioncav::experiment_kind::absorption_sweep,
                      ioncav::experiment_kind::saturation_curve,
                      ioncav::experiment_kind::budget_report}) {
        auto* sub = app.add_subcommand(ioncav::to_string(kind),
                                       "Run the " + ioncav::to_string(kind) + " experiment");
        if (kind == ioncav::experiment_kind::budget_report) sub->alias("budget");
        sub->add_option("--config", args.config_path, "JSON config file")
            ->capture_default_str();
        sub->add_option("--out", args.out_dir, "Output directory (overrides output_dir)");
        sub->add_option("--seed", args.seed, "Seed override (overrides base_seed)");
        sub->callback([kind, &chosen] { chosen = kind; });
    }

    std::string cmp_result, cmp_golden, cmp_tol;
    auto* cmp = app.add_subcommand("compare",
                                   "Compare a result.json against a golden reference");
    cmp->add_option("--result", cmp_result, "result.json produced by a run")->required();
    cmp->add_option("--golden", cmp_golden, "golden reference JSON")->required();
    cmp->add_option("--tolerances", cmp_tol, "JSON of per-quantity absolute tolerances");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmp->parsed()) return run_compare(cmp_result, cmp_golden, cmp_tol);
        return run_one(chosen, args);
    } catch (const ioncav::validation_error& e) {
        std::cerr << "invalid configuration:\n";
        for (const auto& v : e.violations()) std::cerr << "  - " << v << "\n";
        return exit_invalid;
    } catch (const ioncav::integration_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const ioncav::convergence_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const ioncav::fit_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_invalid;
    }
}
