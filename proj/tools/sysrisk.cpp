// Scenario runner: policy / simulate / defaults / sweep / stability
// subcommands plus bundled figure recipes.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sysrisk/errors.hpp"
#include "sysrisk/runner.hpp"
#include "sysrisk/scenario.hpp"

namespace {

struct CliArgs {
    std::string scenario_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
    bool bridge = false;
    std::string axis = "rho";
    std::vector<double> values;
    std::string figure;
    int k_lo = 5;
    int k_hi = 60;
};

sysrisk::SweepAxis parse_axis(const std::string& axis) {
    if (axis == "rho" || axis == "rho_pair") return sysrisk::SweepAxis::rho_pair;
    if (axis == "r" || axis == "rate") return sysrisk::SweepAxis::rate;
    if (axis == "c" || axis == "c_scale") return sysrisk::SweepAxis::c_scale;
    throw sysrisk::ValidationError("sweep: unknown axis '" + axis + "' (use rho, r or c)");
}

int dispatch(const std::string& command, const CliArgs& args) {
    sysrisk::RunOptions opt;
    opt.out_dir = args.out_dir;
    opt.threads = args.threads;
    opt.bridge = args.bridge;
    if (command == "figure") {
        const sysrisk::RunManifest m = sysrisk::reproduce_figure(args.figure, opt);
        std::cout << m.command << ": wrote " << m.outputs.size() << " file(s) to " << args.out_dir
                  << "\n";
        return 0;
    }
    sysrisk::Scenario s = sysrisk::parse_scenario(args.scenario_path);
    if (args.seed_given) s.config.base_seed = args.seed;
    opt.k_lo = args.k_lo;
    opt.k_hi = args.k_hi;
    if (command == "sweep") {
        opt.axis = parse_axis(args.axis);
        opt.values = sysrisk::Vec(args.values.begin(), args.values.end());
    }
    const sysrisk::RunManifest m = sysrisk::run(command, s, opt);
    std::cout << command << ": wrote " << m.outputs.size() << " file(s) to " << args.out_dir << " in "
              << m.duration_seconds << " s\n";
    if (command == "stability") {
        for (const auto& f : m.outputs)
            if (f == "divergence.csv")
                std::cout << "note: flow graph is disconnected; no unique stationary distribution "
                             "(groups drift apart)\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulator and policy calculator for a system of banks with interbank flows, "
                 "borrowing, and risky investments"};
    app.require_subcommand(0, 1);

    CliArgs args;
    std::string figure_id;
    app.add_option("--figure", figure_id, "Reproduce a bundled figure recipe (fig1..fig11)");
    app.add_option("--out", args.out_dir, "Output directory (root-level, used with --figure)");
    app.add_option("--threads", args.threads, "Worker threads (0 = auto; never affects results)")
        ->envname("SYSRISK_THREADS");

    const auto add_common = [&](CLI::App* sub, bool needs_scenario) {
        if (needs_scenario)
            sub->add_option("--scenario", args.scenario_path, "Scenario JSON file")->required();
        sub->add_option("--out", args.out_dir, "Output directory");
        sub->add_option("--seed", args.seed, "Override the scenario base_seed")
            ->each([&](const std::string&) { args.seed_given = true; });
        sub->add_option("--threads", args.threads,
                        "Worker threads (0 = auto; never affects results)")
            ->envname("SYSRISK_THREADS");
    };

    add_common(app.add_subcommand("policy", "Optimal-rate curve and summary"), true);
    add_common(app.add_subcommand("simulate", "Simulate log-wealth paths"), true);
    auto* defaults_cmd = app.add_subcommand("defaults", "Default-count distribution");
    add_common(defaults_cmd, true);
    defaults_cmd->add_flag("--bridge", args.bridge,
                           "Brownian-bridge crossing correction (zero-flow scenarios only)");
    defaults_cmd->add_option("--k-lo", args.k_lo, "Small-default threshold for P(D < k_lo)");
    defaults_cmd->add_option("--k-hi", args.k_hi, "Large-default threshold for P(D > k_hi)");
    auto* sweep_cmd = app.add_subcommand("sweep", "Default study along a parameter axis");
    add_common(sweep_cmd, true);
    sweep_cmd->add_option("--axis", args.axis, "Sweep axis: rho, r or c")->required();
    sweep_cmd->add_option("--values", args.values, "Sorted axis values")->required()->delimiter(',');
    sweep_cmd->add_option("--k-lo", args.k_lo, "Small-default threshold for P(D < k_lo)");
    sweep_cmd->add_option("--k-hi", args.k_hi, "Large-default threshold for P(D > k_hi)");
    add_common(app.add_subcommand("stability", "Spectral, stationary and ergodic diagnostics"), true);
    auto* figure_cmd = app.add_subcommand("figure", "Reproduce a bundled figure recipe");
    figure_cmd->add_option("id", figure_id, "Figure id (fig1..fig11)")->required();
    add_common(figure_cmd, false);

    CLI11_PARSE(app, argc, argv);

    try {
        args.figure = figure_id;
        if (app.get_subcommands().empty()) {
            if (figure_id.empty()) {
                std::cerr << "error: give a subcommand or --figure <id> (see --help)\n";
                return 1;
            }
            return dispatch("figure", args);
        }
        return dispatch(app.get_subcommands().front()->get_name(), args);
    } catch (const sysrisk::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
