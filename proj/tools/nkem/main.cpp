// nkem: config-driven dynamic PET reconstruction experiments.
//
// Stages write into a shared run directory and record every artifact in
// run.manifest; later stages load what earlier ones produced. Exit codes:
// 0 success, 2 configuration/usage error, 3 runtime or numeric error.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "nkem/config.hpp"
#include "nkem/experiment.hpp"
#include "nkem/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"dynamic PET reconstruction: kernelized EM with deep coefficient priors"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int threads = 0;
    app.add_option("-c,--config", config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("-o,--out-dir", out_dir, "run directory for all artifacts")->required();
    CLI::Option* seed_opt = app.add_option("--seed", seed, "override simulation.seed");
    app.add_option("-j,--threads", threads, "worker threads (default: all hardware threads)")
        ->check(CLI::NonNegativeNumber);

    CLI::App* sc_phantom =
        app.add_subcommand("phantom", "rasterize the phantom and per-frame truth images");
    CLI::App* sc_simulate =
        app.add_subcommand("simulate", "generate noisy dynamic studies (one per realization)");
    CLI::App* sc_kernel = app.add_subcommand(
        "build-kernel", "reconstruct composite frames and build the kNN Gaussian kernel");

    std::string method;
    CLI::App* sc_recon = app.add_subcommand("recon", "reconstruct every realization and frame");
    sc_recon->add_option("--method", method, "reconstruction method")
        ->required()
        ->check(CLI::IsMember(nkem::method_names()));

    CLI::App* sc_eval = app.add_subcommand("eval", "tabulate MSE, ROI, noise and bias/SD metrics");
    CLI::App* sc_report =
        app.add_subcommand("report", "export grayscale images and a summary table");

    std::vector<std::string> run_methods;
    CLI::App* sc_run = app.add_subcommand("run", "all stages in order");
    sc_run->add_option("--method", run_methods, "methods to reconstruct (default: all)")
        ->check(CLI::IsMember(nkem::method_names()));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version exit cleanly; usage errors are config errors
    }

    nkem::Config cfg;
    nkem::ExperimentConfig x;
    try {
        cfg = nkem::Config::load(config_path);
        if (seed_opt->count() > 0) cfg.set("simulation", "seed", std::to_string(seed));
        x = nkem::ExperimentConfig::from_config(cfg);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    const unsigned hw = std::thread::hardware_concurrency();
    const int workers = threads > 0 ? threads : std::max(1, static_cast<int>(hw));

    try {
        if (sc_phantom->parsed()) {
            nkem::cmd_phantom(x, cfg, out_dir);
        } else if (sc_simulate->parsed()) {
            nkem::cmd_simulate(x, cfg, out_dir);
        } else if (sc_kernel->parsed()) {
            nkem::cmd_build_kernel(x, cfg, out_dir, workers);
        } else if (sc_recon->parsed()) {
            nkem::cmd_recon(x, cfg, out_dir, method, workers);
        } else if (sc_eval->parsed()) {
            nkem::cmd_eval(x, cfg, out_dir);
        } else if (sc_report->parsed()) {
            nkem::cmd_report(x, cfg, out_dir);
        } else if (sc_run->parsed()) {
            nkem::run_all(x, cfg, out_dir, run_methods, workers);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
