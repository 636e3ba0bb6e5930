#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "molnet/experiment.hpp"

namespace {

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> trials;
    std::optional<unsigned> workers;
    std::string methods;
};

int run(const std::string& subcommand, const Options& opt) {
    auto cfg = molnet::load_config(opt.config);
    if (opt.seed)
        cfg.mc.seed = *opt.seed;
    if (opt.trials)
        cfg.mc.trials = *opt.trials;
    if (opt.workers)
        cfg.mc.workers = *opt.workers;
    if (!opt.methods.empty())
        cfg.methods = molnet::parse_methods(opt.methods);
    cfg.output_path = opt.out;
    cfg.validate();
    const bool simulates = subcommand == "interference" || subcommand == "mc-validate" ||
                           (subcommand == "error-sweep" &&
                            std::find(cfg.methods.begin(), cfg.methods.end(), "mc") != cfg.methods.end());
    if (simulates && cfg.mc.tail_truncated())
        std::cerr << "molnet: warning: simulation box may truncate the interference tail\n";

    const auto table = molnet::run_experiment(subcommand, cfg);
    if (opt.out.empty()) {
        molnet::write_csv(std::cout, table);
        return 0;
    }
    {
        std::ofstream csv(opt.out, std::ios::binary);
        if (!csv)
            throw std::runtime_error("cannot write '" + opt.out + "'");
        molnet::write_csv(csv, table);
    }
    std::ofstream meta(opt.out + ".meta", std::ios::binary);
    if (!meta)
        throw std::runtime_error("cannot write '" + opt.out + ".meta'");
    molnet::write_metadata(meta, subcommand, cfg, table, opt.config);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Clustered molecular nanonetwork analysis and simulation"};
    app.require_subcommand(1);
    Options opt;
    const std::map<std::string, std::string> about{
        {"error-sweep", "error probability per method over a parameter sweep"},
        {"interference", "analytic and simulated interference moments and Laplace transform"},
        {"thresholds", "detector thresholds and the ON/OFF regime boundary"},
        {"distance-pdf", "offspring distance density, closed form and general integral"},
        {"mc-validate", "analytic quantities against simulation with z-scores"},
    };
    for (const auto& name : molnet::subcommands()) {
        auto* sub = app.add_subcommand(name, about.at(name));
        sub->add_option("--config", opt.config, "key=value configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "CSV output path (metadata goes to <out>.meta); stdout when omitted");
        sub->add_option("--seed", opt.seed, "Monte Carlo seed");
        sub->add_option("--trials", opt.trials, "Monte Carlo trials per point");
        sub->add_option("--workers", opt.workers, "worker threads (0 = all cores)");
        sub->add_option("--methods", opt.methods, "comma list from exact,upper,ook,mc");
    }
    CLI11_PARSE(app, argc, argv);
    try {
        return run(app.get_subcommands().front()->get_name(), opt);
    } catch (const std::exception& e) {
        std::cerr << "molnet: " << e.what() << '\n';
        return 1;
    }
}
