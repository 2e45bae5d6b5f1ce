// Batch runner: one subcommand per pipeline stage, configured by a JSON document.
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "cglass/pipeline.hpp"

namespace pl = cglass::pipeline;

enum Exit { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

int main(int argc, char** argv) {
    CLI::App app{"cglass: vector spin glass simulation and analysis"};
    app.require_subcommand(1);
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    int threads = 1;
    for (const auto& mode : pl::modes()) {
        auto* sub = app.add_subcommand(mode, "run the " + mode + " stage");
        sub->add_option("--config", config, "JSON run config")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--out", out, "output directory (overrides the config)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }
    const CLI::App* sub = app.get_subcommands().front();
    pl::RunOptions opt;
    opt.config_path = config;
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--out")) opt.out = out;
    opt.threads = threads;
    try {
        const auto manifest = pl::run_pipeline(sub->get_name(), opt);
        std::printf("%s: wrote %zu files in %.2f s\n", sub->get_name().c_str(), manifest["outputs"].size(),
                    manifest["wall_time_s"].get<double>());
        return kOk;
    } catch (const pl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const cglass::io::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    }
}
