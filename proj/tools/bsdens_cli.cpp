// Batch runner: bsdens_cli <run|solve|density|criteria|tails|oracle-compare> --config FILE [options]
// Exit codes: 0 all tasks ok, 1 a task failed or was skipped, 2 configuration error, 3 I/O error.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "bsdens/cli/runner.hpp"

int main(int argc, char** argv) {
    using namespace bsdens;
    CLI::App app{"Numerical laboratory for one-dimensional Markovian FBSDEs"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    bool no_timestamps = false;
    bool quiet = false;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"run", "run every task of the configuration"},
        {"solve", "run the solve tasks (PDE and/or Monte Carlo)"},
        {"density", "run the density tasks (inserting the solve they need)"},
        {"criteria", "run the density-existence criteria tasks"},
        {"tails", "run the tail envelope tasks"},
        {"oracle-compare", "compare the solve routes against the closed-form solution"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config,-c", config_path, "YAML experiment file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override numerics.seed");
        sub->add_option("--out,-o", out, "override the output directory");
        sub->add_option("--threads", threads, "override numerics.threads")->check(CLI::PositiveNumber);
        sub->add_flag("--no-timestamps", no_timestamps, "omit timestamps and timings from every artifact");
        sub->add_flag("--quiet,-q", quiet, "print nothing on success");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    cli::ExperimentConfig config;
    try {
        config = cli::parse_config(cli::read_file(config_path));
        if (command != "run") config = cli::select_tasks(config, *cli::task_kind_from_string(command));
    } catch (const ParseError& e) {
        std::fprintf(stderr, "%s:%s\n", config_path.c_str(), e.what());
        return cli::exit_config_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s: %s\n", config_path.c_str(), e.what());
        return cli::exit_config_error;
    }

    cli::RunOptions opt;
    if (out) opt.out = *out;
    opt.seed = seed;
    opt.threads = threads;
    opt.timestamps = !no_timestamps;
    cli::Manifest m;
    try {
        m = cli::run(config, opt);
    } catch (const ConfigurationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::exit_config_error;
    } catch (const IdentifierError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::exit_config_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::exit_io_error;
    }
    for (const auto& n : config.notes)
        if (!quiet) std::printf("note: %s\n", n.c_str());
    for (const auto& t : m.tasks) {
        if (t.status != cli::TaskStatus::ok)
            std::fprintf(stderr, "%-16s %-8s %s\n", t.id.c_str(), cli::to_string(t.status), t.message.c_str());
        else if (!quiet)
            std::printf("%-16s %-8s %zu file(s)\n", t.id.c_str(), cli::to_string(t.status), t.files.size());
    }
    if (!quiet) std::printf("manifest: %s\n", (m.directory / "manifest.json").string().c_str());
    return m.exit_code();
}
