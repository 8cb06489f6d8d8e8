// slimda: dataset generation, training, width search and evaluation for
// slimmable domain adaptation on synthetic two-domain data.
//
// Exit codes: 0 success, 1 unexpected internal error, 2 configuration or
// usage error, 3 numeric error, 4 I/O error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slimda/error.hpp"
#include "slimda/experiment.hpp"
#include "slimda/kernels.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<std::string> strategy;
    std::optional<std::string> budgets;
    std::optional<std::string> out;
    std::optional<std::string> dataset;
    std::optional<std::string> checkpoint;
    std::optional<std::size_t> n;
    std::optional<std::size_t> epochs;
    std::vector<std::string> widths;
    bool reveal_labels = false;
};

std::vector<double> parse_budgets(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw slimda::ConfigError("--budgets: '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw slimda::ConfigError("--budgets: no ratios given");
    return out;
}

slimda::ExperimentConfig resolve(const Flags& f) {
    slimda::ExperimentConfig c = slimda::load_experiment(f.config);
    if (f.seed) c.set_seed(*f.seed);
    if (f.mode) c.trainer.mode = slimda::parse_train_mode(*f.mode);
    if (f.strategy) c.search.strategy = slimda::parse_search_strategy(*f.strategy);
    if (f.budgets) c.search.budgets = parse_budgets(*f.budgets);
    if (f.out) c.output_dir = *f.out;
    if (f.n) c.correlate.n = *f.n;
    if (f.epochs) c.trainer.epochs = *f.epochs;
    c.validate();
    return c;
}

slimda::RunOptions options(const Flags& f) {
    slimda::RunOptions o;
    if (f.dataset) o.dataset = *f.dataset;
    if (f.checkpoint) o.checkpoint = *f.checkpoint;
    o.reveal_labels = f.reveal_labels;
    o.widths = f.widths;
    return o;
}

void common_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "Experiment config (JSON)")->required();
    sub->add_option("--seed", f.seed, "Root seed (overrides the config)");
    sub->add_option("--out", f.out, "Output directory (overrides the config)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Slimmable domain adaptation on synthetic data"};
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("gen-data", "Generate the two-domain dataset");
    common_flags(gen, f);

    auto* train = app.add_subcommand("train", "Train a model bank and write a checkpoint and metrics CSV");
    common_flags(train, f);
    train->add_option("--mode", f.mode, "slimda | baseline | inplaced");
    train->add_option("--epochs", f.epochs, "Number of epochs (overrides the config)");
    train->add_option("--dataset", f.dataset, "Dataset file (default <out>/dataset.json)");

    auto* search = app.add_subcommand("search", "Search widths under FLOPs budgets");
    common_flags(search, f);
    search->add_option("--mode", f.mode, "Selects the default checkpoint");
    search->add_option("--strategy", f.strategy, "greedy | random");
    search->add_option("--budgets", f.budgets, "Comma-separated FLOPs ratios, e.g. 0.1,0.25,0.5,1");
    search->add_flag("--reveal-labels", f.reveal_labels, "Add true target accuracy to every row");
    search->add_option("--dataset", f.dataset, "Dataset file");
    search->add_option("--checkpoint", f.checkpoint, "Checkpoint file");

    auto* corr = app.add_subcommand("correlate", "Correlate UPEM with target accuracy");
    common_flags(corr, f);
    corr->add_option("--mode", f.mode, "Selects the default checkpoint");
    corr->add_option("-n", f.n, "Configs per FLOPs band");
    corr->add_option("--dataset", f.dataset, "Dataset file");
    corr->add_option("--checkpoint", f.checkpoint, "Checkpoint file");

    auto* eval = app.add_subcommand("eval", "AdaBN-recalibrate widths and report target accuracy");
    common_flags(eval, f);
    eval->add_option("--mode", f.mode, "Selects the default checkpoint");
    eval->add_option("--widths", f.widths, "Width configs such as 8;16;32;64 (repeatable)");
    eval->add_option("--dataset", f.dataset, "Dataset file");
    eval->add_option("--checkpoint", f.checkpoint, "Checkpoint file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const slimda::ExperimentConfig config = resolve(f);
        const slimda::RunOptions opts = options(f);
        std::cerr << "kernels: " << slimda::kernels::backend_name(slimda::kernels::active_backend()) << "\n";
        slimda::CommandResult result;
        if (gen->parsed()) result = slimda::cmd_gen_data(config, std::cout);
        else if (train->parsed()) result = slimda::cmd_train(config, opts, std::cout);
        else if (search->parsed()) result = slimda::cmd_search(config, opts, std::cout);
        else if (corr->parsed()) result = slimda::cmd_correlate(config, opts, std::cout);
        else result = slimda::cmd_eval(config, opts, std::cout);
        for (const auto& p : result.written) std::cout << "wrote " << p.string() << "\n";
        return 0;
    } catch (const slimda::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const slimda::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const slimda::SearchError& e) {
        std::cerr << "search error: " << e.what() << "\n";
        return 2;
    } catch (const slimda::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const slimda::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
