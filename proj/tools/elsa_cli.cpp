// Command-line front end: train -> embed -> extract/eval/inspect/verify.
// Exit codes: 0 ok, 1 usage/config, 2 data, 3 infeasible target, 4 integrity.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "elsa/harness.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"embed sparse networks in one dense weight set and extract "
                 "them bit-exactly"};
    app.require_subcommand(1);

    std::string config_path, model_path, output_path, digests_path;
    int level = 0;
    bool stream = false, dense = false, recompute_bn = false, machine = false;

    auto* train = app.add_subcommand("train", "train the initial dense model");
    train->add_option("--config", config_path, "experiment config")->required();
    train->add_option("--model", model_path, "output path override");

    auto* embed = app.add_subcommand("embed", "embed the configured sparsity levels");
    embed->add_option("--config", config_path, "experiment config")->required();
    embed->add_option("--model", model_path, "input dense model (default: config)");
    embed->add_option("--output", output_path, "output path override");
    embed->add_option("--digests", digests_path, "digest file override");

    auto* extract = app.add_subcommand("extract", "extract one sparsity level");
    extract->add_option("--model", model_path, "packed model")->required();
    extract->add_option("--level", level, "level t in [1, T]")->required();
    extract->add_flag("--stream", stream, "single-pass streaming extraction");
    extract->add_option("--output", output_path, "output file")->required();

    auto* eval = app.add_subcommand("eval", "accuracy on the configured test data");
    eval->add_option("--config", config_path, "experiment config")->required();
    eval->add_option("--model", model_path, "packed model")->required();
    eval->add_option("--level", level, "sparsity level to extract and evaluate");
    eval->add_flag("--dense", dense, "evaluate the dense model");
    eval->add_flag("--recompute-bn", recompute_bn,
                   "recompute batchnorm statistics from the eval inputs");

    auto* inspect = app.add_subcommand("inspect", "summarize a packed model");
    inspect->add_option("--model", model_path, "packed model")->required();
    inspect->add_flag("--machine", machine, "line-oriented key=value output");

    auto* verify = app.add_subcommand("verify", "check per-level digests");
    verify->add_option("--model", model_path, "packed model")->required();
    verify->add_option("--digests", digests_path, "digest file from embed")->required();

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) {
        auto cfg = elsa::ExperimentConfig::load(config_path);
        if (!model_path.empty()) cfg.initial_model_path = model_path;
        elsa::harness::cmd_train(cfg, std::cout);
        return 0;
    }
    if (embed->parsed()) {
        auto cfg = elsa::ExperimentConfig::load(config_path);
        if (!output_path.empty()) cfg.model_path = output_path;
        if (!digests_path.empty()) cfg.digests_path = digests_path;
        const std::string input =
            model_path.empty() ? cfg.initial_model_path : model_path;
        elsa::harness::cmd_embed(cfg, input, std::cout);
        return 0;
    }
    if (extract->parsed()) {
        if (level < 1) throw elsa::ConfigError("--level must be >= 1");
        elsa::harness::cmd_extract(model_path, static_cast<std::uint16_t>(level),
                                   stream, output_path);
        return 0;
    }
    if (eval->parsed()) {
        if (dense == (level > 0))
            throw elsa::ConfigError("eval needs exactly one of --level or --dense");
        const auto cfg = elsa::ExperimentConfig::load(config_path);
        elsa::harness::cmd_eval(cfg, model_path, dense ? 0 : level, recompute_bn,
                                std::cout);
        return 0;
    }
    if (inspect->parsed()) {
        elsa::harness::cmd_inspect(model_path, machine, std::cout);
        return 0;
    }
    if (verify->parsed()) {
        const bool ok = elsa::harness::cmd_verify(model_path, digests_path, std::cout);
        return ok ? 0 : 4;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const elsa::IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 4;
    } catch (const elsa::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const elsa::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const elsa::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const elsa::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
