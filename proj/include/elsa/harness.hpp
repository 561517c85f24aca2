#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "elsa/checkpoint.hpp"
#include "elsa/config.hpp"
#include "elsa/elsa_run.hpp"
#include "elsa/report.hpp"

namespace elsa::harness {

// With several seeds, per-seed artifacts get ".s<seed>" before the
// extension; a single seed keeps the configured path.
inline std::string seed_path(const std::string& base, std::uint64_t seed,
                             bool multi) {
    if (!multi) return base;
    const auto dot = base.find_last_of('.');
    const std::string tag = ".s" + std::to_string(seed);
    if (dot == std::string::npos || base.find('/', dot) != std::string::npos)
        return base + tag;
    return base.substr(0, dot) + tag + base.substr(dot);
}

inline double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------------------
// train: fit the initial dense model and store it as a T=0 checkpoint.
// ---------------------------------------------------------------------------

struct TrainOutcome {
    std::vector<std::string> model_paths;
    std::vector<double> accuracies; // test accuracy per seed
};

inline TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    const Network net = cfg.build_network();
    const LabeledData train_data = cfg.make_train_data();
    const LabeledData test_data = cfg.make_test_data();
    if (train_data.dim != net.input_dim())
        throw ConfigError("dataset dim does not match network input");

    TrainOutcome out;
    const bool multi = cfg.seeds.size() > 1;
    for (const auto seed : cfg.seeds) {
        Rng init_rng(Rng::derive(seed, "init"));
        ParamSet params = net.init_params(init_rng);
        TrainConfig tc = cfg.train;
        tc.seed = Rng::derive(seed, "train");
        const Mask mask(params.prunable_count(), 1);
        params = train(net, std::move(params), mask, train_data, tc);

        const BatchNormStats stats =
            compute_bn_stats(net, params, train_data.features, train_data.n);
        const double acc = evaluate(net, params, stats, test_data);

        std::vector<BatchNormStats> sets;
        if (!stats.layers.empty()) sets.push_back(stats);
        const PackedCheckpoint ckpt = make_checkpoint(params, 0, 0, std::move(sets));
        const std::string path = seed_path(cfg.initial_model_path, seed, multi);
        write_checkpoint_file(path, ckpt);

        char buf[128];
        std::snprintf(buf, sizeof buf, "seed %llu: accuracy %.4f -> %s\n",
                      static_cast<unsigned long long>(seed), acc, path.c_str());
        log << buf;
        out.model_paths.push_back(path);
        out.accuracies.push_back(acc);
    }
    return out;
}

// ---------------------------------------------------------------------------
// embed: run multi-level ELSA from a stored dense model.
// ---------------------------------------------------------------------------

inline void check_architecture(const Network& net, const PackedCheckpoint& ckpt) {
    Rng probe(0);
    const ParamSet expected = net.init_params(probe);
    if (expected.entries().size() != ckpt.layers.size())
        throw ConfigError("model file does not match the configured architecture "
                          "(parameter count differs)");
    for (std::size_t i = 0; i < ckpt.layers.size(); ++i) {
        const auto& e = expected.entries()[i];
        const auto& l = ckpt.layers[i];
        if (e.name != l.name || e.prunable != l.prunable ||
            e.tensor.shape != l.dims)
            throw ConfigError("model file does not match the configured "
                              "architecture at parameter " + l.name);
    }
}

inline void write_digests(const std::string& path, const EmbeddingResult& result) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write digests file: " + path);
    out << "levels = " << result.t_levels << "\n";
    for (const auto& snap : result.levels)
        out << "digest." << snap.level << " = " << snap.digest << "\n";
    out << "digest.dense = " << result.dense_digest << "\n";
}

struct EmbedRun {
    std::uint64_t seed = 0;
    std::string model_path;
    std::string digests_path;
    EmbeddingResult result;
    std::vector<double> level_accuracy; // test accuracy per level, stored stats
    double initial_accuracy = 0.0;
    double final_accuracy = 0.0;
};

struct EmbedOutcome {
    std::vector<EmbedRun> runs;
    RunReport report;
};

inline EmbedOutcome cmd_embed(const ExperimentConfig& cfg,
                              const std::string& input_model,
                              std::ostream& log) {
    const Network net = cfg.build_network();
    const LabeledData train_data = cfg.make_train_data();
    const LabeledData test_data = cfg.make_test_data();
    const LevelSchedule schedule = cfg.build_schedule();
    const std::uint16_t t_levels = schedule.t_levels();

    EmbedOutcome out;
    const bool multi = cfg.seeds.size() > 1;
    const double t0 = now_seconds();

    for (const auto seed : cfg.seeds) {
        const std::string in_path = seed_path(input_model, seed, multi);
        const PackedCheckpoint in_ckpt = read_checkpoint_file(in_path);
        if (in_ckpt.t_levels != 0)
            throw ConfigError("embed expects a T=0 dense model, got T=" +
                              std::to_string(in_ckpt.t_levels));
        check_architecture(net, in_ckpt);
        ParamSet params = checkpoint_params(in_ckpt);

        EmbedRun run;
        run.seed = seed;
        if (const auto* s = stats_for(in_ckpt, 0))
            run.initial_accuracy = evaluate(net, params, *s, test_data);
        else
            run.initial_accuracy = evaluate(net, params, BatchNormStats{}, test_data);

        run.result = multi_level(net, std::move(params), schedule, train_data,
                                 cfg.multi_level_config(seed));

        for (std::uint16_t t = 1; t <= t_levels; ++t) {
            const ParamSet sparse =
                extract_level(run.result.dense, run.result.counter, t, t_levels);
            run.level_accuracy.push_back(
                evaluate(net, sparse, stats_for_level(run.result, t), test_data));
        }
        run.final_accuracy =
            evaluate(net, run.result.dense, run.result.dense_stats, test_data);

        run.model_path = seed_path(cfg.model_path, seed, multi);
        write_checkpoint_file(run.model_path, pack_result(run.result));
        if (!cfg.digests_path.empty()) {
            run.digests_path = seed_path(cfg.digests_path, seed, multi);
            write_digests(run.digests_path, run.result);
        }
        out.runs.push_back(std::move(run));
    }

    // aggregate across seeds
    RunReport& rep = out.report;
    const std::size_t d = out.runs.front().result.dense.prunable_count();
    for (std::uint16_t t = 1; t <= t_levels; ++t) {
        RunReport::Row row;
        row.level = t;
        row.spec = schedule.specs[t - 1].describe();
        row.nominal = schedule.specs[t - 1].nominal_sparsity();
        row.nonzeros = out.runs.front().result.levels[t - 1].nonzeros;
        row.achieved = 1.0 - static_cast<double>(row.nonzeros) / static_cast<double>(d);
        std::vector<double> accs;
        for (const auto& r : out.runs) accs.push_back(r.level_accuracy[t - 1]);
        row.acc_mean = mean_of(accs);
        row.acc_std = std_of(accs);
        rep.rows.push_back(std::move(row));
    }
    std::vector<double> init_accs, final_accs;
    for (const auto& r : out.runs) {
        init_accs.push_back(r.initial_accuracy);
        final_accs.push_back(r.final_accuracy);
        for (const auto& snap : r.result.levels)
            rep.digests.push_back("seed " + std::to_string(r.seed) + " level " +
                                  std::to_string(snap.level) + " " + snap.digest);
    }
    rep.dense_initial_mean = mean_of(init_accs);
    rep.dense_initial_std = std_of(init_accs);
    rep.dense_final_mean = mean_of(final_accs);
    rep.dense_final_std = std_of(final_accs);
    rep.seconds = now_seconds() - t0;

    log << rep.table();
    if (!cfg.report_path.empty()) {
        std::ofstream csv(cfg.report_path, std::ios::trunc);
        if (!csv) throw IoError("cannot write report: " + cfg.report_path);
        csv << rep.csv();
    }
    return out;
}

// ---------------------------------------------------------------------------
// extract: produce a level-t sparse model file (offline or streaming).
// ---------------------------------------------------------------------------

inline void cmd_extract(const std::string& model, std::uint16_t level,
                        bool streaming, const std::string& output) {
    if (streaming) {
        std::ifstream in(model, std::ios::binary);
        if (!in) throw IoError("cannot open model file: " + model);
        std::ofstream out(output, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + output);
        try {
            extract_streaming(in, level, out);
        } catch (...) {
            out.close();
            std::remove(output.c_str());
            throw;
        }
    } else {
        const PackedCheckpoint ckpt = read_checkpoint_file(model);
        write_checkpoint_file(output, extract_packed(ckpt, level));
    }
}

// ---------------------------------------------------------------------------
// eval: accuracy of a stored level (or the dense model) on the test data.
// ---------------------------------------------------------------------------

inline double cmd_eval(const ExperimentConfig& cfg, const std::string& model,
                       int level, bool recompute_bn, std::ostream& log) {
    const Network net = cfg.build_network();
    const LabeledData test_data = cfg.make_test_data();
    const PackedCheckpoint ckpt = read_checkpoint_file(model);
    check_architecture(net, ckpt);

    ParamSet params = level == 0
                          ? checkpoint_params(ckpt)
                          : checkpoint_params(
                                extract_packed(ckpt, static_cast<std::uint16_t>(level)));
    BatchNormStats stats;
    if (net.batchnorm_count() > 0) {
        if (recompute_bn) {
            // prediction-time statistics from the evaluation inputs, no labels
            stats = compute_bn_stats(net, params, test_data.features, test_data.n);
        } else {
            const auto* s = stats_for(ckpt, level);
            if (!s)
                throw DataError("no stored batchnorm statistics for level " +
                                std::to_string(level) +
                                "; re-run with --recompute-bn");
            stats = *s;
        }
    }
    const double acc = evaluate(net, params, stats, test_data);
    char buf[64];
    std::snprintf(buf, sizeof buf, "accuracy %.4f\n", acc);
    log << buf;
    return acc;
}

// ---------------------------------------------------------------------------
// inspect: structural summary of a model file.
// ---------------------------------------------------------------------------

struct InspectInfo {
    std::uint16_t t_levels = 0;
    std::uint8_t tau = 0;
    std::size_t total_weights = 0;
    std::size_t prunable_weights = 0;
    std::vector<std::size_t> level_nonzeros; // index t-1
    std::size_t dense_nonzeros = 0;
    std::size_t header_bytes = 0;
    std::size_t bn_bytes = 0;
    std::size_t file_bytes = 0;
};

inline InspectInfo inspect_checkpoint(const PackedCheckpoint& ckpt) {
    InspectInfo info;
    info.t_levels = ckpt.t_levels;
    info.tau = ckpt.tau;
    info.total_weights = ckpt.total_weights();
    info.header_bytes = ckpt.header_bytes();
    info.bn_bytes = ckpt.bn_bytes();
    info.file_bytes = ckpt.file_bytes();
    info.level_nonzeros.assign(ckpt.t_levels, 0);
    for (std::size_t li = 0; li < ckpt.layers.size(); ++li) {
        if (!ckpt.layers[li].prunable) continue;
        info.prunable_weights += ckpt.payload[li].size();
        for (const float v : ckpt.payload[li]) {
            if (v != 0.0f) ++info.dense_nonzeros;
            const auto lsb = read_lsb(std::bit_cast<std::uint32_t>(v), ckpt.tau);
            if (lsb >= 1)
                for (std::uint16_t t = static_cast<std::uint16_t>(lsb);
                     t <= ckpt.t_levels; ++t)
                    ++info.level_nonzeros[t - 1];
        }
    }
    return info;
}

inline InspectInfo cmd_inspect(const std::string& model, bool machine,
                               std::ostream& log) {
    const PackedCheckpoint ckpt = read_checkpoint_file(model);
    const InspectInfo info = inspect_checkpoint(ckpt);
    char buf[160];
    if (machine) {
        log << "T=" << info.t_levels << "\n"
            << "tau=" << static_cast<int>(info.tau) << "\n"
            << "total_weights=" << info.total_weights << "\n"
            << "prunable_weights=" << info.prunable_weights << "\n";
        for (std::uint16_t t = 1; t <= info.t_levels; ++t) {
            const double sp = 1.0 - static_cast<double>(info.level_nonzeros[t - 1]) /
                                        static_cast<double>(info.prunable_weights);
            std::snprintf(buf, sizeof buf, "level.%u.nonzeros=%zu\nlevel.%u.sparsity=%.4f\n",
                          t, info.level_nonzeros[t - 1], t, sp);
            log << buf;
        }
        log << "dense_nonzeros=" << info.dense_nonzeros << "\n"
            << "header_bytes=" << info.header_bytes << "\n"
            << "bn_bytes=" << info.bn_bytes << "\n"
            << "file_bytes=" << info.file_bytes << "\n";
    } else {
        std::snprintf(buf, sizeof buf,
                      "T = %u, tau = %u, %zu weights (%zu prunable)\n", info.t_levels,
                      static_cast<unsigned>(info.tau), info.total_weights,
                      info.prunable_weights);
        log << buf;
        for (std::uint16_t t = 1; t <= info.t_levels; ++t) {
            const double sp = 1.0 - static_cast<double>(info.level_nonzeros[t - 1]) /
                                        static_cast<double>(info.prunable_weights);
            std::snprintf(buf, sizeof buf, "level %2u: %8zu nonzeros, sparsity %.4f\n",
                          t, info.level_nonzeros[t - 1], sp);
            log << buf;
        }
        std::snprintf(buf, sizeof buf, "dense:    %8zu nonzeros\n", info.dense_nonzeros);
        log << buf;
        std::snprintf(buf, sizeof buf,
                      "bn section %zu bytes (%.3f%% of %zu total)\n", info.bn_bytes,
                      100.0 * static_cast<double>(info.bn_bytes) /
                          static_cast<double>(info.file_bytes),
                      info.file_bytes);
        log << buf;
    }
    return info;
}

// ---------------------------------------------------------------------------
// verify: re-extract every level and compare digests from the embed run.
// ---------------------------------------------------------------------------

inline bool cmd_verify(const std::string& model, const std::string& digests_path,
                       std::ostream& log) {
    const ConfigFile digests = ConfigFile::parse_file(digests_path);
    const PackedCheckpoint ckpt = read_checkpoint_file(model);
    const auto levels = digests.get_int("", "levels", -1);
    if (levels != ckpt.t_levels)
        throw IntegrityError("digest file lists " + std::to_string(levels) +
                             " levels, model has " + std::to_string(ckpt.t_levels));
    bool all_ok = true;
    for (std::uint16_t t = 1; t <= ckpt.t_levels; ++t) {
        const std::string want =
            digests.require_string("", "digest." + std::to_string(t));
        const std::string got = prunable_digest(extract_packed(ckpt, t));
        const bool ok = want == got;
        all_ok = all_ok && ok;
        log << "level " << t << ": " << (ok ? "ok" : "MISMATCH") << "\n";
    }
    if (digests.has("", "digest.dense")) {
        const std::string want = digests.require_string("", "digest.dense");
        const bool ok = want == prunable_digest(ckpt);
        all_ok = all_ok && ok;
        log << "dense: " << (ok ? "ok" : "MISMATCH") << "\n";
    }
    return all_ok;
}

} // namespace elsa::harness
