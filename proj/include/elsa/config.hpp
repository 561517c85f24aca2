#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "elsa/dataset.hpp"
#include "elsa/elsa_run.hpp"
#include "elsa/errors.hpp"
#include "elsa/network.hpp"
#include "elsa/sparsity.hpp"
#include "elsa/training.hpp"

namespace elsa {

// Line-oriented `key = value` configuration with [section] headers.
// Values are scalars or space-separated lists; `#` starts a comment.
class ConfigFile {
public:
    struct Item {
        std::string value;
        int line = 0;
        mutable bool used = false;
    };

    static ConfigFile parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    static ConfigFile parse(const std::string& text, const std::string& origin = "<string>") {
        ConfigFile cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) +
                                      ": unterminated section header");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                if (section.empty())
                    throw ConfigError(origin + ":" + std::to_string(lineno) +
                                      ": empty section name");
                cfg.sections_[section]; // declare even if empty
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": expected `key = value`");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": empty key");
            auto& sec = cfg.sections_[section];
            if (!sec.emplace(key, Item{value, lineno, false}).second)
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": duplicate key `" + key + "`");
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) != 0;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        const auto* item = find(section, key);
        return item ? item->value : fallback;
    }

    std::string require_string(const std::string& section, const std::string& key) const {
        const auto* item = find(section, key);
        if (!item)
            throw ConfigError(origin_ + ": missing required key `" + key +
                              "` in section [" + section + "]");
        return item->value;
    }

    double get_double(const std::string& section, const std::string& key,
                      double fallback) const {
        const auto* item = find(section, key);
        if (!item) return fallback;
        return parse_double(*item, section, key);
    }

    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const {
        const auto* item = find(section, key);
        if (!item) return fallback;
        try {
            std::size_t pos = 0;
            const std::int64_t v = std::stoll(item->value, &pos);
            if (pos != item->value.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw bad_value(*item, section, key, "an integer");
        }
    }

    bool get_bool(const std::string& section, const std::string& key,
                  bool fallback) const {
        const auto* item = find(section, key);
        if (!item) return fallback;
        if (item->value == "true" || item->value == "1" || item->value == "yes")
            return true;
        if (item->value == "false" || item->value == "0" || item->value == "no")
            return false;
        throw bad_value(*item, section, key, "a boolean (true/false)");
    }

    std::vector<std::string> get_list(const std::string& section,
                                      const std::string& key) const {
        const auto* item = find(section, key);
        std::vector<std::string> out;
        if (!item) return out;
        std::istringstream ss(item->value);
        std::string token;
        while (ss >> token) out.push_back(token);
        return out;
    }

    // Catches typos: every key must have been consumed by a getter.
    void reject_unused() const {
        for (const auto& [section, items] : sections_)
            for (const auto& [key, item] : items)
                if (!item.used)
                    throw ConfigError(origin_ + ":" + std::to_string(item.line) +
                                      ": unknown key `" + key + "` in section [" +
                                      section + "]");
    }

    const std::string& origin() const { return origin_; }

private:
    const Item* find(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        if (s == sections_.end()) return nullptr;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return nullptr;
        k->second.used = true;
        return &k->second;
    }

    double parse_double(const Item& item, const std::string& section,
                        const std::string& key) const {
        try {
            std::size_t pos = 0;
            const double v = std::stod(item.value, &pos);
            if (pos != item.value.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw bad_value(item, section, key, "a number");
        }
    }

    ConfigError bad_value(const Item& item, const std::string& section,
                          const std::string& key, const char* what) const {
        return ConfigError(origin_ + ":" + std::to_string(item.line) + ": value `" +
                           item.value + "` for `" + section + "." + key +
                           "` is not " + what);
    }

    static std::string trim(const std::string& s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    std::string origin_;
    std::map<std::string, std::map<std::string, Item>> sections_;
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class DatasetKind { Blobs, Spirals, Idx };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Blobs;
    std::uint32_t classes = 2;
    std::uint32_t dim = 2;
    float separation = 10.0f;
    std::size_t count = 512;
    std::size_t test_count = 256;
    float noise = 0.1f;
    std::uint64_t seed = 7;
    std::string images, labels, test_images, test_labels;
};

struct ExperimentConfig {
    std::vector<std::uint32_t> layer_sizes = {2, 64, 64, 2};
    bool batchnorm = true;

    DatasetSpec dataset;

    TrainConfig train;
    TrainConfig densify;

    std::string schedule_kind = "global";
    std::vector<double> levels = {0.9, 0.8, 0.5};
    std::vector<NByM> patterns;

    Sparsifier sparsifier = Sparsifier::Gmp;
    TrainConfig sparsifier_train; // epochs/LR of each GMP run
    GmpPhase gmp;

    bool exclude_first_affine = false;
    std::set<std::string> extra_exclusions;

    std::vector<std::uint64_t> seeds = {1};

    std::string initial_model_path = "dense.elsa"; // written by train
    std::string model_path = "packed.elsa";        // written by embed
    std::string report_path;
    std::string digests_path;

    static ExperimentConfig from(const ConfigFile& cfg) {
        ExperimentConfig ec;

        if (cfg.has("network", "layers")) {
            ec.layer_sizes.clear();
            for (const auto& tok : cfg.get_list("network", "layers"))
                ec.layer_sizes.push_back(parse_u32(tok, "network.layers"));
            if (ec.layer_sizes.size() < 2)
                throw ConfigError("network.layers needs at least input and output sizes");
        }
        ec.batchnorm = cfg.get_bool("network", "batchnorm", ec.batchnorm);

        const std::string dkind = cfg.get_string("dataset", "kind", "blobs");
        if (dkind == "blobs") ec.dataset.kind = DatasetKind::Blobs;
        else if (dkind == "spirals") ec.dataset.kind = DatasetKind::Spirals;
        else if (dkind == "idx") ec.dataset.kind = DatasetKind::Idx;
        else throw ConfigError("dataset.kind must be blobs, spirals, or idx");
        ec.dataset.classes = static_cast<std::uint32_t>(
            cfg.get_int("dataset", "classes", ec.dataset.classes));
        ec.dataset.dim =
            static_cast<std::uint32_t>(cfg.get_int("dataset", "dim", ec.dataset.dim));
        ec.dataset.separation = static_cast<float>(
            cfg.get_double("dataset", "separation", ec.dataset.separation));
        ec.dataset.count = static_cast<std::size_t>(
            cfg.get_int("dataset", "count", static_cast<std::int64_t>(ec.dataset.count)));
        ec.dataset.test_count = static_cast<std::size_t>(cfg.get_int(
            "dataset", "test_count", static_cast<std::int64_t>(ec.dataset.test_count)));
        ec.dataset.noise =
            static_cast<float>(cfg.get_double("dataset", "noise", ec.dataset.noise));
        ec.dataset.seed = static_cast<std::uint64_t>(
            cfg.get_int("dataset", "seed", static_cast<std::int64_t>(ec.dataset.seed)));
        ec.dataset.images = cfg.get_string("dataset", "images", "");
        ec.dataset.labels = cfg.get_string("dataset", "labels", "");
        ec.dataset.test_images = cfg.get_string("dataset", "test_images", "");
        ec.dataset.test_labels = cfg.get_string("dataset", "test_labels", "");
        if (ec.dataset.kind == DatasetKind::Idx &&
            (ec.dataset.images.empty() || ec.dataset.labels.empty()))
            throw ConfigError("dataset.kind = idx requires images and labels paths");

        read_train(cfg, "train", ec.train);
        ec.densify = ec.train;
        ec.densify.learning_rate = ec.train.learning_rate / 100.0f; // densify default
        ec.densify.epochs = 10;
        read_train(cfg, "densify", ec.densify);

        ec.schedule_kind = cfg.get_string("schedule", "kind", ec.schedule_kind);
        if (ec.schedule_kind == "global" || ec.schedule_kind == "uniform") {
            if (cfg.has("schedule", "levels")) {
                ec.levels.clear();
                for (const auto& tok : cfg.get_list("schedule", "levels"))
                    ec.levels.push_back(parse_level(tok));
            }
        } else if (ec.schedule_kind == "nm") {
            for (const auto& tok : cfg.get_list("schedule", "patterns"))
                ec.patterns.push_back(parse_pattern(tok));
            if (ec.patterns.empty())
                throw ConfigError("schedule.kind = nm requires schedule.patterns");
        } else {
            throw ConfigError("schedule.kind must be global, uniform, or nm");
        }

        const std::string skind = cfg.get_string("sparsifier", "kind", "gmp");
        if (skind == "gmp") ec.sparsifier = Sparsifier::Gmp;
        else if (skind == "oneshot") ec.sparsifier = Sparsifier::OneShot;
        else throw ConfigError("sparsifier.kind must be gmp or oneshot");
        ec.sparsifier_train = ec.train;
        ec.sparsifier_train.epochs = 8;
        if (cfg.has("sparsifier", "epochs"))
            ec.sparsifier_train.epochs = static_cast<std::uint32_t>(
                cfg.get_int("sparsifier", "epochs", 8));
        if (cfg.has("sparsifier", "learning_rate"))
            ec.sparsifier_train.learning_rate = static_cast<float>(
                cfg.get_double("sparsifier", "learning_rate",
                               ec.sparsifier_train.learning_rate));
        ec.gmp.start_frac = cfg.get_double("sparsifier", "start_frac", ec.gmp.start_frac);
        ec.gmp.end_frac = cfg.get_double("sparsifier", "end_frac", ec.gmp.end_frac);
        ec.gmp.prune_every_epochs =
            cfg.get_double("sparsifier", "prune_every_epochs", ec.gmp.prune_every_epochs);
        if (!(ec.gmp.start_frac >= 0.0 && ec.gmp.start_frac < ec.gmp.end_frac &&
              ec.gmp.end_frac <= 1.0))
            throw ConfigError("sparsifier phase requires 0 <= start_frac < end_frac <= 1");
        ec.exclude_first_affine =
            cfg.get_bool("sparsifier", "exclude_first_affine", false);
        for (const auto& name : cfg.get_list("sparsifier", "exclusions"))
            ec.extra_exclusions.insert(name);

        if (cfg.has("run", "seeds")) {
            ec.seeds.clear();
            for (const auto& tok : cfg.get_list("run", "seeds"))
                ec.seeds.push_back(parse_u64(tok, "run.seeds"));
            if (ec.seeds.empty()) throw ConfigError("run.seeds must not be empty");
        }

        ec.initial_model_path =
            cfg.get_string("output", "initial_model", ec.initial_model_path);
        ec.model_path = cfg.get_string("output", "model", ec.model_path);
        ec.report_path = cfg.get_string("output", "report", "");
        ec.digests_path = cfg.get_string("output", "digests", "");

        cfg.reject_unused();
        return ec;
    }

    static ExperimentConfig load(const std::string& path) {
        return from(ConfigFile::parse_file(path));
    }

    // MLP with optional batchnorm after the first hidden affine.
    Network build_network() const {
        std::vector<Layer> layers;
        for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
            layers.push_back(Affine{layer_sizes[i], layer_sizes[i + 1], true});
            const bool last = i + 2 == layer_sizes.size();
            if (!last) {
                if (batchnorm && i == 0)
                    layers.push_back(BatchNorm{layer_sizes[i + 1]});
                layers.push_back(Relu{});
            }
        }
        layers.push_back(SoftmaxCrossEntropyHead{layer_sizes.back(),
                                                 train.label_smoothing});
        return Network(std::move(layers));
    }

    std::set<std::string> exclusions() const {
        std::set<std::string> out = extra_exclusions;
        if (exclude_first_affine) out.insert("0.weight");
        return out;
    }

    LevelSchedule build_schedule() const {
        LevelSchedule schedule;
        const auto excl = exclusions();
        if (schedule_kind == "nm") {
            for (const auto& p : patterns)
                schedule.specs.push_back(SparsitySpec{p, excl});
        } else if (schedule_kind == "uniform") {
            for (const auto lv : levels)
                schedule.specs.push_back(SparsitySpec{UniformSparsity{lv}, excl});
        } else {
            for (const auto lv : levels)
                schedule.specs.push_back(SparsitySpec{GlobalSparsity{lv}, excl});
        }
        schedule.check();
        return schedule;
    }

    LabeledData make_train_data() const { return make_data(false); }
    LabeledData make_test_data() const { return make_data(true); }

    MultiLevelConfig multi_level_config(std::uint64_t seed) const {
        MultiLevelConfig mc;
        mc.sparsifier = sparsifier;
        mc.sparsifier_train = sparsifier_train;
        mc.gmp = gmp;
        mc.densify = densify;
        mc.seed = seed;
        return mc;
    }

private:
    LabeledData make_data(bool test) const {
        switch (dataset.kind) {
        case DatasetKind::Blobs:
            return make_blobs(dataset.classes, dataset.dim, dataset.separation,
                              test ? dataset.test_count : dataset.count,
                              test ? dataset.seed + 0x9e3779b9ull : dataset.seed);
        case DatasetKind::Spirals:
            return make_two_spirals(test ? dataset.test_count : dataset.count,
                                    dataset.noise,
                                    test ? dataset.seed + 0x9e3779b9ull : dataset.seed);
        case DatasetKind::Idx: {
            const auto& img = test && !dataset.test_images.empty() ? dataset.test_images
                                                                   : dataset.images;
            const auto& lab = test && !dataset.test_labels.empty() ? dataset.test_labels
                                                                   : dataset.labels;
            return load_idx_dataset(img, lab);
        }
        }
        throw ConfigError("unreachable dataset kind");
    }

    static void read_train(const ConfigFile& cfg, const std::string& section,
                           TrainConfig& tc) {
        tc.learning_rate = static_cast<float>(
            cfg.get_double(section, "learning_rate", tc.learning_rate));
        tc.momentum =
            static_cast<float>(cfg.get_double(section, "momentum", tc.momentum));
        tc.nesterov = cfg.get_bool(section, "nesterov", tc.nesterov);
        tc.epochs = static_cast<std::uint32_t>(
            cfg.get_int(section, "epochs", tc.epochs));
        tc.batch_size = static_cast<std::uint32_t>(
            cfg.get_int(section, "batch_size", tc.batch_size));
        tc.weight_decay = static_cast<float>(
            cfg.get_double(section, "weight_decay", tc.weight_decay));
        tc.label_smoothing = static_cast<float>(
            cfg.get_double(section, "label_smoothing", tc.label_smoothing));
        tc.check();
    }

    static std::uint32_t parse_u32(const std::string& tok, const char* where) {
        try {
            const long long v = std::stoll(tok);
            if (v < 1 || v > 0xffffff) throw std::out_of_range("");
            return static_cast<std::uint32_t>(v);
        } catch (...) {
            throw ConfigError(std::string(where) + ": bad value `" + tok + "`");
        }
    }

    static std::uint64_t parse_u64(const std::string& tok, const char* where) {
        try {
            return static_cast<std::uint64_t>(std::stoull(tok));
        } catch (...) {
            throw ConfigError(std::string(where) + ": bad value `" + tok + "`");
        }
    }

    static double parse_level(const std::string& tok) {
        try {
            const double v = std::stod(tok);
            if (!(v > 0.0 && v < 1.0)) throw std::out_of_range("");
            return v;
        } catch (...) {
            throw ConfigError("schedule.levels: `" + tok +
                              "` is not a sparsity fraction in (0, 1)");
        }
    }

    static NByM parse_pattern(const std::string& tok) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos)
            throw ConfigError("schedule.patterns: `" + tok + "` is not n:m");
        try {
            const long long n = std::stoll(tok.substr(0, colon));
            const long long m = std::stoll(tok.substr(colon + 1));
            if (n < 1 || m <= n) throw std::out_of_range("");
            return NByM{static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(m)};
        } catch (const ConfigError&) {
            throw;
        } catch (...) {
            throw ConfigError("schedule.patterns: `" + tok + "` is not a valid n:m");
        }
    }
};

} // namespace elsa
