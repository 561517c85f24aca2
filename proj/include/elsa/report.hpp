#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace elsa {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// One row per embedded level, sorted by decreasing sparsity, plus dense
// rows; accuracies are mean +/- sample std over seeds.
struct RunReport {
    struct Row {
        int level = 0;
        std::string spec;      // e.g. "global 0.9" or "1:4"
        double nominal = 0.0;  // requested sparsity over the pruning pool
        double achieved = 0.0; // 1 - nonzeros / D, 4 decimal places
        std::size_t nonzeros = 0;
        double acc_mean = 0.0;
        double acc_std = 0.0;
    };

    std::vector<Row> rows;
    double dense_initial_mean = 0.0, dense_initial_std = 0.0;
    double dense_final_mean = 0.0, dense_final_std = 0.0;
    double seconds = 0.0;
    std::vector<std::string> digests; // one per seed, "seed:level=digest" lines

    std::string table() const {
        std::string out;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-6s %-14s %-18s %-10s %s\n", "level",
                      "spec", "sparsity", "nonzeros", "accuracy");
        out += buf;
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%-6d %-14s %.2f (%.4f)    %-10zu %.4f +/- %.4f\n",
                          r.level, r.spec.c_str(), r.nominal * 100.0, r.achieved,
                          r.nonzeros, r.acc_mean, r.acc_std);
            out += buf;
        }
        std::snprintf(buf, sizeof buf,
                      "dense initial: %.4f +/- %.4f\ndense final:   %.4f +/- %.4f\n",
                      dense_initial_mean, dense_initial_std, dense_final_mean,
                      dense_final_std);
        out += buf;
        std::snprintf(buf, sizeof buf, "elapsed: %.2fs\n", seconds);
        out += buf;
        return out;
    }

    std::string csv() const {
        std::string out = "level,spec,sparsity_nominal,sparsity_achieved,nonzeros,"
                          "acc_mean,acc_std\n";
        char buf[200];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.4f,%zu,%.6f,%.6f\n", r.level,
                          r.spec.c_str(), r.nominal, r.achieved, r.nonzeros,
                          r.acc_mean, r.acc_std);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "dense_initial,,,,,%.6f,%.6f\n",
                      dense_initial_mean, dense_initial_std);
        out += buf;
        std::snprintf(buf, sizeof buf, "dense_final,,,,,%.6f,%.6f\n",
                      dense_final_mean, dense_final_std);
        out += buf;
        return out;
    }
};

} // namespace elsa
