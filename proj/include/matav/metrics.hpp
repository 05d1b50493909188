#pragma once

#include <string>
#include <vector>

namespace matav {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
    double accuracy = 0.0;
    double weighted_f1 = 0.0;

    std::string to_json(const std::vector<std::string>& label_names = {}) const;
};

// Per-class F1 = 2PR/(P+R); any 0/0 is reported as 0. WF1 is the
// support-weighted mean of per-class F1.
MetricsReport weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                          std::size_t n_classes);

}  // namespace matav
