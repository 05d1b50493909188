#include "matav/metrics.hpp"

#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace matav {

MetricsReport weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                          std::size_t n_classes) {
    if (y_true.empty()) throw std::invalid_argument("weighted_f1: empty input");
    if (y_true.size() != y_pred.size())
        throw std::invalid_argument("weighted_f1: length mismatch");
    MetricsReport r;
    r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes ||
            static_cast<std::size_t>(p) >= n_classes)
            throw std::invalid_argument("weighted_f1: label out of range");
        ++r.confusion[t][p];
        if (t == p) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());
    r.per_class.resize(n_classes);
    double wf1_num = 0.0;
    std::size_t total_support = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::size_t tp = r.confusion[c][c], fn = 0, fp = 0;
        for (std::size_t k = 0; k < n_classes; ++k) {
            if (k != c) {
                fn += r.confusion[c][k];
                fp += r.confusion[k][c];
            }
        }
        ClassMetrics& m = r.per_class[c];
        m.support = tp + fn;
        m.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        m.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        m.f1 = (m.precision + m.recall) == 0.0
                   ? 0.0
                   : 2.0 * m.precision * m.recall / (m.precision + m.recall);
        wf1_num += static_cast<double>(m.support) * m.f1;
        total_support += m.support;
    }
    r.weighted_f1 = wf1_num / static_cast<double>(total_support);
    return r;
}

std::string MetricsReport::to_json(const std::vector<std::string>& label_names) const {
    nlohmann::json j;  // keys serialize sorted
    j["accuracy"] = accuracy;
    j["weighted_f1"] = weighted_f1;
    j["confusion"] = confusion;
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        nlohmann::json e;
        if (c < label_names.size()) e["label"] = label_names[c];
        e["precision"] = per_class[c].precision;
        e["recall"] = per_class[c].recall;
        e["f1"] = per_class[c].f1;
        e["support"] = per_class[c].support;
        classes.push_back(e);
    }
    j["per_class"] = classes;
    return j.dump(2);
}

}  // namespace matav
