#pragma once

#include <map>
#include <string>

namespace matav {

// Worst relative error between tape gradients and central finite
// differences (h = 1e-6), per module, on small seeded instances with up to
// 20 sampled coordinates per parameter tensor.
struct GradCheckOptions {
    double h = 1e-6;
    std::size_t samples_per_tensor = 20;
    uint64_t seed = 1234;
};

std::map<std::string, double> run_gradcheck(const GradCheckOptions& opts = {},
                                            const std::string& only_module = "");

constexpr double kGradCheckTolerance = 1e-5;

}  // namespace matav
