#pragma once

#include <string>
#include <vector>

#include "deltaseg/network.hpp"

namespace deltaseg {

struct GradSuiteEntry {
    std::string name;
    double max_rel_error = 0.0;
    bool pass = false;
};

// Finite-difference checks (64-bit) of every op and attention module on small
// random inputs. Inputs near activation kinks are nudged away from them.
std::vector<GradSuiteEntry> run_module_gradient_suite(double tol, std::uint64_t seed);

// Full-model check on a width-reduced config at 32x32 in eval mode. Samples
// at least per_type_target elements from every parameter type (depthwise /
// pointwise / full / transposed conv weights, conv biases, BN affine, PReLU
// slopes) and compares against central differences.
GradSuiteEntry run_model_gradient_check(double tol, std::uint64_t seed, int per_type_target = 20);

}  // namespace deltaseg
