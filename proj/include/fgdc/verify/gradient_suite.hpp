#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fgdc/core/grad_check.hpp"

namespace fgdc {

struct GradSuiteResult {
  std::string op;
  double tol = 0;
  bool composite = false;
  GradCheckReport report;  // worst case over seeds and checked tensors
  std::string worst_tensor;
  double seconds = 0;
};

// Names accepted by run_gradient_suite, in execution order.
std::vector<std::string> gradient_suite_ops();

// Central-difference checks at 64-bit. Primitive ops use rel tol 1e-4, deep
// composites 1e-3. `only` selects one op (empty runs all); unknown names
// throw std::invalid_argument.
std::vector<GradSuiteResult> run_gradient_suite(const std::string& only = "", int seeds = 5,
                                                std::uint64_t base_seed = 0);

}  // namespace fgdc
