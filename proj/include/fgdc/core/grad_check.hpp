#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "fgdc/core/tape.hpp"

namespace fgdc {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // 0 checks every element; otherwise a seeded random subset of this size.
  std::size_t max_elements = 0;
  std::uint64_t seed = 0;
  // Elements whose one-sided differences disagree by more than kink_tol
  // relative (a ReLU, clamp or integer-coordinate kink inside [x-h, x+h]) are
  // excluded from max_rel_err. Smooth curvature moves them apart by about
  // h |f''|, far below kink_tol. The check fails if more than
  // max_kink_fraction of the sampled elements had to be excluded.
  bool skip_kinks = false;
  double kink_tol = 1e-2;
  double max_kink_fraction = 0.05;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string summary() const;
};

// Scalar function of one tracked input, evaluated on a fresh tape.
using ScalarFn = std::function<Var<double>(Tape<double>&, const Var<double>&)>;
// Scalar function that reads parameters through tape.param().
using ParamScalarFn = std::function<Var<double>(Tape<double>&)>;

// rel err = |a - n| / max(|a|, |n|, floor), n = central difference, floor =
// max(1e-8, 1e4 eps (1 + |f|) / h), the roundoff limit of n scaled up.
GradCheckReport grad_check(const ScalarFn& f, const Tensor<double>& input,
                           const GradCheckOptions& opt = {});
GradCheckReport grad_check_parameter(const ParamScalarFn& f,
                                     Parameter<double>& param,
                                     const GradCheckOptions& opt = {});

// Fold b into a, keeping the worse one.
GradCheckReport merge(const GradCheckReport& a, const GradCheckReport& b);

}  // namespace fgdc
