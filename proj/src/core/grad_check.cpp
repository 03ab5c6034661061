#include "fgdc/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "fgdc/core/parameters.hpp"

namespace fgdc {
namespace {

std::vector<std::size_t> pick_indices(std::size_t count, const GradCheckOptions& opt) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  if (opt.max_elements == 0 || opt.max_elements >= count) return idx;
  Rng rng(opt.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(opt.max_elements);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// `value_at` evaluates the function with element i of the checked tensor
// replaced by v.
GradCheckReport compare(const std::function<double(std::size_t, double)>& value_at,
                        double f0, std::span<const double> x,
                        std::span<const double> analytic,
                        const GradCheckOptions& opt) {
  GradCheckReport r;
  // Central differences cannot resolve derivatives below ~eps |f| / h; the
  // relative error is measured against at least 1e4 times that.
  const double floor = std::max(
      1e-8, 1e4 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f0)) / opt.h);
  for (std::size_t i : pick_indices(x.size(), opt)) {
    const double fp = value_at(i, x[i] + opt.h);
    const double fm = value_at(i, x[i] - opt.h);
    const double numeric = (fp - fm) / (2.0 * opt.h);
    ++r.checked;
    if (opt.skip_kinks) {
      const double right = (fp - f0) / opt.h;
      const double left = (f0 - fm) / opt.h;
      if (std::abs(right - left) >
          opt.kink_tol * std::max({std::abs(right), std::abs(left), 1e-8})) {
        ++r.kinks;
        continue;
      }
    }
    const double a = analytic[i];
    const double err =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    if (err > r.max_rel_err) {
      r.max_rel_err = err;
      r.worst_index = i;
      r.worst_analytic = a;
      r.worst_numeric = numeric;
    }
  }
  r.pass = r.max_rel_err < opt.tol &&
           static_cast<double>(r.kinks) <=
               opt.max_kink_fraction * static_cast<double>(r.checked);
  return r;
}

void require_scalar(const Var<double>& v) {
  if (v.value().numel() != 1)
    throw ShapeError("grad_check: function output must be scalar, got " +
                     v.shape().str());
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (pass ? "pass" : "FAIL") << " max_rel_err=" << max_rel_err
     << " checked=" << checked << " kinks=" << kinks;
  if (max_rel_err > 0)
    os << " worst[" << worst_index << "] analytic=" << worst_analytic
       << " numeric=" << worst_numeric;
  return os.str();
}

GradCheckReport merge(const GradCheckReport& a, const GradCheckReport& b) {
  GradCheckReport r = a.max_rel_err >= b.max_rel_err ? a : b;
  r.checked = a.checked + b.checked;
  r.kinks = a.kinks + b.kinks;
  r.pass = a.pass && b.pass;
  return r;
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor<double>& input,
                           const GradCheckOptions& opt) {
  Tensor<double> analytic;
  double f0 = 0;
  {
    Tape<double> tape;
    Var<double> x = tape.leaf(input);
    Var<double> y = f(tape, x);
    require_scalar(y);
    f0 = y.value().item();
    analytic = tape.backward(y).of(x);
  }
  auto value_at = [&](std::size_t i, double v) {
    Tensor<double> moved = input.clone();
    moved.mutable_data()[i] = v;
    Tape<double> tape;
    tape.set_grad_enabled(false);
    return f(tape, tape.constant(std::move(moved))).value().item();
  };
  return compare(value_at, f0, input.data(), analytic.data(), opt);
}

GradCheckReport grad_check_parameter(const ParamScalarFn& f,
                                     Parameter<double>& param,
                                     const GradCheckOptions& opt) {
  const Tensor<double> original = param.value;
  Tensor<double> analytic;
  double f0 = 0;
  {
    Tape<double> tape;
    Var<double> y = f(tape);
    require_scalar(y);
    f0 = y.value().item();
    Var<double> pv = tape.param(param);
    analytic = tape.backward(y).of(pv);
  }
  auto value_at = [&](std::size_t i, double v) {
    Tensor<double> moved = original.clone();
    moved.mutable_data()[i] = v;
    param.value = std::move(moved);
    Tape<double> tape;
    tape.set_grad_enabled(false);
    const double out = f(tape).value().item();
    return out;
  };
  GradCheckReport r = compare(value_at, f0, original.data(), analytic.data(), opt);
  param.value = original;
  return r;
}

}  // namespace fgdc
