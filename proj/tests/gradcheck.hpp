#pragma once

// Central-finite-difference gradient oracle shared by the unit and acceptance
// suites. A graph builder is a generic callable instantiable at float and
// double; the finite-difference reference is always evaluated in double so
// the comparison measures autodiff correctness rather than probe noise, and
// relative errors use a small absolute floor so dead units (true gradient 0)
// compare cleanly.

#include <cmath>
#include <cstdint>
#include <vector>

#include "dofield/tensor.hpp"

namespace gradcheck {

using ParamValues = std::vector<std::vector<double>>;

template <typename Real, typename Builder>
std::vector<dofield::ad::Tensor<Real>> make_leaves(const ParamValues& values,
                                                   const std::vector<dofield::ad::Shape>& shapes) {
  std::vector<dofield::ad::Tensor<Real>> leaves;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<Real> data(values[i].begin(), values[i].end());
    leaves.push_back(dofield::ad::Tensor<Real>::leaf(shapes[i], std::move(data), true));
  }
  return leaves;
}

template <typename Real, typename Builder>
ParamValues autodiff_grads(Builder&& build, const ParamValues& values,
                           const std::vector<dofield::ad::Shape>& shapes) {
  auto leaves = make_leaves<Real, Builder>(values, shapes);
  dofield::ad::Tape<Real> tape;
  auto loss = build.template operator()<Real>(tape, leaves);
  tape.backward(loss);
  ParamValues grads;
  for (auto& leaf : leaves) grads.emplace_back(leaf.grads().begin(), leaf.grads().end());
  return grads;
}

template <typename Builder>
double eval_double(Builder&& build, const ParamValues& values,
                   const std::vector<dofield::ad::Shape>& shapes) {
  auto leaves = make_leaves<double, Builder>(values, shapes);
  dofield::ad::Tape<double> tape(false);
  auto loss = build.template operator()<double>(tape, leaves);
  return loss.scalar();
}

template <typename Builder>
ParamValues fd_grads(Builder&& build, const ParamValues& values,
                     const std::vector<dofield::ad::Shape>& shapes, double h) {
  ParamValues grads;
  for (std::size_t p = 0; p < values.size(); ++p) {
    std::vector<double> g(values[p].size());
    for (std::size_t i = 0; i < values[p].size(); ++i) {
      ParamValues plus = values, minus = values;
      plus[p][i] += h;
      minus[p][i] -= h;
      g[i] = (eval_double(build, plus, shapes) - eval_double(build, minus, shapes)) / (2 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double rel_error(double a, double b, double floor_) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_});
}

// Max relative error of Real-precision autodiff against the double-precision
// finite-difference reference over every parameter element.
template <typename Real, typename Builder>
double max_grad_error(Builder&& build, const ParamValues& values,
                      const std::vector<dofield::ad::Shape>& shapes, double h, double floor_) {
  const ParamValues ad = autodiff_grads<Real>(build, values, shapes);
  const ParamValues fd = fd_grads(build, values, shapes, h);
  double worst = 0;
  for (std::size_t p = 0; p < ad.size(); ++p)
    for (std::size_t i = 0; i < ad[p].size(); ++i)
      worst = std::max(worst, rel_error(ad[p][i], fd[p][i], floor_));
  return worst;
}

}  // namespace gradcheck
