#pragma once

#include <map>
#include <string>

#include "kpi/autodiff.hpp"
#include "kpi/model_state.hpp"

namespace kpi::model {

// Leaves for every registered parameter on one tape; gradients are read
// back per name after backward().
struct TapeParams {
  std::map<std::string, ad::Var> vars;

  ad::Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw InvalidInput("unknown parameter: " + name);
    return it->second;
  }
};

inline TapeParams make_tape_params(ad::Tape& tape, const ModelState& state) {
  TapeParams tp;
  for (const auto& [name, mat] : state.params()) {
    tp.vars.emplace(name, tape.leaf(mat));
  }
  return tp;
}

inline std::map<std::string, Eigen::MatrixXd> collect_gradients(const TapeParams& tp) {
  std::map<std::string, Eigen::MatrixXd> grads;
  for (const auto& [name, var] : tp.vars) grads.emplace(name, var.grad());
  return grads;
}

}  // namespace kpi::model
