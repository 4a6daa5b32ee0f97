#pragma once

#include <functional>
#include <memory>
#include <string>

#include "satv2x/nn/tape.hpp"

namespace satv2x {

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// One finite-difference check: a loss builder over a parameter set. The
// builder must reproduce the same graph for the current parameter values on
// every call (any internal randomness must be re-seeded per build).
struct GradCheckCase {
  std::string name;
  std::shared_ptr<nn::ParameterSet> params;
  std::function<nn::Var(nn::Tape&)> build;
};

// Central differences with the given step against tape backward();
// relative error is |a - n| / max(1, |a|, |n|).
GradCheckReport check_gradients(const GradCheckCase& c, double fd_step = 1e-5,
                                double tolerance = 1e-4);

// Randomized small-shape cases for every differentiable op and the
// training-loss composites.
std::vector<GradCheckCase> builtin_gradient_cases(std::uint64_t seed, int instances_per_op);

std::vector<GradCheckReport> run_builtin_gradient_checks(std::uint64_t seed,
                                                         int instances_per_op,
                                                         double fd_step = 1e-5,
                                                         double tolerance = 1e-4);

}  // namespace satv2x
