#pragma once

// Built-in systems whose averaged dynamics are known in closed form.
//
// Every entry has a one-dimensional Ornstein-Uhlenbeck fast process
//   dX = eps^-1 theta (tanh(y) - X) dt + eps^-1/2 sqrt(2 theta) dW1
// whose frozen invariant law is N(tanh(y), 1), so Gaussian integrals give the
// averaged coefficients exactly.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slowfast/averaging.hpp"
#include "slowfast/core_model.hpp"

namespace slowfast {

struct ZooEntry {
    std::string id;
    std::function<SlowFastSystem(double epsilon)> make;
    std::optional<EffectiveSystem> closed_form_effective;
    double alpha = 2.0;
    double delta = 1.0;
    std::string notes;
    SamplingPlan validation_plan;
    double known_lambda_hat = 1.0;  ///< ellipticity ratio of sigma sigma^T

    SlowFastSystem system(double epsilon = 1.0 / 64.0) const { return make(epsilon); }
};

/// Accepts the listed ids plus "ou-holder(<alpha>)" and "ou-holder-<alpha>"
/// for alpha in (0, 1]. Throws LookupError otherwise.
ZooEntry get_zoo(const std::string& id);

std::vector<std::string> list_zoo();

/// E f(X) for X ~ N(m, 1) evaluated in closed form for the fields used here.
namespace gaussian {
/// E sin(X) = sin(m) e^{-1/2}.
double mean_sin(double m);
/// E exp(-X^2) = exp(-m^2 / 3) / sqrt(3).
double mean_exp_neg_sq(double m);
}  // namespace gaussian

}  // namespace slowfast
