#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "gazeforge/param.hpp"

namespace gazeforge {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 4;
    std::size_t steps = 0;
};

struct AdamState {
    std::unordered_map<std::string, std::vector<double>> m;
    std::unordered_map<std::string, std::vector<double>> v;
    std::size_t t = 0;
};

using GradMap = std::unordered_map<std::string, std::vector<double>>;

// grads[name] += scale * g, creating zero-filled buffers on first touch.
void accumulate_grad(GradMap& grads, const std::string& name, const std::vector<double>& g,
                     double scale = 1.0);

// Pulls gradients of the view's watched tensors off a backed-up tape.
// Tensors the loss never touched contribute nothing.
void accumulate_grads_from(const ParamView& view, const Tape& tape, GradMap& grads,
                           double scale = 1.0);

// One bias-corrected Adam update over the trainable entries. Entries absent
// from grads decay their moments as if the gradient were zero.
void adam_step(ParamSet& params, const GradMap& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace gazeforge
