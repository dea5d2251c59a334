#include "gazeforge/optim.hpp"

#include <cmath>

namespace gazeforge {

void accumulate_grad(GradMap& grads, const std::string& name, const std::vector<double>& g,
                     double scale) {
    auto it = grads.find(name);
    if (it == grads.end()) it = grads.emplace(name, std::vector<double>(g.size(), 0.0)).first;
    if (it->second.size() != g.size()) {
        throw shape_error("accumulate_grad: size mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += scale * g[i];
}

void accumulate_grads_from(const ParamView& view, const Tape& tape, GradMap& grads,
                           double scale) {
    for (const auto& [name, tensor] : view.watched()) {
        const std::vector<double>* g = tape.grad_buffer(tensor.node());
        if (g) accumulate_grad(grads, name, *g, scale);
    }
}

void adam_step(ParamSet& params, const GradMap& grads, AdamState& state,
               const AdamConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw value_error("adam_step: lr must be positive");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
        throw value_error("adam_step: betas must lie in [0,1)");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    for (const ParamEntry& e : params.entries()) {
        if (!e.trainable) continue;
        const std::size_t n = e.tensor.numel();
        auto& m = state.m[e.name];
        auto& v = state.v[e.name];
        if (m.empty()) m.assign(n, 0.0);
        if (v.empty()) v.assign(n, 0.0);
        if (m.size() != n || v.size() != n) {
            throw shape_error("adam_step: state size mismatch for '" + e.name + "'");
        }
        const std::vector<double>* g = nullptr;
        auto it = grads.find(e.name);
        if (it != grads.end()) {
            if (it->second.size() != n) {
                throw shape_error("adam_step: grad size mismatch for '" + e.name + "'");
            }
            g = &it->second;
        }
        std::vector<double> updated = e.tensor.values();
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            updated[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        params.set(e.name, Tensor::from_values(e.tensor.shape(), std::move(updated)));
    }
}

}  // namespace gazeforge
