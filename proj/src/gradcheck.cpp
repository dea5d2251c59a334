#include "gazeforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gazeforge {

namespace {

double eval_scalar(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                   const std::vector<Tensor>& inputs) {
    Tensor out = fn(inputs);
    if (out.numel() != 1) {
        throw usage_error("gradcheck: fn must return a scalar, got shape " +
                          shape_str(out.shape()));
    }
    return out.values()[0];
}

}  // namespace

GradcheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                          const std::vector<Tensor>& inputs, const GradcheckOptions& opts) {
    if (inputs.empty()) throw usage_error("gradcheck: no inputs");

    Tape tape;
    std::vector<Tensor> watched;
    watched.reserve(inputs.size());
    for (const Tensor& t : inputs) watched.push_back(tape.watch(t));
    Tensor loss = fn(watched);
    if (loss.numel() != 1) {
        throw usage_error("gradcheck: fn must return a scalar, got shape " +
                          shape_str(loss.shape()));
    }
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const Tensor& w : watched) {
        const std::vector<double>* g = tape.grad_buffer(w.node());
        if (g) {
            analytic.push_back(*g);
        } else {
            analytic.emplace_back(w.numel(), 0.0);
        }
    }

    GradcheckResult res;
    const double f0 = opts.kink_detect > 0.0 ? eval_scalar(fn, inputs) : 0.0;
    std::mt19937_64 rng(opts.sample_seed);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::vector<double>& base = inputs[k].values();
        std::vector<std::size_t> coords(base.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (opts.max_coords_per_input > 0 && coords.size() > opts.max_coords_per_input) {
            for (std::size_t i = 0; i < opts.max_coords_per_input; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, coords.size() - 1);
                std::swap(coords[i], coords[pick(rng)]);
            }
            coords.resize(opts.max_coords_per_input);
        }

        for (std::size_t idx : coords) {
            if (std::abs(base[idx]) <= opts.kink_margin) {
                ++res.coords_skipped;
                continue;
            }
            std::vector<Tensor> pert(inputs.begin(), inputs.end());
            std::vector<double> vals = base;
            vals[idx] = base[idx] + opts.epsilon;
            pert[k] = Tensor::from_values(inputs[k].shape(), vals);
            const double fp = eval_scalar(fn, pert);
            vals[idx] = base[idx] - opts.epsilon;
            pert[k] = Tensor::from_values(inputs[k].shape(), std::move(vals));
            const double fm = eval_scalar(fn, pert);

            if (opts.kink_detect > 0.0) {
                const double h = opts.epsilon / 2.0;
                std::vector<double> half = base;
                half[idx] = base[idx] + h;
                pert[k] = Tensor::from_values(inputs[k].shape(), half);
                const double fp2 = eval_scalar(fn, pert);
                half[idx] = base[idx] - h;
                pert[k] = Tensor::from_values(inputs[k].shape(), std::move(half));
                const double fm2 = eval_scalar(fn, pert);
                const double n1 = (fp - fm) / (2.0 * opts.epsilon);
                const double n2 = (fp2 - fm2) / opts.epsilon;
                // A piece change inside the window shifts the slope estimate
                // as epsilon shrinks; smooth coordinates agree to O(eps^2).
                // Slopes buried in roundoff noise are unverifiable and skipped.
                const double scale = std::max({std::abs(n1), std::abs(n2), 1e-8});
                const double noise = std::abs(f0) * 1e-13 / opts.epsilon;
                if (std::abs(n1 - n2) > std::max(opts.kink_detect * scale, noise) ||
                    scale * opts.tolerance <= noise) {
                    ++res.coords_skipped;
                    continue;
                }
            }

            const double numeric = (fp - fm) / (2.0 * opts.epsilon);
            const double a = analytic[k][idx];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            ++res.coords_checked;
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_coord = "input " + std::to_string(k) + " coord " +
                                  std::to_string(idx) + ": analytic " + std::to_string(a) +
                                  ", numeric " + std::to_string(numeric);
            }
            if (rel > opts.tolerance) res.passed = false;
        }
    }
    return res;
}

}  // namespace gazeforge
