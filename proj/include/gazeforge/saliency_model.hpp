#pragma once

#include <array>
#include <memory>
#include <vector>

#include "gazeforge/backbone.hpp"
#include "gazeforge/optim.hpp"
#include "gazeforge/param.hpp"

namespace gazeforge {

struct ReadoutConfig {
    std::array<std::size_t, 4> widths{16, 8, 4, 1};
    double blur_sigma = 1.5;
    int upsample_factor = 8;
    std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const ReadoutConfig& c);
void from_json(const nlohmann::json& j, ReadoutConfig& c);

// Fixation-prediction model: 1x1 readout stack over the frozen backbone's
// block-5 features (three rectified layers, linear head), nearest-neighbour
// up-sampling, Gaussian blur, spatial soft-max. Output extents are input/2.
class SaliencyModel {
  public:
    SaliencyModel(std::shared_ptr<const Backbone> backbone, ReadoutConfig config);

    const ReadoutConfig& config() const { return config_; }
    const std::shared_ptr<const Backbone>& backbone() const { return backbone_; }
    const ParamSet& params() const { return params_; }
    ParamSet& params() { return params_; }

    // Readout + up-sample + blur on an already-extracted feature stack.
    Tensor log_saliency_from_stack(const Tensor& stack, const ParamView& view) const;

    Tensor predict_log_saliency(const Tensor& image) const;
    Tensor predict_log_saliency(const Tensor& image, const ParamView& view) const;

    // softmax(log-saliency + optional additive bias grid)
    Tensor predict_density(const Tensor& image, const Tensor* center_bias = nullptr) const;
    static Tensor density_from_log(const Tensor& log_saliency,
                                   const Tensor* center_bias = nullptr);

    void save(const std::string& dir) const;
    static SaliencyModel load(const std::string& dir, std::shared_ptr<const Backbone> backbone);

  private:
    std::shared_ptr<const Backbone> backbone_;
    ReadoutConfig config_;
    ParamSet params_;
};

// Desk-scale saliency ground truth: density proportional to the Gaussian-
// windowed local RMS contrast of the display image, on the model's output
// grid (input/2). Zero-contrast images yield the uniform density.
Tensor synthetic_saliency_oracle(const Tensor& display_image, double contrast_sigma = 2.0);

// 16-bit PGM export, values scaled by the maximum (visualization only).
void write_density_pgm(const std::string& path, const Tensor& density);

struct PretrainResult {
    std::vector<double> loss_curve;  // per-step batch-mean KL
    double initial_holdout_kl = 0.0;
    double final_holdout_kl = 0.0;
    std::size_t train_count = 0;
    std::size_t holdout_count = 0;
};

// Fits the readout to the contrast oracle by KL, leaving the backbone
// untouched. Batches cycle the training split in a fixed order, so the run
// is fully deterministic. Throws numeric_error if the loss leaves the reals.
PretrainResult pretrain_readout(SaliencyModel& model,
                                const std::vector<Tensor>& display_images,
                                const AdamConfig& adam, double holdout_fraction = 0.25,
                                double oracle_sigma = 2.0);

}  // namespace gazeforge
