#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gazeforge/param.hpp"
#include "gazeforge/tensor.hpp"
#include "json.hpp"

namespace gazeforge {

// Display RGB [1,3,H,W] in [0,1] -> BGR, channel mean subtracted, scaled by
// 255. Differentiable; deprocess inverts exactly.
Tensor preprocess(const Tensor& display_rgb);
Tensor deprocess(const Tensor& preprocessed);

struct BackboneConfig {
    std::array<std::size_t, 5> block_channels{8, 16, 32, 64, 64};
    std::array<std::size_t, 5> convs_per_block{2, 2, 4, 4, 4};
    std::uint64_t seed = 1;
    bool normalize_activations = true;

    static BackboneConfig desk() { return {}; }
    static BackboneConfig paper() {
        BackboneConfig c;
        c.block_channels = {64, 128, 256, 512, 512};
        return c;
    }
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

// Ordered layer-name -> feature map collection with the per-layer dimensions
// used by the losses (N = channels, M = H*W).
struct FeatureStack {
    std::vector<std::pair<std::string, Tensor>> layers;

    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

// Frozen, seeded convolutional hierarchy: 5 blocks of 3x3 same convs + ReLU,
// 2x average pooling after blocks 1-4. Layer names are conv{b}_{i} and
// relu{b}_{i}. Weights are He-initialized, then optionally rescaled so every
// channel's mean ReLU activation is 1 on a seeded calibration batch; they
// never change afterwards.
class Backbone {
  public:
    explicit Backbone(const BackboneConfig& config);

    const BackboneConfig& config() const { return config_; }
    const ParamSet& params() const { return params_; }
    std::uint64_t checksum() const { return params_.checksum(); }

    std::vector<std::string> layer_names() const;
    bool has_layer(const std::string& name) const;

    // Forward pass collecting named layers; differentiable w.r.t. the
    // (preprocessed) input image, never w.r.t. the frozen weights.
    FeatureStack extract(const Tensor& image, const std::vector<std::string>& layers) const;

    // Concatenation of the five block-5 layers feeding the saliency readout.
    Tensor readout_stack(const Tensor& image) const;
    static const std::vector<std::string>& readout_layers();
    std::size_t readout_channels() const { return 5 * config_.block_channels[4]; }

    // The seeded batch the activation normalization was calibrated on.
    Tensor calibration_batch() const;

    void save(const std::string& dir) const;
    static Backbone load(const std::string& dir);

  private:
    Backbone(const BackboneConfig& config, bool initialize);
    void build_structure();
    void he_init();
    void calibrate_normalization();

    BackboneConfig config_;
    ParamSet params_;
};

}  // namespace gazeforge
