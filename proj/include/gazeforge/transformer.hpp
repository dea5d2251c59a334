#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "gazeforge/backbone.hpp"
#include "gazeforge/param.hpp"

namespace gazeforge {

struct FGTransformConfig {
    int residual_blocks = 6;
    std::size_t trunk_channels = 64;
    int upsample_stages = 4;
    std::size_t concat_channels = 4;  // RGB + log-target guide
    bool output_residual_skip = true;

    static FGTransformConfig desk() { return {}; }
    static FGTransformConfig paper() {
        FGTransformConfig c;
        c.trunk_channels = 1024;
        return c;
    }
};

void to_json(nlohmann::json& j, const FGTransformConfig& c);
void from_json(const nlohmann::json& j, FGTransformConfig& c);

struct StagePlan {
    std::string name;
    std::size_t in_channels = 0;  // includes the guide channels
    std::size_t out_channels = 0;
    int extent_divisor = 1;  // spatial reduction at the stage input
};

struct ShapePlan {
    std::vector<StagePlan> stages;
    std::size_t param_count = 0;

    // 324, 68, 36, 20, 12 at desk scale; 2564, 1028, 516, 260, 132 at paper
    // scale (first residual block, then the up-sampling blocks).
    std::vector<std::size_t> stage_input_channels() const;
};

// Stage arithmetic for a given guide-feature width (the backbone stack's
// channel count), validated against the config. Also used by the builder, so
// plan and parameters can never drift apart.
ShapePlan fgtransform_plan(const FGTransformConfig& cfg, std::size_t stack_channels);

// Conv3x3 -> IN -> ReLU -> Conv3x3 -> IN, add the skip, ReLU. The public
// entry requires matching input/output channels so the skip is the input
// itself; the network variants pass the pre-concatenation trunk instead.
Tensor residual_block(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                      const Tensor& b2, double eps = 1e-5);

// NN-up x2 -> Conv3x3 -> IN -> ReLU.
Tensor upsample_block(const Tensor& x, const Tensor& w, const Tensor& b, double eps = 1e-5);

// Image-to-image generator guided by a target density: the frozen backbone's
// feature stack enters a residual trunk, followed by up-sampling stages back
// to image resolution. A 4-channel guide (preprocessed RGB + log-target,
// block-averaged to each stage's extent) is concatenated before every stage.
// The final 3x3 conv starts at zero, so with the output skip the untrained
// network is exactly the identity.
class FGTransform {
  public:
    FGTransform(std::shared_ptr<const Backbone> backbone, FGTransformConfig config,
                std::uint64_t seed);

    const FGTransformConfig& config() const { return config_; }
    const ShapePlan& plan() const { return plan_; }
    const std::shared_ptr<const Backbone>& backbone() const { return backbone_; }
    const ParamSet& params() const { return params_; }
    ParamSet& params() { return params_; }

    // image is display RGB [1,3,H,W] with extents divisible by 16 (and at
    // least 32 so instance norms see more than one position); log_target is
    // [1,1,h,w], resampled internally. Returns the transformed display image.
    Tensor forward(const Tensor& image, const Tensor& log_target) const;
    Tensor forward(const Tensor& image, const Tensor& log_target, const ParamView& view) const;

    void save(const std::string& dir) const;
    static FGTransform load(const std::string& dir, std::shared_ptr<const Backbone> backbone);

  private:
    std::shared_ptr<const Backbone> backbone_;
    FGTransformConfig config_;
    ParamSet params_;
    ShapePlan plan_;
};

struct DiscriminatorConfig {
    std::array<std::size_t, 5> channels{8, 16, 32, 64, 1};
    std::array<int, 5> strides{2, 2, 2, 1, 1};
    int kernel = 4;
    int padding = 1;
    double leaky_slope = 0.2;

    static DiscriminatorConfig desk() { return {}; }
    static DiscriminatorConfig paper() {
        DiscriminatorConfig c;
        c.channels = {64, 128, 256, 512, 1};
        return c;
    }
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

// Receptive-field extent of one output unit: r grows by (kernel-1) * jump per
// layer, where jump is the product of the preceding strides.
int receptive_field(int kernel, const std::vector<int>& strides);

// Strided conv stack scoring overlapping patches: LeakyReLU after every
// hidden layer, instance norm on the middle three, linear single-channel
// output grid.
class PatchDiscriminator {
  public:
    PatchDiscriminator(DiscriminatorConfig config, std::uint64_t seed);

    const DiscriminatorConfig& config() const { return config_; }
    const ParamSet& params() const { return params_; }
    ParamSet& params() { return params_; }
    int receptive_field() const;

    Tensor forward(const Tensor& image) const;
    Tensor forward(const Tensor& image, const ParamView& view) const;

    void save(const std::string& dir) const;
    static PatchDiscriminator load(const std::string& dir);

  private:
    DiscriminatorConfig config_;
    ParamSet params_;
};

}  // namespace gazeforge
