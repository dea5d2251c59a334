#include "gazeforge/transformer.hpp"

#include <cmath>
#include <random>

#include "gazeforge/nn_ops.hpp"
#include "gazeforge/random.hpp"
#include "gazeforge/serialize.hpp"

namespace gazeforge {

namespace {

constexpr double kNormEps = 1e-5;

Tensor residual_core(const Tensor& x, const Tensor* skip, const Tensor& w1, const Tensor& b1,
                     const Tensor& w2, const Tensor& b2, double eps) {
    Tensor h = relu(instance_norm(conv2d(x, w1, b1, 1, 1), eps));
    h = instance_norm(conv2d(h, w2, b2, 1, 1), eps);
    if (skip != nullptr) h = add(h, *skip);
    return relu(h);
}

void he_init_convs(ParamSet& params, std::mt19937_64& rng) {
    for (const ParamEntry& e : params.entries()) {
        if (e.tensor.rank() != 4) continue;
        const Shape& s = e.tensor.shape();
        const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
        params.set(e.name, randn(s, rng, std::sqrt(2.0 / fan_in)));
    }
}

}  // namespace

void to_json(nlohmann::json& j, const FGTransformConfig& c) {
    j = nlohmann::json{{"residual_blocks", c.residual_blocks},
                       {"trunk_channels", c.trunk_channels},
                       {"upsample_stages", c.upsample_stages},
                       {"concat_channels", c.concat_channels},
                       {"output_residual_skip", c.output_residual_skip}};
}

void from_json(const nlohmann::json& j, FGTransformConfig& c) {
    j.at("residual_blocks").get_to(c.residual_blocks);
    j.at("trunk_channels").get_to(c.trunk_channels);
    j.at("upsample_stages").get_to(c.upsample_stages);
    j.at("concat_channels").get_to(c.concat_channels);
    j.at("output_residual_skip").get_to(c.output_residual_skip);
}

std::vector<std::size_t> ShapePlan::stage_input_channels() const {
    std::vector<std::size_t> out;
    for (const StagePlan& st : stages) {
        if (st.name == "res1" || st.name.rfind("up", 0) == 0) out.push_back(st.in_channels);
    }
    return out;
}

Tensor residual_block(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                      const Tensor& b2, double eps) {
    if (w2.rank() != 4 || w2.shape()[0] != x.channels()) {
        throw shape_error("residual_block: block emits " +
                          std::to_string(w2.rank() == 4 ? w2.shape()[0] : 0) +
                          " channels but the skip needs " + std::to_string(x.channels()));
    }
    return residual_core(x, &x, w1, b1, w2, b2, eps);
}

Tensor upsample_block(const Tensor& x, const Tensor& w, const Tensor& b, double eps) {
    return relu(instance_norm(conv2d(nn_upsample(x, 2), w, b, 1, 1), eps));
}

ShapePlan fgtransform_plan(const FGTransformConfig& cfg, std::size_t stack_channels) {
    if (cfg.residual_blocks < 1) {
        throw value_error("FGTransform: residual_blocks must be positive");
    }
    if (cfg.upsample_stages < 1 || cfg.upsample_stages > 8 ||
        (std::size_t{1} << cfg.upsample_stages) != 16) {
        throw value_error("FGTransform: 2^upsample_stages must match the backbone's 16x "
                          "reduction, got stages = " + std::to_string(cfg.upsample_stages));
    }
    if (cfg.concat_channels != 4) {
        throw value_error("FGTransform: the guide is RGB + log-target, concat_channels must "
                          "be 4");
    }
    if (cfg.trunk_channels % 16 != 0 || cfg.trunk_channels == 0) {
        throw value_error("FGTransform: trunk_channels must halve cleanly through " +
                          std::to_string(cfg.upsample_stages) + " up-sampling stages");
    }

    const std::size_t G = cfg.concat_channels;
    const std::size_t T = cfg.trunk_channels;

    ShapePlan plan;
    for (int i = 1; i <= cfg.residual_blocks; ++i) {
        const std::size_t in = (i == 1 ? stack_channels : T) + G;
        plan.stages.push_back({"res" + std::to_string(i), in, T, 16});
        plan.param_count += T * in * 9 + T + T * T * 9 + T;
    }
    std::size_t c = T;
    int divisor = 16;
    for (int i = 1; i <= cfg.upsample_stages; ++i) {
        plan.stages.push_back({"up" + std::to_string(i), c + G, c / 2, divisor});
        plan.param_count += (c / 2) * (c + G) * 9 + c / 2;
        c /= 2;
        divisor /= 2;
    }
    plan.stages.push_back({"out", c, 3, 1});
    plan.param_count += 3 * c * 9 + 3;
    return plan;
}

FGTransform::FGTransform(std::shared_ptr<const Backbone> backbone, FGTransformConfig config,
                         std::uint64_t seed)
    : backbone_(std::move(backbone)), config_(config) {
    plan_ = fgtransform_plan(config_, backbone_->readout_channels());

    for (const StagePlan& st : plan_.stages) {
        if (st.name.rfind("res", 0) == 0) {
            params_.add(st.name + ".conv1.weight",
                        Tensor::zeros({st.out_channels, st.in_channels, 3, 3}));
            params_.add(st.name + ".conv1.bias", Tensor::zeros({st.out_channels}));
            params_.add(st.name + ".conv2.weight",
                        Tensor::zeros({st.out_channels, st.out_channels, 3, 3}));
            params_.add(st.name + ".conv2.bias", Tensor::zeros({st.out_channels}));
        } else {
            params_.add(st.name + ".conv.weight",
                        Tensor::zeros({st.out_channels, st.in_channels, 3, 3}));
            params_.add(st.name + ".conv.bias", Tensor::zeros({st.out_channels}));
        }
    }

    std::mt19937_64 rng(mix_seed(seed, "fgtransform-init"));
    he_init_convs(params_, rng);
    // identity start: zero output head + input skip
    params_.set("out.conv.weight", Tensor::zeros(params_.get("out.conv.weight").shape()));
}

Tensor FGTransform::forward(const Tensor& image, const Tensor& log_target) const {
    return forward(image, log_target, ParamView(params_));
}

Tensor FGTransform::forward(const Tensor& image, const Tensor& log_target,
                            const ParamView& view) const {
    if (image.rank() != 4 || image.channels() != 3) {
        throw shape_error("FGTransform: expected [B,3,H,W] image, got " +
                          shape_str(image.shape()));
    }
    const std::size_t H = image.height(), W = image.width();
    if (H % 16 != 0 || W % 16 != 0 || H < 32 || W < 32) {
        throw shape_error("FGTransform: extents must be multiples of 16 and at least 32, got " +
                          shape_str(image.shape()));
    }
    if (log_target.rank() != 4 || log_target.channels() != 1 ||
        log_target.batch() != image.batch()) {
        throw shape_error("FGTransform: expected [B,1,h,w] log-target, got " +
                          shape_str(log_target.shape()));
    }

    Tensor pre = preprocess(image);
    // guide pyramid: level k holds the 4 guide channels at 1/2^k resolution
    std::vector<Tensor> pyramid;
    pyramid.push_back(concat_channels({pre, bilinear_resize(log_target, H, W)}));
    for (int k = 1; k <= config_.upsample_stages; ++k) {
        pyramid.push_back(downsample_avg(pyramid.back(), 2));
    }

    auto audit = [](const StagePlan& st, const Tensor& x) {
        if (x.channels() != st.in_channels) {
            throw shape_error("FGTransform: stage " + st.name + " received " +
                              std::to_string(x.channels()) + " channels, plan says " +
                              std::to_string(st.in_channels));
        }
    };

    Tensor trunk = backbone_->readout_stack(pre);
    std::size_t si = 0;
    for (int i = 1; i <= config_.residual_blocks; ++i) {
        const StagePlan& st = plan_.stages[si++];
        Tensor x = concat_channels({trunk, pyramid.back()});
        audit(st, x);
        const Tensor* skip = i == 1 ? nullptr : &trunk;
        trunk = residual_core(x, skip, view.get(st.name + ".conv1.weight"),
                              view.get(st.name + ".conv1.bias"),
                              view.get(st.name + ".conv2.weight"),
                              view.get(st.name + ".conv2.bias"), kNormEps);
    }
    for (int i = 1; i <= config_.upsample_stages; ++i) {
        const StagePlan& st = plan_.stages[si++];
        Tensor x = concat_channels({trunk, pyramid[config_.upsample_stages - (i - 1)]});
        audit(st, x);
        trunk = upsample_block(x, view.get(st.name + ".conv.weight"),
                               view.get(st.name + ".conv.bias"), kNormEps);
    }
    const StagePlan& st = plan_.stages[si];
    audit(st, trunk);
    Tensor out = conv2d(trunk, view.get("out.conv.weight"), view.get("out.conv.bias"), 1, 1);
    if (config_.output_residual_skip) out = add(out, image);
    return out;
}

void FGTransform::save(const std::string& dir) const {
    save_params(dir, params_, nlohmann::json(config_));
}

FGTransform FGTransform::load(const std::string& dir,
                              std::shared_ptr<const Backbone> backbone) {
    nlohmann::json config_json;
    ParamSet loaded = load_params(dir, &config_json);
    FGTransform net(std::move(backbone), config_json.get<FGTransformConfig>(), 0);
    for (const ParamEntry& e : loaded.entries()) {
        net.params_.set(e.name, e.tensor);
    }
    return net;
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
    j = nlohmann::json{{"channels", c.channels},
                       {"strides", c.strides},
                       {"kernel", c.kernel},
                       {"padding", c.padding},
                       {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
    j.at("channels").get_to(c.channels);
    j.at("strides").get_to(c.strides);
    j.at("kernel").get_to(c.kernel);
    j.at("padding").get_to(c.padding);
    j.at("leaky_slope").get_to(c.leaky_slope);
}

int receptive_field(int kernel, const std::vector<int>& strides) {
    int r = 1;
    int jump = 1;
    for (int s : strides) {
        r += (kernel - 1) * jump;
        jump *= s;
    }
    return r;
}

PatchDiscriminator::PatchDiscriminator(DiscriminatorConfig config, std::uint64_t seed)
    : config_(config) {
    std::size_t in = 3;
    for (std::size_t i = 0; i < config_.channels.size(); ++i) {
        const std::string name = "d" + std::to_string(i + 1);
        const std::size_t out = config_.channels[i];
        const std::size_t k = static_cast<std::size_t>(config_.kernel);
        params_.add(name + ".weight", Tensor::zeros({out, in, k, k}));
        params_.add(name + ".bias", Tensor::zeros({out}));
        in = out;
    }
    std::mt19937_64 rng(mix_seed(seed, "discriminator-init"));
    he_init_convs(params_, rng);
}

int PatchDiscriminator::receptive_field() const {
    return gazeforge::receptive_field(config_.kernel,
                                      {config_.strides.begin(), config_.strides.end()});
}

Tensor PatchDiscriminator::forward(const Tensor& image) const {
    return forward(image, ParamView(params_));
}

Tensor PatchDiscriminator::forward(const Tensor& image, const ParamView& view) const {
    if (image.rank() != 4 || image.channels() != 3) {
        throw shape_error("PatchDiscriminator: expected [B,3,H,W], got " +
                          shape_str(image.shape()));
    }
    Tensor x = image;
    const std::size_t last = config_.channels.size() - 1;
    for (std::size_t i = 0; i <= last; ++i) {
        const std::string name = "d" + std::to_string(i + 1);
        x = conv2d(x, view.get(name + ".weight"), view.get(name + ".bias"),
                   config_.strides[i], config_.padding);
        if (i == last) break;
        if (i >= 1) x = instance_norm(x, kNormEps);
        x = leaky_relu(x, config_.leaky_slope);
    }
    return x;
}

void PatchDiscriminator::save(const std::string& dir) const {
    save_params(dir, params_, nlohmann::json(config_));
}

PatchDiscriminator PatchDiscriminator::load(const std::string& dir) {
    nlohmann::json config_json;
    ParamSet loaded = load_params(dir, &config_json);
    PatchDiscriminator disc(config_json.get<DiscriminatorConfig>(), 0);
    for (const ParamEntry& e : loaded.entries()) {
        disc.params_.set(e.name, e.tensor);
    }
    return disc;
}

}  // namespace gazeforge
