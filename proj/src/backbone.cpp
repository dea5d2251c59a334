#include "gazeforge/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gazeforge/nn_ops.hpp"
#include "gazeforge/random.hpp"
#include "gazeforge/serialize.hpp"

namespace gazeforge {

namespace {

// BGR channel means of the display-range image statistics the feature
// hierarchy assumes (the classic 103.939/116.779/123.68 over 255).
constexpr double kBgrMeans[3] = {0.40760392, 0.45795686, 0.48501961};

constexpr std::size_t kCalibBatch = 2;
constexpr std::size_t kCalibExtent = 64;

}  // namespace

Tensor preprocess(const Tensor& display_rgb) {
    if (display_rgb.rank() != 4 || display_rgb.channels() != 3) {
        throw shape_error("preprocess: expected [B,3,H,W], got " +
                          shape_str(display_rgb.shape()));
    }
    // out_c = 255 * (in_{2-c} - mean_c), expressed as a fixed 1x1 conv so the
    // op is differentiable like everything else.
    std::vector<double> w(9, 0.0);
    std::vector<double> b(3);
    for (std::size_t c = 0; c < 3; ++c) {
        w[c * 3 + (2 - c)] = 255.0;
        b[c] = -255.0 * kBgrMeans[c];
    }
    return conv1x1(display_rgb, Tensor::from_values({3, 3, 1, 1}, std::move(w)),
                   Tensor::from_values({3}, std::move(b)));
}

Tensor deprocess(const Tensor& preprocessed) {
    if (preprocessed.rank() != 4 || preprocessed.channels() != 3) {
        throw shape_error("deprocess: expected [B,3,H,W], got " +
                          shape_str(preprocessed.shape()));
    }
    std::vector<double> w(9, 0.0);
    std::vector<double> b(3);
    for (std::size_t c = 0; c < 3; ++c) {
        w[c * 3 + (2 - c)] = 1.0 / 255.0;
        b[c] = kBgrMeans[2 - c];
    }
    return conv1x1(preprocessed, Tensor::from_values({3, 3, 1, 1}, std::move(w)),
                   Tensor::from_values({3}, std::move(b)));
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
    j = nlohmann::json{{"block_channels", c.block_channels},
                       {"convs_per_block", c.convs_per_block},
                       {"seed", c.seed},
                       {"normalize_activations", c.normalize_activations}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
    j.at("block_channels").get_to(c.block_channels);
    j.at("convs_per_block").get_to(c.convs_per_block);
    j.at("seed").get_to(c.seed);
    j.at("normalize_activations").get_to(c.normalize_activations);
}

const Tensor& FeatureStack::get(const std::string& name) const {
    for (const auto& [n, t] : layers) {
        if (n == name) return t;
    }
    throw lookup_error("FeatureStack: no layer '" + name + "'");
}

bool FeatureStack::has(const std::string& name) const {
    return std::any_of(layers.begin(), layers.end(),
                       [&name](const auto& p) { return p.first == name; });
}

Backbone::Backbone(const BackboneConfig& config) : Backbone(config, true) {}

Backbone::Backbone(const BackboneConfig& config, bool initialize) : config_(config) {
    build_structure();
    if (initialize) {
        he_init();
        if (config_.normalize_activations) calibrate_normalization();
    }
}

void Backbone::build_structure() {
    std::size_t in_ch = 3;
    for (std::size_t b = 0; b < 5; ++b) {
        const std::size_t out_ch = config_.block_channels[b];
        for (std::size_t i = 0; i < config_.convs_per_block[b]; ++i) {
            const std::string name =
                "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
            params_.add(name + ".weight", Tensor::zeros({out_ch, in_ch, 3, 3}), false);
            params_.add(name + ".bias", Tensor::zeros({out_ch}), false);
            in_ch = out_ch;
        }
    }
}

void Backbone::he_init() {
    std::mt19937_64 rng(mix_seed(config_.seed, "backbone-init"));
    for (const ParamEntry& e : params_.entries()) {
        if (e.tensor.rank() != 4) continue;
        const Shape& s = e.tensor.shape();
        const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
        params_.set(e.name, randn(s, rng, std::sqrt(2.0 / fan_in)));
    }
}

Tensor Backbone::calibration_batch() const {
    std::mt19937_64 rng(mix_seed(config_.seed, "backbone-calibration"));
    Tensor display = rand_uniform({kCalibBatch, 3, kCalibExtent, kCalibExtent}, rng);
    return preprocess(display);
}

void Backbone::calibrate_normalization() {
    Tensor x = calibration_batch();
    for (std::size_t b = 0; b < 5; ++b) {
        for (std::size_t i = 0; i < config_.convs_per_block[b]; ++i) {
            const std::string name =
                "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
            Tensor pre = conv2d(x, params_.get(name + ".weight"), params_.get(name + ".bias"),
                                1, 1);
            Tensor act = relu(pre);
            const std::size_t C = act.channels(), plane = act.height() * act.width();
            const auto& av = act.values();
            std::vector<double> scale(C, 1.0);
            for (std::size_t c = 0; c < C; ++c) {
                double m = 0.0;
                for (std::size_t bb = 0; bb < act.batch(); ++bb) {
                    const double* p = av.data() + (bb * C + c) * plane;
                    for (std::size_t k = 0; k < plane; ++k) m += p[k];
                }
                m /= static_cast<double>(act.batch() * plane);
                if (m > 1e-12) scale[c] = 1.0 / m;
            }
            // relu is positively homogeneous, so scaling the conv output
            // channel scales its mean activation to exactly 1.
            Tensor w = params_.get(name + ".weight");
            Tensor bias = params_.get(name + ".bias");
            std::vector<double> wv = w.values();
            std::vector<double> bv = bias.values();
            const std::size_t per_out = w.numel() / C;
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t k = 0; k < per_out; ++k) wv[c * per_out + k] *= scale[c];
                bv[c] *= scale[c];
            }
            params_.set(name + ".weight", Tensor::from_values(w.shape(), std::move(wv)));
            params_.set(name + ".bias", Tensor::from_values(bias.shape(), std::move(bv)));

            std::vector<double> scaled = act.values();
            for (std::size_t bb = 0; bb < act.batch(); ++bb) {
                for (std::size_t c = 0; c < C; ++c) {
                    double* p = scaled.data() + (bb * C + c) * plane;
                    for (std::size_t k = 0; k < plane; ++k) p[k] *= scale[c];
                }
            }
            x = Tensor::from_values(act.shape(), std::move(scaled));
        }
        if (b < 4) x = downsample_avg(x, 2);
    }
}

std::vector<std::string> Backbone::layer_names() const {
    std::vector<std::string> names;
    for (std::size_t b = 0; b < 5; ++b) {
        for (std::size_t i = 0; i < config_.convs_per_block[b]; ++i) {
            const std::string suffix = std::to_string(b + 1) + "_" + std::to_string(i + 1);
            names.push_back("conv" + suffix);
            names.push_back("relu" + suffix);
        }
    }
    return names;
}

bool Backbone::has_layer(const std::string& name) const {
    if (name.size() < 5) return false;
    const std::string kind = name.substr(0, 4);
    if (kind != "conv" && kind != "relu") return false;
    return params_.has("conv" + name.substr(4) + ".weight");
}

FeatureStack Backbone::extract(const Tensor& image,
                               const std::vector<std::string>& layers) const {
    if (image.rank() != 4 || image.channels() != 3) {
        throw shape_error("extract: expected [B,3,H,W], got " + shape_str(image.shape()));
    }
    const std::vector<std::string> all = layer_names();
    for (const std::string& want : layers) {
        if (std::find(all.begin(), all.end(), want) == all.end()) {
            throw lookup_error("extract: unknown layer '" + want + "'");
        }
    }
    std::size_t deepest = 0;
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (std::find(layers.begin(), layers.end(), all[k]) != layers.end()) deepest = k + 1;
    }

    std::vector<std::pair<std::string, Tensor>> found;
    Tensor x = image;
    std::size_t visited = 0;
    for (std::size_t b = 0; b < 5 && visited < deepest; ++b) {
        for (std::size_t i = 0; i < config_.convs_per_block[b] && visited < deepest; ++i) {
            const std::string suffix = std::to_string(b + 1) + "_" + std::to_string(i + 1);
            x = conv2d(x, params_.get("conv" + suffix + ".weight"),
                       params_.get("conv" + suffix + ".bias"), 1, 1);
            ++visited;
            if (std::find(layers.begin(), layers.end(), "conv" + suffix) != layers.end()) {
                found.emplace_back("conv" + suffix, x);
            }
            x = relu(x);
            ++visited;
            if (std::find(layers.begin(), layers.end(), "relu" + suffix) != layers.end()) {
                found.emplace_back("relu" + suffix, x);
            }
        }
        if (b < 4 && visited < deepest) x = downsample_avg(x, 2);
    }

    FeatureStack stack;
    for (const std::string& want : layers) {
        for (const auto& [n, t] : found) {
            if (n == want) {
                stack.layers.emplace_back(n, t);
                break;
            }
        }
    }
    return stack;
}

const std::vector<std::string>& Backbone::readout_layers() {
    static const std::vector<std::string> names = {"conv5_1", "relu5_1", "relu5_2", "conv5_3",
                                                   "relu5_4"};
    return names;
}

Tensor Backbone::readout_stack(const Tensor& image) const {
    FeatureStack stack = extract(image, readout_layers());
    std::vector<Tensor> parts;
    parts.reserve(stack.layers.size());
    for (const auto& [n, t] : stack.layers) parts.push_back(t);
    return concat_channels(parts);
}

void Backbone::save(const std::string& dir) const {
    save_params(dir, params_, nlohmann::json(config_));
}

Backbone Backbone::load(const std::string& dir) {
    nlohmann::json config_json;
    ParamSet loaded = load_params(dir, &config_json);
    Backbone backbone(config_json.get<BackboneConfig>(), false);
    for (const ParamEntry& e : loaded.entries()) {
        backbone.params_.set(e.name, e.tensor);
    }
    return backbone;
}

}  // namespace gazeforge
