#include "gazeforge/saliency_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gazeforge/losses.hpp"
#include "gazeforge/nn_ops.hpp"
#include "gazeforge/random.hpp"
#include "gazeforge/serialize.hpp"

namespace gazeforge {

void to_json(nlohmann::json& j, const ReadoutConfig& c) {
    j = nlohmann::json{{"widths", c.widths},
                       {"blur_sigma", c.blur_sigma},
                       {"upsample_factor", c.upsample_factor},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ReadoutConfig& c) {
    j.at("widths").get_to(c.widths);
    j.at("blur_sigma").get_to(c.blur_sigma);
    j.at("upsample_factor").get_to(c.upsample_factor);
    j.at("seed").get_to(c.seed);
}

SaliencyModel::SaliencyModel(std::shared_ptr<const Backbone> backbone, ReadoutConfig config)
    : backbone_(std::move(backbone)), config_(config) {
    if (!backbone_) throw usage_error("SaliencyModel: null backbone");
    if (config_.widths.back() != 1) {
        throw value_error("SaliencyModel: final readout layer must output 1 channel");
    }
    std::mt19937_64 rng(mix_seed(config_.seed, "readout-init"));
    std::size_t in_ch = backbone_->readout_channels();
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t out_ch = config_.widths[k];
        // linear head gets the plain (gain-1) fan-in scaling
        const double stddev = std::sqrt((k < 3 ? 2.0 : 1.0) / static_cast<double>(in_ch));
        const std::string name = "readout" + std::to_string(k + 1);
        params_.add(name + ".weight", randn({out_ch, in_ch, 1, 1}, rng, stddev), true);
        params_.add(name + ".bias", Tensor::zeros({out_ch}), true);
        in_ch = out_ch;
    }
}

Tensor SaliencyModel::log_saliency_from_stack(const Tensor& stack,
                                              const ParamView& view) const {
    Tensor h = stack;
    for (std::size_t k = 0; k < 4; ++k) {
        const std::string name = "readout" + std::to_string(k + 1);
        h = conv1x1(h, view.get(name + ".weight"), view.get(name + ".bias"));
        if (k < 3) h = relu(h);
    }
    h = nn_upsample(h, config_.upsample_factor);
    if (config_.blur_sigma > 0.0) h = gaussian_blur(h, config_.blur_sigma);
    return h;
}

Tensor SaliencyModel::predict_log_saliency(const Tensor& image, const ParamView& view) const {
    if (image.rank() != 4 || image.height() % 16 != 0 || image.width() % 16 != 0) {
        throw shape_error("predict_log_saliency: extents must be divisible by 16, got " +
                          shape_str(image.shape()));
    }
    return log_saliency_from_stack(backbone_->readout_stack(image), view);
}

Tensor SaliencyModel::predict_log_saliency(const Tensor& image) const {
    return predict_log_saliency(image, ParamView(params_));
}

Tensor SaliencyModel::density_from_log(const Tensor& log_saliency,
                                       const Tensor* center_bias) {
    if (!center_bias) return softmax_spatial(log_saliency);
    if (center_bias->shape() != log_saliency.shape()) {
        throw shape_error("density_from_log: bias " + shape_str(center_bias->shape()) +
                          " vs log-saliency " + shape_str(log_saliency.shape()));
    }
    return softmax_spatial(add(log_saliency, *center_bias));
}

Tensor SaliencyModel::predict_density(const Tensor& image, const Tensor* center_bias) const {
    return density_from_log(predict_log_saliency(image), center_bias);
}

void SaliencyModel::save(const std::string& dir) const {
    save_params(dir, params_, nlohmann::json(config_));
}

SaliencyModel SaliencyModel::load(const std::string& dir,
                                  std::shared_ptr<const Backbone> backbone) {
    nlohmann::json config_json;
    ParamSet loaded = load_params(dir, &config_json);
    SaliencyModel model(std::move(backbone), config_json.get<ReadoutConfig>());
    for (const ParamEntry& e : loaded.entries()) model.params_.set(e.name, e.tensor);
    return model;
}

Tensor synthetic_saliency_oracle(const Tensor& display_image, double contrast_sigma) {
    if (display_image.rank() != 4 || display_image.batch() != 1 ||
        display_image.channels() != 3) {
        throw shape_error("synthetic_saliency_oracle: expected [1,3,H,W], got " +
                          shape_str(display_image.shape()));
    }
    const std::size_t H = display_image.height(), W = display_image.width();
    const auto& v = display_image.values();
    std::vector<double> lum(H * W);
    for (std::size_t i = 0; i < H * W; ++i) {
        lum[i] = (v[i] + v[H * W + i] + v[2 * H * W + i]) / 3.0;
    }
    Tensor lum_t = Tensor::from_values({1, 1, H, W}, lum);
    for (double& x : lum) x *= x;
    Tensor sq_t = Tensor::from_values({1, 1, H, W}, std::move(lum));

    Tensor m = gaussian_blur(lum_t, contrast_sigma);
    Tensor msq = gaussian_blur(sq_t, contrast_sigma);
    std::vector<double> rms(H * W);
    for (std::size_t i = 0; i < H * W; ++i) {
        rms[i] = std::sqrt(std::max(msq.values()[i] - m.values()[i] * m.values()[i], 0.0));
    }
    Tensor grid = bilinear_resize(Tensor::from_values({1, 1, H, W}, std::move(rms)),
                                  (H + 1) / 2, (W + 1) / 2);

    std::vector<double> p = grid.values();
    const double peak = *std::max_element(p.begin(), p.end());
    if (peak < 1e-9) {
        return Tensor::full(grid.shape(), 1.0 / static_cast<double>(grid.numel()));
    }
    double total = 0.0;
    for (double x : p) total += x;
    for (double& x : p) x /= total;
    return Tensor::from_values(grid.shape(), std::move(p));
}

void write_density_pgm(const std::string& path, const Tensor& density) {
    const double peak =
        *std::max_element(density.values().begin(), density.values().end());
    Tensor scaled = scale(density, peak > 0.0 ? 1.0 / peak : 1.0);
    write_pgm(path, scaled, 65535, "density scaled by max value; lossy visualization export");
}

PretrainResult pretrain_readout(SaliencyModel& model,
                                const std::vector<Tensor>& display_images,
                                const AdamConfig& adam, double holdout_fraction,
                                double oracle_sigma) {
    if (display_images.empty()) throw usage_error("pretrain_readout: empty dataset");

    const std::size_t n = display_images.size();
    std::size_t n_hold = n >= 4 ? static_cast<std::size_t>(std::lround(
                                      holdout_fraction * static_cast<double>(n)))
                                : 0;
    n_hold = std::min(n_hold, n - 1);
    const std::size_t n_train = n - n_hold;

    std::vector<Tensor> stacks, oracles;
    stacks.reserve(n);
    oracles.reserve(n);
    for (const Tensor& img : display_images) {
        Tensor pre = preprocess(img);
        stacks.push_back(model.backbone()->readout_stack(pre).detach());
        oracles.push_back(synthetic_saliency_oracle(img, oracle_sigma));
    }

    auto holdout_kl = [&]() {
        if (n_hold == 0) return 0.0;
        ParamView view(model.params());
        double acc = 0.0;
        for (std::size_t i = n_train; i < n; ++i) {
            Tensor p = SaliencyModel::density_from_log(
                model.log_saliency_from_stack(stacks[i], view));
            acc += saliency_loss(oracles[i], p).scalar_value();
        }
        return acc / static_cast<double>(n_hold);
    };

    PretrainResult result;
    result.train_count = n_train;
    result.holdout_count = n_hold;
    result.initial_holdout_kl = holdout_kl();

    const std::size_t batch = std::max<std::size_t>(1, adam.batch_size);
    AdamState state;
    for (std::size_t step = 0; step < adam.steps; ++step) {
        Tape tape;
        ParamView view(model.params(), tape);
        Tensor loss = Tensor::scalar(0.0);
        for (std::size_t j = 0; j < batch; ++j) {
            const std::size_t idx = (step * batch + j) % n_train;
            Tensor p = SaliencyModel::density_from_log(
                model.log_saliency_from_stack(stacks[idx], view));
            loss = add(loss, saliency_loss(oracles[idx], p));
        }
        loss = scale(loss, 1.0 / static_cast<double>(batch));
        const double value = loss.scalar_value();
        if (!std::isfinite(value)) {
            throw numeric_error("pretrain_readout: loss diverged to " + std::to_string(value) +
                                " at step " + std::to_string(step));
        }
        result.loss_curve.push_back(value);
        tape.backward(loss);
        GradMap grads;
        accumulate_grads_from(view, tape, grads);
        adam_step(model.params(), grads, state, adam);
    }
    result.final_holdout_kl = holdout_kl();
    return result;
}

}  // namespace gazeforge
