#include "gazeforge/losses.hpp"

#include <cmath>
#include <sstream>

namespace gazeforge {

double LossWeights::texture_weight(const std::string& layer) const {
    auto it = texture_layer_weights.find(layer);
    return it == texture_layer_weights.end() ? 1.0 : it->second;
}

std::string LossReport::csv_header() { return "step,L_sal,L_feat,L_tex,L_adv,L_D,total"; }

std::string LossReport::csv_row(std::size_t step) const {
    std::ostringstream ss;
    ss.precision(17);
    ss << step << ',' << terms.l_sal << ',' << terms.l_feat << ',' << terms.l_tex << ','
       << terms.l_adv << ',' << terms.l_d << ',' << total;
    return ss.str();
}

Tensor saliency_loss(const Tensor& p_t, const Tensor& p_hat, double eps) {
    if (p_t.shape() != p_hat.shape()) {
        throw shape_error("saliency_loss: target " + shape_str(p_t.shape()) +
                          " vs prediction " + shape_str(p_hat.shape()));
    }
    if (!(eps > 0.0)) throw value_error("saliency_loss: eps must be positive");

    if (p_t.recorded()) {
        // fully on-tape variant; soft-max targets are strictly positive
        Tensor logq = log_elem(clamp_min(p_hat, eps));
        return sum(mul(p_t, sub(log_elem(p_t), logq)));
    }
    // target entropy term is a constant; only the cross term needs the tape
    double const_term = 0.0;
    for (double v : p_t.values()) {
        if (v > 0.0) const_term += v * std::log(v);
    }
    Tensor cross = sum(mul(p_t, log_elem(clamp_min(p_hat, eps))));
    return offset(neg(cross), const_term);
}

Tensor feature_loss_from(const Tensor& f_ref, const Tensor& f_hat) {
    if (f_ref.shape() != f_hat.shape()) {
        throw shape_error("feature_loss: feature shapes differ: " + shape_str(f_ref.shape()) +
                          " vs " + shape_str(f_hat.shape()));
    }
    return mean(square(sub(f_hat, f_ref)));
}

Tensor feature_loss(const Backbone& backbone, const Tensor& image, const Tensor& transformed,
                    const std::string& layer) {
    if (image.shape() != transformed.shape()) {
        throw shape_error("feature_loss: image shapes differ");
    }
    Tensor f_ref = backbone.extract(image, {layer}).get(layer).detach();
    Tensor f_hat = backbone.extract(transformed, {layer}).get(layer);
    return feature_loss_from(f_ref, f_hat);
}

Tensor gram(const Tensor& features) {
    if (features.rank() == 2) {
        // rows are positions, columns are channels
        const std::size_t m = features.shape()[0];
        return scale(matmul(transpose2d(features), features), 1.0 / static_cast<double>(m));
    }
    if (features.rank() == 4) {
        if (features.batch() != 1) {
            throw shape_error("gram: expected batch 1, got " + shape_str(features.shape()));
        }
        const std::size_t n = features.channels();
        const std::size_t m = features.height() * features.width();
        Tensor a = reshape(features, {n, m});
        return scale(matmul(a, transpose2d(a)), 1.0 / static_cast<double>(m));
    }
    throw shape_error("gram: expected [M,N] matrix or [1,C,H,W] map, got " +
                      shape_str(features.shape()));
}

Tensor texture_loss_from(const std::vector<Tensor>& gram_refs,
                         const std::vector<Tensor>& f_hats,
                         const std::vector<double>& layer_weights) {
    if (gram_refs.empty() || gram_refs.size() != f_hats.size() ||
        gram_refs.size() != layer_weights.size()) {
        throw usage_error("texture_loss: layer lists must be nonempty and aligned");
    }
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < gram_refs.size(); ++i) {
        Tensor g_hat = gram(f_hats[i]);
        if (g_hat.shape() != gram_refs[i].shape()) {
            throw shape_error("texture_loss: gram shapes differ at layer index " +
                              std::to_string(i));
        }
        const double n = static_cast<double>(g_hat.shape()[0]);
        Tensor err = scale(sum(square(sub(g_hat, gram_refs[i]))), layer_weights[i] / (n * n));
        total = add(total, err);
    }
    return total;
}

Tensor texture_loss(const Backbone& backbone, const Tensor& image, const Tensor& transformed,
                    const std::vector<std::string>& layers, const LossWeights& weights) {
    if (layers.empty()) throw usage_error("texture_loss: no layers given");
    FeatureStack ref = backbone.extract(image, layers);
    FeatureStack hat = backbone.extract(transformed, layers);
    std::vector<Tensor> gram_refs, f_hats;
    std::vector<double> w;
    for (const std::string& layer : layers) {
        gram_refs.push_back(gram(ref.get(layer).detach()));
        f_hats.push_back(hat.get(layer));
        w.push_back(weights.texture_weight(layer));
    }
    return texture_loss_from(gram_refs, f_hats, w);
}

Tensor adv_generator_loss(const Tensor& d_fake) {
    return sum(square(offset(neg(d_fake), 1.0)));
}

Tensor adv_discriminator_loss(const Tensor& d_fake, const Tensor& d_real) {
    if (d_fake.shape() != d_real.shape()) {
        throw shape_error("adv_discriminator_loss: patch grids differ: " +
                          shape_str(d_fake.shape()) + " vs " + shape_str(d_real.shape()));
    }
    Tensor fake_term = sum(square(d_fake));
    Tensor real_term = sum(square(offset(neg(d_real), 1.0)));
    return scale(add(fake_term, real_term), 0.5);
}

Tensor weighted_total(const Tensor& l_sal, const Tensor& l_feat, const Tensor& l_tex,
                      const Tensor& l_adv, const LossWeights& w) {
    Tensor total = scale(l_sal, w.lambda_sal);
    total = add(total, scale(l_feat, w.lambda_feat));
    total = add(total, scale(l_tex, w.lambda_tex));
    total = add(total, scale(l_adv, w.lambda_adv));
    return total;
}

LossReport total_loss(const LossTerms& terms, const LossWeights& w) {
    const std::pair<const char*, double> named[] = {{"L_sal", terms.l_sal},
                                                    {"L_feat", terms.l_feat},
                                                    {"L_tex", terms.l_tex},
                                                    {"L_adv", terms.l_adv},
                                                    {"L_D", terms.l_d}};
    for (const auto& [name, v] : named) {
        if (!std::isfinite(v)) {
            throw numeric_error(std::string("total_loss: non-finite term ") + name + " = " +
                                std::to_string(v));
        }
    }
    LossReport report;
    report.terms = terms;
    report.total = w.lambda_sal * terms.l_sal + w.lambda_feat * terms.l_feat +
                   w.lambda_tex * terms.l_tex + w.lambda_adv * terms.l_adv;
    return report;
}

}  // namespace gazeforge
