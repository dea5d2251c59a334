#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gazeforge/backbone.hpp"
#include "gazeforge/tensor.hpp"

namespace gazeforge {

struct LossWeights {
    double lambda_sal = 1.0;
    double lambda_feat = 1e-2;
    double lambda_tex = 2e-2;
    double lambda_adv = 1e-1;
    std::string feature_layer = "relu5_2";
    std::vector<std::string> texture_layers = {"relu1_1", "relu2_1", "relu3_1", "relu4_1",
                                               "relu5_1"};
    // empty map = weight 1 for every texture layer
    std::unordered_map<std::string, double> texture_layer_weights;
    double kl_eps = 1e-12;

    double texture_weight(const std::string& layer) const;
};

struct LossTerms {
    double l_sal = 0.0;
    double l_feat = 0.0;
    double l_tex = 0.0;
    double l_adv = 0.0;
    double l_d = 0.0;
};

struct LossReport {
    LossTerms terms;
    double total = 0.0;

    static std::string csv_header();  // step, L_sal, L_feat, L_tex, L_adv, L_D, total
    std::string csv_row(std::size_t step) const;
};

// KL divergence from the target density to the predicted one:
// sum p_t * log(p_t / max(p_hat, eps)), with 0*log 0 = 0. Differentiable
// w.r.t. p_hat; p_t is normally a detached target.
Tensor saliency_loss(const Tensor& p_t, const Tensor& p_hat, double eps = 1e-12);

// Mean squared feature distance, normalized by channel count x positions.
Tensor feature_loss_from(const Tensor& f_ref, const Tensor& f_hat);
Tensor feature_loss(const Backbone& backbone, const Tensor& image, const Tensor& transformed,
                    const std::string& layer = "relu5_2");

// Gram matrix of vectorised feature maps: for F with M positions x N
// channels, G = F^T F / M. Accepts an [M,N] matrix or a [1,C,H,W] map.
Tensor gram(const Tensor& features);

Tensor texture_loss_from(const std::vector<Tensor>& gram_refs,
                         const std::vector<Tensor>& f_hats,
                         const std::vector<double>& layer_weights);
Tensor texture_loss(const Backbone& backbone, const Tensor& image, const Tensor& transformed,
                    const std::vector<std::string>& layers,
                    const LossWeights& weights = LossWeights{});

// Least-squares adversarial terms on the discriminator's patch grid.
Tensor adv_generator_loss(const Tensor& d_fake);
Tensor adv_discriminator_loss(const Tensor& d_fake, const Tensor& d_real);

// Weighted sum of the four generator terms, kept on the tape.
Tensor weighted_total(const Tensor& l_sal, const Tensor& l_feat, const Tensor& l_tex,
                      const Tensor& l_adv, const LossWeights& w);

// Report assembly from already-evaluated terms; throws numeric_error naming
// any non-finite term.
LossReport total_loss(const LossTerms& terms, const LossWeights& w);

}  // namespace gazeforge
