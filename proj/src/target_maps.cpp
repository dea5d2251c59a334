#include "gazeforge/target_maps.hpp"

#include <algorithm>

#include "gazeforge/nn_ops.hpp"
#include "gazeforge/random.hpp"

namespace gazeforge {

double TargetSampleConfig::mask_blur_sigma_for(std::size_t grid_extent) const {
    return mask_blur_sigma_at_512 * static_cast<double>(grid_extent) / 512.0;
}

namespace {

void require_density_grid(const Tensor& t, const char* what) {
    if (t.rank() != 4 || t.batch() != 1 || t.channels() != 1) {
        throw shape_error(std::string(what) + ": expected [1,1,H,W], got " +
                          shape_str(t.shape()));
    }
}

Tensor union_mask(const std::vector<ObjectMask>& masks, const Shape& expect) {
    std::vector<double> u(shape_numel(expect), 0.0);
    for (const ObjectMask& m : masks) {
        if (m.grid.shape() != expect) {
            throw shape_error("mask extents " + shape_str(m.grid.shape()) +
                              " do not match saliency grid " + shape_str(expect));
        }
        const auto& v = m.grid.values();
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::max(u[i], v[i]);
    }
    return Tensor::from_values(expect, std::move(u));
}

}  // namespace

Tensor local_shift(const Tensor& saliency, const std::vector<ObjectMask>& masks, double k_sh,
                   double mask_blur_sigma) {
    require_density_grid(saliency, "local_shift");
    if (mask_blur_sigma < 0.0) throw value_error("local_shift: negative blur sigma");
    Tensor m = union_mask(masks, saliency.shape());
    if (mask_blur_sigma > 0.0) m = gaussian_blur(m, mask_blur_sigma);
    return add(saliency, scale(m, k_sh));
}

Tensor global_scale(const Tensor& saliency, double k_sc) {
    require_density_grid(saliency, "global_scale");
    if (!(k_sc > 0.0)) throw value_error("global_scale: factor must be positive");
    return scale(saliency, k_sc);
}

SampledTarget sample_target(const Tensor& saliency, const std::vector<ObjectMask>& masks,
                            const TargetSampleConfig& cfg, std::mt19937_64& rng) {
    require_density_grid(saliency, "sample_target");
    SampledTarget out;
    out.spec.kind = cfg.kind;
    Tensor shifted;
    if (cfg.kind == TargetKind::local_shift) {
        if (masks.empty()) throw usage_error("sample_target: local shift needs object masks");
        out.spec.k_sh = uniform_in(rng, cfg.k_sh_min, cfg.k_sh_max);
        out.spec.mask_blur_sigma =
            cfg.mask_blur_sigma_for(std::max(saliency.height(), saliency.width()));
        shifted = local_shift(saliency, masks, out.spec.k_sh, out.spec.mask_blur_sigma);
    } else {
        out.spec.k_sc = uniform_in(rng, cfg.k_sc_min, cfg.k_sc_max);
        shifted = global_scale(saliency, out.spec.k_sc);
    }
    out.density = softmax_spatial(shifted);
    return out;
}

Tensor to_network_input(const Tensor& density) {
    require_density_grid(density, "to_network_input");
    for (double v : density.values()) {
        if (!(v > 0.0)) {
            throw value_error("to_network_input: density must be strictly positive");
        }
    }
    return log_elem(density);
}

double mask_probability(const Tensor& density, const Tensor& mask) {
    if (density.shape() != mask.shape()) {
        throw shape_error("mask_probability: extents differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < density.numel(); ++i) {
        acc += density.values()[i] * mask.values()[i];
    }
    return acc;
}

}  // namespace gazeforge
