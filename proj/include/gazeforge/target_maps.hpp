#pragma once

#include <random>
#include <string>
#include <vector>

#include "gazeforge/tensor.hpp"

namespace gazeforge {

struct ObjectMask {
    Tensor grid;  // [1,1,H,W], values in [0,1]
    int object_id = 0;
};

enum class TargetKind { local_shift, global_scale };

struct TargetSpec {
    TargetKind kind = TargetKind::local_shift;
    double k_sh = 0.0;
    double k_sc = 1.0;
    double mask_blur_sigma = 0.0;
};

// Sampling ranges and the mask-blur convention used during training.
struct TargetSampleConfig {
    TargetKind kind = TargetKind::local_shift;
    double k_sh_min = -4.0;
    double k_sh_max = 4.0;
    double k_sc_min = 0.5;
    double k_sc_max = 2.0;
    // 5 px at a 512-px grid, scaled proportionally to the actual grid.
    double mask_blur_sigma_at_512 = 5.0;

    double mask_blur_sigma_for(std::size_t grid_extent) const;
};

// S_t = S + k_sh * blur(union of masks); sigma 0 means no blur. The union is
// the pointwise max, so overlapping objects still shift by one constant.
Tensor local_shift(const Tensor& saliency, const std::vector<ObjectMask>& masks, double k_sh,
                   double mask_blur_sigma);

// S_t = k_sc * S
Tensor global_scale(const Tensor& saliency, double k_sc);

struct SampledTarget {
    Tensor density;  // p_t, normalized
    TargetSpec spec;
};

// Draws k_sh ~ U[min,max] or k_sc ~ U[min,max] per the configured kind and
// returns softmax(S_t) with the drawn spec.
SampledTarget sample_target(const Tensor& saliency, const std::vector<ObjectMask>& masks,
                            const TargetSampleConfig& cfg, std::mt19937_64& rng);

// log(p_t): the target half of the generator's {image, log-density} input.
Tensor to_network_input(const Tensor& density);

// Total probability mass under a soft mask: sum(mask * density).
double mask_probability(const Tensor& density, const Tensor& mask);

}  // namespace gazeforge
