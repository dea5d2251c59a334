#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gazeforge/losses.hpp"
#include "gazeforge/optim.hpp"
#include "gazeforge/saliency_model.hpp"
#include "gazeforge/target_maps.hpp"
#include "gazeforge/transformer.hpp"

namespace gazeforge {

struct TrainImage {
    int id = 0;
    Tensor image;  // display RGB [1,3,H,W]
    // Masks may live on the image grid or directly on the density grid
    // (image/2); image-grid masks are block-averaged down once per run.
    std::vector<ObjectMask> masks;
};

struct Dataset {
    std::vector<TrainImage> images;

    std::vector<int> ids() const;
};

struct TrainRunConfig {
    TargetKind manipulation = TargetKind::local_shift;
    LossWeights weights;
    AdamConfig gen_adam;   // batch_size and steps govern the whole run
    AdamConfig disc_adam;  // same defaults as the generator's
    TargetSampleConfig targets;  // kind is overridden by `manipulation`
    std::uint64_t seed = 0;
    std::size_t eval_every = 0;        // 0: evaluate only at the end
    std::size_t eval_images = 0;       // 0: the whole set
    std::size_t checkpoint_every = 0;  // 0: final checkpoint only
    std::string out_dir;               // empty: no files, results in memory only
    std::vector<std::string> dataset_paths;  // provenance echoed into the manifest
};

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TargetKind& k);
void from_json(const nlohmann::json& j, TargetKind& k);
void to_json(nlohmann::json& j, const TargetSampleConfig& c);
void from_json(const nlohmann::json& j, TargetSampleConfig& c);
void to_json(nlohmann::json& j, const TrainRunConfig& c);
void from_json(const nlohmann::json& j, TrainRunConfig& c);

struct StepReport {
    std::size_t step = 0;
    LossReport report;
};

struct TrainResult {
    std::vector<LossReport> train_rows;  // one per optimization step
    std::vector<StepReport> eval_train_rows;
    std::vector<StepReport> eval_test_rows;
    std::size_t steps_run = 0;
};

struct EvalOptions {
    std::size_t n_images = 0;  // 0: all
    std::uint64_t seed = 0;
    std::vector<int> train_ids;  // overlap guard; empty disables the check
};

struct EvalResult {
    std::vector<std::pair<int, LossReport>> rows;  // image id -> per-term losses
    LossReport mean;
};

// Substream feeding the trainer's periodic evaluations, exposed so any
// reported row can be reproduced by calling evaluate directly.
std::uint64_t trainer_eval_seed(std::uint64_t run_seed, std::size_t step);

// Freshly samples a target per image and reports every loss term (weights
// only enter the totals), without touching any parameters.
EvalResult evaluate(const FGTransform& generator, const PatchDiscriminator& discriminator,
                    const SaliencyModel& saliency, const Dataset& test,
                    const LossWeights& weights, const TargetSampleConfig& targets,
                    const EvalOptions& opts);

// Joint loop: per step, sample a batch and fresh targets, update the
// generator on the weighted four-term loss, then the discriminator on the
// least-squares real/fake loss. Zero-weighted generator terms are skipped
// (reported as 0); the discriminator always trains. Writes CSVs, checkpoints
// and a config manifest under cfg.out_dir when set. A non-finite loss or
// gradient aborts with a last-good checkpoint and a diagnostics file.
TrainResult train(const TrainRunConfig& cfg, FGTransform& generator,
                  PatchDiscriminator& discriminator, const SaliencyModel& saliency,
                  const Dataset& train_set, const Dataset& test_set);

struct AblationVariant {
    std::string name;
    // Weight names to zero: of "saliency", "feature", "texture", "adversarial".
    std::vector<std::string> zero_weights;
};

struct AblationRow {
    std::string name;
    LossWeights weights;
    LossReport final_train_eval;
    LossReport final_test_eval;
};

// One train + evaluate per variant from identical seeds and fresh networks,
// so rows differ only by the loss weights.
std::vector<AblationRow> run_ablation(const TrainRunConfig& base,
                                      std::shared_ptr<const Backbone> backbone,
                                      const SaliencyModel& saliency,
                                      const FGTransformConfig& gen_cfg,
                                      const DiscriminatorConfig& disc_cfg,
                                      const Dataset& train_set, const Dataset& test_set,
                                      const std::vector<AblationVariant>& variants);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace gazeforge
