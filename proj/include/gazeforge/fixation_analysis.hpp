#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gazeforge/saliency_model.hpp"
#include "gazeforge/target_maps.hpp"
#include "gazeforge/tensor.hpp"

namespace gazeforge {

struct FixationRecord {
    std::string subject;
    std::string image;
    int block = 1;      // recording block, 1..3
    int fix_index = 1;  // 1-based index within the trial
    double x = 0.0;     // pixel coordinates, origin top-left
    double y = 0.0;
    std::optional<double> duration_ms;
};

// Header "subject,image,block,fix_index,x,y" with an optional trailing
// duration_ms column. Malformed rows report their 1-based line number.
std::vector<FixationRecord> parse_fixations_csv(const std::string& text);
std::string fixations_csv(const std::vector<FixationRecord>& records);

enum class FixationSubset { all, first_fixation, first_block };

FixationSubset subset_from_name(const std::string& name);

// first_fixation keeps index-1 records (one per trial); first_block keeps
// block-1 records. Both are idempotent.
std::vector<FixationRecord> subset(const std::vector<FixationRecord>& records,
                                   FixationSubset selector);

// Per-cell mass of a mean of Gaussian kernels centred on the fixations,
// integrated over cells with kernel mass reflected at the borders, so the
// grid sums to 1 regardless of bandwidth.
Tensor empirical_density(const std::vector<FixationRecord>& records, std::size_t height,
                         std::size_t width, double sigma);

// Normalized mean of the given per-image densities; callers exclude the
// image under consideration. Fewer than two inputs is an error.
Tensor estimate_center_bias(const std::vector<Tensor>& densities);

struct DensityFitConfig {
    std::vector<double> bandwidths{1.0, 2.0, 3.0, 5.0, 8.0};
    std::vector<double> alpha_grid{0.0, 0.01, 0.05, 0.2, 1.0};
    std::vector<double> beta_grid{0.0, 0.1, 0.3};
};

struct DensityFit {
    Tensor density;  // [1,1,H,W], sums to 1
    double sigma = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double holdout_loglik = 0.0;  // mean held-out log-likelihood per fixation
};

// p = (1-a-b) * KDE_sigma + a * uniform + b * center_bias, with (sigma, a, b)
// chosen by exhaustive leave-one-subject-out log-likelihood over the grids.
// Ties prefer larger alpha, then larger beta, then smaller bandwidth. Without
// a center bias only b = 0 is considered.
DensityFit fit_density(const std::vector<FixationRecord>& records, std::size_t height,
                       std::size_t width, const DensityFitConfig& cfg,
                       const Tensor* center_bias = nullptr);

// sum(mask * p) for a [0,1]-valued mask on the same grid.
double object_probability(const Tensor& density, const Tensor& mask);

enum class EntropyBase { nats, bits };

double entropy(const Tensor& density, EntropyBase base = EntropyBase::nats);

struct Change {
    double absolute = 0.0;
    double relative = 0.0;
    bool relative_defined = true;  // false when the baseline is zero
};

Change relative_change(double before, double after);

struct Stimulus {
    std::string name;      // matches FixationRecord.image
    std::string original;  // name of the unmanipulated counterpart; empty if none
    Tensor image;          // display RGB [1,3,H,W]
    std::vector<ObjectMask> masks;  // pixel-grid target objects
};

struct AnalysisRow {
    std::string name;
    std::string original;
    double p_obj = 0.0;
    double entropy_bits = 0.0;
    Change d_p_obj;
    Change d_entropy;
    double model_p_obj = 0.0;
    double model_entropy_bits = 0.0;
    Change model_d_p_obj;
    Change model_d_entropy;
    DensityFit fit;
};

struct AnalysisReport {
    std::vector<AnalysisRow> rows;  // one per stimulus, input order
    AnalysisRow aggregate;          // column means of the rows

    static std::string csv_header();
    std::string csv() const;
};

// Empirical metrics per stimulus (fitted density with a leave-one-image-out
// center bias) side by side with the saliency model's predictions, and
// changes relative to each stimulus's original counterpart.
AnalysisReport analysis_report(const std::vector<Stimulus>& stimuli,
                               const std::vector<FixationRecord>& records,
                               const SaliencyModel& saliency, const DensityFitConfig& cfg);

}  // namespace gazeforge
