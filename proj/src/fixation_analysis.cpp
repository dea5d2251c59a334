#include "gazeforge/fixation_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "gazeforge/backbone.hpp"
#include "gazeforge/nn_ops.hpp"
#include "gazeforge/serialize.hpp"

namespace gazeforge {

namespace {

double parse_double(const std::string& s, std::size_t line, const char* field) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw value_error("");
        return v;
    } catch (const std::exception&) {
        throw value_error("fixations line " + std::to_string(line) + ": bad " + field + " '" +
                          s + "'");
    }
}

int parse_int(const std::string& s, std::size_t line, const char* field) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw value_error("");
        return v;
    } catch (const std::exception&) {
        throw value_error("fixations line " + std::to_string(line) + ": bad " + field + " '" +
                          s + "'");
    }
}

}  // namespace

std::vector<FixationRecord> parse_fixations_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool with_duration = false;
    std::vector<FixationRecord> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (line_no == 1) {
            if (f == std::vector<std::string>{"subject", "image", "block", "fix_index", "x", "y"}) {
                with_duration = false;
            } else if (f == std::vector<std::string>{"subject", "image", "block", "fix_index",
                                                     "x", "y", "duration_ms"}) {
                with_duration = true;
            } else {
                throw value_error(
                    "fixations line 1: expected header "
                    "'subject,image,block,fix_index,x,y[,duration_ms]', got '" +
                    line + "'");
            }
            continue;
        }
        const std::size_t want = with_duration ? 7 : 6;
        if (f.size() != want) {
            throw value_error("fixations line " + std::to_string(line_no) + ": expected " +
                              std::to_string(want) + " fields, got " + std::to_string(f.size()));
        }
        FixationRecord r;
        r.subject = f[0];
        r.image = f[1];
        if (r.subject.empty() || r.image.empty()) {
            throw value_error("fixations line " + std::to_string(line_no) +
                              ": empty subject or image id");
        }
        r.block = parse_int(f[2], line_no, "block");
        r.fix_index = parse_int(f[3], line_no, "fix_index");
        r.x = parse_double(f[4], line_no, "x");
        r.y = parse_double(f[5], line_no, "y");
        if (with_duration) r.duration_ms = parse_double(f[6], line_no, "duration_ms");
        if (r.block < 1 || r.block > 3) {
            throw value_error("fixations line " + std::to_string(line_no) + ": block " +
                              std::to_string(r.block) + " outside 1..3");
        }
        if (r.fix_index < 1) {
            throw value_error("fixations line " + std::to_string(line_no) +
                              ": fix_index must be positive");
        }
        if (!std::isfinite(r.x) || !std::isfinite(r.y) || r.x < 0.0 || r.y < 0.0) {
            throw value_error("fixations line " + std::to_string(line_no) +
                              ": coordinates must be finite and nonnegative");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::string fixations_csv(const std::vector<FixationRecord>& records) {
    const bool with_duration =
        std::any_of(records.begin(), records.end(),
                    [](const FixationRecord& r) { return r.duration_ms.has_value(); });
    std::ostringstream ss;
    ss.precision(17);
    ss << "subject,image,block,fix_index,x,y" << (with_duration ? ",duration_ms" : "") << '\n';
    for (const FixationRecord& r : records) {
        ss << r.subject << ',' << r.image << ',' << r.block << ',' << r.fix_index << ',' << r.x
           << ',' << r.y;
        if (with_duration) ss << ',' << r.duration_ms.value_or(0.0);
        ss << '\n';
    }
    return ss.str();
}

FixationSubset subset_from_name(const std::string& name) {
    if (name == "all") return FixationSubset::all;
    if (name == "first-fixation") return FixationSubset::first_fixation;
    if (name == "first-block") return FixationSubset::first_block;
    throw value_error("subset must be 'all', 'first-fixation' or 'first-block', got '" + name +
                      "'");
}

std::vector<FixationRecord> subset(const std::vector<FixationRecord>& records,
                                   FixationSubset selector) {
    std::vector<FixationRecord> out;
    for (const FixationRecord& r : records) {
        switch (selector) {
            case FixationSubset::all:
                out.push_back(r);
                break;
            case FixationSubset::first_fixation:
                if (r.fix_index == 1) out.push_back(r);
                break;
            case FixationSubset::first_block:
                if (r.block == 1) out.push_back(r);
                break;
        }
    }
    return out;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Per-cell mass along one axis of a unit Gaussian centred at mu, with the
// mass outside [0, n] reflected back across the borders. Sums to 1 up to the
// truncated far tails.
std::vector<double> axis_cell_masses(double mu, double sigma, std::size_t n) {
    std::vector<double> mass(n, 0.0);
    const double extent = static_cast<double>(n);
    const int K = 1 + static_cast<int>(std::ceil(4.0 * sigma / extent));
    for (int k = -K; k <= K; ++k) {
        const double centers[2] = {2.0 * k * extent + mu, 2.0 * k * extent - mu};
        for (const double c : centers) {
            if (c + 8.0 * sigma < 0.0 || c - 8.0 * sigma > extent) continue;
            for (std::size_t i = 0; i < n; ++i) {
                const double lo = (static_cast<double>(i) - c) / sigma;
                const double hi = (static_cast<double>(i) + 1.0 - c) / sigma;
                mass[i] += normal_cdf(hi) - normal_cdf(lo);
            }
        }
    }
    return mass;
}

void check_bounds(const FixationRecord& r, std::size_t height, std::size_t width) {
    if (r.x >= static_cast<double>(width) || r.y >= static_cast<double>(height) || r.x < 0.0 ||
        r.y < 0.0) {
        throw value_error("fixation at (" + std::to_string(r.x) + ", " + std::to_string(r.y) +
                          ") outside the " + std::to_string(width) + "x" +
                          std::to_string(height) + " image (subject '" + r.subject +
                          "', image '" + r.image + "')");
    }
}

std::vector<double> kernel_sum(const std::vector<const FixationRecord*>& records,
                               std::size_t height, std::size_t width, double sigma) {
    std::vector<double> grid(height * width, 0.0);
    for (const FixationRecord* r : records) {
        const std::vector<double> col = axis_cell_masses(r->y, sigma, height);
        const std::vector<double> row = axis_cell_masses(r->x, sigma, width);
        for (std::size_t y = 0; y < height; ++y) {
            if (col[y] == 0.0) continue;
            double* out = grid.data() + y * width;
            for (std::size_t x = 0; x < width; ++x) out[x] += col[y] * row[x];
        }
    }
    return grid;
}

}  // namespace

Tensor empirical_density(const std::vector<FixationRecord>& records, std::size_t height,
                         std::size_t width, double sigma) {
    if (records.empty()) throw usage_error("empirical_density: no fixations");
    if (!(sigma > 0.0)) throw value_error("empirical_density: bandwidth must be positive");
    std::vector<const FixationRecord*> ptrs;
    ptrs.reserve(records.size());
    for (const FixationRecord& r : records) {
        check_bounds(r, height, width);
        ptrs.push_back(&r);
    }
    std::vector<double> grid = kernel_sum(ptrs, height, width, sigma);
    double total = 0.0;
    for (double v : grid) total += v;
    for (double& v : grid) v /= total;
    return Tensor::from_values({1, 1, height, width}, std::move(grid));
}

Tensor estimate_center_bias(const std::vector<Tensor>& densities) {
    if (densities.size() < 2) {
        throw usage_error("estimate_center_bias: needs at least two other images, got " +
                          std::to_string(densities.size()));
    }
    const Shape& shape = densities.front().shape();
    std::vector<double> acc(densities.front().numel(), 0.0);
    for (const Tensor& d : densities) {
        if (d.shape() != shape) {
            throw shape_error("estimate_center_bias: density " + shape_str(d.shape()) +
                              " does not match " + shape_str(shape));
        }
        const auto& v = d.values();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
    }
    double total = 0.0;
    for (double v : acc) total += v;
    for (double& v : acc) v /= total;
    return Tensor::from_values(shape, std::move(acc));
}

DensityFit fit_density(const std::vector<FixationRecord>& records, std::size_t height,
                       std::size_t width, const DensityFitConfig& cfg,
                       const Tensor* center_bias) {
    if (records.empty()) throw usage_error("fit_density: no fixations");
    for (double s : cfg.bandwidths) {
        if (!(s > 0.0)) throw value_error("fit_density: bandwidths must be positive");
    }
    for (double a : cfg.alpha_grid) {
        if (a < 0.0) throw value_error("fit_density: alpha candidates must be nonnegative");
    }
    for (double b : cfg.beta_grid) {
        if (b < 0.0) throw value_error("fit_density: beta candidates must be nonnegative");
    }
    if (cfg.bandwidths.empty() || cfg.alpha_grid.empty()) {
        throw value_error("fit_density: empty bandwidth or alpha grid");
    }
    const Shape grid_shape{1, 1, height, width};
    if (center_bias && center_bias->shape() != grid_shape) {
        throw shape_error("fit_density: center bias " + shape_str(center_bias->shape()) +
                          " does not match " + shape_str(grid_shape));
    }
    std::vector<double> betas = center_bias ? cfg.beta_grid : std::vector<double>{0.0};
    if (betas.empty()) betas = {0.0};

    // subjects in first-appearance order
    std::vector<std::string> subjects;
    std::unordered_map<std::string, std::size_t> subject_index;
    std::vector<std::vector<const FixationRecord*>> by_subject;
    for (const FixationRecord& r : records) {
        check_bounds(r, height, width);
        auto [it, inserted] = subject_index.try_emplace(r.subject, subjects.size());
        if (inserted) {
            subjects.push_back(r.subject);
            by_subject.emplace_back();
        }
        by_subject[it->second].push_back(&r);
    }
    if (subjects.size() < 2) {
        throw usage_error("fit_density: cross-validation needs at least two subjects, got " +
                          std::to_string(subjects.size()));
    }

    const std::size_t cells = height * width;
    const double uniform = 1.0 / static_cast<double>(cells);
    const std::size_t total_fix = records.size();
    const double* cb = center_bias ? center_bias->values().data() : nullptr;

    // cell index per fixation, grouped like by_subject
    std::vector<std::vector<std::size_t>> cell_of(by_subject.size());
    for (std::size_t s = 0; s < by_subject.size(); ++s) {
        for (const FixationRecord* r : by_subject[s]) {
            const std::size_t cx = std::min<std::size_t>(static_cast<std::size_t>(r->x), width - 1);
            const std::size_t cy =
                std::min<std::size_t>(static_cast<std::size_t>(r->y), height - 1);
            cell_of[s].push_back(cy * width + cx);
        }
    }

    bool have_best = false;
    double best_ll = 0.0;
    DensityFit best;
    constexpr double kTieTol = 1e-12;

    for (const double sigma : cfg.bandwidths) {
        std::vector<std::vector<double>> subject_mass;
        subject_mass.reserve(by_subject.size());
        std::vector<double> total_mass(cells, 0.0);
        for (const auto& recs : by_subject) {
            subject_mass.push_back(kernel_sum(recs, height, width, sigma));
            const std::vector<double>& m = subject_mass.back();
            for (std::size_t i = 0; i < cells; ++i) total_mass[i] += m[i];
        }
        // held-out KDE values at each held-out fixation's cell
        std::vector<std::vector<double>> loo_at(by_subject.size());
        for (std::size_t s = 0; s < by_subject.size(); ++s) {
            const double inv = 1.0 / static_cast<double>(total_fix - by_subject[s].size());
            for (const std::size_t cell : cell_of[s]) {
                loo_at[s].push_back((total_mass[cell] - subject_mass[s][cell]) * inv);
            }
        }
        for (const double alpha : cfg.alpha_grid) {
            for (const double beta : betas) {
                if (alpha + beta > 1.0 + kTieTol) continue;
                double ll = 0.0;
                for (std::size_t s = 0; s < by_subject.size(); ++s) {
                    for (std::size_t f = 0; f < cell_of[s].size(); ++f) {
                        const double p = (1.0 - alpha - beta) * loo_at[s][f] + alpha * uniform +
                                         (cb ? beta * cb[cell_of[s][f]] : 0.0);
                        ll += std::log(p);
                    }
                }
                ll /= static_cast<double>(total_fix);
                const bool better =
                    !have_best || ll > best_ll + kTieTol ||
                    (ll >= best_ll - kTieTol &&
                     (alpha > best.alpha + kTieTol ||
                      (alpha >= best.alpha - kTieTol && beta > best.beta + kTieTol)));
                if (better) {
                    have_best = true;
                    best_ll = ll;
                    best.sigma = sigma;
                    best.alpha = alpha;
                    best.beta = beta;
                }
            }
        }
    }
    if (!have_best) {
        throw value_error("fit_density: no candidate with alpha + beta <= 1 in the grids");
    }

    best.holdout_loglik = best_ll;
    Tensor kde = empirical_density(records, height, width, best.sigma);
    std::vector<double> mixed(cells);
    const auto& kv = kde.values();
    for (std::size_t i = 0; i < cells; ++i) {
        mixed[i] = (1.0 - best.alpha - best.beta) * kv[i] + best.alpha * uniform +
                   (cb ? best.beta * cb[i] : 0.0);
    }
    best.density = Tensor::from_values(grid_shape, std::move(mixed));
    return best;
}

double object_probability(const Tensor& density, const Tensor& mask) {
    return mask_probability(density, mask);
}

double entropy(const Tensor& density, EntropyBase base) {
    double h = 0.0;
    for (const double p : density.values()) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return base == EntropyBase::bits ? h / std::log(2.0) : h;
}

Change relative_change(double before, double after) {
    Change c;
    c.absolute = after - before;
    if (before > 0.0) {
        c.relative = c.absolute / before;
    } else {
        c.relative = std::numeric_limits<double>::quiet_NaN();
        c.relative_defined = false;
    }
    return c;
}

namespace {

Tensor mask_union(const std::vector<ObjectMask>& masks) {
    std::vector<double> u(masks.front().grid.numel());
    for (const ObjectMask& m : masks) {
        if (m.grid.shape() != masks.front().grid.shape()) {
            throw shape_error("analysis_report: object masks disagree in extents");
        }
        const auto& v = m.grid.values();
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::max(u[i], v[i]);
    }
    return Tensor::from_values(masks.front().grid.shape(), std::move(u));
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

std::string AnalysisReport::csv_header() {
    return "stimulus,original,p_obj,entropy_bits,dp_obj,dp_obj_rel,dH_bits,dH_bits_rel,"
           "model_p_obj,model_entropy_bits,model_dp_obj,model_dp_obj_rel,model_dH_bits,"
           "model_dH_bits_rel,sigma,alpha,beta";
}

namespace {

void csv_change(std::ostream& os, const Change& c) {
    os << ',' << c.absolute << ',';
    if (c.relative_defined) {
        os << c.relative;
    } else {
        os << "nan";
    }
}

void csv_row(std::ostream& os, const AnalysisRow& r) {
    os << r.name << ',' << r.original << ',' << r.p_obj << ',' << r.entropy_bits;
    csv_change(os, r.d_p_obj);
    csv_change(os, r.d_entropy);
    os << ',' << r.model_p_obj << ',' << r.model_entropy_bits;
    csv_change(os, r.model_d_p_obj);
    csv_change(os, r.model_d_entropy);
    os << ',' << r.fit.sigma << ',' << r.fit.alpha << ',' << r.fit.beta << '\n';
}

}  // namespace

std::string AnalysisReport::csv() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << csv_header() << '\n';
    for (const AnalysisRow& r : rows) csv_row(ss, r);
    csv_row(ss, aggregate);
    return ss.str();
}

AnalysisReport analysis_report(const std::vector<Stimulus>& stimuli,
                               const std::vector<FixationRecord>& records,
                               const SaliencyModel& saliency, const DensityFitConfig& cfg) {
    if (stimuli.empty()) throw usage_error("analysis_report: no stimuli");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < stimuli.size(); ++i) {
        if (!index.try_emplace(stimuli[i].name, i).second) {
            throw usage_error("analysis_report: duplicate stimulus '" + stimuli[i].name + "'");
        }
    }

    std::vector<std::vector<FixationRecord>> per_stimulus(stimuli.size());
    for (const FixationRecord& r : records) {
        const auto it = index.find(r.image);
        if (it != index.end()) per_stimulus[it->second].push_back(r);
    }

    const double pool_sigma = median_of(cfg.bandwidths);
    std::vector<Tensor> pool;
    std::vector<AnalysisRow> rows(stimuli.size());
    std::vector<Tensor> unions;
    for (std::size_t i = 0; i < stimuli.size(); ++i) {
        const Stimulus& st = stimuli[i];
        if (st.masks.empty()) {
            throw usage_error("analysis_report: stimulus '" + st.name + "' has no object mask");
        }
        if (per_stimulus[i].empty()) {
            throw usage_error("analysis_report: no fixations for stimulus '" + st.name + "'");
        }
        const Shape& is = st.image.shape();
        if (is.size() != 4 || is[0] != 1 || is[1] != 3) {
            throw shape_error("analysis_report: stimulus '" + st.name + "' image is " +
                              shape_str(is) + ", expected [1,3,H,W]");
        }
        Tensor u = mask_union(st.masks);
        if (u.shape() != Shape{1, 1, is[2], is[3]}) {
            throw shape_error("analysis_report: stimulus '" + st.name + "' masks " +
                              shape_str(u.shape()) + " do not match the image pixel grid");
        }
        unions.push_back(std::move(u));
        pool.push_back(empirical_density(per_stimulus[i], is[2], is[3], pool_sigma));
    }

    for (std::size_t i = 0; i < stimuli.size(); ++i) {
        const Stimulus& st = stimuli[i];
        const Shape& is = st.image.shape();
        std::vector<Tensor> others;
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (j != i) others.push_back(pool[j]);
        }
        const Tensor cb = estimate_center_bias(others);
        AnalysisRow& row = rows[i];
        row.name = st.name;
        row.original = st.original;
        row.fit = fit_density(per_stimulus[i], is[2], is[3], cfg, &cb);
        row.p_obj = object_probability(row.fit.density, unions[i]);
        row.entropy_bits = entropy(row.fit.density, EntropyBase::bits);

        const Tensor model_density = saliency.predict_density(preprocess(st.image));
        row.model_p_obj = object_probability(model_density, downsample_avg(unions[i], 2));
        row.model_entropy_bits = entropy(model_density, EntropyBase::bits);
    }

    for (std::size_t i = 0; i < stimuli.size(); ++i) {
        AnalysisRow& row = rows[i];
        const AnalysisRow* base = &row;
        if (!row.original.empty()) {
            const auto it = index.find(row.original);
            if (it == index.end()) {
                throw usage_error("analysis_report: original '" + row.original +
                                  "' of stimulus '" + row.name + "' is not in the set");
            }
            base = &rows[it->second];
        }
        row.d_p_obj = relative_change(base->p_obj, row.p_obj);
        row.d_entropy = relative_change(base->entropy_bits, row.entropy_bits);
        row.model_d_p_obj = relative_change(base->model_p_obj, row.model_p_obj);
        row.model_d_entropy = relative_change(base->model_entropy_bits, row.model_entropy_bits);
    }

    AnalysisReport report;
    report.rows = std::move(rows);
    AnalysisRow& agg = report.aggregate;
    agg.name = "mean";
    const double inv = 1.0 / static_cast<double>(report.rows.size());
    auto mean_change = [&](auto pick) {
        Change c;
        std::size_t defined = 0;
        for (const AnalysisRow& r : report.rows) {
            const Change& rc = pick(r);
            c.absolute += rc.absolute * inv;
            if (rc.relative_defined) {
                c.relative += rc.relative;
                ++defined;
            }
        }
        if (defined > 0) {
            c.relative /= static_cast<double>(defined);
        } else {
            c.relative = std::numeric_limits<double>::quiet_NaN();
            c.relative_defined = false;
        }
        return c;
    };
    for (const AnalysisRow& r : report.rows) {
        agg.p_obj += r.p_obj * inv;
        agg.entropy_bits += r.entropy_bits * inv;
        agg.model_p_obj += r.model_p_obj * inv;
        agg.model_entropy_bits += r.model_entropy_bits * inv;
    }
    agg.d_p_obj = mean_change([](const AnalysisRow& r) -> const Change& { return r.d_p_obj; });
    agg.d_entropy = mean_change([](const AnalysisRow& r) -> const Change& { return r.d_entropy; });
    agg.model_d_p_obj =
        mean_change([](const AnalysisRow& r) -> const Change& { return r.model_d_p_obj; });
    agg.model_d_entropy =
        mean_change([](const AnalysisRow& r) -> const Change& { return r.model_d_entropy; });
    return report;
}

}  // namespace gazeforge
