#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <random>

#include "gazeforge/fixation_analysis.hpp"
#include "gazeforge/random.hpp"
#include "gazeforge/serialize.hpp"

using namespace gazeforge;

namespace {

std::shared_ptr<const Backbone> shared_backbone() {
    static std::shared_ptr<const Backbone> bb = [] {
        BackboneConfig cfg;
        cfg.seed = 55;
        return std::make_shared<const Backbone>(cfg);
    }();
    return bb;
}

FixationRecord fix(const std::string& subject, const std::string& image, double x, double y,
                   int block = 1, int index = 1) {
    FixationRecord r;
    r.subject = subject;
    r.image = image;
    r.block = block;
    r.fix_index = index;
    r.x = x;
    r.y = y;
    return r;
}

Tensor blob_density(std::size_t hw, double cx, double cy, double sigma) {
    std::vector<double> v(hw * hw);
    double total = 0.0;
    for (std::size_t y = 0; y < hw; ++y) {
        for (std::size_t x = 0; x < hw; ++x) {
            const double dx = x + 0.5 - cx;
            const double dy = y + 0.5 - cy;
            v[y * hw + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            total += v[y * hw + x];
        }
    }
    for (double& e : v) e /= total;
    return Tensor::from_values({1, 1, hw, hw}, v);
}

double kl_nats(const Tensor& p, const Tensor& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const double pi = p.values()[i];
        if (pi > 0.0) s += pi * std::log(pi / std::max(q.values()[i], 1e-300));
    }
    return s;
}

double grid_sum(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v;
    return s;
}

}  // namespace

TEST_CASE("fixation csv round-trips and validates") {
    const std::string text =
        "subject,image,block,fix_index,x,y,duration_ms\n"
        "s1,imgA,1,1,12.5,3.25,180\n"
        "s1,imgA,1,2,40,61,95.5\n"
        "s2,imgB,3,1,0,0,220\n";
    const auto recs = parse_fixations_csv(text);
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].subject == "s1");
    CHECK(recs[0].image == "imgA");
    CHECK(recs[0].x == 12.5);
    CHECK(recs[0].duration_ms.value() == 180.0);
    CHECK(recs[2].block == 3);
    CHECK(parse_fixations_csv(fixations_csv(recs)).size() == 3);

    const std::string no_duration =
        "subject,image,block,fix_index,x,y\n"
        "s1,imgA,2,4,8,9\n";
    const auto plain = parse_fixations_csv(no_duration);
    REQUIRE(plain.size() == 1);
    CHECK_FALSE(plain[0].duration_ms.has_value());
}

TEST_CASE("malformed fixation rows name their line") {
    const std::string bad_field =
        "subject,image,block,fix_index,x,y\n"
        "s1,imgA,1,1,3,4\n"
        "s1,imgA,1,oops,3,4\n";
    CHECK_THROWS_WITH_AS(parse_fixations_csv(bad_field),
                         doctest::Contains("line 3"), value_error);
    CHECK_THROWS_WITH_AS(parse_fixations_csv("x,y\n1,2\n"), doctest::Contains("line 1"),
                         value_error);
    const std::string bad_block =
        "subject,image,block,fix_index,x,y\n"
        "s1,imgA,4,1,3,4\n";
    CHECK_THROWS_WITH_AS(parse_fixations_csv(bad_block), doctest::Contains("block"), value_error);
    const std::string bad_index =
        "subject,image,block,fix_index,x,y\n"
        "s1,imgA,1,0,3,4\n";
    CHECK_THROWS_AS(parse_fixations_csv(bad_index), value_error);
    const std::string missing_field =
        "subject,image,block,fix_index,x,y\n"
        "s1,imgA,1,1,3\n";
    CHECK_THROWS_WITH_AS(parse_fixations_csv(missing_field), doctest::Contains("line 2"),
                         value_error);
}

TEST_CASE("subset selectors") {
    std::vector<FixationRecord> recs;
    for (int b = 1; b <= 3; ++b) {
        for (int i = 1; i <= 5; ++i) recs.push_back(fix("s1", "imgA", 10, 10, b, i));
    }
    for (int i = 1; i <= 5; ++i) recs.push_back(fix("s2", "imgA", 20, 20, 2, i));

    CHECK(subset(recs, FixationSubset::all).size() == recs.size());

    const auto firsts = subset(recs, FixationSubset::first_fixation);
    CHECK(firsts.size() == 4);  // one per (subject, block) trial
    for (const auto& r : firsts) CHECK(r.fix_index == 1);
    CHECK(subset(firsts, FixationSubset::first_fixation).size() == firsts.size());

    const auto block1 = subset(recs, FixationSubset::first_block);
    CHECK(block1.size() == 5);
    for (const auto& r : block1) CHECK(r.block == 1);
    CHECK(subset(block1, FixationSubset::first_block).size() == block1.size());

    CHECK(subset_from_name("first-fixation") == FixationSubset::first_fixation);
    CHECK_THROWS_AS(subset_from_name("everything"), value_error);
}

TEST_CASE("empirical density normalizes with reflected border mass") {
    // A fixation close to the corner keeps all its mass on the grid.
    const auto corner = empirical_density({fix("s1", "i", 0.5, 0.5)}, 64, 64, 3.0);
    CHECK(grid_sum(corner) == doctest::Approx(1.0).epsilon(1e-9));

    // 1-D reflected cell mass, checked against direct normal-CDF evaluation:
    // cell [0,1) under N(0.5, 2) plus its mirror N(-0.5, 2).
    const auto line = empirical_density({fix("s1", "i", 0.5, 32.0)}, 64, 64, 2.0);
    double col0 = 0.0;
    for (std::size_t y = 0; y < 64; ++y) col0 += line.values()[y * 64 + 0];
    CHECK(col0 == doctest::Approx(0.372078973306).epsilon(1e-8));

    CHECK_THROWS_AS(empirical_density({}, 32, 32, 2.0), usage_error);
    CHECK_THROWS_AS(empirical_density({fix("s1", "i", 10, 10)}, 32, 32, 0.0), value_error);
    CHECK_THROWS_AS(empirical_density({fix("s1", "i", 40, 10)}, 32, 32, 2.0), value_error);
}

TEST_CASE("center bias averages the other images") {
    const Tensor u = Tensor::from_values({1, 1, 2, 2}, {0.25, 0.25, 0.25, 0.25});
    const Tensor cb = estimate_center_bias({u, u});
    for (double v : cb.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(grid_sum(cb) == doctest::Approx(1.0).epsilon(1e-9));

    const Tensor a = Tensor::from_values({1, 1, 2, 2}, {0.7, 0.1, 0.1, 0.1});
    const Tensor b = Tensor::from_values({1, 1, 2, 2}, {0.1, 0.7, 0.1, 0.1});
    const Tensor c = Tensor::from_values({1, 1, 2, 2}, {0.1, 0.1, 0.7, 0.1});

    // leave-one-image-out: image a's bias ignores a entirely
    const Tensor bias_for_a = estimate_center_bias({b, c});
    const Tensor perturbed_a = Tensor::from_values({1, 1, 2, 2}, {0.97, 0.01, 0.01, 0.01});
    const Tensor bias_again = estimate_center_bias({b, c});
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(bias_for_a.values()[i] == bias_again.values()[i]);
    }
    CHECK(bias_for_a.values()[1] == doctest::Approx(0.4).epsilon(1e-12));

    CHECK_THROWS_AS(estimate_center_bias({u}), usage_error);
    CHECK_THROWS_AS(estimate_center_bias({}), usage_error);
}

TEST_CASE("density fit recovers a gaussian blob") {
    const std::size_t hw = 64;
    std::mt19937_64 rng(2024);
    double mean_kl = 0.0;
    const int reps = 3;
    for (int rep = 0; rep < reps; ++rep) {
        const double cx = 24.0 + 8.0 * rep;
        const double cy = 40.0 - 6.0 * rep;
        const double blob_sigma = 7.0 + rep;
        const Tensor truth = blob_density(hw, cx, cy, blob_sigma);
        std::normal_distribution<double> gx(cx, blob_sigma), gy(cy, blob_sigma);
        std::vector<FixationRecord> recs;
        for (int s = 0; s < 10; ++s) {
            for (int f = 0; f < 20; ++f) {
                FixationRecord r = fix("s" + std::to_string(s), "img", 0, 0, 1 + f % 3, f + 1);
                do {
                    r.x = gx(rng);
                    r.y = gy(rng);
                } while (r.x < 0 || r.x >= hw || r.y < 0 || r.y >= hw);
                recs.push_back(r);
            }
        }
        const DensityFit fit = fit_density(recs, hw, hw, DensityFitConfig{});
        CHECK(grid_sum(fit.density) == doctest::Approx(1.0).epsilon(1e-6));
        for (double v : fit.density.values()) CHECK(v >= 0.0);
        mean_kl += kl_nats(truth, fit.density) / reps;
    }
    CHECK(mean_kl < 0.15);
}

TEST_CASE("pure-uniform data prefers the largest alpha") {
    const std::size_t hw = 64;
    std::mt19937_64 rng(7171);
    std::uniform_real_distribution<double> u(0.0, static_cast<double>(hw));
    std::vector<FixationRecord> recs;
    for (int s = 0; s < 8; ++s) {
        for (int f = 0; f < 40; ++f) {
            recs.push_back(fix("s" + std::to_string(s), "img", u(rng), u(rng), 1, f + 1));
        }
    }
    DensityFitConfig cfg;
    cfg.bandwidths = {1.0, 2.0, 4.0};
    cfg.alpha_grid = {0.0, 0.3, 1.0};
    cfg.beta_grid = {0.0};
    const DensityFit fit = fit_density(recs, hw, hw, cfg);
    CHECK(fit.alpha == 1.0);
    // alpha = 1 makes the bandwidth irrelevant; ties keep the smallest one
    CHECK(fit.sigma == 1.0);
    const double cell = 1.0 / static_cast<double>(hw * hw);
    for (double v : fit.density.values()) CHECK(v == doctest::Approx(cell).epsilon(1e-12));
}

TEST_CASE("center-bias-shaped data selects a positive beta") {
    const std::size_t hw = 64;
    const Tensor cb = blob_density(hw, 32.0, 32.0, 10.0);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(32.0, 10.0);
    std::vector<FixationRecord> recs;
    for (int s = 0; s < 6; ++s) {
        for (int f = 0; f < 15; ++f) {
            FixationRecord r = fix("s" + std::to_string(s), "img", 0, 0, 1, f + 1);
            do {
                r.x = g(rng);
                r.y = g(rng);
            } while (r.x < 0 || r.x >= hw || r.y < 0 || r.y >= hw);
            recs.push_back(r);
        }
    }
    DensityFitConfig cfg;
    cfg.beta_grid = {0.0, 0.3, 0.6, 0.9};
    const DensityFit with_cb = fit_density(recs, hw, hw, cfg, &cb);
    const DensityFit without = fit_density(recs, hw, hw, cfg);
    CHECK(with_cb.beta > 0.0);
    CHECK(with_cb.holdout_loglik > without.holdout_loglik);
    CHECK(without.beta == 0.0);
}

TEST_CASE("density fit rejects bad inputs") {
    std::vector<FixationRecord> one_subject;
    for (int f = 0; f < 10; ++f) one_subject.push_back(fix("s1", "img", 5 + f, 6, 1, f + 1));
    CHECK_THROWS_AS(fit_density(one_subject, 32, 32, DensityFitConfig{}), usage_error);
    CHECK_THROWS_AS(fit_density({}, 32, 32, DensityFitConfig{}), usage_error);

    std::vector<FixationRecord> two;
    two.push_back(fix("s1", "img", 5, 5));
    two.push_back(fix("s2", "img", 9, 9));
    DensityFitConfig bad;
    bad.bandwidths = {0.0};
    CHECK_THROWS_AS(fit_density(two, 32, 32, bad), value_error);
    DensityFitConfig neg;
    neg.alpha_grid = {-0.1};
    CHECK_THROWS_AS(fit_density(two, 32, 32, neg), value_error);
    DensityFitConfig oversum;
    oversum.alpha_grid = {0.8};
    oversum.beta_grid = {0.8};
    const Tensor cb = blob_density(32, 16, 16, 8.0);
    CHECK_THROWS_AS(fit_density(two, 32, 32, oversum, &cb), value_error);
    const Tensor small_cb = blob_density(16, 8, 8, 4.0);
    CHECK_THROWS_AS(fit_density(two, 32, 32, DensityFitConfig{}, &small_cb), shape_error);
}

TEST_CASE("object probability matches brute force") {
    const Tensor uniform = Tensor::from_values({1, 1, 4, 4}, std::vector<double>(16, 1.0 / 16));
    std::vector<double> half(16, 0.0);
    for (int i = 0; i < 8; ++i) half[i] = 1.0;
    CHECK(object_probability(uniform, Tensor::from_values({1, 1, 4, 4}, half)) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(object_probability(uniform, Tensor::from_values({1, 1, 4, 4},
                                                          std::vector<double>(16, 1.0))) ==
          doctest::Approx(1.0).epsilon(1e-12));

    std::mt19937_64 rng(31);
    Tensor p = rand_uniform({1, 1, 8, 8}, rng);
    double total = grid_sum(p);
    std::vector<double> pv = p.values();
    for (double& v : pv) v /= total;
    p = Tensor::from_values({1, 1, 8, 8}, pv);
    const Tensor m = rand_uniform({1, 1, 8, 8}, rng);
    double brute = 0.0;
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            brute += p.values()[y * 8 + x] * m.values()[y * 8 + x];
        }
    }
    CHECK(object_probability(p, m) == doctest::Approx(brute).epsilon(1e-12));
    CHECK_THROWS_AS(object_probability(p, uniform), shape_error);
}

TEST_CASE("entropy in nats and bits") {
    const std::size_t hw = 16;
    const Tensor uniform =
        Tensor::from_values({1, 1, hw, hw}, std::vector<double>(hw * hw, 1.0 / (hw * hw)));
    CHECK(entropy(uniform, EntropyBase::bits) ==
          doctest::Approx(std::log2(double(hw * hw))).epsilon(1e-12));

    std::vector<double> onehot(hw * hw, 0.0);
    onehot[37] = 1.0;
    CHECK(entropy(Tensor::from_values({1, 1, hw, hw}, onehot)) == 0.0);

    const Tensor three = Tensor::from_values({1, 1, 1, 3}, {0.5, 0.25, 0.25});
    CHECK(entropy(three, EntropyBase::bits) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(entropy(three) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));

    // uniform maximizes entropy
    const Tensor lumpy = Tensor::from_values({1, 1, 1, 3}, {0.6, 0.3, 0.1});
    CHECK(entropy(lumpy) < entropy(Tensor::from_values({1, 1, 1, 3},
                                                       std::vector<double>(3, 1.0 / 3))));
}

TEST_CASE("relative change reporting") {
    const Change up = relative_change(0.2, 0.37);
    CHECK(up.absolute == doctest::Approx(0.17).epsilon(1e-12));
    CHECK(up.relative == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(up.relative_defined);

    const Change down = relative_change(0.21, 0.09);
    CHECK(down.absolute == doctest::Approx(-0.12).epsilon(1e-12));
    CHECK(down.relative == doctest::Approx(-0.12 / 0.21).epsilon(1e-12));

    const Change from_zero = relative_change(0.0, 0.31);
    CHECK(from_zero.absolute == doctest::Approx(0.31));
    CHECK_FALSE(from_zero.relative_defined);
}

namespace {

Stimulus make_stimulus(const std::string& name, const std::string& original, std::uint64_t seed,
                       std::size_t hw, std::size_t box_x, std::size_t box_y) {
    std::mt19937_64 rng(seed);
    Tensor img = rand_uniform({1, 3, hw, hw}, rng, 0.2, 0.8);
    std::vector<double> v = img.values();
    std::vector<double> mask(hw * hw, 0.0);
    for (std::size_t y = box_y; y < box_y + 8; ++y) {
        for (std::size_t x = box_x; x < box_x + 8; ++x) {
            mask[y * hw + x] = 1.0;
            v[0 * hw * hw + y * hw + x] = 0.95;
            v[1 * hw * hw + y * hw + x] = 0.1;
            v[2 * hw * hw + y * hw + x] = 0.1;
        }
    }
    Stimulus st;
    st.name = name;
    st.original = original;
    st.image = Tensor::from_values({1, 3, hw, hw}, v);
    st.masks.push_back({Tensor::from_values({1, 1, hw, hw}, mask), 1});
    return st;
}

std::vector<FixationRecord> gaze_at(const std::string& image, double cx, double cy, double spread,
                                    int subjects, int per_subject, std::uint64_t seed,
                                    std::size_t hw) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gx(cx, spread), gy(cy, spread);
    std::vector<FixationRecord> out;
    for (int s = 0; s < subjects; ++s) {
        for (int f = 0; f < per_subject; ++f) {
            FixationRecord r = fix("s" + std::to_string(s), image, 0, 0, 1, f + 1);
            do {
                r.x = gx(rng);
                r.y = gy(rng);
            } while (r.x < 0 || r.x >= hw || r.y < 0 || r.y >= hw);
            out.push_back(r);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("analysis report compares stimuli against their originals") {
    const std::size_t hw = 32;
    SaliencyModel model(shared_backbone(), ReadoutConfig{});

    std::vector<Stimulus> stimuli;
    stimuli.push_back(make_stimulus("orig", "", 5, hw, 6, 6));
    stimuli.push_back(make_stimulus("shifted", "orig", 5, hw, 6, 6));
    stimuli.push_back(make_stimulus("other", "", 9, hw, 18, 20));

    std::vector<FixationRecord> records = gaze_at("orig", 10, 10, 5.0, 4, 12, 21, hw);
    // manipulated stimulus draws more gaze onto the object at (6..14)
    const auto shifted = gaze_at("shifted", 10, 10, 2.5, 4, 12, 22, hw);
    const auto other = gaze_at("other", 22, 24, 5.0, 4, 12, 23, hw);
    records.insert(records.end(), shifted.begin(), shifted.end());
    records.insert(records.end(), other.begin(), other.end());

    DensityFitConfig cfg;
    cfg.bandwidths = {2.0, 4.0};
    cfg.alpha_grid = {0.0, 0.05, 0.2};
    cfg.beta_grid = {0.0, 0.2};
    const AnalysisReport report = analysis_report(stimuli, records, model, cfg);

    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].name == "orig");
    // original-vs-original: zero change
    CHECK(report.rows[0].d_p_obj.absolute == 0.0);
    CHECK(report.rows[0].d_p_obj.relative == 0.0);
    CHECK(report.rows[0].model_d_entropy.absolute == 0.0);
    // tighter gaze on the object raises p_obj and lowers entropy
    CHECK(report.rows[1].d_p_obj.absolute > 0.0);
    CHECK(report.rows[1].d_entropy.absolute < 0.0);
    for (const AnalysisRow& row : report.rows) {
        CHECK(row.p_obj > 0.0);
        CHECK(row.p_obj <= 1.0);
        CHECK(row.model_p_obj > 0.0);
        CHECK(row.model_p_obj <= 1.0);
        CHECK(grid_sum(row.fit.density) == doctest::Approx(1.0).epsilon(1e-6));
    }

    // aggregate equals hand-computed means of the rows
    double mean_p = 0.0, mean_dp = 0.0;
    for (const AnalysisRow& row : report.rows) {
        mean_p += row.p_obj / report.rows.size();
        mean_dp += row.d_p_obj.absolute / report.rows.size();
    }
    CHECK(report.aggregate.p_obj == doctest::Approx(mean_p).epsilon(1e-12));
    CHECK(report.aggregate.d_p_obj.absolute == doctest::Approx(mean_dp).epsilon(1e-12));

    // CSV: header + one row per stimulus + the aggregate row
    const std::string csv = report.csv();
    CHECK(csv.find(AnalysisReport::csv_header()) == 0);
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 1 + 3 + 1);
    // aggregate column reconstructs from the emitted rows
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    double p_sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        std::getline(in, line);
        p_sum += std::stod(split_csv_line(line)[2]);
    }
    std::getline(in, line);
    CHECK(std::stod(split_csv_line(line)[2]) == doctest::Approx(p_sum / 3).epsilon(1e-9));
}

TEST_CASE("analysis report rejects incomplete inputs") {
    const std::size_t hw = 32;
    SaliencyModel model(shared_backbone(), ReadoutConfig{});
    std::vector<Stimulus> stimuli;
    stimuli.push_back(make_stimulus("a", "", 5, hw, 6, 6));
    stimuli.push_back(make_stimulus("b", "", 6, hw, 10, 10));
    stimuli.push_back(make_stimulus("c", "", 7, hw, 14, 14));

    std::vector<FixationRecord> records = gaze_at("a", 12, 12, 4.0, 3, 10, 31, hw);
    auto more = gaze_at("b", 12, 12, 4.0, 3, 10, 32, hw);
    records.insert(records.end(), more.begin(), more.end());
    more = gaze_at("c", 16, 16, 4.0, 3, 10, 33, hw);
    records.insert(records.end(), more.begin(), more.end());

    DensityFitConfig cfg;
    cfg.bandwidths = {3.0};
    cfg.alpha_grid = {0.05};
    cfg.beta_grid = {0.0};

    std::vector<Stimulus> missing_mask = stimuli;
    missing_mask[1].masks.clear();
    CHECK_THROWS_AS(analysis_report(missing_mask, records, model, cfg), usage_error);

    std::vector<Stimulus> unknown_original = stimuli;
    unknown_original[2].original = "nope";
    CHECK_THROWS_AS(analysis_report(unknown_original, records, model, cfg), usage_error);

    const auto missing_fixations = subset(records, FixationSubset::all);
    std::vector<FixationRecord> only_two;
    for (const auto& r : missing_fixations) {
        if (r.image != "c") only_two.push_back(r);
    }
    CHECK_THROWS_AS(analysis_report(stimuli, only_two, model, cfg), usage_error);
}
