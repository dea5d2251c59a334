#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "gazeforge/backbone.hpp"
#include "gazeforge/gradcheck.hpp"
#include "gazeforge/random.hpp"

using namespace gazeforge;

namespace {

Tensor noise_image(std::uint64_t seed, std::size_t extent, std::size_t batch = 1) {
    std::mt19937_64 rng(seed);
    return rand_uniform({batch, 3, extent, extent}, rng);
}

constexpr double kMeans[3] = {0.40760392, 0.45795686, 0.48501961};

}  // namespace

TEST_CASE("preprocess/deprocess round-trip") {
    Tensor x = noise_image(3, 8);
    Tensor back = deprocess(preprocess(x));
    for (std::size_t i = 0; i < x.numel(); ++i) {
        CHECK(std::abs(back.values()[i] - x.values()[i]) < 1e-12);
    }
}

TEST_CASE("preprocess of zero image gives -255*mean per channel") {
    Tensor z = Tensor::zeros({1, 3, 2, 2});
    Tensor p = preprocess(z);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(p.values()[c * 4 + i] == doctest::Approx(-255.0 * kMeans[c]).epsilon(1e-12));
        }
    }
}

TEST_CASE("preprocess swaps RGB to BGR") {
    Tensor z = Tensor::zeros({1, 3, 1, 1});
    z.mutable_values()[0] = 1.0;  // red impulse
    Tensor p = preprocess(z);
    // red lands in the last (R) channel of BGR
    CHECK(p.values()[2] == doctest::Approx(255.0 * (1.0 - kMeans[2])).epsilon(1e-12));
    CHECK(p.values()[0] == doctest::Approx(-255.0 * kMeans[0]).epsilon(1e-12));
    CHECK_THROWS_AS(preprocess(Tensor::zeros({1, 1, 2, 2})), shape_error);
}

TEST_CASE("extraction is deterministic under fixed seed") {
    BackboneConfig cfg;
    cfg.seed = 42;
    Backbone b1(cfg);
    Backbone b2(cfg);
    CHECK(b1.checksum() == b2.checksum());

    Tensor img = preprocess(noise_image(7, 32));
    Tensor s1 = b1.readout_stack(img);
    Tensor s2 = b2.readout_stack(img);
    CHECK(s1.values() == s2.values());
}

TEST_CASE("block-5 extents are input/16 and readout channel counts match") {
    BackboneConfig cfg;
    Backbone bb(cfg);
    Tensor img = preprocess(noise_image(9, 32));
    Tensor stack = bb.readout_stack(img);
    CHECK(stack.height() == 2);
    CHECK(stack.width() == 2);
    CHECK(stack.channels() == 320);  // 5 x 64
    CHECK(bb.readout_channels() == 320);

    BackboneConfig paper = BackboneConfig::paper();
    paper.normalize_activations = false;
    Backbone pb(paper);
    Tensor small = preprocess(noise_image(11, 16));
    Tensor pstack = pb.readout_stack(small);
    CHECK(pstack.channels() == 2560);  // 5 x 512
    CHECK(pstack.height() == 1);
}

TEST_CASE("unknown layer name raises lookup error") {
    Backbone bb(BackboneConfig{});
    Tensor img = preprocess(noise_image(13, 16));
    CHECK_THROWS_AS(bb.extract(img, {"conv9_1"}), lookup_error);
    CHECK(bb.has_layer("relu5_4"));
    CHECK(!bb.has_layer("relu5_9"));
}

TEST_CASE("feature stack order and dimensions") {
    Backbone bb(BackboneConfig{});
    Tensor img = preprocess(noise_image(17, 32));
    FeatureStack fs = bb.extract(img, {"relu1_1", "relu3_1", "conv5_1"});
    CHECK(fs.layers.size() == 3);
    CHECK(fs.layers[0].first == "relu1_1");
    CHECK(fs.get("relu1_1").height() == 32);
    CHECK(fs.get("relu3_1").height() == 8);
    CHECK(fs.get("conv5_1").height() == 2);
    CHECK(fs.get("relu1_1").channels() == 8);
    CHECK(fs.get("relu3_1").channels() == 32);
    CHECK(!fs.has("relu2_1"));
    CHECK_THROWS_AS(fs.get("relu2_1"), lookup_error);
}

TEST_CASE("activation normalization calibrates channel means to 1") {
    BackboneConfig cfg;
    cfg.seed = 5;
    Backbone bb(cfg);
    Tensor calib = bb.calibration_batch();
    for (const std::string layer : {"relu1_1", "relu2_2", "relu4_1", "relu5_4"}) {
        Tensor act = bb.extract(calib, {layer}).get(layer);
        const std::size_t C = act.channels(), plane = act.height() * act.width();
        for (std::size_t c = 0; c < C; ++c) {
            double m = 0.0;
            for (std::size_t b = 0; b < act.batch(); ++b) {
                for (std::size_t k = 0; k < plane; ++k) {
                    m += act.values()[(b * C + c) * plane + k];
                }
            }
            m /= static_cast<double>(act.batch() * plane);
            CHECK(m == doctest::Approx(1.0).epsilon(0.05));
        }
    }
}

TEST_CASE("unnormalized init neither explodes nor vanishes") {
    BackboneConfig cfg;
    cfg.normalize_activations = false;
    cfg.seed = 11;
    Backbone bb(cfg);
    std::mt19937_64 rng(19);
    // measured at the calibration extent: smaller inputs leave block-5 planes
    // dominated by zero padding, which suppresses variance regardless of init
    Tensor img = randn({2, 3, 64, 64}, rng);
    for (const std::string& name : bb.layer_names()) {
        Tensor act = bb.extract(img, {name}).get(name);
        double mean = 0.0;
        for (double v : act.values()) mean += v;
        mean /= static_cast<double>(act.numel());
        double var = 0.0;
        for (double v : act.values()) var += (v - mean) * (v - mean);
        var /= static_cast<double>(act.numel());
        const double stddev = std::sqrt(var);
        INFO("layer ", name, " stddev ", stddev);
        CHECK(stddev > 0.2);
        CHECK(stddev < 5.0);
    }
}

TEST_CASE("features are differentiable w.r.t. the input image") {
    BackboneConfig cfg;
    cfg.seed = 23;
    Backbone bb(cfg);
    Tensor img = preprocess(noise_image(29, 16));
    GradcheckOptions opts;
    opts.epsilon = 1e-4;  // feature scale is O(100); tiny steps drown in roundoff
    opts.tolerance = 1e-5;
    opts.max_coords_per_input = 48;
    auto res = gradcheck(
        [&bb](const std::vector<Tensor>& in) {
            FeatureStack fs = bb.extract(in[0], {"relu2_1"});
            return sum(square(fs.get("relu2_1")));
        },
        {img}, opts);
    CHECK(res.passed);
    CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("weights are frozen and persist losslessly") {
    BackboneConfig cfg;
    cfg.seed = 31;
    Backbone bb(cfg);
    for (const ParamEntry& e : bb.params().entries()) CHECK(!e.trainable);

    const std::uint64_t before = bb.checksum();
    Tensor img = preprocess(noise_image(37, 16));
    (void)bb.readout_stack(img);
    CHECK(bb.checksum() == before);

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "gazeforge_backbone_test";
    fs::remove_all(dir);
    bb.save(dir.string());
    Backbone loaded = Backbone::load(dir.string());
    CHECK(loaded.checksum() == before);
    CHECK(loaded.config().seed == 31);
    Tensor s1 = bb.readout_stack(img);
    Tensor s2 = loaded.readout_stack(img);
    CHECK(s1.values() == s2.values());
    fs::remove_all(dir);
}
