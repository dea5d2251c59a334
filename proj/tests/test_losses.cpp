#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "gazeforge/backbone.hpp"
#include "gazeforge/gradcheck.hpp"
#include "gazeforge/losses.hpp"
#include "gazeforge/nn_ops.hpp"
#include "gazeforge/random.hpp"
#include "gazeforge/serialize.hpp"

using namespace gazeforge;

namespace {

Tensor noise(Shape shape, std::uint64_t seed, double stddev = 1.0, double mean = 0.0) {
    std::mt19937_64 rng(seed);
    return randn(std::move(shape), rng, stddev, mean);
}

const Backbone& shared_backbone() {
    static Backbone bb = [] {
        BackboneConfig cfg;
        cfg.seed = 77;
        return Backbone(cfg);
    }();
    return bb;
}

// Jacobi eigenvalue sweeps for small symmetric matrices.
std::vector<double> sym_eigenvalues(std::vector<double> a, std::size_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
        }
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p * n + q]) < 1e-30) continue;
                const double theta =
                    0.5 * std::atan2(2.0 * a[p * n + q], a[q * n + q] - a[p * n + p]);
                const double c = std::cos(theta), s = std::sin(theta);
                const double app = a[p * n + p], aqq = a[q * n + q], apq = a[p * n + q];
                a[p * n + p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a[q * n + q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a[p * n + q] = a[q * n + p] = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = a[p * n + k] = c * akp - s * akq;
                    a[k * n + q] = a[q * n + k] = s * akp + c * akq;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
    return eig;
}

}  // namespace

TEST_CASE("saliency_loss identity, frozen example, one-hot") {
    Tensor p = Tensor::from_values({1, 1, 2, 2}, {0.4, 0.2, 0.2, 0.2});
    CHECK(saliency_loss(p, p).scalar_value() == doctest::Approx(0.0).epsilon(1e-12));

    Tensor uniform = Tensor::full({1, 1, 2, 2}, 0.25);
    const double kl = saliency_loss(uniform, p).scalar_value();
    CHECK(kl == doctest::Approx(0.0499).epsilon(2e-3));
    // exact value of sum 0.25*log(0.25/q) over q = {0.4, 0.2, 0.2, 0.2}
    CHECK(std::abs(kl - 0.04985675617422344) < 1e-12);

    Tensor onehot = Tensor::from_values({1, 1, 2, 2}, {1, 0, 0, 0});
    CHECK(saliency_loss(onehot, uniform).scalar_value() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    CHECK_THROWS_AS(saliency_loss(p, Tensor::full({1, 1, 1, 4}, 0.25)), shape_error);
}

TEST_CASE("saliency_loss is nonnegative and zero only at equality") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = softmax_spatial(rand_uniform({1, 1, 3, 3}, rng, -2, 2));
        Tensor b = softmax_spatial(rand_uniform({1, 1, 3, 3}, rng, -2, 2));
        CHECK(saliency_loss(a, b).scalar_value() >= 0.0);
    }
}

TEST_CASE("saliency_loss differentiates through the prediction") {
    Tensor target = softmax_spatial(noise({1, 1, 3, 3}, 5));
    Tensor s = noise({1, 1, 3, 3}, 6);
    GradcheckOptions opts;
    opts.epsilon = 1e-6;
    opts.tolerance = 1e-6;
    auto res = gradcheck(
        [&target](const std::vector<Tensor>& in) {
            return saliency_loss(target, softmax_spatial(in[0]));
        },
        {s}, opts);
    CHECK(res.passed);
}

TEST_CASE("gram: constant, frozen 2x2 example, orthogonal columns") {
    Tensor constant = Tensor::full({1, 1, 2, 3}, 2.0);
    Tensor g0 = gram(constant);
    CHECK(g0.shape() == Shape{1, 1});
    CHECK(g0.values()[0] == doctest::Approx(4.0).epsilon(1e-12));

    // columns f1=(1,3), f2=(2,4) as an M x N matrix with M=2
    Tensor f = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor g = gram(f);
    CHECK(g.values()[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(g.values()[1] == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(g.values()[2] == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(g.values()[3] == doctest::Approx(10.0).epsilon(1e-12));

    Tensor ortho = Tensor::from_values({2, 2}, {1, 1, 1, -1});
    Tensor go = gram(ortho);
    CHECK(go.values()[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(go.values()[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gram is symmetric and positive semidefinite") {
    Tensor f = noise({1, 5, 4, 4}, 9);
    Tensor g = gram(f);
    const std::size_t n = 5;
    CHECK(g.shape() == Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(std::abs(g.values()[i * n + j] - g.values()[j * n + i]) < 1e-12);
        }
    }
    std::vector<double> eig = sym_eigenvalues(g.values(), n);
    for (double e : eig) CHECK(e >= -1e-9);
}

TEST_CASE("feature_loss basics") {
    const Backbone& bb = shared_backbone();
    std::mt19937_64 rng(13);
    Tensor a = preprocess(rand_uniform({1, 3, 32, 32}, rng));
    Tensor b = preprocess(rand_uniform({1, 3, 32, 32}, rng));

    CHECK(feature_loss(bb, a, a).scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(feature_loss(bb, a, b).scalar_value() ==
          doctest::Approx(feature_loss(bb, b, a).scalar_value()).epsilon(1e-12));
    CHECK_THROWS_AS(feature_loss(bb, a, b, "relu7_1"), lookup_error);
}

TEST_CASE("feature_loss matches recomputation from exported feature dumps") {
    const Backbone& bb = shared_backbone();
    std::mt19937_64 rng(17);
    Tensor a = preprocess(rand_uniform({1, 3, 32, 32}, rng));
    Tensor b = preprocess(rand_uniform({1, 3, 32, 32}, rng));
    const double reported = feature_loss(bb, a, b).scalar_value();

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "gazeforge_losses_test";
    fs::create_directories(dir);
    write_gzt((dir / "fa.gzt").string(), bb.extract(a, {"relu5_2"}).get("relu5_2"));
    write_gzt((dir / "fb.gzt").string(), bb.extract(b, {"relu5_2"}).get("relu5_2"));
    Tensor fa = read_gzt((dir / "fa.gzt").string());
    Tensor fb = read_gzt((dir / "fb.gzt").string());
    double acc = 0.0;
    for (std::size_t i = 0; i < fa.numel(); ++i) {
        const double d = fb.values()[i] - fa.values()[i];
        acc += d * d;
    }
    acc /= static_cast<double>(fa.numel());
    CHECK(std::abs(acc - reported) < 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("texture_loss zero at identity and under spatial permutation") {
    const Backbone& bb = shared_backbone();
    std::mt19937_64 rng(21);
    Tensor a = preprocess(rand_uniform({1, 3, 32, 32}, rng));
    const std::vector<std::string> layers = {"relu1_1", "relu2_1", "relu3_1", "relu4_1",
                                             "relu5_1"};
    CHECK(texture_loss(bb, a, a, layers).scalar_value() ==
          doctest::Approx(0.0).epsilon(1e-12));

    // permuting feature positions leaves the Gram unchanged
    Tensor f = noise({1, 4, 3, 3}, 23);
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> permuted(f.numel());
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t k = 0; k < 9; ++k) {
            permuted[c * 9 + k] = f.values()[c * 9 + perm[k]];
        }
    }
    Tensor fp = Tensor::from_values(f.shape(), std::move(permuted));
    Tensor loss = texture_loss_from({gram(f)}, {fp}, {1.0});
    CHECK(loss.scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("texture_loss matches recomputation from exported grams") {
    const Backbone& bb = shared_backbone();
    std::mt19937_64 rng(27);
    Tensor a = preprocess(rand_uniform({1, 3, 32, 32}, rng));
    Tensor b = preprocess(rand_uniform({1, 3, 32, 32}, rng));
    const std::vector<std::string> layers = {"relu1_1", "relu2_1", "relu3_1", "relu4_1",
                                             "relu5_1"};
    const double reported = texture_loss(bb, a, b, layers).scalar_value();

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "gazeforge_losses_gram";
    fs::create_directories(dir);
    double acc = 0.0;
    for (const std::string& layer : layers) {
        write_gzt((dir / (layer + "_a.gzt")).string(),
                  gram(bb.extract(a, {layer}).get(layer)));
        write_gzt((dir / (layer + "_b.gzt")).string(),
                  gram(bb.extract(b, {layer}).get(layer)));
        Tensor ga = read_gzt((dir / (layer + "_a.gzt")).string());
        Tensor gb = read_gzt((dir / (layer + "_b.gzt")).string());
        const double n = static_cast<double>(ga.shape()[0]);
        double layer_acc = 0.0;
        for (std::size_t i = 0; i < ga.numel(); ++i) {
            const double d = gb.values()[i] - ga.values()[i];
            layer_acc += d * d;
        }
        acc += layer_acc / (n * n);
    }
    CHECK(std::abs(acc - reported) < 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("adversarial losses on patch grids") {
    Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor zeros = Tensor::zeros({1, 1, 2, 2});
    Tensor halves = Tensor::full({1, 1, 2, 2}, 0.5);

    CHECK(adv_generator_loss(ones).scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(adv_generator_loss(zeros).scalar_value() == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(adv_generator_loss(halves).scalar_value() == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(adv_discriminator_loss(zeros, ones).scalar_value() ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(adv_discriminator_loss(ones, zeros).scalar_value() ==
          doctest::Approx(4.0).epsilon(1e-12));
    CHECK(adv_discriminator_loss(halves, halves).scalar_value() ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(adv_discriminator_loss(ones, Tensor::zeros({1, 1, 1, 4})), shape_error);
}

TEST_CASE("total_loss weighting and diagnostics") {
    LossWeights w;
    LossTerms zero;
    CHECK(total_loss(zero, w).total == 0.0);

    LossTerms only_sal;
    only_sal.l_sal = 1.0;
    CHECK(total_loss(only_sal, w).total == doctest::Approx(1.0).epsilon(1e-12));

    LossTerms t;
    t.l_sal = 2.0;
    t.l_feat = 10.0;
    t.l_tex = 5.0;
    t.l_adv = 4.0;
    LossReport r = total_loss(t, w);
    CHECK(r.total == doctest::Approx(2.6).epsilon(1e-12));
    // reconstruction identity
    CHECK(std::abs(r.total - (w.lambda_sal * t.l_sal + w.lambda_feat * t.l_feat +
                              w.lambda_tex * t.l_tex + w.lambda_adv * t.l_adv)) < 1e-12);

    LossTerms bad;
    bad.l_tex = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(total_loss(bad, w), doctest::Contains("L_tex"), numeric_error);
}

TEST_CASE("weighted_total stays on the tape") {
    Tape tape;
    Tensor x = tape.watch(Tensor::from_values({2}, {1.0, 2.0}));
    Tensor l1 = sum(square(x));
    Tensor zero = Tensor::scalar(0.0);
    LossWeights w;
    Tensor total = weighted_total(l1, zero, zero, zero, w);
    tape.backward(total);
    CHECK(x.grad().values()[0] == doctest::Approx(2.0 * w.lambda_sal).epsilon(1e-12));
}

TEST_CASE("loss gradients w.r.t. the transformed image") {
    const Backbone& bb = shared_backbone();
    std::mt19937_64 rng(31);
    Tensor ref = preprocess(rand_uniform({1, 3, 32, 32}, rng));
    Tensor img = preprocess(rand_uniform({1, 3, 32, 32}, rng));

    GradcheckOptions opts;
    opts.epsilon = 1e-3;  // inputs are O(100) after preprocessing
    opts.tolerance = 1e-4;
    opts.max_coords_per_input = 24;

    auto feat = gradcheck(
        [&bb, &ref](const std::vector<Tensor>& in) { return feature_loss(bb, ref, in[0]); },
        {img}, opts);
    CHECK(feat.passed);

    auto tex = gradcheck(
        [&bb, &ref](const std::vector<Tensor>& in) {
            return texture_loss(bb, ref, in[0], {"relu1_1", "relu3_1", "relu5_1"});
        },
        {img}, opts);
    CHECK(tex.passed);

    Tensor dsmall = noise({1, 1, 2, 2}, 33);
    GradcheckOptions simple;
    simple.epsilon = 1e-6;
    simple.tolerance = 1e-6;
    auto adv = gradcheck(
        [](const std::vector<Tensor>& in) { return adv_generator_loss(in[0]); }, {dsmall},
        simple);
    CHECK(adv.passed);
    auto advd = gradcheck(
        [&dsmall](const std::vector<Tensor>& in) {
            return adv_discriminator_loss(in[0], dsmall);
        },
        {dsmall}, simple);
    CHECK(advd.passed);
}

TEST_CASE("csv row format") {
    LossWeights w;
    LossTerms t;
    t.l_sal = 0.5;
    LossReport r = total_loss(t, w);
    CHECK(LossReport::csv_header() == "step,L_sal,L_feat,L_tex,L_adv,L_D,total");
    const std::string row = r.csv_row(3);
    CHECK(row.substr(0, 2) == "3,");
    const auto fields = split_csv_line(row);
    CHECK(fields.size() == 7);
    CHECK(std::stod(fields[1]) == doctest::Approx(0.5));
    CHECK(std::stod(fields[6]) == doctest::Approx(0.5));
}
