#include "gazeforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "gazeforge/nn_ops.hpp"
#include "gazeforge/random.hpp"
#include "gazeforge/serialize.hpp"

namespace fs = std::filesystem;

namespace gazeforge {

std::vector<int> Dataset::ids() const {
    std::vector<int> out;
    out.reserve(images.size());
    for (const TrainImage& img : images) out.push_back(img.id);
    return out;
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
    j = nlohmann::json{{"lr", c.lr},   {"beta1", c.beta1},
                       {"beta2", c.beta2}, {"eps", c.eps},
                       {"batch_size", c.batch_size}, {"steps", c.steps}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
    c = AdamConfig{};
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
}

void to_json(nlohmann::json& j, const LossWeights& w) {
    j = nlohmann::json{{"lambda_sal", w.lambda_sal},
                       {"lambda_feat", w.lambda_feat},
                       {"lambda_tex", w.lambda_tex},
                       {"lambda_adv", w.lambda_adv},
                       {"feature_layer", w.feature_layer},
                       {"texture_layers", w.texture_layers},
                       {"texture_layer_weights", w.texture_layer_weights},
                       {"kl_eps", w.kl_eps}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
    w = LossWeights{};
    w.lambda_sal = j.value("lambda_sal", w.lambda_sal);
    w.lambda_feat = j.value("lambda_feat", w.lambda_feat);
    w.lambda_tex = j.value("lambda_tex", w.lambda_tex);
    w.lambda_adv = j.value("lambda_adv", w.lambda_adv);
    w.feature_layer = j.value("feature_layer", w.feature_layer);
    w.texture_layers = j.value("texture_layers", w.texture_layers);
    w.texture_layer_weights = j.value("texture_layer_weights", w.texture_layer_weights);
    w.kl_eps = j.value("kl_eps", w.kl_eps);
}

void to_json(nlohmann::json& j, const TargetKind& k) {
    j = k == TargetKind::local_shift ? "local_shift" : "global_scale";
}

void from_json(const nlohmann::json& j, TargetKind& k) {
    const std::string s = j.get<std::string>();
    if (s == "local_shift") {
        k = TargetKind::local_shift;
    } else if (s == "global_scale") {
        k = TargetKind::global_scale;
    } else {
        throw value_error("target kind must be 'local_shift' or 'global_scale', got '" + s + "'");
    }
}

void to_json(nlohmann::json& j, const TargetSampleConfig& c) {
    j = nlohmann::json{{"kind", c.kind},
                       {"k_sh_min", c.k_sh_min},
                       {"k_sh_max", c.k_sh_max},
                       {"k_sc_min", c.k_sc_min},
                       {"k_sc_max", c.k_sc_max},
                       {"mask_blur_sigma_at_512", c.mask_blur_sigma_at_512}};
}

void from_json(const nlohmann::json& j, TargetSampleConfig& c) {
    c = TargetSampleConfig{};
    if (j.contains("kind")) j.at("kind").get_to(c.kind);
    c.k_sh_min = j.value("k_sh_min", c.k_sh_min);
    c.k_sh_max = j.value("k_sh_max", c.k_sh_max);
    c.k_sc_min = j.value("k_sc_min", c.k_sc_min);
    c.k_sc_max = j.value("k_sc_max", c.k_sc_max);
    c.mask_blur_sigma_at_512 = j.value("mask_blur_sigma_at_512", c.mask_blur_sigma_at_512);
}

void to_json(nlohmann::json& j, const TrainRunConfig& c) {
    j = nlohmann::json{{"manipulation", c.manipulation},
                       {"weights", c.weights},
                       {"gen_adam", c.gen_adam},
                       {"disc_adam", c.disc_adam},
                       {"targets", c.targets},
                       {"seed", c.seed},
                       {"eval_every", c.eval_every},
                       {"eval_images", c.eval_images},
                       {"checkpoint_every", c.checkpoint_every},
                       {"out_dir", c.out_dir},
                       {"dataset_paths", c.dataset_paths}};
}

void from_json(const nlohmann::json& j, TrainRunConfig& c) {
    c = TrainRunConfig{};
    if (j.contains("manipulation")) j.at("manipulation").get_to(c.manipulation);
    if (j.contains("weights")) j.at("weights").get_to(c.weights);
    if (j.contains("gen_adam")) j.at("gen_adam").get_to(c.gen_adam);
    if (j.contains("disc_adam")) j.at("disc_adam").get_to(c.disc_adam);
    if (j.contains("targets")) j.at("targets").get_to(c.targets);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_images = j.value("eval_images", c.eval_images);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.dataset_paths = j.value("dataset_paths", c.dataset_paths);
}

std::uint64_t trainer_eval_seed(std::uint64_t run_seed, std::size_t step) {
    return mix_seed(mix_seed(run_seed, "trainer-eval"), static_cast<std::uint64_t>(step));
}

namespace {

// Everything about one image that stays fixed for the whole run: the frozen
// saliency prediction the targets are derived from, masks moved onto the
// density grid, and the reference features for the regularizer terms.
struct ImageCache {
    Tensor pre;
    Tensor log_sal;
    std::vector<ObjectMask> density_masks;
    Tensor f_ref;
    std::vector<Tensor> gram_refs;
    std::vector<double> gram_weights;
    bool refs_ready = false;
};

ImageCache build_cache(const SaliencyModel& saliency, const TrainImage& img) {
    ImageCache c;
    c.pre = preprocess(img.image);
    c.log_sal = saliency.predict_log_saliency(c.pre);
    const Shape& sal_shape = c.log_sal.shape();
    for (const ObjectMask& m : img.masks) {
        const Shape& ms = m.grid.shape();
        if (ms == sal_shape) {
            c.density_masks.push_back(m);
        } else if (ms.size() == 4 && ms[2] == 2 * sal_shape[2] && ms[3] == 2 * sal_shape[3]) {
            c.density_masks.push_back({downsample_avg(m.grid, 2), m.object_id});
        } else {
            throw shape_error("trainer: mask " + shape_str(ms) + " on image id " +
                              std::to_string(img.id) + " matches neither the image nor the " +
                              shape_str(sal_shape) + " density grid");
        }
    }
    return c;
}

void ensure_refs(ImageCache& c, const Backbone& backbone, const LossWeights& w, bool need_feat,
                 bool need_tex) {
    if (c.refs_ready || (!need_feat && !need_tex)) return;
    std::vector<std::string> layers;
    if (need_tex) layers = w.texture_layers;
    if (need_feat && std::find(layers.begin(), layers.end(), w.feature_layer) == layers.end()) {
        layers.push_back(w.feature_layer);
    }
    FeatureStack stack = backbone.extract(c.pre, layers);
    if (need_tex) {
        for (const std::string& layer : w.texture_layers) {
            c.gram_refs.push_back(gram(stack.get(layer)).detach());
            c.gram_weights.push_back(w.texture_weight(layer));
        }
    }
    if (need_feat) c.f_ref = stack.get(w.feature_layer).detach();
    c.refs_ready = true;
}

struct GenPass {
    Tensor hat;
    Tensor total;
    LossTerms terms;
};

// One generator forward plus the four weighted terms. With a view the whole
// graph stays on its tape; without one everything is detached. Zero-weighted
// terms are skipped unless all_terms is set (evaluation reports them all).
GenPass generator_pass(const FGTransform& generator, const ParamView* view,
                       const SaliencyModel& saliency, const PatchDiscriminator& discriminator,
                       const Backbone& backbone, ImageCache& cache, const TrainImage& img,
                       const Tensor& p_t, const LossWeights& w, bool all_terms) {
    const bool want_sal = all_terms || w.lambda_sal != 0.0;
    const bool want_feat = all_terms || w.lambda_feat != 0.0;
    const bool want_tex = all_terms || w.lambda_tex != 0.0;
    const bool want_adv = all_terms || w.lambda_adv != 0.0;
    ensure_refs(cache, backbone, w, want_feat, want_tex);

    const Tensor log_target = to_network_input(p_t);
    GenPass out;
    out.hat = view ? generator.forward(img.image, log_target, *view)
                   : generator.forward(img.image, log_target);

    Tensor l_sal = Tensor::scalar(0.0);
    Tensor l_feat = Tensor::scalar(0.0);
    Tensor l_tex = Tensor::scalar(0.0);
    Tensor l_adv = Tensor::scalar(0.0);
    if (want_sal || want_feat || want_tex) {
        const Tensor pre_hat = preprocess(out.hat);
        if (want_sal) l_sal = saliency_loss(p_t, saliency.predict_density(pre_hat), w.kl_eps);
        if (want_feat || want_tex) {
            std::vector<std::string> layers;
            if (want_tex) layers = w.texture_layers;
            if (want_feat &&
                std::find(layers.begin(), layers.end(), w.feature_layer) == layers.end()) {
                layers.push_back(w.feature_layer);
            }
            FeatureStack stack = backbone.extract(pre_hat, layers);
            if (want_tex) {
                std::vector<Tensor> f_hats;
                f_hats.reserve(w.texture_layers.size());
                for (const std::string& layer : w.texture_layers) f_hats.push_back(stack.get(layer));
                l_tex = texture_loss_from(cache.gram_refs, f_hats, cache.gram_weights);
            }
            if (want_feat) l_feat = feature_loss_from(cache.f_ref, stack.get(w.feature_layer));
        }
    }
    if (want_adv) l_adv = adv_generator_loss(discriminator.forward(out.hat));

    out.total = weighted_total(l_sal, l_feat, l_tex, l_adv, w);
    out.terms.l_sal = l_sal.values()[0];
    out.terms.l_feat = l_feat.values()[0];
    out.terms.l_tex = l_tex.values()[0];
    out.terms.l_adv = l_adv.values()[0];
    return out;
}

bool grads_finite(const GradMap& grads) {
    for (const auto& [name, g] : grads) {
        for (double v : g) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace

EvalResult evaluate(const FGTransform& generator, const PatchDiscriminator& discriminator,
                    const SaliencyModel& saliency, const Dataset& test,
                    const LossWeights& weights, const TargetSampleConfig& targets,
                    const EvalOptions& opts) {
    if (test.images.empty()) throw usage_error("evaluate: empty image set");
    const std::size_t n = opts.n_images == 0 ? test.images.size() : opts.n_images;
    if (n > test.images.size()) {
        throw usage_error("evaluate: n_images " + std::to_string(n) + " exceeds the set of " +
                          std::to_string(test.images.size()));
    }
    if (!opts.train_ids.empty()) {
        const std::unordered_set<int> trained(opts.train_ids.begin(), opts.train_ids.end());
        for (std::size_t i = 0; i < n; ++i) {
            if (trained.count(test.images[i].id)) {
                throw usage_error("evaluate: image id " + std::to_string(test.images[i].id) +
                                  " is in the training set");
            }
        }
    }

    const Backbone& backbone = *saliency.backbone();
    std::mt19937_64 rng(mix_seed(opts.seed, "evaluate-targets"));
    EvalResult out;
    LossTerms sums;
    for (std::size_t i = 0; i < n; ++i) {
        const TrainImage& img = test.images[i];
        ImageCache cache = build_cache(saliency, img);
        const SampledTarget target = sample_target(cache.log_sal, cache.density_masks, targets, rng);
        GenPass pass = generator_pass(generator, nullptr, saliency, discriminator, backbone, cache,
                                      img, target.density, weights, true);
        LossTerms terms = pass.terms;
        terms.l_d = adv_discriminator_loss(discriminator.forward(pass.hat),
                                           discriminator.forward(img.image))
                        .values()[0];
        out.rows.emplace_back(img.id, total_loss(terms, weights));
        sums.l_sal += terms.l_sal;
        sums.l_feat += terms.l_feat;
        sums.l_tex += terms.l_tex;
        sums.l_adv += terms.l_adv;
        sums.l_d += terms.l_d;
    }
    const double inv = 1.0 / static_cast<double>(n);
    sums.l_sal *= inv;
    sums.l_feat *= inv;
    sums.l_tex *= inv;
    sums.l_adv *= inv;
    sums.l_d *= inv;
    out.mean = total_loss(sums, weights);
    return out;
}

TrainResult train(const TrainRunConfig& cfg, FGTransform& generator,
                  PatchDiscriminator& discriminator, const SaliencyModel& saliency,
                  const Dataset& train_set, const Dataset& test_set) {
    if (train_set.images.empty()) throw usage_error("train: empty training set");
    TargetSampleConfig tcfg = cfg.targets;
    tcfg.kind = cfg.manipulation;
    if (tcfg.kind == TargetKind::local_shift) {
        for (const TrainImage& img : train_set.images) {
            if (img.masks.empty()) {
                throw usage_error("train: image id " + std::to_string(img.id) +
                                  " has no object masks for local shifting");
            }
        }
    }

    const Backbone& backbone = *saliency.backbone();
    const std::size_t n = train_set.images.size();
    const std::size_t batch = std::max<std::size_t>(1, cfg.gen_adam.batch_size);
    const double inv_batch = 1.0 / static_cast<double>(batch);

    std::vector<ImageCache> caches;
    caches.reserve(n);
    for (const TrainImage& img : train_set.images) caches.push_back(build_cache(saliency, img));

    const bool writing = !cfg.out_dir.empty();
    std::ofstream train_csv, eval_train_csv, eval_test_csv;
    if (writing) {
        fs::create_directories(fs::path(cfg.out_dir) / "checkpoints");
        nlohmann::json manifest;
        manifest["config"] = cfg;
        manifest["train_ids"] = train_set.ids();
        manifest["test_ids"] = test_set.ids();
        write_text_file((fs::path(cfg.out_dir) / "train_manifest.json").string(),
                        manifest.dump(2) + "\n");
        train_csv.open(fs::path(cfg.out_dir) / "train_losses.csv");
        eval_train_csv.open(fs::path(cfg.out_dir) / "eval_train.csv");
        eval_test_csv.open(fs::path(cfg.out_dir) / "eval_test.csv");
        train_csv << LossReport::csv_header() << '\n';
        eval_train_csv << LossReport::csv_header() << '\n';
        eval_test_csv << LossReport::csv_header() << '\n';
    }

    TrainResult result;
    const std::vector<int> train_ids = train_set.ids();

    auto save_ckpt = [&](const std::string& name) {
        if (!writing) return;
        const fs::path dir = fs::path(cfg.out_dir) / "checkpoints" / name;
        generator.save((dir / "generator").string());
        discriminator.save((dir / "discriminator").string());
    };

    auto abort_run = [&](std::size_t step, const std::string& what) {
        if (writing) {
            save_ckpt("last_good");
            nlohmann::json diag;
            diag["step"] = step;
            diag["reason"] = what;
            if (!result.train_rows.empty()) {
                diag["last_row"] = result.train_rows.back().csv_row(result.train_rows.size());
            }
            write_text_file((fs::path(cfg.out_dir) / "diagnostics.json").string(),
                            diag.dump(2) + "\n");
        }
        throw numeric_error("train: " + what + " at step " + std::to_string(step) +
                            (writing ? "; last-good checkpoint written" : ""));
    };

    auto run_eval = [&](std::size_t step) {
        const std::uint64_t seed = trainer_eval_seed(cfg.seed, step);
        EvalOptions train_opts;
        train_opts.seed = seed;
        train_opts.n_images =
            cfg.eval_images == 0 ? 0 : std::min(cfg.eval_images, train_set.images.size());
        const EvalResult on_train =
            evaluate(generator, discriminator, saliency, train_set, cfg.weights, tcfg, train_opts);
        result.eval_train_rows.push_back({step, on_train.mean});
        if (writing) eval_train_csv << on_train.mean.csv_row(step) << '\n';
        if (!test_set.images.empty()) {
            EvalOptions test_opts;
            test_opts.seed = seed;
            test_opts.n_images =
                cfg.eval_images == 0 ? 0 : std::min(cfg.eval_images, test_set.images.size());
            test_opts.train_ids = train_ids;
            const EvalResult on_test =
                evaluate(generator, discriminator, saliency, test_set, cfg.weights, tcfg, test_opts);
            result.eval_test_rows.push_back({step, on_test.mean});
            if (writing) eval_test_csv << on_test.mean.csv_row(step) << '\n';
        }
    };

    std::mt19937_64 batch_rng(mix_seed(cfg.seed, "trainer-batch"));
    std::mt19937_64 target_rng(mix_seed(cfg.seed, "trainer-target"));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    AdamState gen_state, disc_state;

    for (std::size_t step = 1; step <= cfg.gen_adam.steps; ++step) {
        std::vector<std::size_t> indices(batch);
        for (std::size_t& i : indices) i = pick(batch_rng);

        LossTerms sums;
        GradMap gen_grads;
        std::vector<Tensor> fakes;
        fakes.reserve(batch);
        for (const std::size_t i : indices) {
            ImageCache& cache = caches[i];
            const SampledTarget target =
                sample_target(cache.log_sal, cache.density_masks, tcfg, target_rng);
            Tape tape;
            ParamView view(generator.params(), tape);
            GenPass pass = generator_pass(generator, &view, saliency, discriminator, backbone,
                                          cache, train_set.images[i], target.density, cfg.weights,
                                          false);
            if (!std::isfinite(pass.total.values()[0])) {
                abort_run(step, "non-finite generator loss");
            }
            tape.backward(pass.total);
            accumulate_grads_from(view, tape, gen_grads, inv_batch);
            sums.l_sal += pass.terms.l_sal * inv_batch;
            sums.l_feat += pass.terms.l_feat * inv_batch;
            sums.l_tex += pass.terms.l_tex * inv_batch;
            sums.l_adv += pass.terms.l_adv * inv_batch;
            fakes.push_back(pass.hat.detach());
        }
        if (!grads_finite(gen_grads)) abort_run(step, "non-finite generator gradient");
        adam_step(generator.params(), gen_grads, gen_state, cfg.gen_adam);

        GradMap disc_grads;
        for (std::size_t b = 0; b < batch; ++b) {
            Tape tape;
            ParamView view(discriminator.params(), tape);
            const Tensor l_d =
                adv_discriminator_loss(discriminator.forward(fakes[b], view),
                                       discriminator.forward(train_set.images[indices[b]].image, view));
            if (!std::isfinite(l_d.values()[0])) abort_run(step, "non-finite discriminator loss");
            tape.backward(l_d);
            accumulate_grads_from(view, tape, disc_grads, inv_batch);
            sums.l_d += l_d.values()[0] * inv_batch;
        }
        if (!grads_finite(disc_grads)) abort_run(step, "non-finite discriminator gradient");
        adam_step(discriminator.params(), disc_grads, disc_state, cfg.disc_adam);

        const LossReport row = total_loss(sums, cfg.weights);
        result.train_rows.push_back(row);
        result.steps_run = step;
        if (writing) train_csv << row.csv_row(step) << '\n';

        const bool last = step == cfg.gen_adam.steps;
        if (!last && cfg.eval_every > 0 && step % cfg.eval_every == 0) run_eval(step);
        if (!last && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            save_ckpt("step_" + std::to_string(step));
        }
    }

    run_eval(result.steps_run);
    save_ckpt("final");
    return result;
}

namespace {

void zero_weight(LossWeights& w, const std::string& name) {
    if (name == "saliency") {
        w.lambda_sal = 0.0;
    } else if (name == "feature") {
        w.lambda_feat = 0.0;
    } else if (name == "texture") {
        w.lambda_tex = 0.0;
    } else if (name == "adversarial") {
        w.lambda_adv = 0.0;
    } else {
        throw value_error("run_ablation: unknown weight name '" + name +
                          "' (expected saliency, feature, texture or adversarial)");
    }
}

}  // namespace

std::vector<AblationRow> run_ablation(const TrainRunConfig& base,
                                      std::shared_ptr<const Backbone> backbone,
                                      const SaliencyModel& saliency,
                                      const FGTransformConfig& gen_cfg,
                                      const DiscriminatorConfig& disc_cfg,
                                      const Dataset& train_set, const Dataset& test_set,
                                      const std::vector<AblationVariant>& variants) {
    if (variants.empty()) throw usage_error("run_ablation: no variants");
    std::vector<AblationRow> rows;
    rows.reserve(variants.size());
    for (const AblationVariant& variant : variants) {
        TrainRunConfig cfg = base;
        for (const std::string& name : variant.zero_weights) zero_weight(cfg.weights, name);
        if (!base.out_dir.empty()) {
            cfg.out_dir = (fs::path(base.out_dir) / variant.name).string();
        }
        FGTransform gen(backbone, gen_cfg, mix_seed(base.seed, "ablation-generator"));
        PatchDiscriminator disc(disc_cfg, mix_seed(base.seed, "ablation-discriminator"));
        const TrainResult res = train(cfg, gen, disc, saliency, train_set, test_set);

        AblationRow row;
        row.name = variant.name;
        row.weights = cfg.weights;
        row.final_train_eval = res.eval_train_rows.back().report;
        if (!res.eval_test_rows.empty()) row.final_test_eval = res.eval_test_rows.back().report;
        rows.push_back(std::move(row));
    }
    if (!base.out_dir.empty()) {
        write_text_file((fs::path(base.out_dir) / "ablation.csv").string(), ablation_csv(rows));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "variant,lambda_sal,lambda_feat,lambda_tex,lambda_adv,"
          "train_L_sal,train_L_feat,train_L_tex,train_L_adv,train_L_D,train_total,"
          "test_L_sal,test_L_feat,test_L_tex,test_L_adv,test_L_D,test_total\n";
    for (const AblationRow& r : rows) {
        const LossTerms& a = r.final_train_eval.terms;
        const LossTerms& b = r.final_test_eval.terms;
        ss << r.name << ',' << r.weights.lambda_sal << ',' << r.weights.lambda_feat << ','
           << r.weights.lambda_tex << ',' << r.weights.lambda_adv << ',' << a.l_sal << ','
           << a.l_feat << ',' << a.l_tex << ',' << a.l_adv << ',' << a.l_d << ','
           << r.final_train_eval.total << ',' << b.l_sal << ',' << b.l_feat << ',' << b.l_tex
           << ',' << b.l_adv << ',' << b.l_d << ',' << r.final_test_eval.total << '\n';
    }
    return ss.str();
}

}  // namespace gazeforge
