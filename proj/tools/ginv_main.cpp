// ginv - desk-scale training-distribution restoration lab.
//
// Subcommands: synth-data, train-classifier, train-gan, generate, gradcheck.
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 training divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ginv/config.hpp"
#include "ginv/data.hpp"
#include "ginv/gradcheck.hpp"
#include "ginv/losses.hpp"
#include "ginv/models.hpp"
#include "ginv/train.hpp"

namespace fs = std::filesystem;
using namespace ginv;

namespace {

TrainConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return load_config_file(path);
}

int run_synth_data(const std::string& out, const std::string& kind, std::size_t count,
                   std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImageSample> samples;
  if (kind == "substrates") {
    samples = synth_substrates(count, size, rng);
  } else if (kind == "shapes") {
    samples = synth_labeled_shapes(count, kShapeClassCount, size, rng);
  } else {
    throw ConfigError("unknown --kind: " + kind + " (expected substrates|shapes)");
  }
  write_dataset(samples, out);
  std::cout << "wrote " << samples.size() << " images to " << out << "\n";
  return 0;
}

int run_train_classifier(const std::string& config_path, const std::string& data_manifest,
                         const std::string& out) {
  TrainConfig cfg = load_config_or_default(config_path);
  cfg.validate();
  auto data = load_manifest(data_manifest);
  auto res = train_classifier(cfg, data);
  save_checkpoint(res.checkpoint, out);
  std::printf("train accuracy: %.4f\n", res.train_accuracy);
  std::printf("held-out accuracy: %.4f\n", res.heldout_accuracy);
  std::cout << "checkpoint written to " << out << "\n";
  return 0;
}

int run_train_gan(const std::string& config_path, const std::string& victim_path,
                  const std::string& substrate_manifest, const std::string& out) {
  TrainConfig cfg = load_config_or_default(config_path);
  cfg.validate();
  ModelCheckpoint victim_cp = load_checkpoint(victim_path);
  Classifier victim = classifier_from_checkpoint(victim_cp);
  auto substrates = load_manifest(substrate_manifest);
  auto res = train_gan(cfg, victim, substrates, out);
  if (res.victim_hash_before != res.victim_hash_after)
    throw std::logic_error("victim parameters changed during GAN training");
  if (!res.log.empty()) {
    const auto& first = res.log.front();
    const auto& last = res.log.back();
    std::cout << "first logged step: " << first.second.csv_line(first.first) << "\n";
    std::cout << "last logged step:  " << last.second.csv_line(last.first) << "\n";
  }
  std::cout << "final checkpoint: " << (fs::path(out) / "gan.ckpt").string() << "\n";
  return 0;
}

int run_generate(const std::string& checkpoint_path, const std::string& substrate_path,
                 const std::string& classes, std::size_t count, std::uint64_t seed,
                 const std::string& out) {
  ModelCheckpoint cp = load_checkpoint(checkpoint_path);
  TrainConfig cfg = parse_config(cp.config_text);
  Generator gen = generator_from_checkpoint(cp);
  Classifier victim = classifier_from_checkpoint(cp);
  ImageSample substrate = load_image(substrate_path);

  TargetVector t;
  t.t.assign(cfg.n, 0);
  if (!classes.empty()) {
    for (auto idx : detail::parse_indices(classes)) {
      if (idx >= cfg.n) throw ConfigError("class index out of range: " + std::to_string(idx));
      t.t[idx] = 1;
    }
  }
  if (t.popcount() > 3) throw ConfigError("at most 3 classes may be mixed");

  fs::create_directories(out);
  Rng rng(seed);
  auto samples = generate(gen, victim, cfg, substrate, t, count, rng);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03zu.png", i);
    save_image(samples[i].image, (fs::path(out) / name).string());
    std::printf("%s victim probs:", name);
    for (float p : samples[i].victim_probs) std::printf(" %.4f", p);
    std::printf("\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck: finite-difference verification of every op and loss, in double.
// ---------------------------------------------------------------------------

using DTensor = TensorT<double>;

DTensor rand_dtensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return DTensor::create(std::move(shape), std::move(v), true);
}

struct GradCheckCase {
  std::string name;
  double error;
};

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, bool inject_fault) {
  std::vector<GradCheckCase> results;
  Rng rng(seed);
  const double eps = 1e-3;
  auto check = [&](const std::string& name,
                   const std::function<DTensor(DTensor&)>& f, DTensor x) {
    results.push_back({name, grad_check(f, x, eps)});
  };

  check("add", [&](DTensor& x) { return sum(add(x, x)); }, rand_dtensor({3, 4}, rng));
  check("sub", [&](DTensor& x) { return sum(sub(scale(x, 2.0), x)); }, rand_dtensor({5}, rng));
  check("mul", [&](DTensor& x) { return sum(mul(x, affine(x, 0.5, 0.2))); },
        rand_dtensor({2, 3}, rng));
  check("abs", [&](DTensor& x) { return sum(abs_(x)); }, rand_dtensor({8}, rng, 0.1, 1.0));
  check("log", [&](DTensor& x) { return sum(log_(x)); }, rand_dtensor({6}, rng, 0.2, 1.5));
  check("square", [&](DTensor& x) { return sum(square(x)); }, rand_dtensor({7}, rng));
  check("negate", [&](DTensor& x) { return sum(neg(x)); }, rand_dtensor({4}, rng));
  check("scale", [&](DTensor& x) { return sum(scale(x, -1.7)); }, rand_dtensor({4}, rng));
  check("clamp_min", [&](DTensor& x) { return sum(clamp_min(x, -0.5)); },
        rand_dtensor({9}, rng, 0.1, 1.0));
  check("mean", [&](DTensor& x) { return mean(square(x)); }, rand_dtensor({10}, rng));
  check("max", [&](DTensor& x) { return max_(mul(x, x)); }, rand_dtensor({6}, rng, 0.2, 1.0));
  check("tanh", [&](DTensor& x) { return sum(tanh_(x)); }, rand_dtensor({5}, rng));
  check("sigmoid", [&](DTensor& x) { return sum(square(sigmoid_(x))); },
        rand_dtensor({5}, rng));
  {
    DTensor slope = DTensor::create({1}, {0.2}, true);
    check("prelu_input", [&](DTensor& x) { return sum(square(prelu(x, slope))); },
          rand_dtensor({8}, rng));
    DTensor fixed = rand_dtensor({8}, rng);
    check("prelu_slope", [&](DTensor& a) { return sum(square(prelu(fixed, a))); },
          DTensor::create({1}, {0.3}, true));
  }
  check("concat_channels",
        [&](DTensor& x) {
          auto half = slice_channels(x, 0, 1);
          return sum(square(concat_channels(x, half)));
        },
        rand_dtensor({1, 2, 3, 3}, rng));
  check("resize_bilinear",
        [&](DTensor& x) { return sum(square(resize_bilinear(x, 5, 7))); },
        rand_dtensor({1, 2, 4, 4}, rng));
  check("crop", [&](DTensor& x) { return sum(square(crop(x, 1, 1, 2, 2))); },
        rand_dtensor({1, 2, 4, 4}, rng));
  {
    DTensor v = rand_dtensor({3, 2, 3, 3}, rng);
    DTensor g = rand_dtensor({3}, rng, 0.5, 1.5);
    DTensor b = rand_dtensor({3}, rng);
    DTensor in = rand_dtensor({1, 2, 6, 6}, rng);
    check("conv2d_input",
          [&](DTensor& x) { return mean(square(conv2d(x, v, g, b, 2, 1))); }, in);
    check("conv2d_weight_v",
          [&](DTensor& x) { return mean(square(conv2d(in, x, g, b, 2, 1))); }, v);
    check("conv2d_weight_g",
          [&](DTensor& x) { return mean(square(conv2d(in, v, x, b, 2, 1))); }, g);
    check("conv2d_bias",
          [&](DTensor& x) { return mean(square(conv2d(in, v, g, x, 2, 1))); }, b);
  }
  {
    DTensor v = rand_dtensor({3, 2, 4, 4}, rng);
    DTensor g = rand_dtensor({3}, rng, 0.5, 1.5);
    DTensor b = rand_dtensor({3}, rng);
    DTensor in = rand_dtensor({1, 2, 3, 3}, rng);
    check("conv_transpose2d_input",
          [&](DTensor& x) { return mean(square(conv_transpose2d(x, v, g, b, 2, 1))); }, in);
    check("conv_transpose2d_weight_v",
          [&](DTensor& x) { return mean(square(conv_transpose2d(in, x, g, b, 2, 1))); }, v);
    check("conv_transpose2d_weight_g",
          [&](DTensor& x) { return mean(square(conv_transpose2d(in, v, x, b, 2, 1))); }, g);
  }
  {
    DTensor w = rand_dtensor({4, 6}, rng);
    DTensor b = rand_dtensor({4}, rng);
    check("linear", [&](DTensor& x) { return mean(square(linear(x, w, b))); },
          rand_dtensor({2, 6}, rng));
    DTensor in = rand_dtensor({2, 6}, rng);
    check("linear_weight", [&](DTensor& x) { return mean(square(linear(in, x, b))); }, w);
  }
  check("softmax", [&](DTensor& x) { return sum(square(softmax_rows(x))); },
        rand_dtensor({2, 5}, rng));
  check("select_columns",
        [&](DTensor& x) { return sum(square(select_columns(x, {0, 2, 3}))); },
        rand_dtensor({2, 5}, rng));
  check("cross_entropy",
        [&](DTensor& x) { return cross_entropy(softmax_rows(x), {1, 0}); },
        rand_dtensor({2, 4}, rng));

  // loss terms, double instantiations of the same templates the trainer uses
  auto dclamped_log = [](const DTensor& x) { return log_(clamp_min(x, 1e-6)); };
  check("loss_cgan_d",
        [&](DTensor& x) {
          auto dr = sigmoid_(x);
          auto df = sigmoid_(scale(x, -0.7));
          return neg(add(mean(dclamped_log(dr)),
                         mean(dclamped_log(affine(df, -1.0, 1.0)))));
        },
        rand_dtensor({1, 1, 2, 2}, rng));
  check("loss_cgan_g",
        [&](DTensor& x) { return neg(mean(dclamped_log(sigmoid_(x)))); },
        rand_dtensor({1, 1, 2, 2}, rng));
  check("linear_log_penalty",
        [&](DTensor& x) {
          return mean(sub(x, dclamped_log(affine(x, -1.0, 1.0))));
        },
        rand_dtensor({5}, rng, 0.05, 0.8));
  {
    DTensor subst = rand_dtensor({1, 3, 4, 4}, rng, -0.6, 0.6);
    check("loss_substrate",
          [&](DTensor& x) {
            auto d = sub(subst, x);
            auto logterm = dclamped_log(affine(square(scale(d, 0.5)), -1.0, 1.0));
            return mean(sub(abs_(d), logterm));
          },
          rand_dtensor({1, 3, 4, 4}, rng, -0.6, 0.6));
  }
  check("loss_mask",
        [&](DTensor& x) {
          // fixed mask over half the elements, mean deviation from white
          std::vector<double> m(x.size(), 0.0);
          for (std::size_t i = 0; i < m.size() / 2; ++i) m[i] = 1.0;
          auto mask = DTensor::create(x.shape(), std::move(m));
          return scale(sum(mul(affine(x, -0.5, 0.5), mask)),
                       2.0 / static_cast<double>(x.size()));
        },
        rand_dtensor({1, 3, 2, 2}, rng));
  check("loss_vgg_max",
        [&](DTensor& x) {
          // max over per-row penalties mimics the worst-crop rule
          auto p1 = mean(sub(square(x), dclamped_log(affine(square(x), -1.0, 1.0))));
          auto p2 = mean(sub(scale(square(x), 0.5),
                             dclamped_log(affine(scale(square(x), 0.5), -1.0, 1.0))));
          return maximum(p1, p2);
        },
        rand_dtensor({4}, rng, 0.1, 0.8));

  if (inject_fault) {
    // deliberately wrong backward rule, used to prove the oracle catches one
    check("injected_fault",
          [&](DTensor& x) {
            return sum(unary_op(
                x, [](double v) { return v * v; }, [](double v, double) { return 3.0 * v; }));
          },
          rand_dtensor({4}, rng, 0.2, 1.0));
  }

  return results;
}

int run_gradcheck(std::uint64_t seed, bool inject_fault) {
  auto results = run_gradcheck_suite(seed, inject_fault);
  bool ok = true;
  std::printf("%-28s %s\n", "op", "max relative error");
  for (const auto& r : results) {
    const bool pass = r.error < 1e-3;
    ok = ok && pass;
    std::printf("%-28s %.3e %s\n", r.name.c_str(), r.error, pass ? "" : "FAIL");
  }
  if (!ok) {
    std::printf("gradcheck FAILED:");
    for (const auto& r : results)
      if (!(r.error < 1e-3)) std::printf(" %s", r.name.c_str());
    std::printf("\n");
    return 1;
  }
  std::printf("gradcheck passed (%zu cases)\n", results.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale conditional-GAN restoration of a classifier's training distribution"};
  app.require_subcommand(1);

  std::string out, kind = "substrates", config_path, data_path, victim_path, substrate_path,
              checkpoint_path, classes;
  std::size_t count = 16, size = 64;
  std::uint64_t seed = 1;

  auto* synth = app.add_subcommand("synth-data", "generate a procedural dataset");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--kind", kind, "substrates|shapes (default substrates)");
  synth->add_option("--count", count,
                    "images (substrates) or images per class (shapes); default 16");
  synth->add_option("--size", size, "image side in pixels (default 64)");
  synth->add_option("--seed", seed, "rng seed (default 1)");

  auto* traincls = app.add_subcommand("train-classifier", "train the victim classifier");
  traincls->add_option("--config", config_path, "config file (defaults when omitted)");
  traincls->add_option("--data", data_path, "labeled dataset manifest")->required();
  traincls->add_option("--out", out, "output checkpoint path")->required();

  auto* traingan = app.add_subcommand("train-gan", "train the restoration GAN");
  traingan->add_option("--config", config_path, "config file (defaults when omitted)");
  traingan->add_option("--victim", victim_path, "victim classifier checkpoint")->required();
  traingan->add_option("--substrates", substrate_path, "substrate manifest")->required();
  traingan->add_option("--out", out, "output directory for checkpoints and log")->required();

  auto* gen = app.add_subcommand("generate", "sample images from a trained checkpoint");
  gen->add_option("--checkpoint", checkpoint_path, "GAN checkpoint")->required();
  gen->add_option("--substrate", substrate_path, "substrate PNG")->required();
  gen->add_option("--classes", classes, "comma-separated target class indices, empty = null");
  gen->add_option("--count", count, "samples to draw (default 16)");
  gen->add_option("--seed", seed, "rng seed (default 1)");
  gen->add_option("--out", out, "output directory")->required();

  bool inject_fault = false;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification suite");
  gc->add_option("--seed", seed, "rng seed (default 1)");
  gc->add_flag("--inject-fault", inject_fault,
               "add a case with a deliberately broken backward rule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return run_synth_data(out, kind, count, size, seed);
    if (traincls->parsed()) return run_train_classifier(config_path, data_path, out);
    if (traingan->parsed()) return run_train_gan(config_path, victim_path, substrate_path, out);
    if (gen->parsed())
      return run_generate(checkpoint_path, substrate_path, classes, count, seed, out);
    if (gc->parsed()) return run_gradcheck(seed, inject_fault);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
