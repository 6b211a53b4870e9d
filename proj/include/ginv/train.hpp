#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ginv/adam.hpp"
#include "ginv/checkpoint.hpp"
#include "ginv/config.hpp"
#include "ginv/data.hpp"
#include "ginv/losses.hpp"
#include "ginv/models.hpp"

namespace ginv {

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline std::uint64_t hash_params(const NamedParams& named) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : named) {
    mix(name.data(), name.size());
    mix(t.value().data(), t.size() * sizeof(float));
  }
  return h;
}

inline void zero_grads(const NamedParams& named) {
  for (const auto& [name, t] : named) const_cast<Tensor&>(t).zero_grad();
}

// Drop gradient buffers so no backward pass ever touches these parameters.
inline void freeze_params(const NamedParams& named) {
  for (const auto& [name, t] : named) {
    t.store()->grad.clear();
    t.store()->requires_grad = false;
  }
}

// [B,3,H,W] batch from individual samples; no gradient tracking.
inline Tensor stack_images(const std::vector<const ImageSample*>& items) {
  if (items.empty()) throw ShapeError("stack_images: empty batch");
  const std::size_t H = items[0]->height(), W = items[0]->width();
  std::vector<float> data;
  data.reserve(items.size() * 3 * H * W);
  for (const auto* s : items) {
    if (s->height() != H || s->width() != W) throw ShapeError("stack_images: size mismatch");
    data.insert(data.end(), s->pixels.value().begin(), s->pixels.value().end());
  }
  return Tensor::create({items.size(), 3, H, W}, std::move(data));
}

// [B,n,s,s] batch of independently drawn class tiles.
inline Tensor stack_tiles(const TargetVector& t, std::size_t s, std::size_t batch, Rng& rng,
                          double sigma) {
  std::vector<float> data;
  data.reserve(batch * t.t.size() * s * s);
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor tile = sample_class_tile(t, s, rng, sigma);
    data.insert(data.end(), tile.value().begin(), tile.value().end());
  }
  return Tensor::create({batch, t.t.size(), s, s}, std::move(data));
}

inline std::vector<AdamState> make_states(const std::vector<Tensor>& params) {
  std::vector<AdamState> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.size());
  return out;
}

inline AdamHyper hyper_from_config(const TrainConfig& c) {
  AdamHyper h;
  h.alpha = static_cast<float>(c.alpha);
  h.beta1 = static_cast<float>(c.beta1);
  h.beta2 = static_cast<float>(c.beta2);
  h.epsilon = static_cast<float>(c.epsilon);
  return h;
}

namespace detail {

inline void append_opt_entries(ModelCheckpoint& cp, const NamedParams& named,
                               const std::vector<AdamState>& states,
                               const std::string& group) {
  for (std::size_t i = 0; i < named.size(); ++i) {
    cp.entries.emplace_back("opt." + named[i].first + ".m",
                            Tensor::create(named[i].second.shape(), states[i].m));
    cp.entries.emplace_back("opt." + named[i].first + ".v",
                            Tensor::create(named[i].second.shape(), states[i].v));
  }
  const float count = states.empty() ? 0.0f : static_cast<float>(states[0].step_count);
  cp.entries.emplace_back("opt." + group + ".step_count", Tensor::create({1}, {count}));
}

inline void restore_named(const ModelCheckpoint& cp, const NamedParams& named) {
  for (const auto& [name, t] : named) {
    const Tensor* src = cp.find(name);
    if (!src) throw CorruptFileError("checkpoint missing tensor: " + name);
    if (src->shape() != t.shape())
      throw ShapeError("checkpoint tensor shape mismatch: " + name);
    const_cast<Tensor&>(t).value() = src->value();
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model <-> checkpoint
// ---------------------------------------------------------------------------

inline Classifier classifier_from_checkpoint(const ModelCheckpoint& cp) {
  const TrainConfig cfg = parse_config(cp.config_text);
  ClassifierSpec spec{cfg.classifier_input, cfg.n_total, cfg.base_channels, cfg.channel_cap};
  Rng dummy(0);
  Classifier c = Classifier::init(spec, dummy);
  detail::restore_named(cp, c.named_params("cls"));
  return c;
}

inline Generator generator_from_checkpoint(const ModelCheckpoint& cp) {
  const TrainConfig cfg = parse_config(cp.config_text);
  GeneratorSpec spec{cfg.substrate_size, cfg.n, cfg.base_channels, cfg.channel_cap};
  Rng dummy(0);
  Generator g = Generator::init(spec, dummy);
  detail::restore_named(cp, g.named_params("gen"));
  return g;
}

inline Discriminator discriminator_from_checkpoint(const ModelCheckpoint& cp) {
  const TrainConfig cfg = parse_config(cp.config_text);
  DiscriminatorSpec spec{cfg.substrate_size, cfg.base_channels, cfg.channel_cap};
  Rng dummy(0);
  Discriminator d = Discriminator::init(spec, dummy);
  detail::restore_named(cp, d.named_params("dis"));
  return d;
}

// ---------------------------------------------------------------------------
// Victim classifier training
// ---------------------------------------------------------------------------

struct ClassifierTrainResult {
  Classifier classifier;
  ModelCheckpoint checkpoint;
  float train_accuracy = 0.0f;
  float heldout_accuracy = 0.0f;
};

inline float classifier_accuracy(const Classifier& cls,
                                 const std::vector<ImageSample>& samples,
                                 const std::vector<std::size_t>& indices) {
  if (indices.empty()) return 0.0f;
  typename TapeT<float>::PauseGuard guard(tape<float>());
  std::size_t correct = 0;
  for (std::size_t idx : indices) {
    Tensor batch = stack_images({&samples[idx]});
    Tensor probs = cls.forward(batch);
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < probs.size(); ++j)
      if (probs.value()[j] > probs.value()[argmax]) argmax = j;
    if (static_cast<int>(argmax) == samples[idx].label) ++correct;
  }
  return static_cast<float>(correct) / static_cast<float>(indices.size());
}

// Cross-entropy + Adam on the labeled dataset; every 5th sample is held out.
inline ClassifierTrainResult train_classifier(const TrainConfig& cfg,
                                              const std::vector<ImageSample>& data) {
  cfg.validate();
  if (data.empty()) throw ShapeError("train_classifier: empty dataset");
  for (const auto& s : data) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= cfg.n_total)
      throw ShapeError("train_classifier: sample label out of range");
    if (s.height() != cfg.classifier_input || s.width() != cfg.classifier_input)
      throw ShapeError("train_classifier: sample size does not match classifier_input");
  }
  std::vector<std::size_t> train_idx, held_idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    (i % 5 == 4 ? held_idx : train_idx).push_back(i);
  if (train_idx.empty()) throw ShapeError("train_classifier: no training samples after split");

  Rng master(cfg.seed);
  Rng init_rng = master.fork();
  Rng batch_rng = master.fork();

  ClassifierSpec spec{cfg.classifier_input, cfg.n_total, cfg.base_channels, cfg.channel_cap};
  Classifier cls = Classifier::init(spec, init_rng);
  NamedParams named = cls.named_params("cls");
  std::vector<Tensor> params = param_list(named);
  std::vector<AdamState> states = make_states(params);
  AdamHyper hyper = hyper_from_config(cfg);
  // beta1 = 0.9 converges noticeably faster for plain classification, but we
  // keep the single optimizer recipe of the experiment for every network.

  auto& tp = tape<float>();
  for (std::size_t step = 1; step <= cfg.classifier_steps; ++step) {
    std::vector<const ImageSample*> batch;
    std::vector<std::size_t> labels;
    for (std::size_t b = 0; b < cfg.classifier_batch; ++b) {
      const std::size_t idx = train_idx[batch_rng.uniform_index(train_idx.size())];
      batch.push_back(&data[idx]);
      labels.push_back(static_cast<std::size_t>(data[idx].label));
    }
    Tensor images = stack_images(batch);
    Tensor probs = cls.forward(images);
    Tensor loss = cross_entropy(probs, labels);
    if (!std::isfinite(loss.item()))
      throw DivergenceError(step, "classifier loss is not finite");
    zero_grads(named);
    tp.backward(loss);
    adam_step(params, states, hyper);
    tp.clear();
  }

  ClassifierTrainResult res;
  res.classifier = cls;
  res.train_accuracy = classifier_accuracy(cls, data, train_idx);
  res.heldout_accuracy = classifier_accuracy(cls, data, held_idx);
  res.checkpoint.entries = named;
  detail::append_opt_entries(res.checkpoint, named, states, "cls");
  res.checkpoint.config_text = emit_config(cfg);
  res.checkpoint.step = cfg.classifier_steps;
  return res;
}

// ---------------------------------------------------------------------------
// Restoration GAN training
// ---------------------------------------------------------------------------

struct GanTrainResult {
  Generator gen;
  Discriminator dis;
  ModelCheckpoint checkpoint;
  std::vector<std::pair<std::size_t, LossReport>> log;
  std::uint64_t victim_hash_before = 0;
  std::uint64_t victim_hash_after = 0;
};

// One step: augmented substrate batch, shared target vector, per-item tiles,
// D update on (real pair vs fake pair), then G update on the weighted
// objective. The victim classifier is frozen throughout.
inline GanTrainResult train_gan(const TrainConfig& cfg, const Classifier& victim,
                                const std::vector<ImageSample>& substrates,
                                const std::string& out_dir = "") {
  cfg.validate();
  if (victim.spec.input_size != cfg.classifier_input || victim.spec.n_total != cfg.n_total)
    throw ShapeError("train_gan: victim checkpoint does not match config");
  if (substrates.empty()) throw ShapeError("train_gan: empty substrate dataset");
  for (const auto& s : substrates)
    if (s.height() != cfg.substrate_size || s.width() != cfg.substrate_size)
      throw ShapeError("train_gan: substrate size mismatch");

  NamedParams victim_named = victim.named_params("cls");
  freeze_params(victim_named);
  const std::uint64_t victim_hash = hash_params(victim_named);

  Rng master(cfg.seed);
  Rng init_rng = master.fork();
  Rng data_rng = master.fork();
  Rng target_rng = master.fork();
  Rng tile_rng = master.fork();
  Rng crop_rng = master.fork();

  GeneratorSpec gspec{cfg.substrate_size, cfg.n, cfg.base_channels, cfg.channel_cap};
  DiscriminatorSpec dspec{cfg.substrate_size, cfg.base_channels, cfg.channel_cap};
  Generator gen = Generator::init(gspec, init_rng);
  Discriminator dis = Discriminator::init(dspec, init_rng);

  NamedParams gen_named = gen.named_params("gen");
  NamedParams dis_named = dis.named_params("dis");
  std::vector<Tensor> gen_params = param_list(gen_named);
  std::vector<Tensor> dis_params = param_list(dis_named);
  std::vector<AdamState> gen_states = make_states(gen_params);
  std::vector<AdamState> dis_states = make_states(dis_params);
  AdamHyper hyper = hyper_from_config(cfg);

  namespace fs = std::filesystem;
  std::ofstream log_file;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log_file.open(fs::path(out_dir) / "log.csv");
    log_file << LossReport::csv_header() << "\n";
  }

  auto snapshot = [&](std::size_t step) {
    ModelCheckpoint cp;
    cp.entries = gen_named;
    cp.entries.insert(cp.entries.end(), dis_named.begin(), dis_named.end());
    cp.entries.insert(cp.entries.end(), victim_named.begin(), victim_named.end());
    detail::append_opt_entries(cp, gen_named, gen_states, "gen");
    detail::append_opt_entries(cp, dis_named, dis_states, "dis");
    cp.config_text = emit_config(cfg);
    cp.step = step;
    return cp;
  };

  GanTrainResult res;
  res.victim_hash_before = victim_hash;
  auto& tp = tape<float>();
  const std::size_t s = cfg.tile_side();

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    // (1) substrate batch and independent real batch, both augmented
    std::vector<ImageSample> subs_batch, real_batch;
    for (std::size_t b = 0; b < cfg.batch_size; ++b)
      subs_batch.push_back(apply_augmentation(
          substrates[data_rng.uniform_index(substrates.size())], cfg.augmentation, data_rng));
    for (std::size_t b = 0; b < cfg.batch_size; ++b)
      real_batch.push_back(apply_augmentation(
          substrates[data_rng.uniform_index(substrates.size())], cfg.augmentation, data_rng));
    std::vector<const ImageSample*> subs_ptrs, real_ptrs;
    for (const auto& img : subs_batch) subs_ptrs.push_back(&img);
    for (const auto& img : real_batch) real_ptrs.push_back(&img);
    Tensor x = stack_images(subs_ptrs);
    Tensor y = cfg.real_pair_self ? x : stack_images(real_ptrs);

    // (2) one target vector per batch, a fresh tile per item
    TargetVector t = sample_target(cfg.n, cfg.p_null, cfg.max_mixed, target_rng);
    Tensor tiles = stack_tiles(t, s, cfg.batch_size, tile_rng, cfg.tile_sigma);

    // (4) discriminator step on a detached fake
    Tensor fake_detached;
    {
      typename TapeT<float>::PauseGuard guard(tp);
      fake_detached = gen.forward(x, tiles);
    }
    Tensor d_real = dis.forward(x, y);
    Tensor d_fake = dis.forward(x, fake_detached);
    Tensor ld = loss_cgan_d(d_real, d_fake);
    const float ld_value = ld.item();
    zero_grads(dis_named);
    tp.backward(ld);
    adam_step(dis_params, dis_states, hyper);
    tp.clear();

    // (5) generator step on the full weighted objective
    Tensor fake = gen.forward(x, tiles);
    Tensor d_fake_g = dis.forward(x, fake);
    Tensor lg = loss_cgan_g(d_fake_g);
    Tensor lm = loss_mask(fake, x, cfg.white_threshold);
    Tensor resized = resize_bilinear(fake, cfg.classifier_input, cfg.classifier_input);
    Tensor c_r = select_columns(victim.forward(resized), cfg.target_indices);
    std::vector<Tensor> crop_probs;
    for (Tensor& cimg :
         sample_crops(fake, cfg.classifier_input, cfg.crop_count, crop_rng))
      crop_probs.push_back(select_columns(victim.forward(cimg), cfg.target_indices));
    VggLoss vgg = loss_vgg(c_r, crop_probs, t);
    Tensor ls = loss_substrate(x, fake);
    TotalLoss total = loss_total(Tensor::scalar(ld_value), lg, lm, vgg, ls, cfg.weights);
    if (!total.report.finite()) {
      throw DivergenceError(step, "non-finite loss components: " +
                                      total.report.csv_line(step));
    }
    zero_grads(gen_named);
    tp.backward(total.generator_objective);
    adam_step(gen_params, gen_states, hyper);
    tp.clear();

    // (6) logging, (7) checkpointing
    if (step == 1 || cfg.log_interval == 0 || step % cfg.log_interval == 0 ||
        step == cfg.steps) {
      res.log.emplace_back(step, total.report);
      if (log_file) log_file << total.report.csv_line(step) << "\n";
    }
    if (!out_dir.empty() && cfg.checkpoint_interval > 0 &&
        step % cfg.checkpoint_interval == 0 && step != cfg.steps) {
      save_checkpoint(snapshot(step),
                      (fs::path(out_dir) / ("gan_step_" + std::to_string(step) + ".ckpt"))
                          .string());
    }
  }

  res.victim_hash_after = hash_params(victim_named);
  res.gen = gen;
  res.dis = dis;
  res.checkpoint = snapshot(cfg.steps);
  if (!out_dir.empty())
    save_checkpoint(res.checkpoint, (fs::path(out_dir) / "gan.ckpt").string());
  return res;
}

// ---------------------------------------------------------------------------
// Generation from a trained checkpoint
// ---------------------------------------------------------------------------

struct GeneratedSample {
  ImageSample image;
  std::vector<float> victim_probs;  // over the n target classes, resized image
};

inline std::vector<GeneratedSample> generate(const Generator& gen, const Classifier& victim,
                                             const TrainConfig& cfg,
                                             const ImageSample& substrate,
                                             const TargetVector& t, std::size_t sample_count,
                                             Rng& rng) {
  if (t.t.size() != cfg.n) throw ShapeError("generate: target vector length mismatch");
  if (t.popcount() > 3) throw ShapeError("generate: at most 3 mixed categories");
  if (substrate.height() != cfg.substrate_size || substrate.width() != cfg.substrate_size)
    throw ShapeError("generate: substrate size mismatch");
  typename TapeT<float>::PauseGuard guard(tape<float>());
  std::vector<GeneratedSample> out;
  Tensor x = stack_images({&substrate});
  for (std::size_t i = 0; i < sample_count; ++i) {
    Tensor tiles = stack_tiles(t, cfg.tile_side(), 1, rng, cfg.tile_sigma);
    Tensor img = gen.forward(x, tiles);
    Tensor resized = resize_bilinear(img, cfg.classifier_input, cfg.classifier_input);
    Tensor probs = select_columns(victim.forward(resized), cfg.target_indices);
    GeneratedSample gs;
    gs.image.pixels = Tensor::create({3, cfg.substrate_size, cfg.substrate_size},
                                     std::vector<float>(img.value()));
    gs.victim_probs = probs.value();
    out.push_back(std::move(gs));
  }
  return out;
}

}  // namespace ginv
