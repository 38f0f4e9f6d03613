#include "seg2hoi/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>

#include <json.hpp>

#include "seg2hoi/digest.hpp"

namespace seg2hoi {

HoiDataset load_dataset(const DataConfig& data) {
  if (data.source == "synth") return synth_dataset(data.synth_seed, data.synth_images);
  return load_annotations(data.source, dataset_format_from_string(data.format));
}

std::optional<ZeroShotSplit> zero_shot_split_for(const TrainConfig& cfg, const HoiDataset& train) {
  if (cfg.data.zero_shot.empty() || cfg.data.zero_shot == "none") return std::nullopt;
  return zero_shot_split(train.categories, train.hoi_instance_counts(), zero_shot_type_from_string(cfg.data.zero_shot),
                         cfg.data.unseen_objects, cfg.data.unseen_count);
}

HoiDataset load_training_dataset(const TrainConfig& cfg) {
  HoiDataset d = load_dataset(cfg.data);
  if (const auto split = zero_shot_split_for(cfg, d)) d = filter_unseen(d, *split);
  return d;
}

HoiDataset load_test_dataset(const TrainConfig& cfg) {
  DataConfig test = cfg.data;
  if (test.source == "synth" && (cfg.eval.source.empty() || cfg.eval.source == "synth")) {
    test.synth_seed = cfg.eval.synth_seed;
    return load_dataset(test);
  }
  if (!cfg.eval.source.empty()) test.source = cfg.eval.source;
  return load_dataset(test);
}

std::string test_image_root(const TrainConfig& cfg) { return cfg.eval.root.empty() ? cfg.data.root : cfg.eval.root; }

std::unique_ptr<ToyFoundation> make_foundation(const TrainConfig& cfg) {
  return std::make_unique<ToyFoundation>(cfg.foundation);
}

ToyEmbedder make_embedder(const TrainConfig& cfg, const HoiCategories& cats) {
  return ToyEmbedder(cfg.foundation.hidden, cfg.embedder_seed, template_vocabulary(cats.objects, cats.verbs));
}

HoiDecoder make_decoder(const TrainConfig& cfg, const HoiCategories& cats) {
  DecoderConfig d = cfg.decoder;
  d.hidden = cfg.foundation.hidden;
  d.num_objects = static_cast<int>(cats.objects.size());
  d.num_verbs = static_cast<int>(cats.verbs.size());
  if (d.classifier == ClassifierMode::Text) {
    const ToyEmbedder embedder = make_embedder(cfg, cats);
    return HoiDecoder(d, build_text_bank(cats.objects, cats.verbs, embedder).embeddings());
  }
  return HoiDecoder(d);
}

std::vector<TrainingSample> prepare_samples(const HoiDataset& d, const FoundationModel& model,
                                            const TrainConfig& cfg) {
  namespace fs = std::filesystem;
  const std::string& dir = cfg.data.cache_dir;
  const std::string fhash = dir.empty() ? std::string() : model.parameter_hash();
  if (!dir.empty()) fs::create_directories(dir);
  std::vector<TrainingSample> out;
  out.reserve(d.images.size());
  for (size_t i = 0; i < d.images.size(); ++i) {
    const ImageRecord& rec = d.images[i];
    TrainingSample s;
    s.image_index = static_cast<int>(i);
    if (dir.empty()) {
      s.foundation = model.extract(load_image(rec, cfg.data.root));
    } else {
      const std::string key = fhash + "|" + cfg.data.source + "|" + std::to_string(cfg.data.synth_seed) + "|" +
                              std::to_string(i) + "|" + rec.file_name;
      const std::string path =
          (fs::path(dir) / (sha256_hex({reinterpret_cast<const std::uint8_t*>(key.data()), key.size()}).substr(0, 24) +
                            ".s2hf"))
              .string();
      if (!fs::exists(path)) write_foundation_cache(path, model.extract(load_image(rec, cfg.data.root)));
      // always read back so a cold and a warm cache train on the same float32 values
      s.foundation = read_foundation_cache(path);
    }
    s.gts = ground_truth_pairs(rec, d.categories);
    for (auto& g : s.gts) g.pseudo = generate_pseudo_label(s.foundation, g.human_box, g.object_box, cfg.pseudo);
    out.push_back(std::move(s));
  }
  return out;
}

Trainer::Trainer(TrainConfig cfg, HoiCategories cats)
    : cfg_(std::move(cfg)),
      cats_(std::move(cats)),
      decoder_(make_decoder(cfg_, cats_)),
      optimizer_(decoder_.params(), nn::AdamWOptions{0.9, 0.999, 1e-8, cfg_.train.weight_decay}),
      rng_(cfg_.train.seed * 0x9E3779B97F4A7C15ull + 3) {
  cfg_.validate();
}

namespace {

bool all_finite(const std::vector<Matrix>& grads) {
  for (const auto& g : grads) {
    if (!g.allFinite()) return false;
  }
  return true;
}

nlohmann::json breakdown_json(const LossBreakdown& b) {
  return {{"verb", b.verb},         {"class", b.cls},           {"box", b.box},
          {"giou", b.giou},         {"union_ce", b.union_ce},   {"union_dice", b.union_dice},
          {"inter_ce", b.inter_ce}, {"inter_dice", b.inter_dice}, {"total", b.total}};
}

bool heads_finite(const std::vector<HeadVars>& layers) {
  for (const auto& l : layers) {
    for (const ag::Var* v : {&l.verb_logits, &l.class_logits, &l.boxes, &l.union_logits, &l.inter_logits}) {
      if (!v->value().allFinite()) return false;
    }
  }
  return true;
}

}  // namespace

LossBreakdown Trainer::step(const std::vector<const TrainingSample*>& batch, double lr, int epoch) {
  if (batch.empty()) throw std::invalid_argument("Trainer::step: empty batch");
  ag::Tape tape;
  nn::Binder bind(tape, decoder_.params());
  LossScale scale;
  double num_gt = 0.0;
  for (const auto* s : batch) num_gt += static_cast<double>(s->gts.size());
  scale.num_gt = std::max(1.0, num_gt);
  scale.batch_size = static_cast<double>(batch.size());

  LossBreakdown parts;
  std::vector<ag::Var> losses;
  bool finite = true;
  for (const auto* s : batch) {
    const QueryAlignment a = decoder_.align(s->foundation);
    const auto layers = decoder_.forward(bind, s->foundation, a);
    if (!heads_finite(layers)) {
      finite = false;
      break;
    }
    LossResult r = compute_loss(layers, a, own_boxes(s->foundation, a), s->gts, cfg_.cost, cfg_.loss, scale, rng_);
    parts += r.parts;
    losses.push_back(r.total);
  }
  ag::Var total = finite ? losses.front() : ag::Var{};
  for (size_t i = 1; finite && i < losses.size(); ++i) total = ag::add(total, losses[i]);

  finite = finite && std::isfinite(total.scalar());
  std::vector<Matrix> grads;
  if (finite) {
    tape.backward(total);
    grads = bind.gradients();
    finite = all_finite(grads);
  }
  if (!finite) {
    const std::string base = cfg_.train.checkpoint.empty() ? std::string("seg2hoi.ckpt") : cfg_.train.checkpoint;
    nlohmann::json diag = {{"step", steps()}, {"epoch", epoch}, {"lr", lr}, {"loss", breakdown_json(parts)}};
    nlohmann::json images = nlohmann::json::array();
    for (const auto* s : batch) images.push_back(s->image_index);
    diag["images"] = images;
    try {
      save_checkpoint(base + ".diverged", checkpoint(""));
      std::ofstream(base + ".diverged.json") << diag.dump(2) << "\n";
    } catch (const std::exception&) {
      // snapshot is best effort
    }
    throw TrainingDiverged("non-finite loss or gradient at step " + std::to_string(steps()) + ": " +
                           diag.dump());
  }
  optimizer_.step(decoder_.params(), grads, lr);
  step_losses_.push_back(total.scalar());
  parts.total = total.scalar();
  return parts;
}

std::vector<EpochMetrics> Trainer::fit(const std::vector<TrainingSample>& samples,
                                       const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> history;
  if (samples.empty()) return history;
  std::mt19937_64 shuffle_rng(cfg_.train.seed * 0xD1B54A32D192ED03ull + 1);
  std::ofstream log;
  std::mutex log_mutex;
  if (!cfg_.train.log_path.empty()) {
    log.open(cfg_.train.log_path, std::ios::app);
    if (!log) throw std::runtime_error("cannot open metrics log " + cfg_.train.log_path);
  }
  std::vector<size_t> order(samples.size());
  const size_t bs = static_cast<size_t>(cfg_.train.batch_size);
  for (int epoch = 0; epoch < cfg_.train.epochs; ++epoch) {
    if (cfg_.train.max_steps > 0 && steps() >= cfg_.train.max_steps) break;
    const auto t0 = std::chrono::steady_clock::now();
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = cfg_.train.lr_at(epoch);
    for (size_t start = 0; start < order.size(); start += bs) {
      if (cfg_.train.max_steps > 0 && steps() >= cfg_.train.max_steps) break;
      std::vector<const TrainingSample*> batch;
      for (size_t k = start; k < std::min(order.size(), start + bs); ++k) batch.push_back(&samples[order[k]]);
      m.mean += step(batch, m.lr, epoch);
      ++m.batches;
    }
    if (m.batches > 0) {
      const double inv = 1.0 / m.batches;
      for (double* v : {&m.mean.verb, &m.mean.cls, &m.mean.box, &m.mean.giou, &m.mean.union_ce, &m.mean.union_dice,
                        &m.mean.inter_ce, &m.mean.inter_dice, &m.mean.total}) {
        *v *= inv;
      }
    }
    m.step = steps();
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log.is_open()) {
      std::lock_guard<std::mutex> lock(log_mutex);
      log << epoch_metrics_json(m) << "\n";
      log.flush();
    }
    if (on_epoch) on_epoch(m);
    history.push_back(m);
  }
  return history;
}

Checkpoint Trainer::checkpoint(const std::string& foundation_hash) const {
  Checkpoint c;
  c.config = cfg_;
  c.categories = cats_;
  c.foundation_hash = foundation_hash;
  c.step = steps();
  c.params = decoder_.params();
  return c;
}

std::string epoch_metrics_json(const EpochMetrics& m) {
  nlohmann::json j = {{"epoch", m.epoch}, {"step", m.step}, {"lr", m.lr}, {"batches", m.batches},
                      {"seconds", m.seconds}, {"loss", breakdown_json(m.mean)}};
  return j.dump();
}

}  // namespace seg2hoi
