#include "fino/trainer.hpp"

#include <numeric>

#include <json.hpp>

#include "fino/image_io.hpp"
#include "fino/losses.hpp"
#include "fino/ops.hpp"

namespace fino::train {

namespace {

Checkpoint snapshot(const ParamStore& params, const AdamW& opt, std::uint64_t step, const TrainConfig& cfg,
                    std::size_t height, std::size_t width) {
  Checkpoint c;
  c.params = params.clone();
  c.moments = opt.moments();
  c.step = step;
  c.config_hash = cfg.hash();
  c.model = cfg.model;
  c.input_height = height;
  c.input_width = width;
  return c;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(data::uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

bool augments(const data::AugmentPolicy& p) {
  return p.hflip_prob > 0.0 || p.vflip_prob > 0.0 || p.rot90_prob > 0.0 || p.crop > 0 || p.brightness > 0.0;
}

}  // namespace

std::string StepLog::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["lr"] = lr;
  j["l_cd"] = l_cd;
  j["l_sal"] = l_sal;
  j["l_gcl"] = l_gcl;
  j["l_rcl"] = l_rcl;
  j["total"] = total;
  return j.dump();
}

std::uint64_t total_steps(const TrainConfig& config, std::size_t dataset_size) {
  const std::uint64_t per_epoch = (dataset_size + config.batch_size - 1) / config.batch_size;
  return config.epochs * per_epoch;
}

TrainResult train(const TrainConfig& config, std::span<const data::BitemporalPair> dataset,
                  const StepCallback& on_step) {
  config.validate();
  if (dataset.empty()) throw PreconditionError("train: dataset is empty");
  const std::size_t height = dataset[0].height(), width = dataset[0].width();
  for (const auto& p : dataset) {
    p.validate(true);
    if (p.height() != height || p.width() != width) {
      throw PreconditionError("train: pair " + p.id + " differs in size from " + dataset[0].id);
    }
  }
  if (config.augment.crop > 0 && (config.augment.crop > height || config.augment.crop > width)) {
    throw PreconditionError("train: aug_crop exceeds the image size");
  }

  ParamStore params;
  model::init_params(params, config.model, config.seed);
  AdamW opt({config.weight_decay, config.beta1, config.beta2, config.adam_eps});
  const losses::LossWeights weights{config.lambda};

  const std::uint64_t total = total_steps(config, dataset.size());
  const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");
  const std::uint64_t augment_seed = derive_seed(config.seed, "augment");
  const bool do_augment = augments(config.augment);

  TrainResult result;
  Checkpoint last_good = snapshot(params, opt, 0, config, height, width);
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled(dataset.size(), derive_seed(shuffle_seed, epoch));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<data::BitemporalPair> items;
      items.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& pair = dataset[order[k]];
        if (do_augment) {
          std::mt19937_64 rng(derive_seed(derive_seed(augment_seed, pair.id), epoch));
          items.push_back(data::augment(pair, config.augment, rng));
        } else {
          items.push_back(pair);
        }
      }
      std::vector<std::size_t> idx(items.size());
      std::iota(idx.begin(), idx.end(), 0);
      const auto batch = data::make_batch(items, idx);

      StepLog entry;
      entry.step = step;
      entry.lr = poly_lr(step, total, config.lr, config.poly_power);
      try {
        params.zero_grad();
        const auto fwd = model::forward(batch.image_a, batch.image_b, params, config.model);
        const auto terms = model::component_losses(fwd, batch.mask, config.lambda, config.model);
        const auto loss = losses::total_loss(terms.l_cd, terms.l_sal, terms.l_gcl, terms.l_rcl, weights);
        loss.total.backward();
        entry.l_cd = loss.l_cd;
        entry.l_sal = loss.l_sal;
        entry.l_gcl = loss.l_gcl;
        entry.l_rcl = loss.l_rcl;
        entry.total = loss.value;
      } catch (const NumericError& e) {
        throw TrainingDiverged("train: diverged at step " + std::to_string(step) + ": " + e.what(),
                               std::move(last_good), std::move(result.log));
      }
      last_good = snapshot(params, opt, step, config, height, width);
      opt.step(params, entry.lr);
      result.log.push_back(entry);
      if (on_step) on_step(entry);
      ++step;
    }
  }

  result.checkpoint = snapshot(params, opt, step, config, height, width);
  result.skipped_steps = opt.skipped();
  return result;
}

Tensor predict(const Checkpoint& ckpt, const Tensor& image_a, const Tensor& image_b) {
  const auto frozen = ckpt.params.frozen();
  return model::forward(image_a, image_b, frozen, ckpt.model).output.prob;
}

metrics::MetricsReport evaluate(const Checkpoint& ckpt, std::span<const data::BitemporalPair> dataset,
                                double threshold, const std::optional<std::filesystem::path>& dump_dir) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw PreconditionError("evaluate: threshold must lie in (0,1)");
  const auto frozen = ckpt.params.frozen();
  if (dump_dir) std::filesystem::create_directories(*dump_dir);
  metrics::Confusion counts;
  for (const auto& pair : dataset) {
    pair.validate(true);
    if (pair.height() != ckpt.input_height || pair.width() != ckpt.input_width) {
      throw PreconditionError("evaluate: pair " + pair.id + " is " + std::to_string(pair.height()) + "x" +
                              std::to_string(pair.width()) + " but the model was trained on " +
                              std::to_string(ckpt.input_height) + "x" + std::to_string(ckpt.input_width));
    }
    const std::size_t h = pair.height(), w = pair.width();
    const auto a = ops::reshape(pair.image_a, {1, 3, h, w});
    const auto b = ops::reshape(pair.image_b, {1, 3, h, w});
    const auto prob = model::forward(a, b, frozen, ckpt.model).output.prob;
    const auto pred = ops::reshape(head::decide(prob, threshold), {1, h, w});
    counts += metrics::confusion(pred, pair.mask);
    if (dump_dir) {
      io::Image8 img;
      img.width = w;
      img.height = h;
      img.channels = 1;
      img.pixels.reserve(h * w);
      for (double v : pred.values()) img.pixels.push_back(v > 0.5 ? 255 : 0);
      io::write_png(*dump_dir / (pair.id + ".png"), img);
    }
  }
  return metrics::metrics(counts);
}

}  // namespace fino::train
