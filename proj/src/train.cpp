#include "tarnet/train.hpp"

#include <algorithm>
#include <cmath>

#include "tarnet/io.hpp"
#include "tarnet/optimizer.hpp"

namespace tarnet {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be positive");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("train: alpha must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train: train_fraction must lie in (0, 1]");
  }
  if (alpha > 0.0) ipm.validate();
}

std::vector<std::vector<std::size_t>> stratified_batches(const DataView& data,
                                                         std::span<const std::size_t> rows,
                                                         std::size_t batch_size, Rng& rng) {
  if (rows.empty()) return {};
  if (batch_size < 1) throw ConfigError("batches: batch_size must be >= 1");
  std::vector<std::size_t> treated, control;
  for (std::size_t r : rows) (data.t(r) == 1 ? treated : control).push_back(r);
  std::shuffle(treated.begin(), treated.end(), rng);
  std::shuffle(control.begin(), control.end(), rng);
  const std::size_t n = rows.size();
  const std::size_t count = (n + batch_size - 1) / batch_size;
  std::vector<std::vector<std::size_t>> batches(count);
  auto deal = [&](const std::vector<std::size_t>& group) {
    const std::size_t m = group.size();
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t lo = b * m / count;
      const std::size_t hi = (b + 1) * m / count;
      batches[b].insert(batches[b].end(), group.begin() + lo, group.begin() + hi);
    }
  };
  deal(treated);
  deal(control);
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

namespace {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

Split split_rows(std::size_t n, double fraction, Rng& rng) {
  Split s;
  s.train = all_rows(n);
  if (fraction >= 1.0) return s;
  std::shuffle(s.train.begin(), s.train.end(), rng);
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  s.holdout.assign(s.train.begin() + static_cast<std::ptrdiff_t>(std::min(keep, n)), s.train.end());
  s.train.resize(std::min(keep, n));
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  return s;
}

double treated_fraction_of(const DataView& data, std::span<const std::size_t> rows) {
  std::size_t n1 = 0;
  for (std::size_t r : rows) n1 += (data.t(r) == 1);
  return static_cast<double>(n1) / static_cast<double>(rows.size());
}

}  // namespace

TrainResult train_source(const DataView& data, const NetworkSpec& spec, const TrainConfig& cfg) {
  spec.validate();
  return train_model(TarnetModel::initialize(spec, derive_seed(cfg.seed, {fnv1a("init")})), data,
                     cfg);
}

TrainResult train_model(TarnetModel model, const DataView& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.dim() != model.spec().input_dim) {
    throw DimensionError("train: data has " + std::to_string(data.dim()) +
                         " covariates, model takes " + std::to_string(model.spec().input_dim));
  }
  Rng split_rng(derive_seed(cfg.seed, {fnv1a("split")}));
  Split split = split_rows(data.size(), cfg.train_fraction, split_rng);
  const double v = treated_fraction_of(data, split.train);
  if (!(v > 0.0 && v < 1.0)) {
    throw DataError("train: training rows hold a single treatment group");
  }
  if (cfg.batch_size > split.train.size()) {
    throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) +
                      " exceeds the " + std::to_string(split.train.size()) + " training rows");
  }

  LossSettings settings;
  settings.alpha = cfg.alpha;
  settings.ipm = cfg.ipm;
  settings.weight_fraction = v;
  LossSettings holdout_settings;
  holdout_settings.weight_fraction = v;

  OptimizerState opt(model.params(), AdamOptions{cfg.learning_rate});
  Rng batch_rng(derive_seed(cfg.seed, {fnv1a("batches")}));
  TrainHistory history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = stratified_batches(data, split.train, cfg.batch_size, batch_rng);
    double factual = 0.0, total = 0.0, ipm_sum = 0.0;
    std::size_t ipm_batches = 0, skipped = 0;
    for (const auto& batch : batches) {
      LossValue loss = evaluate_loss(model, data, batch, settings);
      if (!std::isfinite(loss.total)) {
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch),
                               std::move(history));
      }
      try {
        adam_step(model.mutable_params(), loss.grads, opt);
      } catch (const NumericalError& e) {
        throw TrainingDiverged(std::string("train: ") + e.what() + " at epoch " +
                                   std::to_string(epoch),
                               std::move(history));
      }
      const double size = static_cast<double>(batch.size());
      factual += loss.factual * size;
      total += loss.total * size;
      if (loss.ipm_skipped) {
        ++skipped;
      } else if (cfg.alpha > 0.0) {
        ipm_sum += loss.ipm;
        ++ipm_batches;
      }
    }
    const double n = static_cast<double>(split.train.size());
    history.factual.push_back(factual / n);
    history.total.push_back(total / n);
    history.ipm.push_back(ipm_batches ? ipm_sum / static_cast<double>(ipm_batches) : 0.0);
    history.skipped_batches.push_back(skipped);
    if (!split.holdout.empty()) {
      history.holdout_factual.push_back(
          evaluate_loss(model, data, split.holdout, holdout_settings, false).factual);
    }
  }
  return TrainResult{std::move(model), std::move(history), std::move(split.train),
                     std::move(split.holdout)};
}

std::string history_to_csv(const TrainHistory& h) {
  const bool holdout = !h.holdout_factual.empty();
  std::string out = "epoch,factual,ipm,total,skipped_batches";
  if (holdout) out += ",holdout_factual";
  out += '\n';
  for (std::size_t e = 0; e < h.epochs(); ++e) {
    out += std::to_string(e) + ',' + format_double(h.factual[e]) + ',' + format_double(h.ipm[e]) +
           ',' + format_double(h.total[e]) + ',' + std::to_string(h.skipped_batches[e]);
    if (holdout) out += ',' + format_double(h.holdout_factual[e]);
    out += '\n';
  }
  return out;
}

}  // namespace tarnet
