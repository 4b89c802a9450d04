// SPDX-License-Identifier: Apache-2.0
#include "tsiars/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "tsiars/checkpoint.hpp"
#include "tsiars/error.hpp"
#include "tsiars/numerics/ops.hpp"
#include "tsiars/numerics/parallel.hpp"

namespace tsiars::trainer {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

namespace {

// Resolution draws must not disturb the data stream shared by both modes.
constexpr std::uint64_t kSchedulerStream = 0x9e3779b97f4a7c15ULL;

template <typename T>
Tensor<T> to_precision(const Tensor<double>& values) {
  if constexpr (std::is_same_v<T, double>) {
    return values;
  } else {
    return values.template cast<T>();
  }
}

}  // namespace

Mode parse_mode(std::string_view text) {
  if (text == "hier") return Mode::kHier;
  if (text == "iars") return Mode::kIars;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected hier or iars)");
}

Precision parse_precision(std::string_view text) {
  if (text == "f32") return Precision::kF32;
  if (text == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + std::string(text) + "' (expected f32 or f64)");
}

std::string to_string(Mode mode) { return mode == Mode::kHier ? "hier" : "iars"; }
std::string to_string(Precision precision) { return precision == Precision::kF32 ? "f32" : "f64"; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (min_overlap_pow < 0) throw ConfigError("min_overlap_pow must be non-negative");
  if (!(mask_prob >= 0.0 && mask_prob < 1.0)) throw ConfigError("mask_prob must lie in [0, 1)");
  loss.validate();
  encoder.validate();
}

double RunReport::mean_epoch_seconds() const {
  if (epochs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : epochs) total += e.seconds;
  return total / static_cast<double>(epochs.size());
}

std::size_t max_slot(std::size_t series_length, bool include_unpooled) {
  if (series_length <= 1) return 0;
  return selection::canonical_index(include_unpooled ? series_length : numerics::pooled_length(series_length));
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               double learning_rate) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  for (const auto& g : grads) {
    if (!g.all_finite()) throw NumericalError("adam_step: non-finite gradient");
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = kAdamBeta1 * static_cast<double>(m[j]) + (1.0 - kAdamBeta1) * gj;
      const double vj = kAdamBeta2 * static_cast<double>(v[j]) + (1.0 - kAdamBeta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = learning_rate * (mj / correction1) / (std::sqrt(vj / correction2) + kAdamEpsilon);
      p[j] = static_cast<T>(static_cast<double>(p[j]) - update);
    }
  }
}

template <typename T>
Trainer<T>::Trainer(const TrainConfig& config, std::size_t input_dim, std::size_t series_length)
    : config_(config),
      series_length_(series_length),
      data_rng_(config.seed),
      scheduler_(max_slot(series_length, config.loss.include_unpooled), config.selection,
                 config.seed ^ kSchedulerStream) {
  config_.encoder.input_dim = input_dim;
  config_.validate();
  const std::size_t min_overlap = std::size_t{1} << (config_.min_overlap_pow + 1);
  if (series_length < min_overlap) {
    throw DataError("series length " + std::to_string(series_length) + " is shorter than the minimum overlap " +
                    std::to_string(min_overlap));
  }
  params_ = encoder::init_encoder<T>(config_.encoder);
}

template <typename T>
typename Trainer<T>::BatchOutcome Trainer<T>::run_batch(const Tensor<T>& values, std::optional<std::size_t> selected) {
  BatchOutcome out;
  const auto plan = augment::sample_crop(series_length_, config_.min_overlap_pow, data_rng_);
  auto [view_a, view_b] = augment::apply_crop(values, plan);

  Tape<T> tape;
  const encoder::BoundParams bound = encoder::bind(tape, params_, true);
  const encoder::MaskSettings mask{config_.mask_prob, &data_rng_};
  const Var xa = tape.leaf(std::move(view_a), false);
  const Var xb = tape.leaf(std::move(view_b), false);
  const Var fa = encoder::encode(tape, xa, bound, config_.encoder, mask, true);
  const Var fb = encoder::encode(tape, xb, bound, config_.encoder, mask, true);
  const auto [fo, fo_prime] = encoder::slice_overlap(tape, fa, fb, plan);

  const double alpha = config_.loss.alpha;
  for (std::size_t len : contrast::pyramid_lengths(plan.overlap_length(), config_.loss.include_unpooled)) {
    out.present.push_back(selection::canonical_index(len));
  }

  Var objective;
  if (!selected) {
    const auto levels = contrast::build_pyramid(tape, fo, fo_prime, config_.loss);
    for (const auto& level : levels) {
      const Var head = contrast::combined_loss(tape, level.f_o, level.f_o_prime, alpha);
      out.slot_losses[level.canonical_index] = static_cast<double>(tape.value(head).item());
      objective = objective.valid() ? numerics::add(tape, objective, head) : head;
    }
  } else {
    // Levels are present from slot 0 up to the finest one; a missing slot
    // falls back to the nearest coarser one.
    const std::size_t finest = *std::max_element(out.present.begin(), out.present.end());
    const std::size_t use = std::min(*selected, finest);
    out.fallback = use != *selected;
    const auto tracked = contrast::build_pyramid(tape, fo, fo_prime, config_.loss, use);
    objective = selection::selected_loss(tape, tracked, use, alpha);
    out.slot_losses[use] = static_cast<double>(tape.value(objective).item());
    if (config_.selection.observe == selection::ObserveMode::kAll) {
      auto levels = contrast::build_pyramid(tape.value(fo), tape.value(fo_prime), config_.loss);
      for (auto& level : levels) {
        if (level.canonical_index == use) continue;
        const double lt = contrast::temporal_loss(level.f_o, level.f_o_prime);
        const double li = contrast::instance_loss(level.f_o, level.f_o_prime);
        out.slot_losses[level.canonical_index] = contrast::combined_loss(lt, li, alpha);
      }
    }
  }

  out.objective = static_cast<double>(tape.value(objective).item());
  if (!std::isfinite(out.objective)) {
    throw NumericalError("non-finite training objective at epoch " + std::to_string(epoch_) + " (overlap length " +
                         std::to_string(plan.overlap_length()) + ")");
  }
  out.tracked_heads = tape.count_tracked(contrast::kLossHeadTag);
  tape.backward(objective);

  std::vector<Tensor<T>> grads;
  grads.reserve(bound.vars.size());
  for (std::size_t i = 0; i < bound.vars.size(); ++i) {
    const Tensor<T>* g = tape.grad(bound.vars[i]);
    grads.push_back(g ? *g : Tensor<T>(params_.tensors[i].shape()));
  }
  adam_step(params_.tensors, grads, adam_, config_.learning_rate);
  return out;
}

template <typename T>
EpochRecord Trainer<T>::run_epoch(const dataio::TimeSeriesDataset& data, std::optional<std::size_t> selected) {
  if (data.size() == 0) throw DataError("cannot train on an empty dataset");
  if (data.dims() != config_.encoder.input_dim || data.length() != series_length_) {
    throw DataError("dataset shape does not match the trainer's configuration");
  }
  numerics::set_num_threads(config_.threads);
  EpochRecord record;
  record.epoch = epoch_;
  record.selected = selected;
  const auto start = std::chrono::steady_clock::now();

  std::map<std::size_t, double> sums;
  std::map<std::size_t, std::size_t> counts;
  double objective_total = 0.0;
  const auto groups = dataio::batch_indices(data.size(), config_.batch_size, data_rng_, true);
  for (std::size_t b = 0; b < groups.size(); ++b) {
    const Tensor<T> values = to_precision<T>(data.gather(groups[b]));
    BatchOutcome outcome = run_batch(values, selected);
    if (b == 0) record.first_batch_losses = outcome.slot_losses;
    for (const auto& [k, loss] : outcome.slot_losses) {
      sums[k] += loss;
      ++counts[k];
    }
    for (std::size_t k : outcome.present) {
      if (std::find(record.present_slots.begin(), record.present_slots.end(), k) == record.present_slots.end()) {
        record.present_slots.push_back(k);
      }
    }
    objective_total += outcome.objective;
    record.tracked_loss_heads += outcome.tracked_heads;
    ++record.backward_passes;
    if (outcome.fallback) ++record.fallback_batches;
  }
  record.batches = groups.size();
  record.objective = objective_total / static_cast<double>(groups.size());
  for (const auto& [k, total] : sums) record.slot_losses[k] = total / static_cast<double>(counts[k]);
  std::sort(record.present_slots.begin(), record.present_slots.end());

  if (selected) {
    record.distribution = scheduler_.finish_epoch(record.slot_losses, record.present_slots, epoch_, *selected);
  }
  record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++epoch_;
  return record;
}

template <typename T>
EpochRecord Trainer<T>::train_epoch_hier(const dataio::TimeSeriesDataset& data) {
  return run_epoch(data, std::nullopt);
}

template <typename T>
EpochRecord Trainer<T>::train_epoch_iars(const dataio::TimeSeriesDataset& data) {
  const std::size_t chosen = scheduler_.choose(epoch_);
  return run_epoch(data, chosen);
}

template <typename T>
EpochRecord Trainer<T>::train_epoch(const dataio::TimeSeriesDataset& data) {
  return config_.mode == Mode::kHier ? train_epoch_hier(data) : train_epoch_iars(data);
}

template <typename T>
FitResult<T> fit(const dataio::TimeSeriesDataset& dataset, const TrainConfig& config,
                 const std::optional<std::filesystem::path>& checkpoint_dir) {
  config.validate();
  if (dataset.size() == 0) throw DataError("cannot train on an empty dataset");
  Trainer<T> trainer(config, dataset.dims(), dataset.length());
  RunReport report;
  report.config = trainer.config();
  report.dataset = dataset.name;
  report.instances = dataset.size();
  report.dims = dataset.dims();
  report.length = dataset.length();
  report.environment.threads = config.threads;
  report.environment.precision = sizeof(T) == 4 ? "f32" : "f64";
#ifdef __VERSION__
  report.environment.compiler = __VERSION__;
#endif
  report.environment.hardware_concurrency = std::thread::hardware_concurrency();
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochRecord rec = trainer.train_epoch(dataset);
    report.training_seconds += rec.seconds;
    report.backward_passes += rec.backward_passes;
    report.tracked_loss_heads += rec.tracked_loss_heads;
    report.epochs.push_back(std::move(rec));
  }
  FitResult<T> result{trainer.params(), std::nullopt, std::move(report)};
  if (config.mode == Mode::kIars) result.ledger = trainer.scheduler().ledger();
  if (checkpoint_dir) checkpoint::save(*checkpoint_dir, result.params);
  return result;
}

template void adam_step(std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&, AdamState<float>&, double);
template void adam_step(std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&, AdamState<double>&,
                        double);
template class Trainer<float>;
template class Trainer<double>;
template FitResult<float> fit(const dataio::TimeSeriesDataset&, const TrainConfig&,
                              const std::optional<std::filesystem::path>&);
template FitResult<double> fit(const dataio::TimeSeriesDataset&, const TrainConfig&,
                               const std::optional<std::filesystem::path>&);

}  // namespace tsiars::trainer
