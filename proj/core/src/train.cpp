#include "gdcaf/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gdcaf/errors.hpp"
#include "gdcaf/rng.hpp"

namespace gdcaf {
namespace train {

void TrainConfig::validate() const {
  if (max_epochs < 1 || batch_size < 1) throw ContractError("train config: epochs/batch >= 1");
  if (early_stop_patience < 1 || plateau_patience < 1) {
    throw ContractError("train config: patience values must be >= 1");
  }
  if (!(lr > 0.0)) throw ContractError("train config: lr must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw ContractError("train config: plateau factor must be in (0,1)");
  }
  if (!(value_scale > 0.0)) throw ContractError("train config: value scale must be positive");
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw ShapeError("mse_loss: " + pred.shape_str() + " vs " + target.shape_str());
  }
  return mse(pred, target);
}

Adam::Adam(ParameterStore& store, AdamConfig cfg) : cfg_(cfg) {
  for (auto& p : store) {
    slots_.push_back(Slot{p.get(), Tensor(p->value.shape()), Tensor(p->value.shape())});
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (Slot& s : slots_) {
    float* value = s.param->value.data();
    const float* grad = s.param->grad.data();
    float* m = s.m.data();
    float* v = s.v.data();
    for (std::size_t i = 0; i < s.param->value.size(); ++i) {
      const double g = grad[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      value[i] = static_cast<float>(value[i] - lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
    }
  }
}

PlateauController::PlateauController(double lr0, int plateau_patience, double factor,
                                     int stop_patience, double min_delta)
    : lr_(lr0),
      plateau_patience_(plateau_patience),
      factor_(factor),
      stop_patience_(stop_patience),
      min_delta_(min_delta) {}

PlateauController::Decision PlateauController::observe(int epoch, double val_loss) {
  Decision d;
  if (!seen_any_ || val_loss < best_val_ - min_delta_) {
    seen_any_ = true;
    best_val_ = val_loss;
    best_epoch_ = epoch;
    since_reduce_ = 0;
    d.improved = true;
  } else {
    ++since_reduce_;
    if (since_reduce_ >= plateau_patience_) {
      lr_ *= factor_;
      since_reduce_ = 0;
      d.reduced = true;
    }
    if (epoch - best_epoch_ >= stop_patience_) d.stop = true;
  }
  d.lr = lr_;
  d.best_epoch = best_epoch_;
  d.best_val = best_val_;
  return d;
}

namespace {

Tensor scaled(const Tensor& t, double s) {
  if (s == 1.0) return t;
  return scale(t, static_cast<float>(s));
}

std::string first_bad_parameter(const ParameterStore& store) {
  for (const auto& p : store) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (!std::isfinite(p->value[i]) || !std::isfinite(p->grad[i])) return p->name;
    }
  }
  return {};
}

double validation_loss(const GdCaf& model, const PrecipDataset& ds, std::span<const int> starts,
                       const WindowTask& task, double value_scale) {
  double total = 0.0;
  std::uint64_t n = 0;
  for (int start : starts) {
    GraphSample sample = make_sample(ds, start, task);
    Tensor pred = model.predict(scaled(sample.x, value_scale));
    const Tensor target = scaled(sample.y, value_scale);
    total += mse(pred, target) * static_cast<double>(target.size());
    n += target.size();
  }
  return total / static_cast<double>(n);
}

}  // namespace

FitResult fit(GdCaf& model, const PrecipDataset& ds, std::span<const int> train_starts,
              std::span<const int> val_starts, const WindowTask& task, const TrainConfig& cfg,
              const EpochObserver& observer) {
  cfg.validate();
  if (train_starts.empty() || val_starts.empty()) {
    throw ContractError("fit: train and validation window lists must be nonempty");
  }

  Adam optimizer(model.params());
  PlateauController controller(cfg.lr, cfg.plateau_patience, cfg.plateau_factor,
                               cfg.early_stop_patience, cfg.min_delta);
  Rng shuffler(cfg.seed);

  FitResult result;
  std::vector<Tensor> best_values;
  std::vector<int> order(train_starts.begin(), train_starts.end());
  double lr = cfg.lr;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double epoch_lr = lr;
    shuffler.shuffle(order);

    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      std::vector<Var> losses;
      for (std::size_t j = pos; j < end; ++j) {
        GraphSample sample = make_sample(ds, order[j], task);
        Var pred = model.forward(tape, scaled(sample.x, cfg.value_scale));
        const Tensor target = scaled(sample.y, cfg.value_scale);
        losses.push_back(tape.mse_against(pred, target));
      }
      Var batch_loss = tape.scale(tape.add_n(losses), 1.0f / static_cast<float>(losses.size()));
      const double loss_value = tape.value(batch_loss)[0];
      if (!std::isfinite(loss_value)) {
        const std::string bad = first_bad_parameter(model.params());
        throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(pos / cfg.batch_size) +
                           (bad.empty() ? "" : " (first non-finite parameter: " + bad + ")"));
      }
      model.params().zero_grads();
      tape.backward(batch_loss);
      optimizer.step(epoch_lr);
      loss_sum += loss_value * static_cast<double>(end - pos);
      loss_n += end - pos;
    }
    const double train_mse = loss_sum / static_cast<double>(loss_n);
    const double val_mse = validation_loss(model, ds, val_starts, task, cfg.value_scale);
    if (!std::isfinite(val_mse)) {
      const std::string bad = first_bad_parameter(model.params());
      throw NumericError("fit: non-finite validation loss at epoch " + std::to_string(epoch) +
                         (bad.empty() ? "" : " (first non-finite parameter: " + bad + ")"));
    }

    const auto decision = controller.observe(epoch, val_mse);
    if (decision.improved) {
      best_values.clear();
      for (const auto& p : model.params()) best_values.push_back(p->value);
      result.best_epoch = epoch;
      result.best_val = val_mse;
    }
    lr = decision.lr;

    EpochRecord record;
    record.epoch = epoch;
    record.train_mse = train_mse;
    record.val_mse = val_mse;
    record.lr = epoch_lr;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(record);

    bool keep_going = true;
    if (observer) keep_going = observer(record);
    if (decision.stop) {
      result.early_stopped = true;
      break;
    }
    if (!keep_going) break;
  }

  if (!best_values.empty()) {
    std::size_t i = 0;
    for (auto& p : model.params()) p->value = best_values[i++];
  }
  return result;
}

FitResult fit(GdCaf& model, const PrecipDataset& train_ds, const PrecipDataset& val_ds,
              const WindowTask& task, const TrainConfig& cfg, const EpochObserver& observer) {
  // Stitch the two timelines into one container so window indices stay local.
  if (train_ds.nodes != val_ds.nodes || train_ds.height != val_ds.height ||
      train_ds.width != val_ds.width) {
    throw ContractError("fit: train and validation datasets disagree on shape");
  }
  const std::vector<int> train_starts = all_window_starts(train_ds, task);
  const std::vector<int> val_starts_local = all_window_starts(val_ds, task);
  if (train_starts.empty() || val_starts_local.empty()) {
    throw ContractError("fit: a split is too short for the task window");
  }
  PrecipDataset joined = train_ds;
  const int offset = train_ds.frame_count();
  joined.frames.insert(joined.frames.end(), val_ds.frames.begin(), val_ds.frames.end());
  std::vector<int> val_starts;
  val_starts.reserve(val_starts_local.size());
  for (int s : val_starts_local) val_starts.push_back(s + offset);
  return fit(model, joined, train_starts, val_starts, task, cfg, observer);
}

void write_log_csv(const std::vector<EpochRecord>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log: " + path.string());
  out << "epoch,train_mse,val_mse,lr,seconds\n";
  char buf[160];
  for (const EpochRecord& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.3f\n", r.epoch, r.train_mse, r.val_mse,
                  r.lr, r.seconds);
    out << buf;
  }
}

}  // namespace train
}  // namespace gdcaf
