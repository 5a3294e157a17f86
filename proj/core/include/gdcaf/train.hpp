#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "gdcaf/autodiff.hpp"
#include "gdcaf/data.hpp"
#include "gdcaf/model.hpp"

namespace gdcaf {
namespace train {

struct TrainConfig {
  int max_epochs = 150;
  int early_stop_patience = 15;
  int plateau_patience = 4;
  int batch_size = 4;
  double lr = 1e-3;
  double plateau_factor = 0.1;
  // "Improvement" means val < best - min_delta, for scheduler and stopper alike.
  double min_delta = 1e-8;
  std::uint64_t seed = 0;
  // Inputs and targets are multiplied by this before entering the model;
  // useful when native units are far from unit scale.
  double value_scale = 1.0;

  void validate() const;
};

// Mean over all elements of squared differences.
double mse_loss(const Tensor& pred, const Tensor& target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam over every parameter in a store. Moment slots
// follow registration order and shapes.
class Adam {
 public:
  explicit Adam(ParameterStore& store, AdamConfig cfg = {});
  void step(double lr);
  long step_count() const { return steps_; }

 private:
  struct Slot {
    Parameter* param;
    Tensor m;
    Tensor v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  long steps_ = 0;
};

// Validation-loss bookkeeping shared by the LR schedule and the early stop:
// the LR is multiplied by `factor` after `plateau_patience` consecutive
// non-improving epochs (counted from the last improvement or reduction), and
// training stops at the first epoch where epoch - best_epoch == stop_patience.
class PlateauController {
 public:
  PlateauController(double lr0, int plateau_patience, double factor, int stop_patience,
                    double min_delta);

  struct Decision {
    double lr;
    bool improved = false;
    bool reduced = false;
    bool stop = false;
    int best_epoch = 0;
    double best_val = 0.0;
  };
  Decision observe(int epoch, double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_;
  int plateau_patience_;
  double factor_;
  int stop_patience_;
  double min_delta_;
  int best_epoch_ = 0;
  double best_val_ = 0.0;
  bool seen_any_ = false;
  int since_reduce_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_val = 0.0;
  bool early_stopped = false;
};

// Return false to stop after the current epoch.
using EpochObserver = std::function<bool(const EpochRecord&)>;

// Full training protocol: seeded per-epoch shuffles, minibatch Adam steps with
// gradients averaged over the batch, a full validation pass per epoch, plateau
// LR reductions, early stopping, and restoration of the best-validation
// parameters into the model before returning. Throws NumericError naming the
// offending batch/parameter when a loss goes non-finite.
FitResult fit(GdCaf& model, const PrecipDataset& ds, std::span<const int> train_starts,
              std::span<const int> val_starts, const WindowTask& task, const TrainConfig& cfg,
              const EpochObserver& observer = {});

// Two-dataset convenience: all windows of each split.
FitResult fit(GdCaf& model, const PrecipDataset& train_ds, const PrecipDataset& val_ds,
              const WindowTask& task, const TrainConfig& cfg, const EpochObserver& observer = {});

void write_log_csv(const std::vector<EpochRecord>& log, const std::filesystem::path& path);

}  // namespace train
}  // namespace gdcaf
