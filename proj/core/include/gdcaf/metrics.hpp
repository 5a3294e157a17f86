#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gdcaf/data.hpp"
#include "gdcaf/tensor.hpp"

namespace gdcaf {
namespace metrics {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other) {
    tp += other.tp;
    fp += other.fp;
    tn += other.tn;
    fn += other.fn;
    return *this;
  }
};

struct SkillReport {
  double mse = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double csi = 0.0;
  double far = 0.0;
  double hss = 0.0;
  // Set when any score's denominator was zero (that score reports 0).
  bool degenerate = false;
};

// Rain mask at the given threshold; a pixel exactly at the threshold counts
// as rain. `native_units_per_mm` converts the mm/h threshold into the data's
// units (1e-3 for meters per hour).
std::vector<std::uint8_t> binarize(const Tensor& maps, double threshold_mm_per_h = 0.5,
                                   double native_units_per_mm = 1e-3);

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target);

// All scores from pooled counts plus a precomputed MSE. Degenerate divisions
// yield 0 and set the flag instead of producing NaN.
SkillReport skill(const ConfusionCounts& counts, double mse);

// The last observed frame per node, unchanged: x[:, T-1].
Tensor persistence_predict(const Tensor& x);

struct EvalOptions {
  int restrict_node = -1;  // evaluate only this node's maps when >= 0
  double threshold_mm_per_h = 0.5;
  double native_units_per_mm = 1e-3;
};

using Predictor = std::function<Tensor(const GraphSample&)>;  // -> [g,H,W] native units

// Pools squared error and confusion counts over every listed window
// (micro-averaging; 64-bit accumulation), then finalizes one report.
SkillReport evaluate(const Predictor& predict, const PrecipDataset& ds,
                     std::span<const int> window_starts, const WindowTask& task,
                     const EvalOptions& options = {});

std::string report_csv_header();
std::string report_csv_row(const std::string& label, const SkillReport& report);
std::string report_json(const SkillReport& report);

}  // namespace metrics
}  // namespace gdcaf
