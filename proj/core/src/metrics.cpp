#include "gdcaf/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "gdcaf/errors.hpp"

namespace gdcaf {
namespace metrics {

std::vector<std::uint8_t> binarize(const Tensor& maps, double threshold_mm_per_h,
                                   double native_units_per_mm) {
  if (!(threshold_mm_per_h > 0.0)) throw ContractError("binarize: threshold must be positive");
  const float threshold = static_cast<float>(threshold_mm_per_h * native_units_per_mm);
  std::vector<std::uint8_t> mask(maps.size());
  const float* p = maps.data();
  for (std::size_t i = 0; i < maps.size(); ++i) mask[i] = p[i] >= threshold ? 1 : 0;
  return mask;
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("confusion: mask sizes differ, " + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i]) {
      if (target[i]) ++c.tp;
      else ++c.fp;
    } else {
      if (target[i]) ++c.fn;
      else ++c.tn;
    }
  }
  return c;
}

namespace {

double safe_div(double num, double den, bool& degenerate) {
  if (den == 0.0) {
    degenerate = true;
    return 0.0;
  }
  return num / den;
}

}  // namespace

SkillReport skill(const ConfusionCounts& c, double mse) {
  SkillReport r;
  r.mse = mse;
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn);
  const double fn = static_cast<double>(c.fn);
  r.accuracy = safe_div(tp + tn, tp + fp + tn + fn, r.degenerate);
  r.precision = safe_div(tp, tp + fp, r.degenerate);
  r.recall = safe_div(tp, tp + fn, r.degenerate);
  r.f1 = safe_div(2.0 * r.precision * r.recall, r.precision + r.recall, r.degenerate);
  r.csi = safe_div(tp, tp + fp + fn, r.degenerate);
  r.far = safe_div(fp, tp + fp, r.degenerate);
  r.hss = safe_div(2.0 * (tp * tn - fp * fn), (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn),
                   r.degenerate);
  return r;
}

Tensor persistence_predict(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("persistence: expected [N,T,H,W], got " + x.shape_str());
  const int n = x.extent(0), t = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({n, h, w});
  for (int i = 0; i < n; ++i) {
    const float* src = x.data() + (static_cast<std::size_t>(i) * t + (t - 1)) * plane;
    std::copy(src, src + plane, out.data() + static_cast<std::size_t>(i) * plane);
  }
  return out;
}

SkillReport evaluate(const Predictor& predict, const PrecipDataset& ds,
                     std::span<const int> window_starts, const WindowTask& task,
                     const EvalOptions& options) {
  if (window_starts.empty()) throw ContractError("evaluate: no windows");
  const std::size_t plane = static_cast<std::size_t>(ds.height) * ds.width;

  ConfusionCounts counts;
  double sq_sum = 0.0;
  std::uint64_t n_values = 0;
  for (int start : window_starts) {
    GraphSample sample = make_sample(ds, start, task);
    Tensor pred = predict(sample);
    if (!pred.same_shape(sample.y)) {
      throw ShapeError("evaluate: prediction " + pred.shape_str() + " vs target " +
                       sample.y.shape_str());
    }
    std::size_t lo = 0, hi = pred.size();
    if (options.restrict_node >= 0) {
      if (options.restrict_node >= task.graph_size) {
        throw ContractError("evaluate: restricted node " + std::to_string(options.restrict_node) +
                            " outside graph of size " + std::to_string(task.graph_size));
      }
      lo = static_cast<std::size_t>(options.restrict_node) * plane;
      hi = lo + plane;
    }
    const float threshold =
        static_cast<float>(options.threshold_mm_per_h * options.native_units_per_mm);
    const float* pp = pred.data();
    const float* ty = sample.y.data();
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = static_cast<double>(pp[i]) - ty[i];
      sq_sum += d * d;
      const bool rain_pred = pp[i] >= threshold;
      const bool rain_true = ty[i] >= threshold;
      if (rain_pred) {
        rain_true ? ++counts.tp : ++counts.fp;
      } else {
        rain_true ? ++counts.fn : ++counts.tn;
      }
    }
    n_values += hi - lo;
  }
  return skill(counts, sq_sum / static_cast<double>(n_values));
}

std::string report_csv_header() {
  return "label,mse,accuracy,precision,recall,f1,csi,far,hss";
}

std::string report_csv_row(const std::string& label, const SkillReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.8g,%.5f,%.5f,%.5f,%.5f,%.5f,%.5f,%.5f", label.c_str(),
                r.mse, r.accuracy, r.precision, r.recall, r.f1, r.csi, r.far, r.hss);
  return std::string(buf);
}

std::string report_json(const SkillReport& r) {
  nlohmann::json j{{"mse", r.mse},     {"accuracy", r.accuracy}, {"precision", r.precision},
                   {"recall", r.recall}, {"f1", r.f1},           {"csi", r.csi},
                   {"far", r.far},     {"hss", r.hss},           {"degenerate", r.degenerate}};
  return j.dump(2);
}

}  // namespace metrics
}  // namespace gdcaf
