#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gdcaf/data.hpp"
#include "gdcaf/model.hpp"

namespace gdcaf {
namespace viz {

struct Edge {
  int from = 0;
  int to = 0;
  double score = 0.0;
};

// Season-averaged attention in the last block, over samples and heads.
struct SpatialPanel {
  int season = 0;     // index into kSeasonNames
  int time_step = 0;  // 0-based slice position within a head window
  int samples = 0;
  Tensor matrix;  // [N,N]; kept row-stochastic by averaging
  std::vector<Edge> edges;  // top-k off-diagonal entries, descending
};

struct TemporalPanel {
  int season = 0;
  int node = 0;
  int samples = 0;
  Tensor matrix;  // [T,T]
};

struct AttentionExport {
  std::vector<SpatialPanel> spatial;    // season-major, time steps {0, T-1}
  std::vector<TemporalPanel> temporal;  // season-major, one per selected node
};

struct ExportOptions {
  int top_k = 20;
  std::vector<int> temporal_nodes;  // empty = every node
  double value_scale = 1.0;
};

// Runs the model over the listed windows with score recording, buckets by
// meteorological season of the target hour, and averages the last block's
// scores over samples and heads.
AttentionExport export_attention(const GdCaf& model, const PrecipDataset& ds,
                                 std::span<const int> window_starts, const WindowTask& task,
                                 const ExportOptions& options);

// Circular-layout graph of a spatial panel. Byte-deterministic for identical
// panels (fixed number formatting, no locale use).
std::string render_spatial_svg(const SpatialPanel& panel, std::span<const RegionSpec> regions);

// Writes matrices (CSV), edge lists (JSON), and one SVG per spatial panel.
void write_export_files(const AttentionExport& exported, std::span<const RegionSpec> regions,
                        const std::filesystem::path& out_dir);

}  // namespace viz
}  // namespace gdcaf
