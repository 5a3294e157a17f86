#include "gdcaf/export.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gdcaf/errors.hpp"

namespace gdcaf {
namespace viz {

namespace {

void add_into(Tensor& acc, const Tensor& t) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += t[i];
}

std::vector<Edge> top_edges(const Tensor& matrix, int k) {
  const int n = matrix.extent(0);
  std::vector<Edge> all;
  all.reserve(static_cast<std::size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;  // connections between distinct regions only
      all.push_back(Edge{i, j, static_cast<double>(matrix.at(i, j))});
    }
  }
  std::sort(all.begin(), all.end(), [](const Edge& a, const Edge& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.from != b.from) return a.from < b.from;
    return a.to < b.to;
  });
  if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(k));
  return all;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

}  // namespace

AttentionExport export_attention(const GdCaf& model, const PrecipDataset& ds,
                                 std::span<const int> window_starts, const WindowTask& task,
                                 const ExportOptions& options) {
  if (options.top_k < 1) throw ContractError("export: top_k must be >= 1");
  const ModelConfig& cfg = model.config();
  const int n = cfg.nodes, t = cfg.t_in, last = cfg.blocks - 1;
  if (task.graph_size != n) {
    throw ContractError("export: task graph size " + std::to_string(task.graph_size) +
                        " does not match model nodes " + std::to_string(n));
  }
  std::vector<int> nodes = options.temporal_nodes;
  if (nodes.empty()) {
    for (int i = 0; i < n; ++i) nodes.push_back(i);
  }
  for (int node : nodes) {
    if (node < 0 || node >= n) throw ContractError("export: temporal node out of range");
  }

  // Accumulators per season: two spatial matrices (first/last slice) and one
  // temporal matrix per selected node.
  std::vector<std::array<Tensor, 2>> spatial_acc(4);
  std::vector<std::vector<Tensor>> temporal_acc(4);
  std::vector<int> season_samples(4, 0);
  for (int s = 0; s < 4; ++s) {
    spatial_acc[static_cast<std::size_t>(s)] = {Tensor({n, n}), Tensor({n, n})};
    temporal_acc[static_cast<std::size_t>(s)].assign(nodes.size(), Tensor({t, t}));
  }

  const float head_inv = 1.0f / static_cast<float>(cfg.heads);
  for (int start : window_starts) {
    GraphSample sample = make_sample(ds, start, task);
    AttentionScores scores;
    Tensor x = sample.x;
    if (options.value_scale != 1.0) x = scale(x, static_cast<float>(options.value_scale));
    (void)model.predict(x, &scores);
    const int season = season_of_month(month_of_hour(sample.target_hour));
    ++season_samples[static_cast<std::size_t>(season)];
    for (int k = 0; k < cfg.heads; ++k) {
      const auto& per_time = scores.spatial[static_cast<std::size_t>(last)][static_cast<std::size_t>(k)];
      add_into(spatial_acc[static_cast<std::size_t>(season)][0], scale(per_time.front(), head_inv));
      add_into(spatial_acc[static_cast<std::size_t>(season)][1], scale(per_time.back(), head_inv));
      const auto& per_node = scores.temporal[static_cast<std::size_t>(last)][static_cast<std::size_t>(k)];
      for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
        add_into(temporal_acc[static_cast<std::size_t>(season)][ni],
                 scale(per_node[static_cast<std::size_t>(nodes[ni])], head_inv));
      }
    }
  }

  AttentionExport out;
  for (int season = 0; season < 4; ++season) {
    const int count = season_samples[static_cast<std::size_t>(season)];
    const float inv = count > 0 ? 1.0f / static_cast<float>(count) : 0.0f;
    const int steps[2] = {0, t - 1};
    for (int si = 0; si < 2; ++si) {
      SpatialPanel panel;
      panel.season = season;
      panel.time_step = steps[si];
      panel.samples = count;
      panel.matrix = scale(spatial_acc[static_cast<std::size_t>(season)][static_cast<std::size_t>(si)], inv);
      if (count > 0) panel.edges = top_edges(panel.matrix, options.top_k);
      out.spatial.push_back(std::move(panel));
    }
    for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
      TemporalPanel panel;
      panel.season = season;
      panel.node = nodes[ni];
      panel.samples = count;
      panel.matrix = scale(temporal_acc[static_cast<std::size_t>(season)][ni], inv);
      out.temporal.push_back(std::move(panel));
    }
  }
  return out;
}

std::string render_spatial_svg(const SpatialPanel& panel, std::span<const RegionSpec> regions) {
  const int n = panel.matrix.extent(0);
  const double size = 480.0, cx = size / 2.0, cy = size / 2.0, radius = 180.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << static_cast<int>(size)
      << "\" height=\"" << static_cast<int>(size) << "\" viewBox=\"0 0 " << static_cast<int>(size)
      << " " << static_cast<int>(size) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"12\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\">"
      << kSeasonNames[panel.season] << ", t=" << (panel.time_step + 1)
      << (panel.samples == 0 ? " (no samples)" : "") << "</text>\n";

  std::vector<std::pair<double, double>> pos(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double angle = 2.0 * 3.14159265358979323846 * i / n - 1.5707963267948966;
    pos[static_cast<std::size_t>(i)] = {cx + radius * std::cos(angle),
                                        cy + radius * std::sin(angle)};
  }
  double max_score = 0.0;
  for (const Edge& e : panel.edges) max_score = std::max(max_score, e.score);
  for (const Edge& e : panel.edges) {
    const auto [x1, y1] = pos[static_cast<std::size_t>(e.from)];
    const auto [x2, y2] = pos[static_cast<std::size_t>(e.to)];
    const double width = max_score > 0.0 ? 0.6 + 3.4 * e.score / max_score : 0.6;
    svg << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
        << "\" y2=\"" << fmt(y2) << "\" stroke=\"#2166ac\" stroke-opacity=\"0.75\" stroke-width=\""
        << fmt(width) << "\"/>\n";
  }
  for (int i = 0; i < n; ++i) {
    const auto [x, y] = pos[static_cast<std::size_t>(i)];
    const std::string label = i < static_cast<int>(regions.size())
                                  ? regions[static_cast<std::size_t>(i)].id
                                  : "R" + std::to_string(i + 1);
    svg << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y)
        << "\" r=\"11\" fill=\"#f4a582\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y + 4)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << label
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

namespace {

void write_matrix_csv(const Tensor& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write matrix: " + path.string());
  const int rows = m.extent(0), cols = m.extent(1);
  char buf[48];
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(m.at(r, c)));
      out << buf << (c + 1 < cols ? "," : "\n");
    }
  }
}

std::string region_name(std::span<const RegionSpec> regions, int idx) {
  if (idx < static_cast<int>(regions.size())) return regions[static_cast<std::size_t>(idx)].id;
  return "R" + std::to_string(idx + 1);
}

}  // namespace

void write_export_files(const AttentionExport& exported, std::span<const RegionSpec> regions,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json edges_doc;
  edges_doc["spatial"] = nlohmann::json::array();
  for (const SpatialPanel& panel : exported.spatial) {
    const std::string stem = std::string("spatial_") + kSeasonNames[panel.season] + "_t" +
                             std::to_string(panel.time_step + 1);
    write_matrix_csv(panel.matrix, out_dir / (stem + ".csv"));
    std::ofstream svg(out_dir / (stem + ".svg"), std::ios::binary);
    if (!svg) throw IoError("cannot write svg: " + (out_dir / (stem + ".svg")).string());
    svg << render_spatial_svg(panel, regions);

    nlohmann::json entry;
    entry["season"] = kSeasonNames[panel.season];
    entry["time_step"] = panel.time_step + 1;
    entry["samples"] = panel.samples;
    entry["empty"] = panel.samples == 0;
    entry["edges"] = nlohmann::json::array();
    for (const Edge& e : panel.edges) {
      entry["edges"].push_back({{"from", region_name(regions, e.from)},
                                {"to", region_name(regions, e.to)},
                                {"score", e.score}});
    }
    edges_doc["spatial"].push_back(std::move(entry));
  }
  edges_doc["temporal"] = nlohmann::json::array();
  for (const TemporalPanel& panel : exported.temporal) {
    const std::string stem = std::string("temporal_") + kSeasonNames[panel.season] + "_" +
                             region_name(regions, panel.node);
    write_matrix_csv(panel.matrix, out_dir / (stem + ".csv"));
    edges_doc["temporal"].push_back({{"season", kSeasonNames[panel.season]},
                                     {"region", region_name(regions, panel.node)},
                                     {"samples", panel.samples},
                                     {"empty", panel.samples == 0}});
  }
  std::ofstream edges(out_dir / "edges.json");
  if (!edges) throw IoError("cannot write edges.json in " + out_dir.string());
  edges << edges_doc.dump(2) << "\n";
}

}  // namespace viz
}  // namespace gdcaf
