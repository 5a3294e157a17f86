#include "gdcaf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "gdcaf/errors.hpp"
#include "gdcaf/rng.hpp"

namespace gdcaf {

void PrecipDataset::validate() const {
  if (nodes < 1 || height < 1 || width < 1) {
    throw ContractError("dataset: nodes/height/width must be >= 1");
  }
  for (const Tensor& f : frames) {
    if (f.rank() != 3 || f.extent(0) != nodes || f.extent(1) != height || f.extent(2) != width) {
      throw ShapeError("dataset: frame shape " + f.shape_str() + " does not match header");
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] < 0.0f) throw ContractError("dataset: negative precipitation value");
    }
  }
}

void WindowTask::validate() const {
  auto one_of = [](int v, std::initializer_list<int> allowed) {
    return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
  };
  if (!one_of(t_in, {6, 9, 12, 15})) {
    throw ContractError("task: t_in must be one of {6,9,12,15}, got " + std::to_string(t_in));
  }
  if (!one_of(delta, {1, 3, 6})) {
    throw ContractError("task: delta must be one of {1,3,6}, got " + std::to_string(delta));
  }
  if (!one_of(graph_size, {1, 2, 4, 8, 16})) {
    throw ContractError("task: graph_size must be one of {1,2,4,8,16}, got " +
                        std::to_string(graph_size));
  }
}

int window_count(int frames, const WindowTask& task) {
  return frames - task.t_in - task.delta + 1;
}

std::vector<int> all_window_starts(const PrecipDataset& ds, const WindowTask& task) {
  const int n = window_count(ds.frame_count(), task);
  std::vector<int> starts;
  starts.reserve(static_cast<std::size_t>(std::max(0, n)));
  for (int i = 0; i < n; ++i) starts.push_back(i);
  return starts;
}

GraphSample make_sample(const PrecipDataset& ds, int start, const WindowTask& task) {
  if (task.graph_size > ds.nodes) {
    throw ContractError("sample: graph_size " + std::to_string(task.graph_size) +
                        " exceeds dataset nodes " + std::to_string(ds.nodes));
  }
  const int target = start + task.t_in + task.delta - 1;
  if (start < 0 || target >= ds.frame_count()) {
    throw BoundsError("sample: window at " + std::to_string(start) + " runs past the timeline");
  }
  const int g = task.graph_size, h = ds.height, w = ds.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  GraphSample sample;
  sample.start = start;
  sample.target_hour = ds.hour_of(target);
  sample.x = Tensor({g, task.t_in, h, w});
  sample.y = Tensor({g, h, w});
  for (int n = 0; n < g; ++n) {
    for (int t = 0; t < task.t_in; ++t) {
      const float* src = ds.frames[static_cast<std::size_t>(start + t)].data() +
                         static_cast<std::size_t>(n) * plane;
      float* dst = sample.x.data() + (static_cast<std::size_t>(n) * task.t_in + t) * plane;
      std::copy(src, src + plane, dst);
    }
    const float* src = ds.frames[static_cast<std::size_t>(target)].data() +
                       static_cast<std::size_t>(n) * plane;
    std::copy(src, src + plane, sample.y.data() + static_cast<std::size_t>(n) * plane);
  }
  return sample;
}

std::pair<int, int> train_val_counts(int pool_items) {
  const int val = pool_items / 10;
  return {pool_items - val, val};
}

SplitIndices split(const PrecipDataset& ds, const WindowTask& task, std::uint64_t seed) {
  const int frames = ds.frame_count();
  if (frames < task.span()) throw ContractError("split: dataset shorter than one window");
  const int test_frames = frames / 7;
  const int pool_frames = frames - test_frames;

  SplitIndices out;
  // Test tail: windows fully inside the final seventh, kept in time order.
  for (int s = pool_frames; s + task.span() <= frames; ++s) out.test.push_back(s);
  std::vector<int> pool;
  for (int s = 0; s + task.span() <= pool_frames; ++s) pool.push_back(s);
  if (pool.empty() || out.test.empty()) {
    throw ContractError("split: not enough frames for both a pool and a test tail");
  }
  Rng rng(seed);
  rng.shuffle(pool);
  const auto [train_n, val_n] = train_val_counts(static_cast<int>(pool.size()));
  out.train.assign(pool.begin(), pool.begin() + train_n);
  out.val.assign(pool.begin() + train_n, pool.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  (void)val_n;
  return out;
}

Tensor crop_regions(const Tensor& grid, double origin_lat, double origin_lon,
                    double resolution_deg, std::span<const RegionSpec> specs) {
  if (grid.rank() != 2) throw ShapeError("crop_regions: grid must be [H,W], got " + grid.shape_str());
  if (!(resolution_deg > 0.0)) throw ContractError("crop_regions: resolution must be positive");
  if (specs.empty()) throw ContractError("crop_regions: no regions given");
  const int size = specs.front().size_px;
  for (const RegionSpec& s : specs) {
    if (s.size_px != size) {
      throw ShapeError("crop_regions: mixed region sizes (" + s.id + ")");
    }
  }
  const int gh = grid.extent(0), gw = grid.extent(1);
  Tensor out({static_cast<int>(specs.size()), size, size});
  for (std::size_t n = 0; n < specs.size(); ++n) {
    const RegionSpec& s = specs[n];
    // The corner's containing cell; the small bias absorbs representation
    // error for corners that fall exactly on a grid line.
    const int row = static_cast<int>(std::floor((origin_lat - s.lu_lat) / resolution_deg + 1e-9));
    const int col = static_cast<int>(std::floor((s.lu_lon - origin_lon) / resolution_deg + 1e-9));
    if (row < 0 || col < 0 || row + size > gh || col + size > gw) {
      throw BoundsError("crop_regions: region " + s.id + " box [" + std::to_string(row) + "," +
                        std::to_string(col) + ")+" + std::to_string(size) +
                        " falls outside the grid");
    }
    for (int y = 0; y < size; ++y) {
      const float* src = grid.data() + static_cast<std::size_t>(row + y) * gw + col;
      float* dst = out.data() + (n * size + y) * size;
      std::copy(src, src + size, dst);
    }
  }
  return out;
}

// --- Synthetic generator ---------------------------------------------------------

namespace {

struct Blob {
  double x = 0.0, y = 0.0;
  double amplitude = 0.0;  // native units
  double sigma = 1.0;
  double phase = 0.0;
};

double wrapped_delta(double a, double b, double extent) {
  double d = std::abs(a - b);
  return std::min(d, extent - d);
}

void splat(Tensor& frame, int node, const Blob& blob, int h, int w) {
  const double two_sigma2 = 2.0 * blob.sigma * blob.sigma;
  float* plane = frame.data() + static_cast<std::size_t>(node) * h * w;
  for (int y = 0; y < h; ++y) {
    const double dy = wrapped_delta(static_cast<double>(y), blob.y, static_cast<double>(h));
    for (int x = 0; x < w; ++x) {
      const double dx = wrapped_delta(static_cast<double>(x), blob.x, static_cast<double>(w));
      const double v = blob.amplitude * std::exp(-(dx * dx + dy * dy) / two_sigma2);
      plane[static_cast<std::size_t>(y) * w + x] += static_cast<float>(v);
    }
  }
}

}  // namespace

PrecipDataset gen_synthetic(const SyntheticParams& params) {
  if (params.hours < 100) throw ContractError("gen_synthetic: need at least 100 hours");
  if (params.nodes < 1 || params.height < 1 || params.width < 1 || params.blobs < 1) {
    throw ContractError("gen_synthetic: nodes/height/width/blobs must be >= 1");
  }
  Rng rng(params.seed);
  const double native_amp = params.amplitude_mm_h * 1e-3;  // mm/h -> m/h

  const int shared = static_cast<int>(std::lround(params.shared_fraction * params.blobs));
  auto draw_blob = [&]() {
    Blob b;
    b.x = rng.uniform_double(0.0, params.width);
    b.y = rng.uniform_double(0.0, params.height);
    b.amplitude = native_amp * rng.uniform_double(0.5, 1.0);
    b.sigma = params.sigma_px * rng.uniform_double(0.75, 1.25);
    b.phase = rng.uniform_double(0.0, 6.283185307179586);
    return b;
  };

  std::vector<Blob> shared_blobs;
  for (int b = 0; b < shared; ++b) shared_blobs.push_back(draw_blob());
  std::vector<std::vector<Blob>> private_blobs(static_cast<std::size_t>(params.nodes));
  for (int n = 0; n < params.nodes; ++n) {
    for (int b = shared; b < params.blobs; ++b) {
      private_blobs[static_cast<std::size_t>(n)].push_back(draw_blob());
    }
  }

  PrecipDataset ds;
  ds.nodes = params.nodes;
  ds.height = params.height;
  ds.width = params.width;
  ds.start_hour = params.start_hour;
  for (int n = 0; n < params.nodes; ++n) {
    RegionSpec spec;
    spec.id = "R" + std::to_string(n + 1);
    spec.lu_lat = 70.0 - 4.0 * n;
    spec.lu_lon = -20.0 + 5.0 * n;
    spec.size_px = params.width;
    ds.regions.push_back(spec);
  }

  auto advance = [&](Blob& b, int hour) {
    const double omega = params.rotation_period_h > 0.0
                             ? 6.283185307179586 / params.rotation_period_h
                             : 0.0;
    const double angle = omega * hour + b.phase;
    double vx = params.speed_px_per_h * std::cos(angle);
    double vy = params.speed_px_per_h * std::sin(angle);
    if (params.jitter_px > 0.0) {
      vx += rng.uniform_double(-params.jitter_px, params.jitter_px);
      vy += rng.uniform_double(-params.jitter_px, params.jitter_px);
    }
    b.x = std::fmod(b.x + vx + params.width, static_cast<double>(params.width));
    b.y = std::fmod(b.y + vy + params.height, static_cast<double>(params.height));
  };

  ds.frames.reserve(static_cast<std::size_t>(params.hours));
  for (int hour = 0; hour < params.hours; ++hour) {
    Tensor frame({params.nodes, params.height, params.width});
    for (int n = 0; n < params.nodes; ++n) {
      for (const Blob& b : shared_blobs) splat(frame, n, b, params.height, params.width);
      for (const Blob& b : private_blobs[static_cast<std::size_t>(n)]) {
        splat(frame, n, b, params.height, params.width);
      }
    }
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = std::max(0.0f, frame[i]);
    ds.frames.push_back(std::move(frame));
    for (Blob& b : shared_blobs) advance(b, hour);
    for (auto& list : private_blobs) {
      for (Blob& b : list) advance(b, hour);
    }
  }
  return ds;
}

// --- Split files --------------------------------------------------------------------

void save_split_file(const PrecipDataset& ds, const std::filesystem::path& path) {
  nlohmann::json header;
  header["version"] = 1;
  header["nodes"] = ds.nodes;
  header["height"] = ds.height;
  header["width"] = ds.width;
  header["frames"] = ds.frame_count();
  header["start_hour"] = ds.start_hour;
  auto& regions = header["regions"];
  regions = nlohmann::json::array();
  for (const RegionSpec& r : ds.regions) {
    regions.push_back(
        {{"id", r.id}, {"lu_lat", r.lu_lat}, {"lu_lon", r.lu_lon}, {"size_px", r.size_px}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open split file for writing: " + path.string());
  out << header.dump() << "\n";
  for (const Tensor& f : ds.frames) {
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing split file: " + path.string());
}

PrecipDataset load_split_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open split file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("split file missing header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded()) throw IoError("split file header is not JSON: " + path.string());

  PrecipDataset ds;
  ds.nodes = header.at("nodes").get<int>();
  ds.height = header.at("height").get<int>();
  ds.width = header.at("width").get<int>();
  ds.start_hour = header.at("start_hour").get<std::int64_t>();
  for (const auto& r : header.at("regions")) {
    RegionSpec spec;
    spec.id = r.at("id").get<std::string>();
    spec.lu_lat = r.at("lu_lat").get<double>();
    spec.lu_lon = r.at("lu_lon").get<double>();
    spec.size_px = r.at("size_px").get<int>();
    ds.regions.push_back(spec);
  }
  const int frames = header.at("frames").get<int>();
  ds.frames.reserve(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    Tensor f({ds.nodes, ds.height, ds.width});
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!in) throw IoError("split file truncated at frame " + std::to_string(i) + ": " + path.string());
    ds.frames.push_back(std::move(f));
  }
  ds.validate();
  return ds;
}

PrecipDataset slice_frames(const PrecipDataset& ds, int start, int count) {
  if (start < 0 || count < 0 || start + count > ds.frame_count()) {
    throw BoundsError("slice_frames: range [" + std::to_string(start) + "," +
                      std::to_string(start + count) + ") out of " +
                      std::to_string(ds.frame_count()));
  }
  PrecipDataset out;
  out.nodes = ds.nodes;
  out.height = ds.height;
  out.width = ds.width;
  out.start_hour = ds.start_hour + start;
  out.regions = ds.regions;
  out.frames.assign(ds.frames.begin() + start, ds.frames.begin() + start + count);
  return out;
}

void write_manifest(const DatasetPaths& paths, const std::filesystem::path& manifest_path) {
  nlohmann::json j;
  j["version"] = 1;
  j["train"] = paths.train.filename().string();
  j["val"] = paths.val.filename().string();
  j["test"] = paths.test.filename().string();
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write manifest: " + manifest_path.string());
  out << j.dump(2) << "\n";
}

DatasetPaths read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IoError("manifest is not valid JSON: " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  DatasetPaths paths;
  paths.train = base / j.at("train").get<std::string>();
  paths.val = base / j.at("val").get<std::string>();
  paths.test = base / j.at("test").get<std::string>();
  return paths;
}

// --- Calendar ------------------------------------------------------------------------

int month_of_hour(std::int64_t hour) {
  std::int64_t days = hour / 24;
  if (hour < 0 && hour % 24 != 0) --days;
  // Days-to-civil conversion, proleptic Gregorian.
  std::int64_t z = days + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const int month = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  return month;
}

int season_of_month(int month) { return (month % 12) / 3; }

const char* const kSeasonNames[4] = {"DJF", "MAM", "JJA", "SON"};

}  // namespace gdcaf
