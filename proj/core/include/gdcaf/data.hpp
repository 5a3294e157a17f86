#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gdcaf/tensor.hpp"

namespace gdcaf {

// A square crop on the source grid, addressed by its upper-left corner in
// degrees (latitude decreasing with rows, longitude increasing with columns).
struct RegionSpec {
  std::string id;
  double lu_lat = 0.0;
  double lu_lon = 0.0;
  int size_px = 32;
};

// Hourly precipitation maps for a set of regions. Values are in native units
// (meters of precipitation per hour); everything is nonnegative and the
// timeline is gap-free by construction.
struct PrecipDataset {
  int nodes = 0;
  int height = 0;
  int width = 0;
  std::int64_t start_hour = 0;  // hours since 1970-01-01T00Z
  std::vector<RegionSpec> regions;
  std::vector<Tensor> frames;  // one [nodes,height,width] tensor per hour

  int frame_count() const { return static_cast<int>(frames.size()); }
  std::int64_t hour_of(int frame) const { return start_hour + frame; }
  void validate() const;
};

// One nowcasting task: consume t_in hourly maps, predict the map delta hours
// after the last input, restricted to the first graph_size regions.
struct WindowTask {
  int t_in = 6;
  int delta = 1;
  int graph_size = 1;

  int span() const { return t_in + delta; }
  void validate() const;  // membership in the supported experiment grid
};

struct GraphSample {
  Tensor x;  // [graph_size, t_in, H, W]
  Tensor y;  // [graph_size, H, W]
  std::int64_t target_hour = 0;
  int start = 0;
};

// Number of valid window start positions: frames - t_in - delta + 1.
int window_count(int frames, const WindowTask& task);
std::vector<int> all_window_starts(const PrecipDataset& ds, const WindowTask& task);
GraphSample make_sample(const PrecipDataset& ds, int start, const WindowTask& task);

// Window-level split of one timeline: the final seventh of the frames is the
// test tail (its windows stay in order), the remaining windows are shuffled
// by seed and divided 0.9/0.1 into train/val.
struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};
SplitIndices split(const PrecipDataset& ds, const WindowTask& task, std::uint64_t seed);

// The train/val sizing rule: val gets floor(n/10), train the rest.
std::pair<int, int> train_val_counts(int pool_items);

// Extract the region boxes from a lat/lon grid. The pixel row of a corner is
// the grid cell containing it: floor((origin_lat - lu_lat)/res) and
// floor((lu_lon - origin_lon)/res).
Tensor crop_regions(const Tensor& grid, double origin_lat, double origin_lon,
                    double resolution_deg, std::span<const RegionSpec> specs);

// Synthetic precipitation: Gaussian blobs advected by a slowly rotating
// velocity field on a periodic domain. A configurable share of the blobs is
// common to all regions (large-scale forcing); the rest are per-region.
struct SyntheticParams {
  std::uint64_t seed = 1;
  int hours = 1000;
  int nodes = 4;
  int height = 32;
  int width = 32;
  int blobs = 4;
  double shared_fraction = 0.75;
  double sigma_px = 2.5;
  double speed_px_per_h = 1.0;
  double rotation_period_h = 400.0;
  double jitter_px = 0.0;
  double amplitude_mm_h = 3.0;
  std::int64_t start_hour = 455832;  // 2022-01-01T00Z
};
PrecipDataset gen_synthetic(const SyntheticParams& params);

// --- Split files ------------------------------------------------------------------
// One file per split: a single JSON header line (nodes, height, width, frame
// count, start hour, regions) followed by raw little-endian float32 frames in
// (time, node, row, col) order.
void save_split_file(const PrecipDataset& ds, const std::filesystem::path& path);
PrecipDataset load_split_file(const std::filesystem::path& path);

// Contiguous frame range as its own dataset (shares region metadata).
PrecipDataset slice_frames(const PrecipDataset& ds, int start, int count);

struct DatasetPaths {
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path test;
};
void write_manifest(const DatasetPaths& paths, const std::filesystem::path& manifest_path);
DatasetPaths read_manifest(const std::filesystem::path& manifest_path);

// --- Calendar helpers ---------------------------------------------------------------

// Month (1..12) of an hours-since-epoch timestamp, proleptic Gregorian.
int month_of_hour(std::int64_t hour);
// Meteorological season bucket: 0=DJF, 1=MAM, 2=JJA, 3=SON.
int season_of_month(int month);
extern const char* const kSeasonNames[4];

}  // namespace gdcaf
