#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oapt/jpeg.hpp"
#include "oapt/plane.hpp"
#include "oapt/rng.hpp"

namespace oapt {

// One point in the double-compression degradation space.
struct CompressionSpec {
  int qf1 = 50;
  int qf2 = 50;
  int row_offset = 0;  // i, rows removed between the compressions
  int col_offset = 0;  // j, columns removed

  bool operator==(const CompressionSpec&) const = default;
};

// Removes the first i rows and j columns.
Plane shift(const Plane& p, int i, int j);

struct DegradedPair {
  Plane lq;  // JPEG(Shift(JPEG(x, qf1)), qf2)
  Plane hq;  // Shift(x), pixel-aligned with lq
};

DegradedPair double_jpeg(const Plane& x, const CompressionSpec& spec);

struct SpecSampler {
  int qf_min = 5;
  int qf_max = 95;
  bool aligned_only = false;
};

CompressionSpec sample_spec(Rng& rng, const SpecSampler& config);

struct SampleRecord {
  std::string lq_path;
  std::string hq_path;
  CompressionSpec spec;
  std::string src;
  std::int64_t x0 = 0;  // patch origin row in the source image
  std::int64_t y0 = 0;  // patch origin column
  std::int64_t size = 0;  // lq/hq side length
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int patches_per_image = 4;
  std::int64_t patch_size = 64;  // desk-scale default
  SpecSampler sampler;
  bool use_fixed_spec = false;
  CompressionSpec fixed_spec;  // when use_fixed_spec, only offsets are sampled
  bool fixed_offsets = false;  // with use_fixed_spec, also freeze the offsets
};

// Extracts patches, degrades each one independently (the patch is its own
// image, so offset labels are exact per sample), writes lq/hq files and a
// line-delimited JSON manifest. Fully reproducible from the seed.
std::vector<SampleRecord> synth_dataset(const std::vector<std::string>& sources,
                                        const std::string& out_dir, const SynthConfig& config);

void write_manifest(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_manifest(const std::string& path);

// Loaded sample pair with its record.
struct LoadedSample {
  SampleRecord record;
  Plane lq;
  Plane hq;
};

std::vector<LoadedSample> load_samples(const std::string& manifest_path);

// Deterministic pseudo-natural test image: smooth blobs, oriented texture and
// edges. Stands in for standard test images in a hermetic environment.
Plane make_test_image(std::int64_t h, std::int64_t w, std::uint64_t seed);

}  // namespace oapt
