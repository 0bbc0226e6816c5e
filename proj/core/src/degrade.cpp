#include "oapt/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "oapt/errors.hpp"

namespace oapt {

namespace fs = std::filesystem;
using json = nlohmann::json;

Plane shift(const Plane& p, int i, int j) {
  if (i < 0 || j < 0) throw ArgumentError("shift offsets must be non-negative");
  if (p.height <= i || p.width <= j)
    throw ArgumentError("image " + std::to_string(p.height) + "x" + std::to_string(p.width) +
                        " too small for shift (" + std::to_string(i) + "," +
                        std::to_string(j) + ")");
  Plane out(p.height - i, p.width - j);
  for (std::int64_t y = 0; y < out.height; ++y)
    for (std::int64_t x = 0; x < out.width; ++x) out.at(y, x) = p.at(y + i, x + j);
  return out;
}

DegradedPair double_jpeg(const Plane& x, const CompressionSpec& spec) {
  DegradedPair pair;
  pair.lq = jpeg_compress(shift(jpeg_compress(x, spec.qf1), spec.row_offset, spec.col_offset),
                          spec.qf2);
  pair.hq = shift(x, spec.row_offset, spec.col_offset);
  return pair;
}

CompressionSpec sample_spec(Rng& rng, const SpecSampler& config) {
  CompressionSpec spec;
  spec.qf1 = static_cast<int>(rng.uniform_int(config.qf_min, config.qf_max));
  spec.qf2 = static_cast<int>(rng.uniform_int(config.qf_min, config.qf_max));
  if (config.aligned_only) {
    spec.row_offset = 0;
    spec.col_offset = 0;
  } else {
    spec.row_offset = static_cast<int>(rng.uniform_int(0, 7));
    spec.col_offset = static_cast<int>(rng.uniform_int(0, 7));
  }
  return spec;
}

std::vector<SampleRecord> synth_dataset(const std::vector<std::string>& sources,
                                        const std::string& out_dir, const SynthConfig& config) {
  if (sources.empty()) throw ArgumentError("synth_dataset: empty source set");
  fs::create_directories(out_dir);
  Rng rng(config.seed);
  std::vector<SampleRecord> records;
  std::int64_t sample_id = 0;
  for (const auto& src : sources) {
    Plane img;
    try {
      img = read_image(src);
    } catch (const DataError& e) {
      std::cerr << "warning: skipping unreadable image " << src << ": " << e.what() << "\n";
      continue;
    }
    for (int k = 0; k < config.patches_per_image; ++k) {
      CompressionSpec spec;
      if (config.use_fixed_spec) {
        spec = config.fixed_spec;
        if (!config.fixed_offsets) {
          spec.row_offset = static_cast<int>(rng.uniform_int(0, 7));
          spec.col_offset = static_cast<int>(rng.uniform_int(0, 7));
        }
      } else {
        spec = sample_spec(rng, config.sampler);
      }
      // Source patch is oversized by the offsets so lq/hq come out at
      // exactly patch_size x patch_size.
      const std::int64_t ph = config.patch_size + spec.row_offset;
      const std::int64_t pw = config.patch_size + spec.col_offset;
      if (img.height < ph || img.width < pw) {
        std::cerr << "warning: " << src << " smaller than patch, skipping patch\n";
        continue;
      }
      const std::int64_t x0 = rng.uniform_int(0, img.height - ph);
      const std::int64_t y0 = rng.uniform_int(0, img.width - pw);
      Plane patch(ph, pw);
      for (std::int64_t y = 0; y < ph; ++y)
        for (std::int64_t x = 0; x < pw; ++x) patch.at(y, x) = img.at(x0 + y, y0 + x);
      DegradedPair pair = double_jpeg(patch, spec);

      SampleRecord rec;
      rec.lq_path = "lq_" + std::to_string(sample_id) + ".pgm";
      rec.hq_path = "hq_" + std::to_string(sample_id) + ".pgm";
      rec.spec = spec;
      rec.src = src;
      rec.x0 = x0;
      rec.y0 = y0;
      rec.size = config.patch_size;
      write_image((fs::path(out_dir) / rec.lq_path).string(), pair.lq);
      write_image((fs::path(out_dir) / rec.hq_path).string(), pair.hq);
      records.push_back(std::move(rec));
      ++sample_id;
    }
  }
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), records);
  return records;
}

void write_manifest(const std::string& path, const std::vector<SampleRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write manifest: " + path);
  for (const auto& r : records) {
    json line = {
        {"lq", r.lq_path}, {"hq", r.hq_path},   {"qf1", r.spec.qf1},
        {"qf2", r.spec.qf2}, {"i", r.spec.row_offset}, {"j", r.spec.col_offset},
        {"src", r.src},    {"x0", r.x0},        {"y0", r.y0},
        {"size", r.size},
    };
    os << line.dump() << "\n";
  }
}

std::vector<SampleRecord> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path);
  std::vector<SampleRecord> records;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("bad manifest line: " + std::string(e.what()));
    }
    SampleRecord r;
    r.lq_path = j.at("lq").get<std::string>();
    r.hq_path = j.at("hq").get<std::string>();
    r.spec.qf1 = j.at("qf1").get<int>();
    r.spec.qf2 = j.at("qf2").get<int>();
    r.spec.row_offset = j.at("i").get<int>();
    r.spec.col_offset = j.at("j").get<int>();
    r.src = j.at("src").get<std::string>();
    r.x0 = j.at("x0").get<std::int64_t>();
    r.y0 = j.at("y0").get<std::int64_t>();
    r.size = j.at("size").get<std::int64_t>();
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<LoadedSample> load_samples(const std::string& manifest_path) {
  const fs::path dir = fs::path(manifest_path).parent_path();
  std::vector<LoadedSample> samples;
  for (auto& rec : read_manifest(manifest_path)) {
    LoadedSample s;
    s.lq = read_image((dir / rec.lq_path).string());
    s.hq = read_image((dir / rec.hq_path).string());
    s.record = std::move(rec);
    samples.push_back(std::move(s));
  }
  return samples;
}

Plane make_test_image(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<real> acc(static_cast<std::size_t>(h * w), 0);
  // Smooth gaussian blobs.
  const int blobs = 6 + static_cast<int>(rng.uniform_int(0, 4));
  for (int b = 0; b < blobs; ++b) {
    const real cy = rng.uniform() * static_cast<real>(h);
    const real cx = rng.uniform() * static_cast<real>(w);
    const real s = (real(0.05) + real(0.2) * rng.uniform()) * static_cast<real>(std::min(h, w));
    const real amp = (rng.uniform() * 2 - 1) * 90;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const real dy = (static_cast<real>(y) - cy) / s;
        const real dx = (static_cast<real>(x) - cx) / s;
        acc[static_cast<std::size_t>(y * w + x)] += amp * std::exp(-(dy * dy + dx * dx));
      }
  }
  // Oriented sinusoidal texture.
  const int waves = 3;
  for (int t = 0; t < waves; ++t) {
    const real theta = rng.uniform() * 3.14159265358979;
    const real freq = real(0.12) + real(0.5) * rng.uniform();
    const real amp = 8 + rng.uniform() * 18;
    const real ky = std::sin(theta) * freq, kx = std::cos(theta) * freq;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        acc[static_cast<std::size_t>(y * w + x)] +=
            amp * std::sin(ky * static_cast<real>(y) + kx * static_cast<real>(x));
  }
  // Hard edges from random half-planes.
  const int edges = 3;
  for (int t = 0; t < edges; ++t) {
    const real theta = rng.uniform() * 3.14159265358979;
    const real off = rng.uniform() * static_cast<real>(h + w);
    const real amp = (rng.uniform() * 2 - 1) * 55;
    const real ny = std::sin(theta), nx = std::cos(theta);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        if (ny * static_cast<real>(y) + nx * static_cast<real>(x) > off)
          acc[static_cast<std::size_t>(y * w + x)] += amp;
  }
  // Fine-grain texture: hashed per-pixel noise with a light 3x3 smoothing.
  // Without high-frequency content JPEG at mid quality is nearly lossless
  // and the degradation model has nothing to degrade.
  auto hash_noise = [&](std::int64_t y, std::int64_t x) {
    std::uint64_t v = seed * 0x9e3779b97f4a7c15ull ^
                      (static_cast<std::uint64_t>(y) << 32 ^ static_cast<std::uint64_t>(x));
    v ^= v >> 30;
    v *= 0xbf58476d1ce4e5b9ull;
    v ^= v >> 27;
    v *= 0x94d049bb133111ebull;
    v ^= v >> 31;
    return static_cast<real>(v >> 11) / real(9007199254740992.0) * 2 - 1;
  };
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      real n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          n += hash_noise(std::clamp<std::int64_t>(y + dy, 0, h - 1),
                          std::clamp<std::int64_t>(x + dx, 0, w - 1));
      acc[static_cast<std::size_t>(y * w + x)] += n / 9 * 40 + hash_noise(y, x) * 14;
    }
  Plane out(h, w);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const real v = 128 + acc[i] * real(0.6);
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp<real>(std::round(v), 0, 255));
  }
  return out;
}

}  // namespace oapt
