#pragma once

#include "doa/array_signal.hpp"
#include "doa/binary_io.hpp"

#include <filesystem>
#include <vector>

namespace doa {

// Dataset container, all fields little-endian:
//   magic "DOADSET1" | u32 version | u32 noise convention
//   u64 M | u64 N | f64 gamma | i64 positions[M] | f64 grid[N] | u64 count
//   per sample:
//     u64 K | f64 snr_db | f64 sigma^2 | f64 freqs[K] | u64 bins[K]
//     c128 amplitudes[K] | c128 y[M]
// where c128 is an interleaved (re, im) pair of f64. A JSON manifest with
// the generation parameters sits next to the file as <path>.json.

inline constexpr io::Magic kDatasetMagic = {'D', 'O', 'A', 'D', 'S', 'E', 'T', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetFile {
  ArrayGeometry geometry;
  Index grid_size = 0;
  RVector grid;
  NoiseConvention noise = NoiseConvention::PerElement;
  std::vector<Sample> samples;

  Dictionary dictionary() const { return build_dictionary(geometry, grid_size); }
};

inline std::filesystem::path manifest_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

inline void write_dataset(const std::filesystem::path& path, const Dictionary& dic, const std::vector<Sample>& samples,
                          NoiseConvention noise = NoiseConvention::PerElement) {
  io::atomic_write(path, [&](io::BinaryWriter& out) {
    out.bytes(kDatasetMagic.data(), kDatasetMagic.size());
    out.u32(kDatasetVersion);
    out.u32(noise == NoiseConvention::PerElement ? 0 : 1);
    out.u64(static_cast<std::uint64_t>(dic.rows()));
    out.u64(static_cast<std::uint64_t>(dic.grid_size()));
    out.f64(dic.geometry().gamma);
    for (int p : dic.geometry().positions) out.i64(p);
    for (Index i = 0; i < dic.grid_size(); ++i) out.f64(dic.grid()[i]);
    out.u64(samples.size());
    for (const Sample& s : samples) {
      require(s.measurement.size() == dic.rows(), ErrorKind::Contract, "sample length does not match dictionary");
      const auto k = s.scene.true_freqs.size();
      out.u64(k);
      out.f64(s.snr_db);
      out.f64(s.noise_sigma_sq);
      for (double f : s.scene.true_freqs) out.f64(f);
      for (int b : s.scene.grid_indices) out.u64(static_cast<std::uint64_t>(b));
      for (const Complex& a : s.scene.amplitudes) out.c128(a);
      out.complex_array(s.measurement.data(), s.measurement.size());
    }
  });
}

inline DatasetFile read_dataset(const std::filesystem::path& path) {
  io::BinaryReader in(path);
  io::expect_magic(in, kDatasetMagic, "dataset");
  const auto version = in.u32();
  require(version == kDatasetVersion, ErrorKind::Io, "unsupported dataset version " + std::to_string(version));
  DatasetFile file;
  file.noise = in.u32() == 0 ? NoiseConvention::PerElement : NoiseConvention::PaperLiteral;
  const auto m = static_cast<Index>(in.u64());
  file.grid_size = static_cast<Index>(in.u64());
  require(m >= 2 && m < (1 << 20) && file.grid_size > m && file.grid_size < (1 << 24), ErrorKind::Io,
          "implausible dataset dimensions");
  file.geometry.gamma = in.f64();
  file.geometry.positions.resize(static_cast<std::size_t>(m));
  for (auto& p : file.geometry.positions) p = static_cast<int>(in.i64());
  file.geometry.kind = file.geometry.max_position() + 1 == m ? ArrayKind::Ula : ArrayKind::Sla;
  validate_geometry(file.geometry);
  file.grid.resize(file.grid_size);
  for (Index i = 0; i < file.grid_size; ++i) file.grid[i] = in.f64();

  const auto count = in.u64();
  file.samples.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample s;
    const auto k = in.u64();
    require(k >= 1 && k <= static_cast<std::uint64_t>(file.grid_size), ErrorKind::Io, "corrupt target count");
    s.snr_db = in.f64();
    s.noise_sigma_sq = in.f64();
    s.scene.true_freqs.resize(k);
    for (auto& f : s.scene.true_freqs) f = in.f64();
    s.scene.grid_indices.resize(k);
    for (auto& b : s.scene.grid_indices) {
      b = static_cast<int>(in.u64());
      require(b >= 0 && b < file.grid_size, ErrorKind::Io, "corrupt grid index");
    }
    s.scene.amplitudes.resize(k);
    for (auto& a : s.scene.amplitudes) a = in.c128();
    s.scene.sparse_x = CVector::Zero(file.grid_size);
    for (std::size_t t = 0; t < k; ++t) s.scene.sparse_x[s.scene.grid_indices[t]] = s.scene.amplitudes[t];
    s.measurement.resize(m);
    in.complex_array(s.measurement.data(), m);
    file.samples.push_back(std::move(s));
  }
  require(in.at_end(), ErrorKind::Io, "trailing bytes in dataset file");
  return file;
}

inline nlohmann::json dataset_manifest(const Dictionary& dic, const DatasetSpec& spec,
                                       const std::vector<double>& snr_levels) {
  nlohmann::json doc;
  doc["format"] = "doa-dataset";
  doc["version"] = kDatasetVersion;
  doc["seed"] = spec.seed;
  doc["count"] = spec.count;
  doc["min_sep"] = spec.min_sep;
  doc["k_range"] = {spec.k_range.min, spec.k_range.max};
  doc["snr_db"] = snr_levels;
  doc["noise_convention"] = spec.noise == NoiseConvention::PerElement ? "per_element" : "paper_literal";
  doc["elements"] = dic.rows();
  doc["grid_size"] = dic.grid_size();
  doc["gamma"] = dic.geometry().gamma;
  doc["positions"] = dic.geometry().positions;
  doc["dictionary_id"] = dic.id();
  return doc;
}

}  // namespace doa
