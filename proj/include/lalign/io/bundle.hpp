#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lalign/core/matrix.hpp"

namespace lalign {

// Labeled matrix of embedding vectors from one model.
struct EmbeddingSet {
  std::size_t dim = 0;
  std::size_t count = 0;
  Matrix vectors;                // count x dim
  std::vector<long> labels;      // empty in unlabeled mode
  std::string model_tag;

  bool has_labels() const { return !labels.empty(); }

  void validate() const {
    if (dim == 0 || count == 0) fail("InvalidSpec", "empty embedding set");
    if (vectors.rows() != count || vectors.cols() != dim)
      fail("ShapeMismatch", "vectors shape does not match dim/count");
    if (!labels.empty() && labels.size() != count)
      fail("ShapeMismatch", "labels length does not match count");
    if (!vectors.is_finite())
      fail("NonFiniteValue", "embedding set has non-finite entries");
  }
};

// Sample-aligned pair of embedding sets from the old and new models.
struct PairedEmbeddings {
  EmbeddingSet old_set;
  EmbeddingSet new_set;

  void validate() const {
    old_set.validate();
    new_set.validate();
    if (old_set.count != new_set.count)
      fail("Misaligned", "paired sets have different sample counts");
    if (old_set.has_labels() && new_set.has_labels() &&
        old_set.labels != new_set.labels)
      fail("Misaligned", "paired sets have different labels");
  }
};

// Round every entry to the nearest IEEE f32, so on-disk bundles (stored as
// f32) reload to the exact in-memory values.
inline void snap_to_f32(Matrix& m) {
  for (double& v : m.data()) v = static_cast<double>(static_cast<float>(v));
}

inline void snap_to_f32(EmbeddingSet& set) { snap_to_f32(set.vectors); }

inline void save_bundle(const EmbeddingSet& set, const std::filesystem::path& dir) {
  set.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  nlohmann::json manifest = {
      {"dim", set.dim},
      {"count", set.count},
      {"dtype", "f32le"},
      {"model_tag", set.model_tag},
      {"has_labels", set.has_labels()},
  };
  {
    std::ofstream f(dir / "manifest.json");
    if (!f) fail("IoFailure", "cannot write manifest.json in " + dir.string());
    f << manifest.dump(2) << "\n";
  }
  {
    std::ofstream f(dir / "vectors.bin", std::ios::binary);
    if (!f) fail("IoFailure", "cannot write vectors.bin in " + dir.string());
    std::vector<float> buf(set.count * set.dim);
    for (std::size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<float>(set.vectors.data()[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) fail("IoFailure", "short write to vectors.bin");
  }
  const auto labels_path = dir / "labels.txt";
  if (set.has_labels()) {
    std::ofstream f(labels_path);
    if (!f) fail("IoFailure", "cannot write labels.txt in " + dir.string());
    for (long y : set.labels) f << y << "\n";
  } else {
    std::filesystem::remove(labels_path, ec);
  }
}

inline EmbeddingSet load_bundle(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) fail("MissingFile", "missing " + manifest_path.string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail("ManifestMismatch", std::string("bad manifest.json: ") + e.what());
  }

  EmbeddingSet set;
  try {
    set.dim = manifest.at("dim").get<std::size_t>();
    set.count = manifest.at("count").get<std::size_t>();
    set.model_tag = manifest.value("model_tag", std::string());
    if (manifest.at("dtype").get<std::string>() != "f32le")
      fail("ManifestMismatch", "unsupported dtype");
  } catch (const nlohmann::json::exception& e) {
    fail("ManifestMismatch", std::string("manifest fields: ") + e.what());
  }
  const bool has_labels = manifest.value("has_labels", false);

  const auto vec_path = dir / "vectors.bin";
  std::ifstream vf(vec_path, std::ios::binary);
  if (!vf) fail("MissingFile", "missing " + vec_path.string());
  vf.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(vf.tellg());
  vf.seekg(0);
  const std::size_t expected = set.count * set.dim * sizeof(float);
  if (bytes != expected)
    fail("ManifestMismatch", "vectors.bin holds " + std::to_string(bytes) +
                                 " bytes, manifest implies " +
                                 std::to_string(expected));
  std::vector<float> buf(set.count * set.dim);
  vf.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(bytes));
  if (!vf) fail("IoFailure", "short read from vectors.bin");
  set.vectors = Matrix(set.count, set.dim);
  for (std::size_t i = 0; i < buf.size(); ++i)
    set.vectors.data()[i] = static_cast<double>(buf[i]);

  if (has_labels) {
    const auto labels_path = dir / "labels.txt";
    std::ifstream lf(labels_path);
    if (!lf) fail("MissingFile", "missing " + labels_path.string());
    std::string line;
    while (std::getline(lf, line)) {
      if (line.empty()) continue;
      set.labels.push_back(std::stol(line));
    }
    if (set.labels.size() != set.count)
      fail("ManifestMismatch", "labels.txt length does not match count");
  }
  set.validate();
  return set;
}

// CSV import for small tests: header `label,x0,x1,...`, one row per sample.
inline EmbeddingSet import_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail("MissingFile", "missing " + path.string());
  std::string line;
  if (!std::getline(f, line)) fail("ManifestMismatch", "empty csv");
  std::size_t dim = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {
        if (cell != "label") fail("ManifestMismatch", "csv header must start with 'label'");
        first = false;
      } else {
        ++dim;
      }
    }
  }
  if (dim == 0) fail("ManifestMismatch", "csv has no feature columns");
  std::vector<long> labels;
  Vector values;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    labels.push_back(std::stol(cell));
    std::size_t got = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++got;
    }
    if (got != dim) fail("ManifestMismatch", "csv row width mismatch");
  }
  EmbeddingSet set;
  set.dim = dim;
  set.count = labels.size();
  set.labels = std::move(labels);
  set.vectors = Matrix::from_rows(set.count, dim, std::move(values));
  set.model_tag = path.stem().string();
  set.validate();
  return set;
}

}  // namespace lalign
