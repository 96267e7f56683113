#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "flicker/csv.hpp"
#include "flicker/error.hpp"

namespace flicker {

static_assert(std::endian::native == std::endian::little, "EMBX I/O assumes a little-endian host");

/// Dense float32 vectors keyed by unit id (sentence or participant).
///
/// Invariants: one row per id, ids unique, and when `normalized` is set every
/// row has unit L2 norm to within kNormTolerance.
struct EmbeddingMatrix {
  static constexpr double kNormTolerance = 1e-4;

  std::string model_tag;
  std::uint32_t dim = 0;
  bool normalized = false;
  std::vector<std::string> ids;
  std::vector<float> values;  // row-major, ids.size() x dim

  std::size_t rows() const { return ids.size(); }

  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }

  /// Rows promoted to float64 for downstream statistics.
  Eigen::MatrixXd to_matrix() const {
    Eigen::MatrixXd m(rows(), dim);
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::uint32_t j = 0; j < dim; ++j) m(i, j) = values[i * dim + j];
    return m;
  }

  static EmbeddingMatrix from_matrix(const Eigen::MatrixXd& m, std::vector<std::string> ids,
                                     std::string model_tag, bool normalized = false) {
    if (static_cast<std::size_t>(m.rows()) != ids.size())
      throw internal_error("embedding matrix row count does not match id count");
    EmbeddingMatrix e;
    e.model_tag = std::move(model_tag);
    e.dim = static_cast<std::uint32_t>(m.cols());
    e.normalized = normalized;
    e.ids = std::move(ids);
    e.values.resize(e.ids.size() * e.dim);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) e.values[i * e.dim + j] = static_cast<float>(m(i, j));
    return e;
  }

  std::unordered_map<std::string, std::size_t> index() const {
    std::unordered_map<std::string, std::size_t> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], i);
    return out;
  }
};

namespace detail {

inline double row_norm(std::span<const float> r) {
  double s = 0.0;
  for (float v : r) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

template <class T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <class T>
T get(std::string_view& buf, const std::string& path) {
  if (buf.size() < sizeof(T)) throw input_error("truncated EMBX header: " + path);
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  buf.remove_prefix(sizeof(T));
  return v;
}

}  // namespace detail

/// Companion id file: same path with the extension replaced by ".ids".
inline std::filesystem::path ids_path_for(const std::filesystem::path& embx) {
  auto p = embx;
  p.replace_extension(".ids");
  return p;
}

inline void validate(const EmbeddingMatrix& m) {
  if (m.dim == 0) throw input_error("embedding dim must be positive");
  if (m.values.size() != m.ids.size() * m.dim) throw input_error("embedding payload size mismatch");
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (!seen.insert(m.ids[i]).second) throw input_error("duplicate embedding id '" + m.ids[i] + "'");
    for (float v : m.row(i))
      if (!std::isfinite(v))
        throw input_error("non-finite value in embedding row " + std::to_string(i) + " (id '" + m.ids[i] + "')");
    if (m.normalized) {
      const double nrm = detail::row_norm(m.row(i));
      if (std::fabs(nrm - 1.0) > EmbeddingMatrix::kNormTolerance)
        throw input_error("row " + std::to_string(i) + " (id '" + m.ids[i] +
                          "') is not unit-norm in a normalized matrix (norm " + csv::num(nrm) + ")");
    }
  }
}

/// EMBX v1: "EMBX", u32 version, u32 count, u32 dim, u8 normalized,
/// u16 tag length, tag bytes, count*dim float32; all little-endian.
inline void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  validate(m);
  if (m.model_tag.size() > 0xFFFF) throw input_error("model tag too long");
  std::string buf = "EMBX";
  detail::put<std::uint32_t>(buf, 1);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(m.rows()));
  detail::put<std::uint32_t>(buf, m.dim);
  detail::put<std::uint8_t>(buf, m.normalized ? 1 : 0);
  detail::put<std::uint16_t>(buf, static_cast<std::uint16_t>(m.model_tag.size()));
  buf += m.model_tag;
  buf.append(reinterpret_cast<const char*>(m.values.data()), m.values.size() * sizeof(float));
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  std::ofstream ids(ids_path_for(path), std::ios::binary);
  if (!ids) throw input_error("cannot write " + ids_path_for(path).string());
  for (const auto& id : m.ids) ids << id << '\n';
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  const std::string ps = path.string();
  if (!std::filesystem::exists(path)) throw input_error("embedding file not found: " + ps);
  const std::string data = csv::read_file(path);
  std::string_view buf = data;
  if (buf.size() < 4 || buf.substr(0, 4) != "EMBX") throw input_error("bad magic (expected EMBX): " + ps);
  buf.remove_prefix(4);
  const auto version = detail::get<std::uint32_t>(buf, ps);
  if (version != 1) throw input_error("unsupported EMBX version " + std::to_string(version) + ": " + ps);
  EmbeddingMatrix m;
  const auto count = detail::get<std::uint32_t>(buf, ps);
  m.dim = detail::get<std::uint32_t>(buf, ps);
  const auto norm = detail::get<std::uint8_t>(buf, ps);
  if (norm > 1) throw input_error("normalized flag must be 0 or 1: " + ps);
  m.normalized = norm == 1;
  const auto tag_len = detail::get<std::uint16_t>(buf, ps);
  if (buf.size() < tag_len) throw input_error("truncated EMBX model tag: " + ps);
  m.model_tag = std::string(buf.substr(0, tag_len));
  buf.remove_prefix(tag_len);
  if (m.dim == 0) throw input_error("EMBX dim must be positive: " + ps);

  const std::size_t expected = static_cast<std::size_t>(count) * m.dim * sizeof(float);
  if (buf.size() < expected)
    throw input_error("truncated EMBX payload: expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(buf.size()) + ": " + ps);
  if (buf.size() > expected) throw input_error("trailing bytes after EMBX payload: " + ps);
  m.values.resize(static_cast<std::size_t>(count) * m.dim);
  std::memcpy(m.values.data(), buf.data(), expected);

  const auto ids_file = ids_path_for(path);
  std::ifstream in(ids_file, std::ios::binary);
  if (!in) throw input_error("embedding id file not found: " + ids_file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    m.ids.push_back(line);
  }
  if (m.ids.size() != count)
    throw input_error("id file has " + std::to_string(m.ids.size()) + " lines but EMBX has " +
                      std::to_string(count) + " rows: " + ids_file.string());
  validate(m);
  return m;
}

/// Scales every row to unit L2 norm. Rows are normalized in float64 and
/// rounded once to float32.
inline EmbeddingMatrix l2_normalize_rows(EmbeddingMatrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const double nrm = detail::row_norm(r);
    if (nrm == 0.0) throw input_error("cannot normalize zero row (id '" + m.ids[i] + "')");
    for (float& v : r) v = static_cast<float>(static_cast<double>(v) / nrm);
  }
  m.normalized = true;
  return m;
}

}  // namespace flicker
