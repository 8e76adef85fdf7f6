#pragma once

// File formats.
//
//   Point clouds   ASCII PLY, "vertex" element with x, y, z and an optional
//                  "attn" property. Written with `property double` and the
//                  shortest decimal that round-trips each value.
//   Detections     JSON array of {"label", "score", "center", "size", "yaw"};
//                  unknown or missing fields are rejected with a JSON pointer.
//   Indices        text, one zero-based index per line.
//   Attention      text, one weight per line (alternative to the PLY column).
//   Parameters     JSON object {"see_query", "decoder", "head"}; matrices are
//                  {"rows", "cols", "data"} with row-major data.
//   Metrics        CSV "class,ap" rows followed by a final "mean,<mAP>" row.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "agdet/core.hpp"
#include "agdet/eval.hpp"
#include "agdet/qdagg.hpp"
#include "json.hpp"

namespace agdet::io {

using nlohmann::json;

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write to " + path.string() + " failed");
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

inline std::optional<std::size_t> parse_size(std::string_view tok) {
  std::size_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

struct PlyData {
  PointCloud cloud;
  std::optional<AttentionField> attention;
};

inline void write_ply(std::ostream& out, const PointCloud& cloud, const AttentionField* attention = nullptr) {
  if (attention != nullptr) attention->check_paired(cloud);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n";
  if (attention != nullptr) out << "property double attn\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud[i];
    out << format_double(p[0]) << ' ' << format_double(p[1]) << ' ' << format_double(p[2]);
    if (attention != nullptr) out << ' ' << format_double((*attention)[i]);
    out << '\n';
  }
}

inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
                      const AttentionField* attention = nullptr) {
  auto out = detail::open_out(path);
  write_ply(out, cloud, attention);
  detail::finish(out, path);
}

inline PlyData read_ply(std::istream& in) {
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
  };

  std::string line;
  std::size_t lineno = 0;
  const auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || line != "ply") throw ParseFailure(ErrorCode::MalformedHeader, lineno, "missing 'ply' magic");

  std::vector<Element> elements;
  bool saw_format = false;
  bool saw_end = false;
  while (next_line()) {
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() != 3 || tok[1] != "ascii" || tok[2] != "1.0") {
        throw ParseFailure(ErrorCode::MalformedHeader, lineno, "only 'format ascii 1.0' is supported");
      }
      saw_format = true;
    } else if (tok[0] == "element") {
      const auto count = tok.size() == 3 ? detail::parse_size(tok[2]) : std::nullopt;
      if (!count) throw ParseFailure(ErrorCode::MalformedHeader, lineno, "bad element declaration");
      elements.push_back({std::string(tok[1]), *count, {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseFailure(ErrorCode::MalformedHeader, lineno, "property before any element");
      if (tok.size() >= 2 && tok[1] == "list") {
        if (elements.back().name == "vertex") {
          throw ParseFailure(ErrorCode::MalformedHeader, lineno, "list properties on vertices are not supported");
        }
        elements.back().properties.emplace_back("<list>");
      } else if (tok.size() == 3) {
        elements.back().properties.emplace_back(tok[2]);
      } else {
        throw ParseFailure(ErrorCode::MalformedHeader, lineno, "bad property declaration");
      }
    } else if (tok[0] == "end_header") {
      saw_end = true;
      break;
    } else {
      throw ParseFailure(ErrorCode::MalformedHeader, lineno, "unknown header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!saw_format) throw ParseFailure(ErrorCode::MalformedHeader, lineno, "missing format line");
  if (!saw_end) throw ParseFailure(ErrorCode::MalformedHeader, lineno, "missing end_header");

  std::optional<std::vector<Vec3>> points;
  std::optional<std::vector<double>> attention;
  for (const Element& el : elements) {
    if (el.name != "vertex") {
      for (std::size_t i = 0; i < el.count; ++i) {
        if (!next_line()) {
          throw ParseFailure(ErrorCode::VertexCountMismatch, lineno + 1, "file ended inside element '" + el.name + "'");
        }
      }
      continue;
    }
    long ix = -1, iy = -1, iz = -1, ia = -1;
    for (std::size_t p = 0; p < el.properties.size(); ++p) {
      const auto& name = el.properties[p];
      if (name == "x") ix = static_cast<long>(p);
      if (name == "y") iy = static_cast<long>(p);
      if (name == "z") iz = static_cast<long>(p);
      if (name == "attn") ia = static_cast<long>(p);
    }
    if (ix < 0 || iy < 0 || iz < 0) {
      throw ParseFailure(ErrorCode::MalformedHeader, std::size_t{0}, "vertex element lacks x, y or z");
    }
    std::vector<Vec3> pts;
    std::vector<double> attn;
    pts.reserve(el.count);
    for (std::size_t i = 0; i < el.count; ++i) {
      if (!next_line()) {
        throw ParseFailure(ErrorCode::VertexCountMismatch, lineno + 1,
                           "header declares " + std::to_string(el.count) + " vertices but only " + std::to_string(i) +
                               " rows follow");
      }
      const auto tok = detail::split_ws(line);
      if (tok.size() != el.properties.size()) {
        throw ParseFailure(ErrorCode::ParseError, lineno,
                           "expected " + std::to_string(el.properties.size()) + " values, got " +
                               std::to_string(tok.size()));
      }
      std::vector<double> row(tok.size());
      for (std::size_t t = 0; t < tok.size(); ++t) {
        const auto v = detail::parse_double(tok[t]);
        if (!v) throw ParseFailure(ErrorCode::ParseError, lineno, "not a number: '" + std::string(tok[t]) + "'");
        if (!std::isfinite(*v)) throw ParseFailure(ErrorCode::ParseError, lineno, "non-finite value");
        row[t] = *v;
      }
      pts.push_back({row[ix], row[iy], row[iz]});
      if (ia >= 0) attn.push_back(row[ia]);
    }
    points = std::move(pts);
    if (ia >= 0) attention = std::move(attn);
  }
  while (next_line()) {
    if (!detail::split_ws(line).empty()) {
      throw ParseFailure(ErrorCode::VertexCountMismatch, lineno, "unexpected data after the declared elements");
    }
  }
  if (!points) throw ParseFailure(ErrorCode::MalformedHeader, std::size_t{0}, "no vertex element");
  if (points->empty()) throw ParseFailure(ErrorCode::ParseError, std::size_t{0}, "vertex element is empty");

  PointCloud cloud(std::move(*points));
  std::optional<AttentionField> field;
  if (attention) field.emplace(cloud, std::move(*attention));
  return {std::move(cloud), std::move(field)};
}

inline PlyData read_ply(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_ply(in);
}

// ---------------------------------------------------------------------------
// Plain text: indices and attention
// ---------------------------------------------------------------------------

inline void write_indices(const std::filesystem::path& path, const SampleSet& samples) {
  auto out = detail::open_out(path);
  for (std::size_t idx : samples.indices()) out << idx << '\n';
  detail::finish(out, path);
}

inline std::vector<std::size_t> read_indices(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<std::size_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const auto v = tok.size() == 1 ? detail::parse_size(tok[0]) : std::nullopt;
    if (!v) throw ParseFailure(ErrorCode::ParseError, lineno, "expected one nonnegative integer");
    out.push_back(*v);
  }
  return out;
}

inline std::vector<double> read_attention_text(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const auto v = tok.size() == 1 ? detail::parse_double(tok[0]) : std::nullopt;
    if (!v) throw ParseFailure(ErrorCode::ParseError, lineno, "expected one number");
    if (!std::isfinite(*v)) throw ParseFailure(ErrorCode::ParseError, lineno, "non-finite value");
    out.push_back(*v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detections JSON
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void schema_fail(const std::string& pointer, const std::string& what) {
  throw ParseFailure(ErrorCode::SchemaError, pointer, what);
}

inline double number_at(const json& j, const std::string& pointer) {
  if (!j.is_number()) schema_fail(pointer, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_fail(pointer, "non-finite number");
  return v;
}

inline Vec3 vec3_at(const json& j, const std::string& pointer) {
  if (!j.is_array() || j.size() != 3) schema_fail(pointer, "expected an array of 3 numbers");
  return {number_at(j[0], pointer + "/0"), number_at(j[1], pointer + "/1"), number_at(j[2], pointer + "/2")};
}

inline json vec3_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace detail

inline json detections_to_json(const DetectionSet& set) {
  json arr = json::array();
  for (const Detection& d : set) {
    arr.push_back({{"label", d.label},
                   {"score", d.score},
                   {"center", detail::vec3_json(d.box.center())},
                   {"size", detail::vec3_json(d.box.size())},
                   {"yaw", d.box.yaw()}});
  }
  return arr;
}

inline DetectionSet detections_from_json(const json& j) {
  if (!j.is_array()) detail::schema_fail("", "expected an array of detections");
  DetectionSet out;
  static const char* const kFields[] = {"label", "score", "center", "size", "yaw"};
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string base = "/" + std::to_string(i);
    const json& item = j[i];
    if (!item.is_object()) detail::schema_fail(base, "expected an object");
    for (const auto& [key, _] : item.items()) {
      if (std::ranges::find(kFields, key) == std::end(kFields)) detail::schema_fail(base + "/" + key, "unknown field");
    }
    for (const char* field : kFields) {
      if (!item.contains(field)) detail::schema_fail(base + "/" + field, "missing field");
    }
    const json& label = item["label"];
    if (!label.is_number_integer() || label.get<long long>() < 0) {
      detail::schema_fail(base + "/label", "expected a nonnegative integer");
    }
    const double score = detail::number_at(item["score"], base + "/score");
    if (score < 0.0 || score > 1.0) detail::schema_fail(base + "/score", "score must lie in [0, 1]");
    const Vec3 center = detail::vec3_at(item["center"], base + "/center");
    const Vec3 size = detail::vec3_at(item["size"], base + "/size");
    for (int a = 0; a < 3; ++a) {
      if (!(size[a] > 0.0)) detail::schema_fail(base + "/size/" + std::to_string(a), "size must be positive");
    }
    const double yaw = detail::number_at(item["yaw"], base + "/yaw");
    if (yaw < -std::numbers::pi || yaw >= std::numbers::pi) detail::schema_fail(base + "/yaw", "yaw must lie in [-pi, pi)");
    out.push_back({Box3D(center, size, yaw), static_cast<int>(label.get<long long>()), score});
  }
  return out;
}

inline json parse_json_file(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseFailure(ErrorCode::ParseError, std::size_t{0}, path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
  detail::finish(out, path);
}

inline void write_detections(const std::filesystem::path& path, const DetectionSet& set) {
  write_json_file(path, detections_to_json(set));
}

inline DetectionSet read_detections(const std::filesystem::path& path) {
  return detections_from_json(parse_json_file(path));
}

// ---------------------------------------------------------------------------
// Parameters JSON
// ---------------------------------------------------------------------------

namespace detail {

inline const json& field_at(const json& obj, const char* key, const std::string& pointer) {
  if (!obj.is_object()) schema_fail(pointer, "expected an object");
  if (!obj.contains(key)) schema_fail(pointer + "/" + key, "missing field");
  return obj[key];
}

inline std::vector<double> numbers_at(const json& j, const std::string& pointer) {
  if (!j.is_array()) schema_fail(pointer, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number_at(j[i], pointer + "/" + std::to_string(i)));
  return out;
}

inline std::size_t count_at(const json& j, const std::string& pointer) {
  if (!j.is_number_unsigned()) schema_fail(pointer, "expected a nonnegative integer");
  return j.get<std::size_t>();
}

}  // namespace detail

inline json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

inline Matrix matrix_from_json(const json& j, const std::string& pointer) {
  const std::size_t rows = detail::count_at(detail::field_at(j, "rows", pointer), pointer + "/rows");
  const std::size_t cols = detail::count_at(detail::field_at(j, "cols", pointer), pointer + "/cols");
  auto data = detail::numbers_at(detail::field_at(j, "data", pointer), pointer + "/data");
  if (data.size() != rows * cols) detail::schema_fail(pointer + "/data", "length does not equal rows*cols");
  return Matrix(rows, cols, std::move(data));
}

inline json mlp_to_json(const MlpParams& p) {
  return {{"w1", matrix_to_json(p.w1)}, {"b1", p.b1}, {"w2", matrix_to_json(p.w2)}, {"b2", p.b2}};
}

inline MlpParams mlp_from_json(const json& j, const std::string& pointer) {
  MlpParams p{matrix_from_json(detail::field_at(j, "w1", pointer), pointer + "/w1"),
              detail::numbers_at(detail::field_at(j, "b1", pointer), pointer + "/b1"),
              matrix_from_json(detail::field_at(j, "w2", pointer), pointer + "/w2"),
              detail::numbers_at(detail::field_at(j, "b2", pointer), pointer + "/b2")};
  try {
    p.validate();
  } catch (const Error& e) {
    detail::schema_fail(pointer, e.what());
  }
  return p;
}

inline json attention_to_json(const AttentionParams& p) {
  return {{"heads", p.heads},
          {"wq", matrix_to_json(p.wq)},
          {"wk", matrix_to_json(p.wk)},
          {"wv", matrix_to_json(p.wv)},
          {"wo", matrix_to_json(p.wo)}};
}

inline AttentionParams attention_from_json(const json& j, const std::string& pointer) {
  AttentionParams p{matrix_from_json(detail::field_at(j, "wq", pointer), pointer + "/wq"),
                    matrix_from_json(detail::field_at(j, "wk", pointer), pointer + "/wk"),
                    matrix_from_json(detail::field_at(j, "wv", pointer), pointer + "/wv"),
                    matrix_from_json(detail::field_at(j, "wo", pointer), pointer + "/wo"),
                    detail::count_at(detail::field_at(j, "heads", pointer), pointer + "/heads")};
  try {
    p.validate();
  } catch (const Error& e) {
    detail::schema_fail(pointer, e.what());
  }
  return p;
}

struct ModelParams {
  SeeQueryState see_query;
  DecoderParams decoder;
  HeadParams head;
};

inline json params_to_json(const ModelParams& m) {
  json layers = json::array();
  for (const auto& layer : m.decoder.layers) {
    layers.push_back({{"self_attn", attention_to_json(layer.self_attn)}, {"cross_attn", attention_to_json(layer.cross_attn)}});
  }
  return {{"see_query", {{"q_see", m.see_query.q_see}, {"mlp", mlp_to_json(m.see_query.mlp)}}},
          {"decoder", {{"layers", layers}}},
          {"head", {{"cls", matrix_to_json(m.head.cls)}, {"box", matrix_to_json(m.head.box)}}}};
}

inline ModelParams params_from_json(const json& j) {
  const json& sq = detail::field_at(j, "see_query", "");
  SeeQueryState see{detail::numbers_at(detail::field_at(sq, "q_see", "/see_query"), "/see_query/q_see"),
                    mlp_from_json(detail::field_at(sq, "mlp", "/see_query"), "/see_query/mlp")};
  try {
    see.validate();
  } catch (const Error& e) {
    detail::schema_fail("/see_query", e.what());
  }

  const json& layers = detail::field_at(detail::field_at(j, "decoder", ""), "layers", "/decoder");
  if (!layers.is_array()) detail::schema_fail("/decoder/layers", "expected an array");
  DecoderParams decoder;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = "/decoder/layers/" + std::to_string(i);
    decoder.layers.push_back({attention_from_json(detail::field_at(layers[i], "self_attn", base), base + "/self_attn"),
                              attention_from_json(detail::field_at(layers[i], "cross_attn", base), base + "/cross_attn")});
  }

  const json& h = detail::field_at(j, "head", "");
  HeadParams head{matrix_from_json(detail::field_at(h, "cls", "/head"), "/head/cls"),
                  matrix_from_json(detail::field_at(h, "box", "/head"), "/head/box")};
  try {
    head.validate();
  } catch (const Error& e) {
    detail::schema_fail("/head", e.what());
  }
  return {std::move(see), std::move(decoder), std::move(head)};
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

/// One row per class in label order, then the mean row.
inline void write_metrics_csv(std::ostream& out, const MapResult& result, const EvalConfig& cfg) {
  out << "class,ap\n";
  for (const auto& [label, ap] : result.per_class) out << cfg.class_name(label) << ',' << format_double(ap) << '\n';
  out << "mean," << format_double(result.mean) << '\n';
}

inline void write_metrics_csv(const std::filesystem::path& path, const MapResult& result, const EvalConfig& cfg) {
  auto out = detail::open_out(path);
  write_metrics_csv(out, result, cfg);
  detail::finish(out, path);
}

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

struct FileBundle {
  std::filesystem::path cloud_path;
  std::optional<std::filesystem::path> attention_path;
  std::optional<std::filesystem::path> gt_path;
  std::optional<std::filesystem::path> preds_path;

  std::optional<PointCloud> cloud;
  std::optional<AttentionField> attention;
  std::optional<DetectionSet> gt;
  std::optional<DetectionSet> preds;
};

/// Loads every path that is set. A separate attention file overrides the PLY
/// column; its length must match the cloud.
inline void load(FileBundle& bundle) {
  PlyData ply = read_ply(bundle.cloud_path);
  bundle.cloud = std::move(ply.cloud);
  bundle.attention = std::move(ply.attention);
  if (bundle.attention_path) {
    auto weights = read_attention_text(*bundle.attention_path);
    if (weights.size() != bundle.cloud->size()) {
      throw ParseFailure(ErrorCode::VertexCountMismatch, std::size_t{0},
                         bundle.attention_path->string() + " has " + std::to_string(weights.size()) +
                             " weights for " + std::to_string(bundle.cloud->size()) + " points");
    }
    bundle.attention.emplace(*bundle.cloud, std::move(weights));
  }
  if (bundle.gt_path) bundle.gt = read_detections(*bundle.gt_path);
  if (bundle.preds_path) bundle.preds = read_detections(*bundle.preds_path);
}

/// Writes `<stem>.ply` (with attention) and `<stem>.gt.json`.
inline void write_scene(const std::filesystem::path& stem, const Scene& scene) {
  write_ply(std::filesystem::path(stem.string() + ".ply"), scene.cloud, &scene.attention);
  write_detections(std::filesystem::path(stem.string() + ".gt.json"), scene.gt);
}

}  // namespace agdet::io
