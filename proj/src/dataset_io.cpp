#include "graphfl/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "json.hpp"

namespace graphfl::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

class LineReader {
 public:
  explicit LineReader(const fs::path& path) : path_(path), in_(path) {
    if (!in_) throw DataError(path.string(), 0, "cannot open file");
  }

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.string(), line_no_, what);
  }

  std::size_t line_no() const noexcept { return line_no_; }

  template <typename T>
  T parse_int(std::string_view field, const char* what) const {
    field = trim(field);
    T value{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      fail(std::string("non-integer ") + what + " '" + std::string(field) + "'");
    }
    return value;
  }

  double parse_real(std::string_view field) const {
    field = trim(field);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      fail("non-numeric feature '" + std::string(field) + "'");
    }
    return value;
  }

 private:
  fs::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

void expect_header(LineReader& reader, const std::string& expected_prefix) {
  std::string line;
  if (!reader.next(line)) reader.fail("missing header '" + expected_prefix + "'");
  if (trim(line).substr(0, expected_prefix.size()) != expected_prefix) {
    reader.fail("expected header starting with '" + expected_prefix + "'");
  }
}

std::string format_real(double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(len));
}

}  // namespace

graph::GraphDataset load_dataset(const fs::path& dir, IngestStats* stats) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream manifest_in(manifest_path);
  if (!manifest_in) throw DataError(manifest_path.string(), 0, "missing file");
  json manifest;
  try {
    manifest = json::parse(manifest_in);
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string(), 0, std::string("invalid JSON: ") + e.what());
  }
  std::size_t n = 0, d = 0, k = 0;
  std::string name;
  try {
    n = manifest.at("num_nodes").get<std::size_t>();
    d = manifest.at("num_features").get<std::size_t>();
    k = manifest.at("num_classes").get<std::size_t>();
    name = manifest.value("name", dir.filename().string());
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string(), 0, std::string("bad manifest: ") + e.what());
  }

  IngestStats local_stats;
  std::vector<std::pair<NodeId, NodeId>> edges;
  {
    LineReader reader(dir / "edges.csv");
    expect_header(reader, "src,dst");
    std::vector<std::pair<NodeId, NodeId>> raw;
    std::string line;
    while (reader.next(line)) {
      if (trim(line).empty()) continue;
      const auto fields = split(line, ',');
      if (fields.size() != 2) reader.fail("expected 2 fields, found " + std::to_string(fields.size()));
      const auto u = reader.parse_int<NodeId>(fields[0], "node id");
      const auto v = reader.parse_int<NodeId>(fields[1], "node id");
      if (u >= n || v >= n) reader.fail("node id out of range [0, " + std::to_string(n) + ")");
      if (u == v) {
        ++local_stats.self_loops;
        continue;
      }
      raw.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(raw.begin(), raw.end());
    const auto last = std::unique(raw.begin(), raw.end());
    local_stats.duplicate_edges = static_cast<std::size_t>(raw.end() - last);
    raw.erase(last, raw.end());
    edges = std::move(raw);
  }

  DenseMatrix features(n, d);
  {
    LineReader reader(dir / "features.csv");
    expect_header(reader, "node");
    std::vector<bool> seen(n, false);
    std::string line;
    while (reader.next(line)) {
      if (trim(line).empty()) continue;
      const auto fields = split(line, ',');
      if (fields.size() != d + 1) {
        reader.fail("expected " + std::to_string(d + 1) + " fields, found " +
                    std::to_string(fields.size()));
      }
      const auto v = reader.parse_int<NodeId>(fields[0], "node id");
      if (v >= n) reader.fail("node id out of range [0, " + std::to_string(n) + ")");
      if (seen[v]) reader.fail("duplicate feature row for node " + std::to_string(v));
      seen[v] = true;
      auto row = features.row(v);
      for (std::size_t j = 0; j < d; ++j) row[j] = reader.parse_real(fields[j + 1]);
    }
    const auto missing = std::find(seen.begin(), seen.end(), false);
    if (missing != seen.end()) {
      throw DataError((dir / "features.csv").string(), 0,
                      "no feature row for node " + std::to_string(missing - seen.begin()));
    }
  }

  std::vector<ClassId> labels(n, 0);
  {
    LineReader reader(dir / "labels.csv");
    expect_header(reader, "node,label");
    std::vector<bool> seen(n, false);
    std::string line;
    while (reader.next(line)) {
      if (trim(line).empty()) continue;
      const auto fields = split(line, ',');
      if (fields.size() != 2) reader.fail("expected 2 fields, found " + std::to_string(fields.size()));
      const auto v = reader.parse_int<NodeId>(fields[0], "node id");
      const auto y = reader.parse_int<ClassId>(fields[1], "label");
      if (v >= n) reader.fail("node id out of range [0, " + std::to_string(n) + ")");
      if (y < 0 || static_cast<std::size_t>(y) >= k) {
        reader.fail("label " + std::to_string(y) + " out of range [0, " + std::to_string(k) + ")");
      }
      if (seen[v]) reader.fail("duplicate label for node " + std::to_string(v));
      seen[v] = true;
      labels[v] = y;
    }
    const auto missing = std::find(seen.begin(), seen.end(), false);
    if (missing != seen.end()) {
      throw DataError((dir / "labels.csv").string(), 0,
                      "no label for node " + std::to_string(missing - seen.begin()));
    }
  }

  if (stats) *stats = local_stats;
  return graph::GraphDataset::from_edges(std::move(name), k, n, edges, std::move(features),
                                         std::move(labels));
}

void write_dataset(const graph::GraphDataset& g, const fs::path& dir) {
  fs::create_directories(dir);
  {
    json manifest = {{"num_nodes", g.num_nodes()},
                     {"num_features", g.num_features()},
                     {"num_classes", g.num_classes()},
                     {"name", g.name()}};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "edges.csv");
    out << "src,dst\n";
    for (auto [u, v] : g.edge_list()) out << u << ',' << v << '\n';
  }
  {
    std::ofstream out(dir / "features.csv");
    out << "node";
    for (std::size_t j = 0; j < g.num_features(); ++j) out << ",f" << j;
    out << '\n';
    std::string line;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      line = std::to_string(v);
      for (double x : g.features().row(v)) {
        line += ',';
        line += format_real(x);
      }
      line += '\n';
      out << line;
    }
  }
  {
    std::ofstream out(dir / "labels.csv");
    out << "node,label\n";
    for (std::size_t v = 0; v < g.num_nodes(); ++v) out << v << ',' << g.labels()[v] << '\n';
  }
}

LinqsDataset load_linqs(const fs::path& content, const fs::path& cites, const std::string& name) {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> class_of;
  std::unordered_map<std::string, NodeId> index;
  std::size_t d = 0;
  {
    LineReader reader(content);
    std::string line;
    while (reader.next(line)) {
      if (trim(line).empty()) continue;
      const auto fields = split_whitespace(line);
      if (fields.size() < 3) reader.fail("expected '<id> <features...> <class>'");
      if (d == 0) d = fields.size() - 2;
      if (fields.size() - 2 != d) {
        reader.fail("expected " + std::to_string(d) + " features, found " +
                    std::to_string(fields.size() - 2));
      }
      std::string id(fields.front());
      if (!index.emplace(id, static_cast<NodeId>(ids.size())).second) {
        reader.fail("duplicate paper id '" + id + "'");
      }
      std::vector<double> row(d);
      for (std::size_t j = 0; j < d; ++j) row[j] = reader.parse_real(fields[j + 1]);
      ids.push_back(std::move(id));
      rows.push_back(std::move(row));
      class_of.emplace_back(fields.back());
    }
  }
  if (ids.empty()) throw DataError(content.string(), 0, "no records");

  std::vector<std::string> class_names = class_of;
  std::sort(class_names.begin(), class_names.end());
  class_names.erase(std::unique(class_names.begin(), class_names.end()), class_names.end());
  std::map<std::string, ClassId> class_index;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    class_index[class_names[c]] = static_cast<ClassId>(c);
  }

  LinqsDataset out;
  std::vector<std::pair<NodeId, NodeId>> edges;
  {
    LineReader reader(cites);
    std::string line;
    while (reader.next(line)) {
      if (trim(line).empty()) continue;
      const auto fields = split_whitespace(line);
      if (fields.size() != 2) reader.fail("expected '<cited> <citing>'");
      const auto a = index.find(std::string(fields[0]));
      const auto b = index.find(std::string(fields[1]));
      if (a == index.end() || b == index.end()) {
        ++out.dangling_citations;
        continue;
      }
      if (a->second == b->second) {
        ++out.stats.self_loops;
        continue;
      }
      edges.emplace_back(std::min(a->second, b->second), std::max(a->second, b->second));
    }
  }
  std::sort(edges.begin(), edges.end());
  const auto last = std::unique(edges.begin(), edges.end());
  out.stats.duplicate_edges = static_cast<std::size_t>(edges.end() - last);
  edges.erase(last, edges.end());

  const std::size_t n = ids.size();
  DenseMatrix features(n, d);
  std::vector<ClassId> labels(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::copy(rows[v].begin(), rows[v].end(), features.row(v).begin());
    labels[v] = class_index.at(class_of[v]);
  }
  out.graph = graph::GraphDataset::from_edges(name, class_names.size(), n, edges,
                                              std::move(features), std::move(labels));
  out.class_names = std::move(class_names);
  out.paper_ids = std::move(ids);
  return out;
}

LinqsDataset restrict_to_largest_component(const LinqsDataset& data) {
  const NodeSet keep = graph::largest_component(data.graph);
  graph::GraphDataset sub = graph::subgraph(data.graph, keep);
  // The component becomes a standalone dataset: ids restart at 0.
  std::vector<std::pair<NodeId, NodeId>> edges = sub.edge_list();
  LinqsDataset out;
  out.graph = graph::GraphDataset::from_edges(sub.name(), sub.num_classes(), sub.num_nodes(), edges,
                                              sub.features(), sub.labels());
  out.class_names = data.class_names;
  for (NodeId v : keep) out.paper_ids.push_back(data.paper_ids[v]);
  out.dangling_citations = data.dangling_citations;
  out.stats = data.stats;
  return out;
}

}  // namespace graphfl::io
