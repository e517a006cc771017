#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "graphfl/dataset_io.hpp"
#include "test_support.hpp"

using namespace graphfl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("graphfl_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

/// A valid 3-node dataset with one feature column.
fs::path tiny_dataset(const std::string& name, const std::string& edges = "src,dst\n0,1\n",
                      const std::string& features = "node,f0\n0,1.0\n1,0.5\n2,0\n",
                      const std::string& labels = "node,label\n0,0\n1,1\n2,1\n") {
  const fs::path dir = fresh_dir(name);
  write_file(dir / "manifest.json",
             R"({"num_nodes": 3, "num_features": 1, "num_classes": 2, "name": "tiny"})");
  write_file(dir / "edges.csv", edges);
  write_file(dir / "features.csv", features);
  write_file(dir / "labels.csv", labels);
  return dir;
}

template <typename F>
std::string data_error_of(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("load_dataset: a small valid directory") {
  const auto g = io::load_dataset(tiny_dataset("valid"));
  CHECK(g.num_nodes() == 3);
  CHECK(g.num_edges() == 1);
  CHECK(g.num_classes() == 2);
  CHECK(g.name() == "tiny");
  CHECK(g.features()(1, 0) == 0.5);
  CHECK(g.labels() == std::vector<ClassId>{0, 1, 1});
}

TEST_CASE("load_dataset: empty edge file gives an edgeless graph") {
  const auto g = io::load_dataset(tiny_dataset("edgeless", "src,dst\n"));
  CHECK(g.num_edges() == 0);
}

TEST_CASE("load_dataset: reversed and repeated edges collapse, self-loops dropped") {
  io::IngestStats stats;
  const auto g = io::load_dataset(tiny_dataset("dups", "src,dst\n0,1\n1,0\n2,2\n0,1\n"), &stats);
  CHECK(g.num_edges() == 1);
  CHECK(stats.duplicate_edges == 2);
  CHECK(stats.self_loops == 1);
}

TEST_CASE("load_dataset: errors name the file and line") {
  auto msg = data_error_of([] {
    io::load_dataset(tiny_dataset("badfeat", "src,dst\n", "node,f0\n0,1.0\n1,abc\n2,0\n"));
  });
  CHECK(msg.find("features.csv:3") != std::string::npos);
  CHECK(msg.find("non-numeric") != std::string::npos);

  msg = data_error_of([] { io::load_dataset(tiny_dataset("badedge", "src,dst\n0,1\n0,7\n")); });
  CHECK(msg.find("edges.csv:3") != std::string::npos);
  CHECK(msg.find("out of range") != std::string::npos);

  msg = data_error_of([] {
    io::load_dataset(tiny_dataset("badlabel", "src,dst\n", "node,f0\n0,1\n1,1\n2,1\n",
                                  "node,label\n0,0\n1,5\n2,1\n"));
  });
  CHECK(msg.find("labels.csv:3") != std::string::npos);

  msg = data_error_of([] {
    io::load_dataset(tiny_dataset("missingrow", "src,dst\n", "node,f0\n0,1\n2,1\n"));
  });
  CHECK(msg.find("no feature row for node 1") != std::string::npos);

  const fs::path dir = tiny_dataset("nolabels");
  fs::remove(dir / "labels.csv");
  CHECK_THROWS_AS(io::load_dataset(dir), DataError);
}

TEST_CASE("write_dataset then load_dataset is the identity") {
  const auto g = testing::small_sbm(3, 10, 4);
  const fs::path dir = fresh_dir("roundtrip");
  io::write_dataset(g, dir);
  const auto back = io::load_dataset(dir);
  CHECK(back.adjacency() == g.adjacency());
  CHECK(back.features() == g.features());
  CHECK(back.labels() == g.labels());
  CHECK(back.num_classes() == g.num_classes());

  const fs::path again = fresh_dir("roundtrip2");
  io::write_dataset(back, again);
  CHECK(io::load_dataset(again) == back);
}

TEST_CASE("load_linqs: parses content and cites, counts dangling citations") {
  const fs::path dir = fresh_dir("linqs");
  write_file(dir / "x.content",
             "p10\t1\t0\t1\tTheory\n"
             "p20\t0\t1\t0\tAI\n"
             "p30\t1\t1\t0\tTheory\n"
             "p40\t0\t0\t1\tML\n");
  write_file(dir / "x.cites", "p10\tp20\np20\tp10\np20\tp30\np30\tp99\n");
  const auto data = io::load_linqs(dir / "x.content", dir / "x.cites", "x");
  CHECK(data.graph.num_nodes() == 4);
  CHECK(data.graph.num_features() == 3);
  CHECK(data.class_names == std::vector<std::string>{"AI", "ML", "Theory"});
  CHECK(data.graph.labels() == std::vector<ClassId>{2, 0, 2, 1});
  CHECK(data.graph.num_edges() == 2);
  CHECK(data.dangling_citations == 1);

  const auto lcc = io::restrict_to_largest_component(data);
  CHECK(lcc.graph.num_nodes() == 3);
  CHECK(lcc.paper_ids == std::vector<std::string>{"p10", "p20", "p30"});
  CHECK(lcc.graph.num_edges() == 2);
}

TEST_CASE("load_linqs: malformed content names the line") {
  const fs::path dir = fresh_dir("linqs_bad");
  write_file(dir / "x.content", "p1\t1\t0\tA\np2\t1\tA\n");
  write_file(dir / "x.cites", "");
  const auto msg = data_error_of([&] { io::load_linqs(dir / "x.content", dir / "x.cites", "x"); });
  CHECK(msg.find("x.content:2") != std::string::npos);
}
