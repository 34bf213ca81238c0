#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "coattn/data.hpp"
#include "coattn/model.hpp"
#include "coattn/serialize.hpp"
#include "coattn/train.hpp"

using namespace coattn;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("coattn_ser_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

std::vector<double> flatten_params(const Model& m) {
  std::vector<double> out;
  for_each_param(m, [&](const std::string&, const Tensor& t) {
    out.insert(out.end(), t.v.begin(), t.v.end());
  });
  return out;
}

}  // namespace

TEST_CASE("save/load round trip is bit exact and prediction preserving") {
  ScratchDir dir("roundtrip");
  Model m = build_model("a-p4mcnn", 99);
  save_params(m, dir.path.string());
  Model r = load_model(dir.path.string());
  CHECK(r.arch == "a-p4mcnn");
  CHECK(r.group.size == 8);
  CHECK(flatten_params(r) == flatten_params(m));

  DatasetBundle d = make_synthetic_digits(20, 1);
  std::vector<int> p1, p2;
  evaluate(m, d, &p1);
  evaluate(r, d, &p2);
  CHECK(p1 == p2);
}

TEST_CASE("loader rejects a truncated blob and a tampered manifest") {
  ScratchDir dir("tamper");
  Model m = build_model("p4cnn", 5);
  save_params(m, dir.path.string());

  const fs::path bin = dir.path / "params.bin";
  const auto full = fs::file_size(bin);
  fs::resize_file(bin, full - 16);
  CHECK_THROWS_AS(load_model(dir.path.string()), std::runtime_error);

  save_params(m, dir.path.string());
  {
    std::ifstream in(dir.path / "params.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto at = text.find("p4cnn");
    REQUIRE(at != std::string::npos);
    text.replace(at, 5, "nonsense-arch");
    std::ofstream out(dir.path / "params.json");
    out << text;
  }
  CHECK_THROWS_AS(load_model(dir.path.string()), std::runtime_error);

  CHECK_THROWS_AS(load_model((dir.path / "absent").string()), std::runtime_error);
}
