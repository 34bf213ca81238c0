#include "coattn/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace coattn {

namespace {

// parameters are stored little-endian; byte-swap on big-endian hosts
bool host_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

void swap_if_needed(std::vector<double>& xs) {
  if (host_little_endian()) return;
  for (auto& x : xs) {
    unsigned char b[8];
    std::memcpy(b, &x, 8);
    std::swap(b[0], b[7]);
    std::swap(b[1], b[6]);
    std::swap(b[2], b[5]);
    std::swap(b[3], b[4]);
    std::memcpy(&x, b, 8);
  }
}

}  // namespace

void save_params(const Model& m, const std::string& dir) {
  nlohmann::json manifest;
  manifest["arch"] = m.arch;
  manifest["group"] = m.group.name();
  manifest["tensors"] = nlohmann::json::array();
  std::vector<double> blob;
  for_each_param(m, [&](const std::string& name, const Tensor& t) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    entry["offset"] = blob.size();
    manifest["tensors"].push_back(entry);
    blob.insert(blob.end(), t.v.begin(), t.v.end());
  });
  manifest["total"] = blob.size();

  std::ofstream mj(dir + "/params.json");
  if (!mj) throw std::runtime_error("save_params: cannot write " + dir + "/params.json");
  mj << manifest.dump(2) << "\n";

  swap_if_needed(blob);
  std::ofstream bin(dir + "/params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("save_params: cannot write " + dir + "/params.bin");
  bin.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (!bin) throw std::runtime_error("save_params: write failed in " + dir);
}

Model load_model(const std::string& dir) {
  std::ifstream mj(dir + "/params.json");
  if (!mj) throw std::runtime_error("load_model: cannot open " + dir + "/params.json");
  nlohmann::json manifest;
  try {
    mj >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_model: bad manifest in " + dir + ": " + e.what());
  }
  const std::string arch = manifest.at("arch").get<std::string>();
  Model m = build_model(arch, 0);

  std::ifstream bin(dir + "/params.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw std::runtime_error("load_model: cannot open " + dir + "/params.bin");
  const std::int64_t bytes = bin.tellg();
  const std::int64_t total = manifest.at("total").get<std::int64_t>();
  if (bytes != total * static_cast<std::int64_t>(sizeof(double)))
    throw std::runtime_error("load_model: params.bin has " + std::to_string(bytes) +
                             " bytes, manifest expects " +
                             std::to_string(total * sizeof(double)));
  if (total != param_count(m))
    throw std::runtime_error("load_model: manifest total " + std::to_string(total) +
                             " does not match " + arch);
  bin.seekg(0);
  std::vector<double> blob(static_cast<std::size_t>(total));
  if (!bin.read(reinterpret_cast<char*>(blob.data()),
                static_cast<std::streamsize>(blob.size() * sizeof(double))))
    throw std::runtime_error("load_model: truncated params.bin in " + dir);
  swap_if_needed(blob);

  std::size_t off = 0;
  for_each_param(m, [&](const std::string&, Tensor& t) {
    std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(off), t.v.size(), t.v.begin());
    off += t.v.size();
  });
  return m;
}

}  // namespace coattn
