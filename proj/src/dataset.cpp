#include "epr/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace epr {

namespace {

constexpr char kMagic[8] = {'E', 'P', 'R', 'D', 'A', 'T', 'A', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("dataset file truncated");
  return v;
}

}  // namespace

void write_examples(const std::string& path,
                    const std::vector<TrainExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kMagic, 8);
  put<uint64_t>(out, examples.size());
  for (const auto& ex : examples) {
    put<uint32_t>(out, uint32_t(ex.pianist.index));
    put<uint32_t>(out, uint32_t(ex.io.window()));
    for (const auto& row : ex.io.inputs)
      out.write(reinterpret_cast<const char*>(row.data()),
                sizeof(double) * 6);
    for (const auto& row : ex.io.targets)
      out.write(reinterpret_cast<const char*>(row.data()),
                sizeof(double) * 3);
    out.write(reinterpret_cast<const char*>(ex.io.mask.data()),
              std::streamsize(ex.io.mask.size()));
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<TrainExample> read_examples(
    const std::string& path, const std::vector<std::string>& pianists) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path + " is not a dataset window file");
  uint64_t count = get<uint64_t>(in);
  std::vector<TrainExample> examples;
  examples.reserve(count);
  for (uint64_t e = 0; e < count; ++e) {
    TrainExample ex;
    uint32_t pianist = get<uint32_t>(in);
    uint32_t window = get<uint32_t>(in);
    if (pianist >= pianists.size())
      throw std::runtime_error("dataset pianist index outside vocabulary");
    ex.pianist = {int(pianist), pianists[pianist]};
    ex.io.inputs.resize(window);
    ex.io.targets.resize(window);
    ex.io.mask.resize(window);
    for (auto& row : ex.io.inputs)
      in.read(reinterpret_cast<char*>(row.data()), sizeof(double) * 6);
    for (auto& row : ex.io.targets)
      in.read(reinterpret_cast<char*>(row.data()), sizeof(double) * 3);
    in.read(reinterpret_cast<char*>(ex.io.mask.data()),
            std::streamsize(window));
    if (!in) throw std::runtime_error("dataset file truncated");
    examples.push_back(std::move(ex));
  }
  return examples;
}

void write_dataset_meta(const std::string& dir, const DatasetMeta& meta) {
  nlohmann::json j{{"pianists", meta.pianists},
                   {"seed", meta.seed},
                   {"window", meta.window}};
  std::ofstream out(dir + "/meta.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write meta.json in " + dir);
  out << j.dump(2) << "\n";
}

DatasetMeta read_dataset_meta(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw std::runtime_error("missing meta.json in " + dir);
  nlohmann::json j;
  in >> j;
  DatasetMeta meta;
  meta.pianists = j.at("pianists").get<std::vector<std::string>>();
  meta.seed = j.at("seed");
  meta.window = j.at("window");
  return meta;
}

}  // namespace epr
