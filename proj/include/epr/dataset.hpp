// On-disk dataset produced by `prepare` and consumed by `train`/`eval`:
// one binary window file per split plus a JSON sidecar with the pianist
// vocabulary, the split seed, and summary counts.

#pragma once

#include "epr/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace epr {

struct DatasetMeta {
  std::vector<std::string> pianists;
  uint64_t seed = 0;
  int window = kWindowSize;
};

void write_examples(const std::string& path,
                    const std::vector<TrainExample>& examples);
std::vector<TrainExample> read_examples(const std::string& path,
                                        const std::vector<std::string>&
                                            pianists);

void write_dataset_meta(const std::string& dir, const DatasetMeta& meta);
DatasetMeta read_dataset_meta(const std::string& dir);

}  // namespace epr
