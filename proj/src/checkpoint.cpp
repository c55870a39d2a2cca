#include "epr/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace epr {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'E', 'P', 'R', 'C', 'K', 'P', 'T', '1'};

json config_to_json(const ModelConfig& c) {
  return json{{"num_layers", c.num_layers},
              {"num_heads", c.num_heads},
              {"hidden_dim", c.hidden_dim},
              {"ff_dim", c.ff_dim},
              {"num_pianists", c.num_pianists},
              {"window", c.window},
              {"input_feature_count", c.input_feature_count},
              {"velocity_range", {c.velocity_range.lo, c.velocity_range.hi}},
              {"dd_range", {c.dd_range.lo, c.dd_range.hi}},
              {"ioi_range", {c.ioi_range.lo, c.ioi_range.hi}},
              {"positional_encoding", c.positional_encoding},
              {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers");
  c.num_heads = j.at("num_heads");
  c.hidden_dim = j.at("hidden_dim");
  c.ff_dim = j.at("ff_dim");
  c.num_pianists = j.at("num_pianists");
  c.window = j.at("window");
  c.input_feature_count = j.at("input_feature_count");
  c.velocity_range = {j.at("velocity_range")[0], j.at("velocity_range")[1]};
  c.dd_range = {j.at("dd_range")[0], j.at("dd_range")[1]};
  c.ioi_range = {j.at("ioi_range")[0], j.at("ioi_range")[1]};
  c.positional_encoding = j.at("positional_encoding");
  c.seed = j.at("seed");
  return c;
}

void append_floats(std::vector<uint8_t>& out, const std::vector<float>& v) {
  size_t at = out.size();
  out.resize(at + v.size() * sizeof(float));
  std::memcpy(out.data() + at, v.data(), v.size() * sizeof(float));
}

std::vector<float> take_floats(const std::vector<uint8_t>& in, size_t& pos,
                               size_t count) {
  if (pos + count * sizeof(float) > in.size())
    throw std::runtime_error("checkpoint truncated in array data");
  std::vector<float> v(count);
  std::memcpy(v.data(), in.data() + pos, count * sizeof(float));
  pos += count * sizeof(float);
  return v;
}

}  // namespace

ModelParams<float> clone_params(const ModelParams<float>& params) {
  ModelParams<float> copy = init_params<float>(params.config);
  auto src = params.all();
  auto dst = copy.all();
  for (size_t i = 0; i < src.size(); ++i) dst[i].data() = src[i].data();
  return copy;
}

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  json header;
  header["dtype"] = "f32";
  header["config"] = config_to_json(ckpt.params.config);
  header["epoch"] = ckpt.epoch;
  header["best_validation_loss"] = ckpt.best_validation_loss;
  header["seed"] = ckpt.seed;
  header["pianists"] = ckpt.pianist_names;
  header["loss_weights"] = {{"velocity", ckpt.weights.velocity},
                            {"dd", ckpt.weights.dd},
                            {"ioi", ckpt.weights.ioi}};
  header["adam"] = {{"step", ckpt.adam.step},
                    {"learning_rate", ckpt.adam.learning_rate},
                    {"weight_decay", ckpt.adam.weight_decay},
                    {"beta1", ckpt.adam.beta1},
                    {"beta2", ckpt.adam.beta2},
                    {"epsilon", ckpt.adam.epsilon}};
  json arrays = json::array();
  auto named = ckpt.params.named();
  for (auto& [name, t] : named)
    arrays.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  header["arrays"] = arrays;

  std::string header_str = header.dump();
  std::vector<uint8_t> out(kMagic, kMagic + 8);
  uint64_t hlen = header_str.size();
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t(hlen >> (8 * i)));
  out.insert(out.end(), header_str.begin(), header_str.end());
  for (auto& [name, t] : named) append_floats(out, t.data());
  if (ckpt.adam.m.size() != named.size() ||
      ckpt.adam.v.size() != named.size())
    throw std::invalid_argument("checkpoint: optimizer state uninitialized");
  for (const auto& m : ckpt.adam.m) append_floats(out, m);
  for (const auto& v : ckpt.adam.v) append_floats(out, v);
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic)");
  uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= uint64_t(bytes[8 + i]) << (8 * i);
  if (16 + hlen > bytes.size())
    throw std::runtime_error("checkpoint truncated in header");
  json header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + hlen);
  if (header.at("dtype") != "f32")
    throw std::runtime_error("unsupported checkpoint dtype");

  Checkpoint ckpt;
  ckpt.params = init_params<float>(config_from_json(header.at("config")));
  ckpt.epoch = header.at("epoch");
  ckpt.best_validation_loss = header.at("best_validation_loss");
  ckpt.seed = header.at("seed");
  ckpt.pianist_names =
      header.at("pianists").get<std::vector<std::string>>();
  ckpt.weights.velocity = header.at("loss_weights").at("velocity");
  ckpt.weights.dd = header.at("loss_weights").at("dd");
  ckpt.weights.ioi = header.at("loss_weights").at("ioi");
  const auto& adam = header.at("adam");
  ckpt.adam.step = adam.at("step");
  ckpt.adam.learning_rate = adam.at("learning_rate");
  ckpt.adam.weight_decay = adam.at("weight_decay");
  ckpt.adam.beta1 = adam.at("beta1");
  ckpt.adam.beta2 = adam.at("beta2");
  ckpt.adam.epsilon = adam.at("epsilon");

  auto params = ckpt.params.all();
  const auto& arrays = header.at("arrays");
  if (arrays.size() != params.size())
    throw std::runtime_error("checkpoint array directory mismatch");
  size_t pos = 16 + hlen;
  for (size_t i = 0; i < params.size(); ++i) {
    size_t count = size_t(arrays[i].at("rows").get<int>()) *
                   arrays[i].at("cols").get<int>();
    if (int64_t(count) != params[i].size())
      throw std::runtime_error("checkpoint array shape mismatch");
    params[i].data() = take_floats(bytes, pos, count);
  }
  for (size_t i = 0; i < params.size(); ++i)
    ckpt.adam.m.push_back(take_floats(bytes, pos, params[i].size()));
  for (size_t i = 0; i < params.size(); ++i)
    ckpt.adam.v.push_back(take_floats(bytes, pos, params[i].size()));
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace epr
