#include "seqseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "seqseg/dataset.hpp"  // fnv1a64

namespace seqseg {
namespace {

constexpr char kMagic[4] = {'R', 'C', 'K', 'P'};

template <typename T>
void put(std::string& buf, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) throw std::runtime_error("checkpoint: truncated container");
  T value;
  std::memcpy(&value, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return value;
}

std::string take_str(const std::string& buf, std::size_t& off, std::size_t len) {
  if (off + len > buf.size()) throw std::runtime_error("checkpoint: truncated container");
  std::string s = buf.substr(off, len);
  off += len;
  return s;
}

void put_doubles(std::string& buf, const std::vector<double>& values) {
  put<std::uint64_t>(buf, values.size());
  buf.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

std::vector<double> take_doubles(const std::string& buf, std::size_t& off) {
  const auto n = take<std::uint64_t>(buf, off);
  if (off + n * sizeof(double) > buf.size()) throw std::runtime_error("checkpoint: truncated container");
  std::vector<double> values(n);
  std::memcpy(values.data(), buf.data() + off, n * sizeof(double));
  off += n * sizeof(double);
  return values;
}

}  // namespace

std::string network_config_to_json(const NetworkConfig& c) {
  nlohmann::json j;
  j["sequence_length"] = c.sequence_length;
  j["in_channels"] = c.in_channels;
  j["height"] = c.height;
  j["width"] = c.width;
  j["encoder_depth"] = c.encoder_depth;
  j["dense_layers"] = c.dense_layers;
  j["growth_rate"] = c.growth_rate;
  j["stem_maps"] = c.stem_maps;
  j["fusion_kernels"] = c.fusion_kernels;
  j["fusion_dilations"] = c.fusion_dilations;
  j["fusion_maps"] = c.fusion_maps;
  j["merge_maps"] = c.merge_maps;
  j["num_classes"] = c.num_classes;
  j["dropout_rate"] = c.dropout_rate;
  j["bn_momentum"] = c.bn_momentum;
  j["preprocessing"] = c.preprocessing;
  j["sequential_module"] = c.sequential_module;
  j["spatial_context"] = c.spatial_context;
  return j.dump();
}

NetworkConfig network_config_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  NetworkConfig c;
  j.at("sequence_length").get_to(c.sequence_length);
  j.at("in_channels").get_to(c.in_channels);
  j.at("height").get_to(c.height);
  j.at("width").get_to(c.width);
  j.at("encoder_depth").get_to(c.encoder_depth);
  j.at("dense_layers").get_to(c.dense_layers);
  j.at("growth_rate").get_to(c.growth_rate);
  j.at("stem_maps").get_to(c.stem_maps);
  j.at("fusion_kernels").get_to(c.fusion_kernels);
  j.at("fusion_dilations").get_to(c.fusion_dilations);
  j.at("fusion_maps").get_to(c.fusion_maps);
  j.at("merge_maps").get_to(c.merge_maps);
  j.at("num_classes").get_to(c.num_classes);
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("bn_momentum").get_to(c.bn_momentum);
  j.at("preprocessing").get_to(c.preprocessing);
  j.at("sequential_module").get_to(c.sequential_module);
  j.at("spatial_context").get_to(c.spatial_context);
  return c;
}

void save_checkpoint(const std::string& path, const NetworkConfig& config,
                     const ParamList& entries, const TrainerSnapshot* snapshot) {
  std::string buf;
  buf.append(kMagic, 4);
  put<std::uint8_t>(buf, 1);  // version

  const std::string json = network_config_to_json(config);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(json.size()));
  buf.append(json);

  put<std::uint32_t>(buf, static_cast<std::uint32_t>(entries.size()));
  for (const ParamEntry& e : entries) {
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(e.name.size()));
    buf.append(e.name);
    put<std::uint8_t>(buf, e.buffer ? 1 : 0);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(e.tensor.ndim()));
    for (int d : e.tensor.shape()) put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
    put_doubles(buf, e.tensor.data());
  }

  put<std::uint8_t>(buf, snapshot ? 1 : 0);
  if (snapshot) {
    put<double>(buf, snapshot->rho);
    put<double>(buf, snapshot->epsilon);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(snapshot->epochs_done));
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(snapshot->steps_done));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(snapshot->accumulators.size()));
    for (const auto& acc : snapshot->accumulators) put_doubles(buf, acc);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(snapshot->rng_state.size()));
    buf.append(snapshot->rng_state);
  }

  put<std::uint64_t>(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 13 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: " + path + " is not an RCKP container");
  }
  const std::uint64_t stored = fnv1a64(buf.data(), buf.size() - 8);
  std::uint64_t expected;
  std::memcpy(&expected, buf.data() + buf.size() - 8, 8);
  if (stored != expected) throw std::runtime_error("checkpoint: checksum mismatch, file is corrupt");

  std::size_t off = 4;
  const auto version = take<std::uint8_t>(buf, off);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  const auto json_len = take<std::uint32_t>(buf, off);
  ckpt.config = network_config_from_json(take_str(buf, off, json_len));

  const auto n_entries = take<std::uint32_t>(buf, off);
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    Checkpoint::StoredTensor t;
    const auto name_len = take<std::uint16_t>(buf, off);
    t.name = take_str(buf, off, name_len);
    t.buffer = take<std::uint8_t>(buf, off) != 0;
    const auto ndim = take<std::uint8_t>(buf, off);
    for (int d = 0; d < ndim; ++d) t.shape.push_back(static_cast<int>(take<std::uint32_t>(buf, off)));
    t.data = take_doubles(buf, off);
    if (shape_numel(t.shape) != t.data.size()) {
      throw std::runtime_error("checkpoint: tensor " + t.name + " has inconsistent shape");
    }
    ckpt.tensors_.push_back(std::move(t));
  }

  if (take<std::uint8_t>(buf, off) != 0) {
    TrainerSnapshot snap;
    snap.rho = take<double>(buf, off);
    snap.epsilon = take<double>(buf, off);
    snap.epochs_done = static_cast<int>(take<std::uint32_t>(buf, off));
    snap.steps_done = static_cast<long long>(take<std::uint64_t>(buf, off));
    const auto n_acc = take<std::uint32_t>(buf, off);
    for (std::uint32_t i = 0; i < n_acc; ++i) snap.accumulators.push_back(take_doubles(buf, off));
    const auto rng_len = take<std::uint32_t>(buf, off);
    snap.rng_state = take_str(buf, off, rng_len);
    ckpt.snapshot = std::move(snap);
  }
  return ckpt;
}

Network Checkpoint::build() const {
  Rng scratch(0);
  Network net(config, scratch);
  ParamList entries = net.named_entries();
  if (entries.size() != tensors_.size()) {
    throw std::runtime_error("checkpoint: stores " + std::to_string(tensors_.size()) +
                             " tensors, network has " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const StoredTensor& t = tensors_[i];
    ParamEntry& e = entries[i];
    if (e.name != t.name || !shape_eq(e.tensor.shape(), t.shape)) {
      throw std::runtime_error("checkpoint: tensor mismatch at " + t.name + " vs " + e.name);
    }
    e.tensor.data() = t.data;
  }
  return net;
}

}  // namespace seqseg
