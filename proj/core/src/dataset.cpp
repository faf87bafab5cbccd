#include "seqseg/dataset.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace seqseg {
namespace {

constexpr char kMagic[4] = {'R', 'S', 'E', 'Q'};

template <typename T>
void put(std::string& buf, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) throw std::runtime_error("dataset: truncated container");
  T value;
  std::memcpy(&value, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return value;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const std::uint8_t*>(data);
  std::uint64_t hash = seed;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<SequenceSample>& samples) {
  const int s = header.sequence_length, c = header.channels;
  const int h = header.height, w = header.width;
  const std::size_t frame_elems = static_cast<std::size_t>(c) * h * w;
  const std::size_t mask_elems = static_cast<std::size_t>(h) * w;

  std::string payload;
  payload.reserve(samples.size() * s * (frame_elems * 4 + mask_elems + 24));
  for (const SequenceSample& sample : samples) {
    if (static_cast<int>(sample.frames.size()) != s || static_cast<int>(sample.labels.size()) != s ||
        static_cast<int>(sample.poses.size()) != s) {
      throw std::invalid_argument("dataset: sample length does not match header sequence length");
    }
    for (const Tensor& frame : sample.frames) {
      if (frame.ndim() != 3 || frame.dim(0) != c || frame.dim(1) != h || frame.dim(2) != w) {
        throw std::invalid_argument("dataset: frame shape " + shape_str(frame.shape()) +
                                    " does not match header");
      }
      for (double v : frame.data()) put<float>(payload, static_cast<float>(v));
    }
    for (const ClassMask& mask : sample.labels) {
      if (mask.height != h || mask.width != w) throw std::invalid_argument("dataset: mask extent mismatch");
      payload.append(reinterpret_cast<const char*>(mask.values.data()), mask.values.size());
    }
    for (const Pose& pose : sample.poses) {
      put<double>(payload, pose.x);
      put<double>(payload, pose.y);
      put<double>(payload, pose.heading);
    }
  }

  std::string head;
  head.append(kMagic, 4);
  put<std::uint8_t>(head, header.version);
  put<std::uint32_t>(head, static_cast<std::uint32_t>(c));
  put<std::uint32_t>(head, static_cast<std::uint32_t>(h));
  put<std::uint32_t>(head, static_cast<std::uint32_t>(w));
  put<std::uint32_t>(head, static_cast<std::uint32_t>(s));
  put<std::uint32_t>(head, static_cast<std::uint32_t>(samples.size()));
  put<double>(head, header.resolution_mm_per_px);
  put<std::uint8_t>(head, static_cast<std::uint8_t>(header.class_map.size()));
  for (const auto& [id, name] : header.class_map) {
    put<std::uint8_t>(head, id);
    put<std::uint8_t>(head, static_cast<std::uint8_t>(name.size()));
    head.append(name);
  }
  put<std::uint64_t>(head, fnv1a64(payload.data(), payload.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t off = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw std::runtime_error("dataset: " + path + " is not an RSEQ container");
  }
  off = 4;
  Dataset ds;
  ds.header.version = take<std::uint8_t>(buf, off);
  if (ds.header.version != 1) {
    throw std::runtime_error("dataset: unsupported container version " + std::to_string(ds.header.version));
  }
  ds.header.channels = static_cast<int>(take<std::uint32_t>(buf, off));
  ds.header.height = static_cast<int>(take<std::uint32_t>(buf, off));
  ds.header.width = static_cast<int>(take<std::uint32_t>(buf, off));
  ds.header.sequence_length = static_cast<int>(take<std::uint32_t>(buf, off));
  ds.header.sample_count = static_cast<int>(take<std::uint32_t>(buf, off));
  ds.header.resolution_mm_per_px = take<double>(buf, off);
  ds.header.class_map.clear();
  const int class_count = take<std::uint8_t>(buf, off);
  for (int i = 0; i < class_count; ++i) {
    const std::uint8_t id = take<std::uint8_t>(buf, off);
    const std::uint8_t len = take<std::uint8_t>(buf, off);
    if (off + len > buf.size()) throw std::runtime_error("dataset: truncated class map");
    ds.header.class_map[id] = buf.substr(off, len);
    off += len;
  }
  const std::uint64_t stored_checksum = take<std::uint64_t>(buf, off);

  const int s = ds.header.sequence_length;
  const std::size_t frame_elems =
      static_cast<std::size_t>(ds.header.channels) * ds.header.height * ds.header.width;
  const std::size_t mask_elems = static_cast<std::size_t>(ds.header.height) * ds.header.width;
  const std::size_t per_sample = static_cast<std::size_t>(s) * (frame_elems * 4 + mask_elems + 24);
  const std::size_t expected = per_sample * static_cast<std::size_t>(ds.header.sample_count);
  if (buf.size() - off != expected) {
    throw std::runtime_error("dataset: payload is " + std::to_string(buf.size() - off) +
                             " bytes, header implies " + std::to_string(expected));
  }
  if (fnv1a64(buf.data() + off, expected) != stored_checksum) {
    throw std::runtime_error("dataset: checksum mismatch, container is corrupt");
  }

  ds.samples.reserve(static_cast<std::size_t>(ds.header.sample_count));
  for (int i = 0; i < ds.header.sample_count; ++i) {
    SequenceSample sample;
    for (int f = 0; f < s; ++f) {
      std::vector<double> data(frame_elems);
      for (std::size_t e = 0; e < frame_elems; ++e) data[e] = static_cast<double>(take<float>(buf, off));
      sample.frames.push_back(Tensor::from_data(
          {ds.header.channels, ds.header.height, ds.header.width}, std::move(data)));
    }
    for (int f = 0; f < s; ++f) {
      ClassMask mask(ds.header.height, ds.header.width);
      std::memcpy(mask.values.data(), buf.data() + off, mask_elems);
      off += mask_elems;
      sample.labels.push_back(std::move(mask));
    }
    for (int f = 0; f < s; ++f) {
      Pose pose;
      pose.x = take<double>(buf, off);
      pose.y = take<double>(buf, off);
      pose.heading = take<double>(buf, off);
      sample.poses.push_back(pose);
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace seqseg
