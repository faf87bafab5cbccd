#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seqseg/sample.hpp"

namespace seqseg {

/// RSEQ container header. On disk everything is little-endian; frames are
/// stored as 32-bit floats, labels as class-id bytes and poses as 64-bit
/// floats, with an FNV-1a checksum over the payload.
struct DatasetHeader {
  std::uint8_t version = 1;
  int channels = 1;
  int height = 0;
  int width = 0;
  int sequence_length = 0;
  int sample_count = 0;
  double resolution_mm_per_px = 4.0;
  std::map<std::uint8_t, std::string> class_map = {
      {0, "background"}, {1, "crop"}, {2, "weed"}, {3, "intra_row_weed"}};
};

struct Dataset {
  DatasetHeader header;
  std::vector<SequenceSample> samples;

  std::size_t size() const { return samples.size(); }
};

/// Writes header + payload + checksum. The sample_count field is taken from
/// the sample vector, not the header.
void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<SequenceSample>& samples);

/// Loads and validates a container; throws on bad magic, truncation or
/// checksum mismatch.
Dataset load_dataset(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 14695981039346656037ull);

}  // namespace seqseg
