#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qlw/bytes.hpp"
#include "qlw/experiment.hpp"

namespace qlw {

// Dataset file format "QLW1": header (magic, u16 version, u16 d, u16 T,
// u8 basis, 3 x f64 little-endian probabilities, u64 seed, u64 shot count)
// followed by the shots in order. Every bit section (each outcome round,
// each detector slice, each truth-mask round, the readout and the label
// vectors) is packed LSB-first and padded to a byte boundary.
std::vector<uint8_t> serialize(const Dataset& dataset);
Dataset deserialize(const std::vector<uint8_t>& bytes);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// FNV-1a over the serialized bytes; embedded in evaluation reports so that
// mismatched dataset/report pairs are detectable.
uint64_t content_hash(const std::vector<uint8_t>& bytes);
uint64_t dataset_hash(const Dataset& dataset);

}  // namespace qlw
