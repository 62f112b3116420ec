#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bayatt/model.hpp"

namespace bayatt {

/// Binary container shared by checkpoints and posterior files:
///
///   "BTCK"  | version u16 LE | descriptor length u32 LE | descriptor (UTF-8 JSON)
///   | blob element count u64 LE | blob (f64 LE each) | CRC-32 u32 LE
///
/// The CRC covers every preceding byte and is verified before the structure
/// is parsed, so a truncated file reports a checksum failure rather than a
/// partial object.
namespace container {

constexpr std::uint16_t kVersion = 1;

void write(const std::string& path, const std::string& descriptor,
           std::span<const double> blob);

struct Contents {
  std::string descriptor;
  std::vector<double> blob;
};

Contents read(const std::string& path);

std::uint32_t crc32(const unsigned char* data, std::size_t len);

}  // namespace container

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace bayatt
