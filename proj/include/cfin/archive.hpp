#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfin/model.hpp"

namespace cfin {

/// Binary weight container:
///
///   "CFIN" | u32 version | u32 len, config JSON | u32 count |
///   count x (u32 len, name | u8 dtype | 4 x u64 shape | raw values)
///
/// All integers and values little-endian. dtype 1 = f64, 2 = f32.
inline constexpr std::uint32_t kArchiveVersion = 1;

class ArchiveError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, bad_config, shape_mismatch, unknown_tensor,
                    missing_tensor, duplicate_tensor, bad_dtype, trailing_data, io };

  ArchiveError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> serialize(const Model& model);
Model deserialize(std::span<const std::uint8_t> bytes);

void save(const Model& model, const std::string& path);
Model load(const std::string& path);

}  // namespace cfin
