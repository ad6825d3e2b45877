#pragma once

// Binary checkpoint container:
//
//   8 bytes   magic "ELUCIDCK"
//   8 bytes   header length L, little-endian uint64
//   L bytes   UTF-8 JSON header (keys sorted)
//   ...       tensors as little-endian float32, in header order
//
// The header carries `format_version` and a `tensors` list of
// {name, rows, cols}; everything else is owned by the caller.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "elucid/matrix.hpp"

namespace elucid::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Entry {
  std::string name;
  Matrix tensor;
};

struct Container {
  nlohmann::json header;
  std::vector<Entry> tensors;

  const Matrix& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write(std::ostream& out, nlohmann::json header, const std::vector<std::pair<std::string, const Matrix*>>& tensors);
Container read(std::istream& in);

void write_file(const std::string& path, nlohmann::json header,
                const std::vector<std::pair<std::string, const Matrix*>>& tensors);
Container read_file(const std::string& path);

}  // namespace elucid::checkpoint
