#include "elucid/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

namespace elucid::checkpoint {

namespace {

constexpr char kMagic[8] = {'E', 'L', 'U', 'C', 'I', 'D', 'C', 'K'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("checkpoint truncated in header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

const Matrix& Container::get(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return e.tensor;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return true;
  return false;
}

void write(std::ostream& out, nlohmann::json header, const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
  header["format_version"] = kFormatVersion;
  auto list = nlohmann::json::array();
  for (const auto& [name, m] : tensors) list.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  header["tensors"] = list;
  const std::string text = header.dump();

  out.write(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : tensors) {
    for (double v : m->data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      unsigned char b[4];
      for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

Container read(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("not a checkpoint file (bad magic)");
  const std::uint64_t len = get_u64(in);
  if (len > (1ULL << 30)) throw FormatError("checkpoint header length implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("checkpoint truncated in header");

  Container c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (!c.header.is_object() || !c.header.contains("format_version"))
    throw FormatError("corrupt checkpoint header: missing format_version (expected " +
                      std::to_string(kFormatVersion) + ")");
  const auto& ver = c.header["format_version"];
  if (!ver.is_number_unsigned() || ver.get<std::uint32_t>() != kFormatVersion)
    throw FormatError("unsupported checkpoint format version: expected " + std::to_string(kFormatVersion) +
                      ", found " + ver.dump());

  for (const auto& t : c.header.at("tensors")) {
    Entry e{t.at("name").get<std::string>(), Matrix(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>())};
    for (auto& v : e.tensor.data()) {
      unsigned char b[4];
      if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated in tensor '" + e.name + "'");
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    c.tensors.push_back(std::move(e));
  }
  return c;
}

void write_file(const std::string& path, nlohmann::json header,
                const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  write(out, std::move(header), tensors);
}

Container read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return read(in);
}

}  // namespace elucid::checkpoint
