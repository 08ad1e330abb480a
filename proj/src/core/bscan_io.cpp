#include "treeradar/bscan_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "treeradar/errors.hpp"

namespace treeradar {
namespace {

constexpr std::string_view kMagic = "BSCN1\n";

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

std::string encode_bscan(const BScan& bscan) {
  bscan.validate();
  const nlohmann::json header = {
      {"n_samples", bscan.n_samples()}, {"n_traces", bscan.n_traces()}, {"dt_s", bscan.axis.dt},
      {"t0_s", bscan.axis.t0},          {"dx_m", bscan.dx},             {"stage", bscan.stage},
      {"extra", bscan.extra.is_null() ? nlohmann::json::object() : bscan.extra}};
  const std::string text = header.dump();
  std::string out(kMagic);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + 4 * bscan.data.values.size());
  for (double v : bscan.data.values) put_le<float>(out, static_cast<float>(v));
  return out;
}

BScan decode_bscan(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic)
    throw FormatError("BSCN: bad magic");
  const auto header_len = get_le<std::uint64_t>(bytes, kMagic.size());
  const std::size_t header_at = kMagic.size() + 8;
  if (header_len > bytes.size() - header_at) throw FormatError("BSCN: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_at, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("BSCN: malformed header: ") + e.what());
  }
  BScan out;
  try {
    const auto n_samples = header.at("n_samples").get<std::size_t>();
    const auto n_traces = header.at("n_traces").get<std::size_t>();
    out = BScan(TimeAxis(header.at("dt_s").get<double>(), n_samples, header.at("t0_s").get<double>()), n_traces,
                header.at("dx_m").get<double>(), header.at("stage").get<std::string>());
    out.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("BSCN: header field error: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("BSCN: invalid header: ") + e.what());
  }
  const std::size_t payload_at = header_at + header_len;
  const std::size_t expected = 4 * out.data.values.size();
  if (bytes.size() - payload_at != expected)
    throw FormatError(bytes.size() - payload_at < expected ? "BSCN: truncated payload" : "BSCN: trailing bytes after payload");
  for (std::size_t i = 0; i < out.data.values.size(); ++i) out.data.values[i] = get_le<float>(bytes, payload_at + 4 * i);
  try {
    out.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("BSCN: ") + e.what());
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_bscan(const std::filesystem::path& path, const BScan& bscan) { write_file_atomic(path, encode_bscan(bscan)); }

BScan read_bscan(const std::filesystem::path& path) { return decode_bscan(read_file(path)); }

}  // namespace treeradar
