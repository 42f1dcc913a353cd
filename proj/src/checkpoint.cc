// Copyright 2026 The mrcae Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mrcae/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "mrcae/config.h"
#include "mrcae/errors.h"

namespace mrcae {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'C', 'A', 'E', '0', '1', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string file)
      : bytes_(bytes), file_(std::move(file)) {}

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(file_ + ": " + msg);
  }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) fail("truncated while reading " + what);
  }
  const std::string& bytes_;
  std::string file_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  const std::string config = to_json(model.config()).dump();
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  const auto tensors = model.all_tensors();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    require_finite(t.values, t.name.c_str());
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (T v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  // Written to a sibling file, then renamed over the target.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw FormatError("cannot write " + tmp.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw FormatError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot move checkpoint into " + path.string());
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  Reader r(bytes, path.string());
  if (r.str(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    r.fail("bad magic");
  }
  const std::uint32_t config_len = r.u32("config length");
  const std::string config_text = r.str(config_len, "config");
  ModelConfig config;
  try {
    config = model_config_from_json(nlohmann::json::parse(config_text));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("config blob: ") + e.what());
  } catch (const ConfigError& e) {
    r.fail(std::string("config blob: ") + e.what());
  }
  Model<T> model(config);
  auto tensors = model.all_tensors();
  const std::uint32_t count = r.u32("tensor count");
  if (count != tensors.size()) {
    r.fail("expected " + std::to_string(tensors.size()) + " tensors, found " +
           std::to_string(count));
  }
  for (auto& t : tensors) {
    const std::uint32_t name_len = r.u32("name length of " + t.name);
    const std::string name = r.str(name_len, "name of " + t.name);
    if (name != t.name) r.fail("expected tensor " + t.name + ", found " + name);
    const std::uint32_t rank = r.u32("rank of " + name);
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.u32("dims of " + name);
    if (dims != t.dims) r.fail("dimension mismatch for tensor " + name);
    for (T& v : t.values) {
      v = static_cast<T>(std::bit_cast<float>(r.u32("data of " + name)));
    }
    require_finite(std::span<const T>(t.values), name.c_str());
  }
  if (!r.at_end()) r.fail("trailing bytes after last tensor");
  return model;
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path,
                         const ModelConfig& expected) {
  Model<T> model = load_checkpoint<T>(path);
  const auto& c = model.config();
  auto mismatch = [&](const char* field, std::size_t got, std::size_t want) {
    throw ConfigError(path.string() + ": checkpoint " + field + " is " +
                      std::to_string(got) + ", configuration expects " +
                      std::to_string(want));
  };
  if (c.segment_len != expected.segment_len) {
    mismatch("segment_len", c.segment_len, expected.segment_len);
  }
  if (c.in_channels != expected.in_channels) {
    mismatch("in_channels", c.in_channels, expected.in_channels);
  }
  if (c.num_sources != expected.num_sources) {
    mismatch("num_sources", c.num_sources, expected.num_sources);
  }
  return model;
}

template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&,
                                             const ModelConfig&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&,
                                               const ModelConfig&);

}  // namespace mrcae
