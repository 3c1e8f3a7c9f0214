#include "cfin/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <set>

namespace cfin {
namespace {

constexpr char kMagic[4] = {'C', 'F', 'I', 'N'};
constexpr std::uint8_t kDtypeF64 = 1;
constexpr std::uint8_t kDtypeF32 = 2;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ArchiveError(ArchiveError::Kind::truncated, "truncated archive");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const Model& model) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kArchiveVersion);
  const std::string config = canonical_json(model.config());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out.insert(out.end(), config.begin(), config.end());
  const auto& items = model.params().items();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(items.size()));
  const bool f32 = model.config().precision == Precision::f32;
  for (const auto& [name, var] : items) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(f32 ? kDtypeF32 : kDtypeF64);
    for (std::size_t d : var.shape()) put<std::uint64_t>(out, d);
    for (double v : var.value().data()) {
      if (f32) put<float>(out, static_cast<float>(v));
      else put<double>(out, v);
    }
  }
  return out;
}

Model deserialize(std::span<const std::uint8_t> bytes) {
  using Kind = ArchiveError::Kind;
  Reader in(bytes);
  if (in.get_string(4) != std::string(kMagic, 4)) throw ArchiveError(Kind::bad_magic, "bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kArchiveVersion) {
    throw ArchiveError(Kind::bad_version, "unsupported archive version " + std::to_string(version));
  }
  const auto config_len = in.get<std::uint32_t>();
  ModelConfig config;
  try {
    config = nlohmann::json::parse(in.get_string(config_len)).get<ModelConfig>();
    config.validate();
  } catch (const ArchiveError&) {
    throw;
  } catch (const std::exception& e) {
    throw ArchiveError(Kind::bad_config, std::string("bad config: ") + e.what());
  }
  Model model = Model::build(config, 0);
  const auto count = in.get<std::uint32_t>();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.get_string(in.get<std::uint32_t>());
    const auto dtype = in.get<std::uint8_t>();
    if (dtype != kDtypeF64 && dtype != kDtypeF32) {
      throw ArchiveError(Kind::bad_dtype, "tensor '" + name + "': unknown dtype tag " + std::to_string(dtype));
    }
    Shape shape{};
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    if (!seen.insert(name).second) throw ArchiveError(Kind::duplicate_tensor, "duplicate tensor '" + name + "'");
    const auto param = model.params().find(name);
    if (!param) throw ArchiveError(Kind::unknown_tensor, "tensor '" + name + "' is not part of the configured model");
    if (shape != param->shape()) {
      throw ArchiveError(Kind::shape_mismatch, "shape mismatch for tensor '" + name + "': archive " +
                                                   to_string(shape) + " vs config " + to_string(param->shape()));
    }
    std::vector<double> data(numel(shape));
    for (double& v : data) v = dtype == kDtypeF64 ? in.get<double>() : static_cast<double>(in.get<float>());
    Var target = *param;
    target.assign(Tensor(shape, std::move(data)));
  }
  if (!in.done()) throw ArchiveError(Kind::trailing_data, "trailing bytes after tensor table");
  for (const auto& [name, var] : model.params().items()) {
    if (!seen.count(name)) throw ArchiveError(Kind::missing_tensor, "missing tensor '" + name + "'");
  }
  return model;
}

void save(const Model& model, const std::string& path) {
  const auto bytes = serialize(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArchiveError(ArchiveError::Kind::io, "cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ArchiveError(ArchiveError::Kind::io, "write failed for '" + path + "'");
}

Model load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArchiveError(ArchiveError::Kind::io, "cannot open model file '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace cfin
