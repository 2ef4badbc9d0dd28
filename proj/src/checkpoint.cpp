#include "clood/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "clood/errors.hpp"
#include "clood/hash.hpp"

namespace clood::nn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename V>
void put(std::vector<std::uint8_t>& out, V v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(V));
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, b_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw IoError("truncated checkpoint");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

}  // namespace

std::string spec_hash(const NetworkSpec& spec) {
  const nlohmann::json j = {{"arch", "conv16-conv32-conv48-conv64-dense128"},
                            {"input_size", spec.input_size},
                            {"num_classes", spec.num_classes}};
  return sha256_hex(j.dump()).substr(0, 16);
}

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const Network<T>& net, std::int64_t step,
                                               std::uint64_t seed, const nlohmann::json& extra) {
  nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
  header["format"] = std::string(kCheckpointMagic);
  header["dtype"] = dtype_name<T>();
  header["spec"] = {{"input_size", net.spec().input_size}, {"num_classes", net.spec().num_classes}};
  header["spec_hash"] = spec_hash(net.spec());
  header["step"] = step;
  header["seed"] = seed;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.params().size()));
  for (const auto& p : net.params()) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put<std::uint8_t>(out, sizeof(T));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.shape.size()));
    for (int d : p.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto* raw = reinterpret_cast<const std::uint8_t*>(p.value.data());
    out.insert(out.end(), raw, raw + p.value.size() * sizeof(T));
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net, std::int64_t step,
                     std::uint64_t seed, const nlohmann::json& extra) {
  const auto bytes = serialize_checkpoint(net, step, seed, extra);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
LoadedCheckpoint<T> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Cursor c(bytes);
  if (c.str(kCheckpointMagic.size()) != kCheckpointMagic) throw IoError("not a CLOODCK1 checkpoint");
  const auto header_len = c.get<std::uint32_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(c.str(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  NetworkSpec spec;
  spec.input_size = header.at("spec").at("input_size").get<int>();
  spec.num_classes = header.at("spec").at("num_classes").get<int>();
  LoadedCheckpoint<T> out{Network<T>(spec), header};
  auto& params = out.net.params();
  const auto count = c.get<std::uint32_t>();
  if (count != params.size()) throw IoError("checkpoint tensor count does not match the network");
  for (auto& p : params) {
    const auto name = c.str(c.get<std::uint16_t>());
    if (name != p.name) throw IoError("checkpoint tensor '" + name + "' where '" + p.name + "' expected");
    const auto width = c.get<std::uint8_t>();
    const auto ndim = c.get<std::uint8_t>();
    std::vector<int> shape(ndim);
    for (int& d : shape) d = static_cast<int>(c.get<std::uint32_t>());
    if (shape != p.shape) throw IoError("checkpoint shape mismatch for " + name);
    const auto* raw = c.take(p.value.size() * width);
    if (width == sizeof(T)) {
      std::memcpy(p.value.data(), raw, p.value.size() * sizeof(T));
    } else if (width == 4) {
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        float v;
        std::memcpy(&v, raw + 4 * i, 4);
        p.value[i] = static_cast<T>(v);
      }
    } else if (width == 8) {
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        double v;
        std::memcpy(&v, raw + 8 * i, 8);
        p.value[i] = static_cast<T>(v);
      }
    } else {
      throw IoError("unsupported scalar width in checkpoint");
    }
  }
  if (!c.done()) throw IoError("trailing bytes in checkpoint");
  return out;
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("checkpoint not found: " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return deserialize_checkpoint<T>(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

#define CLOOD_INSTANTIATE(T)                                                                         \
  template std::vector<std::uint8_t> serialize_checkpoint<T>(const Network<T>&, std::int64_t,        \
                                                             std::uint64_t, const nlohmann::json&);  \
  template void save_checkpoint<T>(const std::filesystem::path&, const Network<T>&, std::int64_t,    \
                                   std::uint64_t, const nlohmann::json&);                            \
  template LoadedCheckpoint<T> deserialize_checkpoint<T>(std::span<const std::uint8_t>);             \
  template LoadedCheckpoint<T> load_checkpoint<T>(const std::filesystem::path&);

CLOOD_INSTANTIATE(float)
CLOOD_INSTANTIATE(double)

#undef CLOOD_INSTANTIATE

}  // namespace clood::nn
