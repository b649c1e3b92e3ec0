#include "lvr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace lvr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'V', 'R', 'N'};
constexpr std::uint8_t kDtypeF32 = 1;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  void put_table(const std::vector<NamedTensor>& table) {
    put(static_cast<std::uint32_t>(table.size()));
    for (const auto& t : table) {
      put_string(t.name);
      put(kDtypeF32);
      put(static_cast<std::uint32_t>(t.value.rank()));
      for (auto e : t.value.shape()) put(static_cast<std::uint64_t>(e));
      put_bytes(t.value.raw(), t.value.size() * sizeof(float));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  }
  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<NamedTensor> get_table(const char* what) {
    const auto count = get<std::uint32_t>(what);
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedTensor t;
      t.name = get_string(what);
      const auto dtype = get<std::uint8_t>(what);
      if (dtype != kDtypeF32) throw std::runtime_error("checkpoint: unsupported dtype tag " + std::to_string(dtype));
      const auto rank = get<std::uint32_t>(what);
      if (rank > 8) throw std::runtime_error("checkpoint: implausible tensor rank " + std::to_string(rank));
      Shape shape;
      std::size_t n = 1;
      for (std::uint32_t r = 0; r < rank; ++r) {
        shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(what)));
        n *= shape.back();
      }
      need(n * sizeof(float), what);
      std::vector<float> data(n);
      std::memcpy(data.data(), bytes_.data() + pos_, n * sizeof(float));
      pos_ += n * sizeof(float);
      t.value = Tensor<float>(std::move(shape), std::move(data));
      out.push_back(std::move(t));
    }
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<NamedTensor> name_moments(const std::vector<NamedTensor>& params, const std::vector<Tensor<float>>& m) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < m.size(); ++i) out.push_back({params.at(i).name, m[i]});
  return out;
}

std::vector<Tensor<float>> unname_moments(const std::vector<NamedTensor>& params, std::vector<NamedTensor> table,
                                          const char* what) {
  if (table.size() != params.size()) throw std::runtime_error(std::string("checkpoint: ") + what + " count mismatch");
  std::vector<Tensor<float>> out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].name != params[i].name || table[i].value.shape() != params[i].value.shape()) {
      throw std::runtime_error(std::string("checkpoint: ") + what + " entry " + table[i].name + " does not match");
    }
    out.push_back(std::move(table[i].value));
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(c.version);
  w.put_string(c.config_text);
  w.put_table(c.params);
  w.put(c.adam.t);
  w.put_table(name_moments(c.params, c.adam.m));
  w.put_table(name_moments(c.params, c.adam.v));
  w.put(c.step);
  w.put(c.rng_seed);
  w.put(c.rng_position);
  w.put(c.best_val_psnr);
  for (double s : c.partial.sums) w.put(s);
  w.put(c.partial.count);
  return w.take();
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw std::runtime_error("not a checkpoint (bad magic)");
  for (int i = 0; i < 4; ++i) r.get<std::uint8_t>("magic");
  Checkpoint c;
  c.version = r.get<std::uint32_t>("version");
  if (c.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint version " + std::to_string(c.version) + " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  c.config_text = r.get_string("config");
  c.params = r.get_table("parameters");
  c.adam.t = r.get<std::uint64_t>("adam step");
  c.adam.m = unname_moments(c.params, r.get_table("adam first moments"), "first moment");
  c.adam.v = unname_moments(c.params, r.get_table("adam second moments"), "second moment");
  c.step = r.get<std::uint64_t>("step");
  c.rng_seed = r.get<std::uint64_t>("rng seed");
  c.rng_position = r.get<std::uint64_t>("rng position");
  c.best_val_psnr = r.get<double>("best validation psnr");
  for (double& s : c.partial.sums) s = r.get<double>("epoch sums");
  c.partial.count = r.get<std::uint64_t>("epoch count");
  if (!r.done()) throw std::runtime_error("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot write");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open checkpoint");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const TrainConfig& config, const Lvrnet<float>& net, const AdamState<float>& adam) {
  Checkpoint c;
  c.config_text = to_ini(config);
  for (const auto& p : net.parameters()) c.params.push_back({p.name, p.value});
  c.adam = adam;
  return c;
}

TrainConfig checkpoint_config(const Checkpoint& ckpt) { return parse_config(ckpt.config_text, {}, "/"); }

void load_weights(const Checkpoint& ckpt, Lvrnet<float>& net) {
  auto& params = net.parameters();
  if (ckpt.params.size() != params.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(ckpt.params.size()) + " tensors, model expects " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.params[i];
    if (src.name != params[i].name || src.value.shape() != params[i].value.shape()) {
      throw std::runtime_error("checkpoint tensor " + src.name + " " + shape_str(src.value.shape()) +
                               " does not match model tensor " + params[i].name + " " +
                               shape_str(params[i].value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = ckpt.params[i].value;
}

Lvrnet<float> model_from_checkpoint(const Checkpoint& ckpt) {
  Lvrnet<float> net(checkpoint_config(ckpt).model);
  load_weights(ckpt, net);
  return net;
}

}  // namespace lvr
