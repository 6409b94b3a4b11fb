#include "ecglab/pipeline/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "ecglab/error.hpp"

namespace ecglab {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'C', 'S', 'K'};

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  void bytes(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (end_ - pos_ < n) throw ParseError(std::string("checkpoint: truncated while reading ") + what + " at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

CheckpointTensor scalar(float v) { return {{1}, {v}}; }

std::uint32_t crc(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

void add_registry(Checkpoint& c, const std::string& prefix, const ParameterRegistry<float>& reg) {
  for (const auto& [name, t] : reg.all()) {
    CheckpointTensor e;
    for (auto d : t.shape()) e.dims.push_back(static_cast<std::uint32_t>(d));
    e.data.assign(t.data().begin(), t.data().end());
    c.tensors[prefix + name] = std::move(e);
  }
}

const CheckpointTensor& find(const Checkpoint& c, const std::string& name) {
  auto it = c.tensors.find(name);
  if (it == c.tensors.end()) throw LookupError("checkpoint: missing tensor \"" + name + "\"");
  return it->second;
}

void load_into(const CheckpointTensor& e, const std::string& name, ad::Tensor<float>& t) {
  std::vector<std::size_t> dims(e.dims.begin(), e.dims.end());
  if (dims != t.shape()) {
    throw ShapeError("checkpoint: tensor \"" + name + "\" has shape " + ad::to_string(dims) + ", model expects " +
                     ad::to_string(t.shape()));
  }
  std::copy(e.data.begin(), e.data.end(), t.mutable_data().begin());
}

void restore_registry(const Checkpoint& c, const std::string& prefix, ParameterRegistry<float>& reg) {
  for (auto& [name, t] : reg.all()) load_into(find(c, prefix + name), prefix + name, t);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, CheckpointTensor> all = ckpt.tensors;
  all["meta/step"] = scalar(static_cast<float>(ckpt.step));
  all["meta/val_loss"] = scalar(ckpt.val_loss);
  // 64-bit hash as four 16-bit chunks, each exact in f32.
  CheckpointTensor h{{4}, {}};
  for (int k = 0; k < 4; ++k) h.data.push_back(static_cast<float>((ckpt.config_hash >> (16 * k)) & 0xffff));
  all["meta/config_hash"] = std::move(h);

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  for (const auto& [name, e] : all) {
    std::size_t n = 1;
    for (auto d : e.dims) n *= d;
    if (n != e.data.size()) throw ShapeError("checkpoint: tensor \"" + name + "\" dims disagree with its data length");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put<std::uint32_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(e.data.data());
    out.insert(out.end(), p, p + e.data.size() * sizeof(float));
  }
  put<std::uint32_t>(out, crc(out.data(), out.size()));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 2 + 4 + 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("checkpoint: missing ECSK magic");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc(bytes.data(), body)) throw ChecksumError("checkpoint: checksum mismatch");

  Reader r(bytes, body);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("entry count");
  Checkpoint c;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = r.get<std::uint32_t>("name length");
    std::string name(len, '\0');
    r.bytes(name.data(), len, "name");
    CheckpointTensor e;
    const auto ndim = r.get<std::uint32_t>("ndim");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      e.dims.push_back(r.get<std::uint32_t>("dims"));
      n *= e.dims.back();
    }
    if (n > body) throw ParseError("checkpoint: tensor \"" + name + "\" larger than the file");
    e.data.resize(n);
    r.bytes(e.data.data(), n * sizeof(float), "tensor data");
    if (!c.tensors.emplace(name, std::move(e)).second) throw ParseError("checkpoint: duplicate tensor \"" + name + "\"");
  }
  if (r.pos() != body) throw ParseError("checkpoint: trailing bytes before the checksum");

  auto take = [&](const std::string& name, std::size_t n) {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end() || it->second.data.size() != n) throw ParseError("checkpoint: missing or malformed " + name);
    auto data = it->second.data;
    c.tensors.erase(it);
    return data;
  };
  c.step = static_cast<std::uint64_t>(take("meta/step", 1)[0]);
  c.val_loss = take("meta/val_loss", 1)[0];
  const auto h = take("meta/config_hash", 4);
  for (int k = 0; k < 4; ++k) c.config_hash |= static_cast<std::uint64_t>(h[static_cast<std::size_t>(k)]) << (16 * k);
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint snapshot(const AlignmentModel<float>& model, const Temperatures<float>& temps, std::uint64_t step,
                    float val_loss, std::uint64_t config_hash) {
  Checkpoint c;
  add_registry(c, "student/", model.student());
  add_registry(c, "teacher/", model.teachers());
  c.tensors["temperature/s_ctr"] = scalar(temps.s_ctr.data()[0]);
  c.tensors["temperature/s_gram"] = scalar(temps.s_gram.data()[0]);
  c.step = step;
  c.val_loss = val_loss;
  c.config_hash = config_hash;
  return c;
}

void restore(const Checkpoint& ckpt, AlignmentModel<float>& model, Temperatures<float>* temps) {
  restore_registry(ckpt, "student/", model.student());
  restore_registry(ckpt, "teacher/", model.teachers());
  if (!model.teachers_frozen()) model.freeze_teachers();
  if (temps) {
    load_into(find(ckpt, "temperature/s_ctr"), "temperature/s_ctr", temps->s_ctr);
    load_into(find(ckpt, "temperature/s_gram"), "temperature/s_gram", temps->s_gram);
  }
}

}  // namespace ecglab
