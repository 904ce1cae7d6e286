#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "pvcast/errors.hpp"
#include "pvcast/model.hpp"

namespace pvcast {

namespace {

constexpr char kMagic[8] = {'P', 'V', 'C', 'A', 'S', 'T', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void text(const std::string& s) { bytes(s.data(), s.size()); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}
  void bytes(void* out, std::size_t n) {
    if (n > size_ - pos_) throw FormatError("checkpoint truncated");
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string text(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path, const KeyValues& metadata) {
  KeyValues header = model.config().to_kv();
  header.merge(metadata, "meta.");

  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string head = header.str();
  w.pod<std::uint64_t>(head.size());
  w.text(head);
  const auto params = model.parameters();
  w.pod<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.text(p.name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.tensor->rank()));
    for (std::size_t d : p.tensor->shape()) w.pod<std::uint64_t>(d);
    w.bytes(p.tensor->values().data(), p.tensor->size() * sizeof(double));
  }
  const auto& buf = w.buffer();
  const std::uint32_t crc = checksum(buf.data(), buf.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof kMagic + sizeof(std::uint32_t) * 2) throw FormatError("checkpoint truncated");

  const std::size_t body = data.size() - sizeof(std::uint32_t);
  Reader r(data.data(), body);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, data.data() + body, sizeof stored_crc);
  if (stored_crc != checksum(data.data(), body)) throw FormatError("checkpoint checksum mismatch");

  const auto head_len = r.pod<std::uint64_t>();
  if (head_len > body) throw FormatError("checkpoint truncated");
  KeyValues header;
  ModelConfig config;
  try {
    header = KeyValues::parse(r.text(head_len));
    config = ModelConfig::from_kv(header);
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }

  std::unique_ptr<Model> model;
  try {
    model = build_model(config);
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad checkpoint configuration: ") + e.what());
  }
  auto params = model->parameters();
  const auto count = r.pod<std::uint64_t>();
  if (count != params.size()) throw FormatError("checkpoint parameter count mismatch");
  for (auto& p : params) {
    const auto name_len = r.pod<std::uint32_t>();
    if (name_len > body) throw FormatError("checkpoint truncated");
    if (r.text(name_len) != p.name) throw FormatError("checkpoint parameter name mismatch at " + p.name);
    const auto rank = r.pod<std::uint32_t>();
    if (rank != p.tensor->rank()) throw FormatError("checkpoint rank mismatch at " + p.name);
    for (std::size_t d = 0; d < rank; ++d) {
      if (r.pod<std::uint64_t>() != p.tensor->dim(d)) {
        throw FormatError("checkpoint shape mismatch at " + p.name);
      }
    }
    r.bytes(p.tensor->values().data(), p.tensor->size() * sizeof(double));
  }
  if (!r.done()) throw FormatError("trailing bytes in checkpoint");

  Checkpoint ck;
  ck.model = std::move(model);
  for (const auto& [k, v] : header.entries()) {
    if (k.rfind("meta.", 0) == 0) ck.metadata.set(k.substr(5), v);
  }
  return ck;
}

}  // namespace pvcast
