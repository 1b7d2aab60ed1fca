#include "rwl/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace rwl::num {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& records) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  for (const auto& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.value.rank()));
    for (std::size_t d : r.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : r.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.str(4, "magic") != std::string(kCheckpointMagic, 4)) throw CheckpointError("checkpoint: bad magic");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (!in.done()) {
    NamedTensor r;
    r.name = in.str(in.u32("name length"), "name");
    const std::uint32_t rank = in.u32("rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(in.u32("extent"));
    Tensor t(shape);
    for (auto& v : t.data()) v = static_cast<double>(std::bit_cast<float>(in.u32("data")));
    r.value = std::move(t);
    out.push_back(std::move(r));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  const auto bytes = encode_checkpoint(records);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> snapshot(std::span<const Var> params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name(), p.value()});
  return out;
}

void restore(std::span<const Var> params, const std::vector<NamedTensor>& records) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& r : records) by_name[r.name] = &r.value;
  for (const auto& p : params) {
    auto it = by_name.find(p.name());
    if (it == by_name.end()) throw CheckpointError("checkpoint missing parameter " + p.name());
    if (it->second->shape() != p.shape()) {
      throw CheckpointError("checkpoint shape " + shape_str(it->second->shape()) + " for parameter " + p.name() +
                            " expected " + shape_str(p.shape()));
    }
    p.node()->value = *it->second;
  }
}

}  // namespace rwl::num
