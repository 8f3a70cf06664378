#include "big/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "big/binary_io.hpp"
#include "big/error.hpp"

namespace big {

namespace binio {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string fnv1a_hex(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string file_hash(const std::string& path) {
  const auto bytes = read_file(path);
  return fnv1a_hex(bytes.data(), bytes.size());
}

}  // namespace binio

namespace {

void write_records(std::ostream& os, const std::vector<NamedTensor>& records) {
  binio::put_u32(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    binio::put_string(os, r.name);
    const Shape& s = r.tensor.shape();
    binio::put_u32(os, static_cast<std::uint32_t>(s.size()));
    for (std::size_t d : s) binio::put_u64(os, d);
    for (double v : r.tensor.data()) binio::put_f64(os, v);
  }
}

std::vector<NamedTensor> read_records(binio::Reader& rd) {
  const std::uint32_t count = rd.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = rd.string();
    const std::uint32_t rank = rd.u32();
    if (rank == 0 || rank > 8) throw ParseError("checkpoint: tensor '" + nt.name + "' has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = rd.u64();
      if (d == 0 || d > (1ULL << 32)) throw ParseError("checkpoint: tensor '" + nt.name + "' has invalid extent");
      n *= d;
    }
    rd.need(n * 8);
    std::vector<double> data(n);
    for (auto& v : data) v = rd.f64();
    nt.tensor = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  return out;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  if (const Tensor* t = find(name)) return *t;
  throw ParseError("checkpoint: missing tensor '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream os(std::ios::binary);
  os.write("BIGM", 4);
  binio::put_u32(os, kCheckpointVersion);
  write_records(os, ckpt.tensors);
  if (ckpt.training) {
    os.write("BIGT", 4);
    binio::put_u64(os, ckpt.training->epoch);
    binio::put_u64(os, ckpt.training->step);
    binio::put_u64(os, ckpt.training->seed);
    write_records(os, ckpt.training->moments);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path);
  const std::string bytes = os.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = binio::read_file(path);
  binio::Reader rd(bytes, "checkpoint " + path);
  if (bytes.size() < 4 || rd.bytes(4) != "BIGM") throw ParseError("checkpoint " + path + ": bad magic");
  const std::uint32_t version = rd.u32();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.tensors = read_records(rd);
  if (!rd.at_end()) {
    if (rd.bytes(4) != "BIGT") throw ParseError("checkpoint " + path + ": unexpected trailing data");
    TrainingState st;
    st.epoch = rd.u64();
    st.step = rd.u64();
    st.seed = rd.u64();
    st.moments = read_records(rd);
    if (!rd.at_end()) throw ParseError("checkpoint " + path + ": unexpected trailing data");
    ckpt.training = std::move(st);
  }
  return ckpt;
}

void assign_from_checkpoint(const std::vector<NamedTensor>& targets, const Checkpoint& ckpt) {
  for (const auto& nt : targets) {
    const Tensor* src = ckpt.find(nt.name);
    if (!src) throw ParseError("checkpoint: missing tensor '" + nt.name + "'");
    if (src->shape() != nt.tensor.shape()) {
      throw ConfigError("checkpoint tensor '" + nt.name + "' has shape " + shape_str(src->shape()) + ", expected " +
                        shape_str(nt.tensor.shape()));
    }
    Tensor dst = nt.tensor;
    std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
  }
}

}  // namespace big
