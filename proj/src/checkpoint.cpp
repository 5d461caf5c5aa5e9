#include "nwinv/checkpoint.hpp"

#include "nwinv/errors.hpp"
#include "nwinv/io.hpp"

namespace nwinv {

namespace {

constexpr char kMagic[4] = {'N', 'W', 'C', 'K'};
// Guards against absurd allocations from corrupt headers.
constexpr std::uint64_t kMaxDim = 1u << 24;

void put_tensor(std::string& out, const Tensor& t) {
  for (double v : t.data()) bin::put_f64(out, v);
}

void read_tensor(bin::Reader& r, Tensor& t) {
  if (r.remaining() / 8 < t.numel()) throw FormatError("checkpoint truncated inside a weight block");
  for (auto& v : t.storage()) v = r.f64();
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  bin::put_u32(out, kCheckpointVersion);
  const auto& dims = ckpt.net.layer_dims();
  bin::put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (std::size_t d : dims) bin::put_u64(out, d);
  for (std::size_t l = 0; l < ckpt.net.num_layers(); ++l) {
    put_tensor(out, ckpt.net.weight(l));
    put_tensor(out, ckpt.net.bias(l));
  }
  out.push_back(ckpt.head ? 1 : 0);
  if (ckpt.head) {
    bin::put_u64(out, ckpt.head->feature_dim());
    bin::put_u64(out, ckpt.head->n_classes());
    put_tensor(out, ckpt.head->weight);
    put_tensor(out, ckpt.head->bias);
  }
  const std::string meta = ckpt.metadata.dump();
  bin::put_u64(out, meta.size());
  out += meta;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  bin::Reader r(bytes, "checkpoint");
  if (bytes.size() < 4 || r.raw(4) != std::string(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t n_dims = r.u32();
  if (n_dims < 2 || n_dims > 1024) throw FormatError("checkpoint has an invalid layer count " + std::to_string(n_dims));
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) {
    const std::uint64_t v = r.u64();
    if (v == 0 || v > kMaxDim) throw FormatError("checkpoint has an invalid layer width " + std::to_string(v));
    d = static_cast<std::size_t>(v);
  }
  Checkpoint ckpt;
  ckpt.net = FeatureNet(dims);
  for (std::size_t l = 0; l < ckpt.net.num_layers(); ++l) {
    read_tensor(r, ckpt.net.weight(l));
    read_tensor(r, ckpt.net.bias(l));
  }
  const std::string flag = r.raw(1);
  if (flag[0] == 1) {
    const std::uint64_t f = r.u64(), c = r.u64();
    if (f == 0 || c == 0 || f > kMaxDim || c > kMaxDim) throw FormatError("checkpoint head has invalid dimensions");
    LinearHead head = LinearHead::zeros(static_cast<std::size_t>(f), static_cast<std::size_t>(c));
    read_tensor(r, head.weight);
    read_tensor(r, head.bias);
    ckpt.head = std::move(head);
  } else if (flag[0] != 0) {
    throw FormatError("checkpoint head flag must be 0 or 1");
  }
  const std::uint64_t len = r.u64();
  if (len > r.remaining()) throw FormatError("checkpoint truncated inside metadata");
  const std::string meta = r.raw(static_cast<std::size_t>(len));
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  bin::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(bin::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace nwinv
