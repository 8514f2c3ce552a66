#include "icl/checkpoint.hpp"

#include "icl/binary_io.hpp"
#include "icl/errors.hpp"

namespace icl {

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const CheckpointTensor& Checkpoint::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw FormatError("checkpoint has no tensor '" + name + "'", 0);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  binary::Writer out;
  out.put_bytes("ICLC");
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put<std::uint64_t>(checkpoint.tensors.size());
  for (const auto& t : checkpoint.tensors) {
    if (numel(t.shape) != t.values.size()) {
      throw DimensionError("checkpoint tensor '" + t.name + "' shape " + to_string(t.shape) + " does not match " +
                           std::to_string(t.values.size()) + " values");
    }
    out.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    out.put_bytes(t.name);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) out.put<std::uint64_t>(d);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    if (t.dtype == DType::f32) {
      for (double v : t.values) out.put<float>(static_cast<float>(v));
    } else {
      for (double v : t.values) out.put<double>(v);
    }
  }
  return out.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  binary::Reader in(bytes);
  if (in.get_string(4, "magic") != "ICLC") throw FormatError("not a checkpoint (bad magic)", 0);
  const std::size_t version_at = in.offset();
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto count = in.get<std::uint64_t>("tensor count");
  Checkpoint ck;
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const auto name_len = in.get<std::uint32_t>("name length");
    t.name = in.get_string(name_len, "name");
    const auto ndim = in.get<std::uint32_t>("ndim");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::size_t at = in.offset();
      const auto dim = in.get<std::uint64_t>("dims");
      if (dim == 0 || dim > in.remaining()) throw FormatError("implausible dimension in '" + t.name + "'", at);
      t.shape.push_back(dim);
      n *= dim;
    }
    const std::size_t dtype_at = in.offset();
    const auto code = in.get<std::uint8_t>("dtype");
    if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code), dtype_at);
    t.dtype = static_cast<DType>(code);
    const std::size_t width = t.dtype == DType::f32 ? 4 : 8;
    if (n > in.remaining() / width) throw FormatError("truncated data for '" + t.name + "'", in.offset());
    t.values.resize(n);
    for (auto& v : t.values) {
      v = t.dtype == DType::f32 ? static_cast<double>(in.get<float>("data")) : in.get<double>("data");
    }
    ck.tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after checkpoint", in.offset());
  return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  binary::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(binary::read_file(path)); }

}  // namespace icl
