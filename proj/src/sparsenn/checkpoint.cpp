#include "nomae/sparsenn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <type_traits>

#include "nomae/error.hpp"

namespace nomae::nn {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

template <class U>
void put_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  for (std::size_t b = 0; b < sizeof(U); ++b) buf[b] = static_cast<unsigned char>(value >> (8 * b));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) fail(ErrorKind::FormatError, "truncated checkpoint");
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(buf[b]) << (8 * b);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& os, const std::vector<StoredTensor>& tensors) {
  os.write(kCheckpointMagic, kMagicLen);
  put_le<uint32_t>(os, kCheckpointVersion);
  put_le<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
  for (const StoredTensor& t : tensors) {
    put_le<uint32_t>(os, static_cast<uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<uint8_t>(os, static_cast<uint8_t>(t.dtype));
    put_le<uint32_t>(os, static_cast<uint32_t>(t.dims.size()));
    uint64_t count = 1;
    for (uint64_t d : t.dims) {
      put_le<uint64_t>(os, d);
      count *= d;
    }
    require(count == t.values.size(), ErrorKind::ShapeError, "tensor '" + t.name + "' dims do not match payload");
    for (double v : t.values) {
      if (t.dtype == DType::F32)
        put_le<uint32_t>(os, std::bit_cast<uint32_t>(static_cast<float>(v)));
      else
        put_le<uint64_t>(os, std::bit_cast<uint64_t>(v));
    }
  }
  if (!os) fail(ErrorKind::IoError, "failed writing checkpoint");
}

std::vector<StoredTensor> read_checkpoint(std::istream& is) {
  char magic[kMagicLen];
  if (!is.read(magic, kMagicLen) || std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0)
    fail(ErrorKind::FormatError, "not a checkpoint (bad magic)");
  const uint32_t version = get_le<uint32_t>(is);
  require(version == kCheckpointVersion, ErrorKind::FormatError, "unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = get_le<uint32_t>(is);
  std::vector<StoredTensor> out(count);
  for (StoredTensor& t : out) {
    const uint32_t len = get_le<uint32_t>(is);
    t.name.resize(len);
    if (!is.read(t.name.data(), len)) fail(ErrorKind::FormatError, "truncated tensor name");
    const uint8_t tag = get_le<uint8_t>(is);
    require(tag <= 1, ErrorKind::FormatError, "unknown dtype tag");
    t.dtype = static_cast<DType>(tag);
    const uint32_t rank = get_le<uint32_t>(is);
    uint64_t n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(get_le<uint64_t>(is));
      n *= t.dims.back();
    }
    t.values.resize(n);
    for (double& v : t.values)
      v = t.dtype == DType::F32 ? static_cast<double>(std::bit_cast<float>(get_le<uint32_t>(is)))
                                : std::bit_cast<double>(get_le<uint64_t>(is));
  }
  return out;
}

template <class Real>
std::vector<StoredTensor> to_stored(const ParamStore<Real>& params, const AdamState<Real>* state) {
  constexpr DType dtype = std::is_same_v<Real, float> ? DType::F32 : DType::F64;
  std::vector<StoredTensor> out;
  auto push = [&](std::string name, const std::vector<std::size_t>& shape, const std::vector<Real>& values) {
    StoredTensor t;
    t.name = std::move(name);
    t.dtype = dtype;
    t.dims.assign(shape.begin(), shape.end());
    t.values.assign(values.begin(), values.end());
    out.push_back(std::move(t));
  };
  for (const auto& p : params.tensors()) push(p.name, p.shape, p.value);
  if (state && state->step > 0) {
    std::size_t n = 0;
    for (const auto& p : params.tensors()) {
      push("opt.m/" + p.name, p.shape, state->m.at(n));
      push("opt.v/" + p.name, p.shape, state->v.at(n));
      ++n;
    }
    StoredTensor step;
    step.name = "opt.step";
    step.dtype = DType::F64;
    step.dims = {1};
    step.values = {static_cast<double>(state->step)};
    out.push_back(std::move(step));
  }
  return out;
}

template <class Real>
void from_stored(const std::vector<StoredTensor>& stored, ParamStore<Real>& params, AdamState<Real>* state) {
  auto lookup = [&](const std::string& name) -> const StoredTensor* {
    for (const auto& t : stored)
      if (t.name == name) return &t;
    return nullptr;
  };
  auto copy_into = [](const StoredTensor& t, const std::vector<std::size_t>& shape, std::vector<Real>& dst) {
    require(std::equal(t.dims.begin(), t.dims.end(), shape.begin(), shape.end()), ErrorKind::ShapeError,
            "checkpoint tensor '" + t.name + "' has a different shape");
    dst.assign(t.values.begin(), t.values.end());
  };
  for (auto& p : params.tensors()) {
    const StoredTensor* t = lookup(p.name);
    require(t != nullptr, ErrorKind::FormatError, "checkpoint lacks parameter '" + p.name + "'");
    copy_into(*t, p.shape, p.value);
  }
  if (!state) return;
  const StoredTensor* step = lookup("opt.step");
  *state = AdamState<Real>{};
  if (!step) return;
  state->step = static_cast<int64_t>(step->values.at(0));
  for (auto& p : params.tensors()) {
    const StoredTensor* m = lookup("opt.m/" + p.name);
    const StoredTensor* v = lookup("opt.v/" + p.name);
    require(m && v, ErrorKind::FormatError, "checkpoint lacks optimizer moments for '" + p.name + "'");
    copy_into(*m, p.shape, state->m.emplace_back());
    copy_into(*v, p.shape, state->v.emplace_back());
  }
}

template <class Real>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<Real>& params, const AdamState<Real>* state) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  write_checkpoint(os, to_stored(params, state));
}

template <class Real>
void load_checkpoint(const std::filesystem::path& path, ParamStore<Real>& params, AdamState<Real>* state) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  from_stored(read_checkpoint(is), params, state);
}

template std::vector<StoredTensor> to_stored(const ParamStore<float>&, const AdamState<float>*);
template std::vector<StoredTensor> to_stored(const ParamStore<double>&, const AdamState<double>*);
template void from_stored(const std::vector<StoredTensor>&, ParamStore<float>&, AdamState<float>*);
template void from_stored(const std::vector<StoredTensor>&, ParamStore<double>&, AdamState<double>*);
template void save_checkpoint(const std::filesystem::path&, const ParamStore<float>&, const AdamState<float>*);
template void save_checkpoint(const std::filesystem::path&, const ParamStore<double>&, const AdamState<double>*);
template void load_checkpoint(const std::filesystem::path&, ParamStore<float>&, AdamState<float>*);
template void load_checkpoint(const std::filesystem::path&, ParamStore<double>&, AdamState<double>*);

}  // namespace nomae::nn
