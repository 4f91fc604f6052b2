#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "nomae/sparsenn/optim.hpp"
#include "nomae/sparsenn/tensor.hpp"

namespace nomae::nn {

// Binary layout (all integers little-endian):
//   "NOMAEckpt" (9 bytes) | version u32 | tensor count u32
//   per tensor: name length u32 | name bytes | dtype u8 (0 = f32, 1 = f64)
//               | rank u32 | dims u64[rank] | payload (little-endian elements)
inline constexpr char kCheckpointMagic[] = "NOMAEckpt";
inline constexpr uint32_t kCheckpointVersion = 1;

enum class DType : uint8_t { F32 = 0, F64 = 1 };

struct StoredTensor {
  std::string name;
  DType dtype = DType::F32;
  std::vector<uint64_t> dims;
  std::vector<double> values;  // widened; f32 payloads round-trip exactly
};

void write_checkpoint(std::ostream& os, const std::vector<StoredTensor>& tensors);
std::vector<StoredTensor> read_checkpoint(std::istream& is);

// Parameters as "<name>", optimizer moments as "opt.m/<name>", "opt.v/<name>"
// and the step counter as "opt.step".
template <class Real>
std::vector<StoredTensor> to_stored(const ParamStore<Real>& params, const AdamState<Real>* state);

// Copies values into an already-built store (names and shapes must match).
template <class Real>
void from_stored(const std::vector<StoredTensor>& stored, ParamStore<Real>& params, AdamState<Real>* state);

template <class Real>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<Real>& params, const AdamState<Real>* state);

template <class Real>
void load_checkpoint(const std::filesystem::path& path, ParamStore<Real>& params, AdamState<Real>* state);

}  // namespace nomae::nn
