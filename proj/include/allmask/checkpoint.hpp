#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "allmask/model.hpp"

namespace allmask {

// Checkpoint layout (little-endian):
//   8 bytes  magic "STAMPCK1"
//   u32      tensor count
//   per tensor:
//     u16    name length, then the UTF-8 name
//     u8     rank
//     u32*   dims (rank entries)
//     u8     dtype code (0 = 32-bit float)
//     raw row-major float32 payload

inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'A', 'M', 'P', 'C', 'K', '1'};
inline constexpr std::uint8_t kDtypeF32 = 0;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw format_error("checkpoint: truncated file");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

template <typename Scalar>
void save_checkpoint(const Parameters<Scalar>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("checkpoint: cannot open '" + path + "' for writing");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);

  std::uint32_t count = 0;
  params.for_each_tensor([&](const std::string&, const Matrix<Scalar>&) { ++count; });
  detail::write_le<std::uint32_t>(out, count);

  params.for_each_tensor([&](const std::string& name, const Matrix<Scalar>& tensor) {
    detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(2));  // rank
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rows()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.cols()));
    out.put(static_cast<char>(kDtypeF32));
    for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
        detail::write_le<float>(out, static_cast<float>(tensor(r, c)));
      }
    }
  });
  if (!out) throw format_error("checkpoint: write failed for '" + path + "'");
}

// Loads and validates every tensor shape against the config. Unknown,
// missing or misshapen tensors are format errors.
template <typename Scalar>
Parameters<Scalar> load_checkpoint(const std::string& path, const ModelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("checkpoint: cannot open '" + path + "'");
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw format_error("checkpoint: bad magic");
  }
  const std::uint32_t count = detail::read_le<std::uint32_t>(in);

  std::map<std::string, Matrix<Scalar>> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = detail::read_le<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const int rank = in.get();
    if (!in || rank != 2) throw format_error("checkpoint: unsupported tensor rank");
    const std::uint32_t rows = detail::read_le<std::uint32_t>(in);
    const std::uint32_t cols = detail::read_le<std::uint32_t>(in);
    const int dtype = in.get();
    if (!in || dtype != kDtypeF32) throw format_error("checkpoint: unsupported dtype");
    Matrix<Scalar> tensor(static_cast<int>(rows), static_cast<int>(cols));
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        tensor(static_cast<int>(r), static_cast<int>(c)) =
            static_cast<Scalar>(detail::read_le<float>(in));
      }
    }
    if (!tensors.emplace(std::move(name), std::move(tensor)).second) {
      throw format_error("checkpoint: duplicate tensor name");
    }
  }

  Parameters<Scalar> params = make_zero_parameters<Scalar>(config);
  std::size_t used = 0;
  params.for_each_tensor([&](const std::string& name, Matrix<Scalar>& slot) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw format_error("checkpoint: missing tensor '" + name + "'");
    }
    if (it->second.rows() != slot.rows() || it->second.cols() != slot.cols()) {
      throw format_error("checkpoint: shape mismatch for '" + name + "'");
    }
    slot = std::move(it->second);
    ++used;
  });
  if (used != tensors.size()) {
    throw format_error("checkpoint: unexpected extra tensors");
  }
  return params;
}

// Convenience conversion between scalar types (e.g. float training state to
// a double gradient-check copy).
template <typename To, typename From>
Parameters<To> cast_parameters(const Parameters<From>& params) {
  Parameters<To> out = make_zero_parameters<To>(params.config);
  std::vector<const Matrix<From>*> from;
  params.for_each_tensor(
      [&](const std::string&, const Matrix<From>& t) { from.push_back(&t); });
  std::size_t i = 0;
  out.for_each_tensor([&](const std::string&, Matrix<To>& t) {
    t = from[i++]->template cast<To>();
  });
  return out;
}

}  // namespace allmask
