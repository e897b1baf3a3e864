#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mixae/data.hpp"
#include "mixae/model.hpp"

namespace mixae {

// Checkpoint container, version 1. Little-endian binary:
//   magic "MIXAE1\n", then the model config (u64 scalars, u64-counted width
//   lists, u32 enum codes), then every parameter tensor in for_each_tensor
//   order as (u64 rank, u64 dims..., raw f64 payload).
// Round trips are bit-exact for 64-bit parameters.

namespace detail {

constexpr char kCkptMagic[8] = {'M', 'I', 'X', 'A', 'E', '1', '\n', '\0'};

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

inline std::uint64_t get_u64(std::istream& is, const std::string& path) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw FormatError(path + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[i]) << (8 * i);
  return v;
}

inline void put_tensor(std::ostream& os, const Tensor& t) {
  put_u64(os, t.rank());
  for (std::size_t d : t.shape()) put_u64(os, d);
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor get_tensor(std::istream& is, const std::string& path) {
  std::uint64_t rank = get_u64(is, path);
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = get_u64(is, path);
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) throw FormatError(path + ": truncated tensor payload");
  return t;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelConfig& config,
                            const MixaeParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(detail::kCkptMagic, 8);
  detail::put_u64(os, 1);  // version
  detail::put_u64(os, config.input_dim);
  detail::put_u64(os, config.latent_dim);
  detail::put_u64(os, config.num_autoencoders);
  detail::put_u64(os, config.encoder_hidden.size());
  for (std::size_t w : config.encoder_hidden) detail::put_u64(os, w);
  detail::put_u64(os, config.man_hidden.size());
  for (std::size_t w : config.man_hidden) detail::put_u64(os, w);
  detail::put_u64(os, static_cast<std::uint64_t>(config.activation));
  detail::put_u64(os, static_cast<std::uint64_t>(config.reconstruction_loss));
  std::uint64_t tensor_count = 0;
  for_each_tensor(const_cast<MixaeParams&>(params), [&tensor_count](Tensor&) { ++tensor_count; });
  detail::put_u64(os, tensor_count);
  for_each_tensor(const_cast<MixaeParams&>(params),
                  [&os](Tensor& t) { detail::put_tensor(os, t); });
  if (!os) throw IoError("write failure on " + path);
}

inline std::pair<ModelConfig, MixaeParams> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw FormatError(path + ": not a checkpoint file (bad magic)");
  std::uint64_t version = detail::get_u64(is, path);
  if (version != 1)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  ModelConfig config;
  config.input_dim = detail::get_u64(is, path);
  config.latent_dim = detail::get_u64(is, path);
  config.num_autoencoders = detail::get_u64(is, path);
  config.encoder_hidden.resize(detail::get_u64(is, path));
  for (auto& w : config.encoder_hidden) w = detail::get_u64(is, path);
  config.man_hidden.resize(detail::get_u64(is, path));
  for (auto& w : config.man_hidden) w = detail::get_u64(is, path);
  config.activation = static_cast<Activation>(detail::get_u64(is, path));
  config.reconstruction_loss = static_cast<ReconLoss>(detail::get_u64(is, path));
  config.validate();

  // Rebuild the parameter skeleton, then overwrite every tensor from disk.
  SeededRng rng(0);
  MixaeParams params = MixaeParams::init(config, rng);
  std::uint64_t tensor_count = detail::get_u64(is, path);
  std::vector<Tensor*> slots;
  for_each_tensor(params, [&slots](Tensor& t) { slots.push_back(&t); });
  if (tensor_count != slots.size())
    throw FormatError(path + ": tensor count " + std::to_string(tensor_count) +
                      " does not match config-derived count " + std::to_string(slots.size()));
  for (Tensor* slot : slots) {
    Tensor t = detail::get_tensor(is, path);
    if (!t.same_shape(*slot))
      throw FormatError(path + ": tensor shape " + shape_string(t.shape()) +
                        " does not match expected " + shape_string(slot->shape()));
    *slot = std::move(t);
  }
  return {config, std::move(params)};
}

}  // namespace mixae
