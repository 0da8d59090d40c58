#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "winflow/env.hpp"
#include "winflow/mlp.hpp"
#include "winflow/replay.hpp"

namespace winflow {

// Versioned binary container shared by net checkpoints, run checkpoints,
// and buffer snapshots. All integers and 64-bit floats are little-endian;
// doubles round-trip bit-identically.
inline constexpr char kCheckpointMagic[4] = {'W', 'F', 'N', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64_array(const std::vector<double>& xs) {
    u64(xs.size());
    for (double x : xs) f64(x);
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> f64_array() {
    const std::uint64_t n = u64();
    std::vector<double> xs(n);
    for (auto& x : xs) x = f64();
    return xs;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > data_.size()) throw std::invalid_argument("checkpoint: truncated data");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string data_;
  std::size_t pos_ = 0;
};

inline void write_mlp_spec(ByteWriter& w, const MlpSpec& s) {
  w.u32(static_cast<std::uint32_t>(s.input_dim));
  w.u32(static_cast<std::uint32_t>(s.hidden_dims.size()));
  for (int h : s.hidden_dims) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(s.output_dim));
  w.u8(static_cast<std::uint8_t>(s.activation));
}

inline MlpSpec read_mlp_spec(ByteReader& r) {
  MlpSpec s;
  s.input_dim = static_cast<int>(r.u32());
  const std::uint32_t n = r.u32();
  s.hidden_dims.resize(n);
  for (auto& h : s.hidden_dims) h = static_cast<int>(r.u32());
  s.output_dim = static_cast<int>(r.u32());
  s.activation = static_cast<Activation>(r.u8());
  s.validate();
  return s;
}

inline void write_net_block(ByteWriter& w, const MlpParams& p, const AdamState& a) {
  write_mlp_spec(w, p.spec);
  w.f64_array(p.values);
  w.f64(a.beta1);
  w.f64(a.beta2);
  w.f64(a.eps);
  w.u64(a.t);
  w.f64_array(a.m);
  w.f64_array(a.v);
}

inline std::pair<MlpParams, AdamState> read_net_block(ByteReader& r) {
  MlpParams p;
  p.spec = read_mlp_spec(r);
  p.values = r.f64_array();
  if (p.values.size() != p.spec.param_count())
    throw std::invalid_argument("checkpoint: parameter count does not match spec");
  AdamState a;
  a.beta1 = r.f64();
  a.beta2 = r.f64();
  a.eps = r.f64();
  a.t = r.u64();
  a.m = r.f64_array();
  a.v = r.f64_array();
  if (a.m.size() != p.values.size() || a.v.size() != p.values.size())
    throw std::invalid_argument("checkpoint: optimizer state length mismatch");
  return {std::move(p), std::move(a)};
}

inline void write_env_state(ByteWriter& w, const EnvState& s) {
  w.u8(static_cast<std::uint8_t>(s.layout));
  w.f64_array(s.values);
}

inline EnvState read_env_state(ByteReader& r) {
  EnvState s;
  s.layout = static_cast<EnvKind>(r.u8());
  s.values = r.f64_array();
  if (s.values.size() != static_cast<std::size_t>(state_dim(s.layout)))
    throw std::invalid_argument("checkpoint: state width does not match layout");
  return s;
}

inline void write_buffer(ByteWriter& w, const ReplayBuffer& b) {
  w.u64(b.capacity());
  w.u64(b.total_pushed());
  w.u64(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Transition& t = b.at(i);
    write_env_state(w, t.s_prev);
    w.f64(t.a_prev.values[0]);
    w.f64(t.a_prev.values[1]);
    w.f64(t.r);
    write_env_state(w, t.s);
    w.i64(t.episode_id);
    w.u8(static_cast<std::uint8_t>(t.phase));
    w.u8(t.terminal ? 1 : 0);
  }
}

inline ReplayBuffer read_buffer(ByteReader& r) {
  const std::uint64_t capacity = r.u64();
  const std::uint64_t total_pushed = r.u64();
  const std::uint64_t size = r.u64();
  ReplayBuffer b(capacity);
  for (std::uint64_t i = 0; i < size; ++i) {
    Transition t;
    t.s_prev = read_env_state(r);
    t.a_prev.values[0] = r.f64();
    t.a_prev.values[1] = r.f64();
    t.r = r.f64();
    t.s = read_env_state(r);
    t.episode_id = r.i64();
    t.phase = static_cast<Phase>(r.u8());
    t.terminal = r.u8() != 0;
    b.push(std::move(t));
  }
  b.set_total_pushed(total_pushed);
  return b;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_header(ByteWriter& w, char kind) {
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(kind));
}

inline char read_header(ByteReader& r) {
  for (char c : kCheckpointMagic)
    if (static_cast<char>(r.u8()) != c)
      throw std::invalid_argument("checkpoint: bad magic tag");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version));
  return static_cast<char>(r.u8());
}

}  // namespace detail

// --- single-network checkpoint (spec + params + optimizer state) ---

struct NetCheckpoint {
  MlpParams params;
  AdamState adam;
};

inline void save_net_checkpoint(const std::filesystem::path& path, const MlpParams& params,
                                const AdamState& adam) {
  detail::ByteWriter w;
  detail::write_header(w, 'N');
  detail::write_net_block(w, params, adam);
  detail::write_file(path, w.data());
}

inline NetCheckpoint load_net_checkpoint(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path));
  if (detail::read_header(r) != 'N')
    throw std::invalid_argument("checkpoint: not a net checkpoint: " + path.string());
  auto [params, adam] = detail::read_net_block(r);
  return NetCheckpoint{std::move(params), std::move(adam)};
}

// --- full run checkpoint ---

struct RunCheckpoint {
  std::uint8_t variant = 0;
  EnvKind env_kind = EnvKind::reacher2;
  std::uint8_t phase = 0;
  std::int64_t global_step = 0;
  std::int64_t episode = 0;
  MlpParams flow_params;
  AdamState flow_adam;
  MlpParams retrieval_params;
  AdamState retrieval_adam;
  std::optional<ReplayBuffer> buffer;            // shared (flow-side for split variants)
  std::optional<ReplayBuffer> retrieval_buffer;  // only for the split-buffer variant
};

inline void save_run_checkpoint(const std::filesystem::path& path, const RunCheckpoint& c) {
  detail::ByteWriter w;
  detail::write_header(w, 'R');
  w.u8(c.variant);
  w.u8(static_cast<std::uint8_t>(c.env_kind));
  w.u8(c.phase);
  w.i64(c.global_step);
  w.i64(c.episode);
  detail::write_net_block(w, c.flow_params, c.flow_adam);
  detail::write_net_block(w, c.retrieval_params, c.retrieval_adam);
  std::uint8_t n_buffers = 0;
  if (c.buffer) ++n_buffers;
  if (c.retrieval_buffer) ++n_buffers;
  w.u8(n_buffers);
  if (c.buffer) detail::write_buffer(w, *c.buffer);
  if (c.retrieval_buffer) detail::write_buffer(w, *c.retrieval_buffer);
  detail::write_file(path, w.data());
}

inline RunCheckpoint load_run_checkpoint(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path));
  if (detail::read_header(r) != 'R')
    throw std::invalid_argument("checkpoint: not a run checkpoint: " + path.string());
  RunCheckpoint c;
  c.variant = r.u8();
  c.env_kind = static_cast<EnvKind>(r.u8());
  c.phase = r.u8();
  c.global_step = r.i64();
  c.episode = r.i64();
  std::tie(c.flow_params, c.flow_adam) = detail::read_net_block(r);
  std::tie(c.retrieval_params, c.retrieval_adam) = detail::read_net_block(r);
  const std::uint8_t n_buffers = r.u8();
  if (n_buffers > 2) throw std::invalid_argument("checkpoint: invalid buffer count");
  if (n_buffers >= 1) c.buffer = detail::read_buffer(r);
  if (n_buffers == 2) c.retrieval_buffer = detail::read_buffer(r);
  if (!r.at_end()) throw std::invalid_argument("checkpoint: trailing bytes");
  return c;
}

}  // namespace winflow
