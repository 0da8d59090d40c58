#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "winflow/env.hpp"
#include "winflow/rng.hpp"

namespace winflow {

enum class Phase { warmup, dual };

// One shared-buffer record: <s_{t-1}, a_{t-1}, R(s_t), s_t>. The terminal
// flag marks whether s_t ended its episode (the flow loss masks onward
// flow at terminal states).
struct Transition {
  EnvState s_prev;
  Action a_prev;
  double r = 0.0;
  EnvState s;
  std::int64_t episode_id = 0;
  Phase phase = Phase::warmup;
  bool terminal = false;
};

// FIFO ring. When full, a push evicts the oldest transition. Iteration
// order (via at()) is insertion order among retained items.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    ring_.reserve(capacity_);
  }

  void push(Transition t) {
    if (ring_.size() < capacity_) {
      ring_.push_back(std::move(t));
    } else {
      ring_[write_] = std::move(t);
      write_ = (write_ + 1) % capacity_;
    }
    ++total_pushed_;
  }

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return total_pushed_; }
  bool empty() const { return ring_.empty(); }

  // i = 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const {
    if (i >= ring_.size()) throw std::out_of_range("ReplayBuffer::at");
    const std::size_t oldest = ring_.size() < capacity_ ? 0 : write_;
    return ring_[(oldest + i) % ring_.size()];
  }

  void clear() {
    ring_.clear();
    write_ = 0;
    total_pushed_ = 0;
  }

  // Restores the historical push counter when loading from a checkpoint.
  void set_total_pushed(std::uint64_t n) {
    if (n < ring_.size())
      throw std::invalid_argument("ReplayBuffer: push counter below current size");
    total_pushed_ = n;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> ring_;
  std::size_t write_ = 0;  // next eviction slot once full
  std::uint64_t total_pushed_ = 0;
};

// n transitions drawn uniformly with replacement.
inline std::vector<Transition> sample_minibatch(const ReplayBuffer& buffer, std::size_t n,
                                                Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("sample_minibatch: buffer is empty");
  std::vector<Transition> batch;
  batch.reserve(n);
  for (std::size_t i = 0; i < n; ++i) batch.push_back(buffer.at(rng.uniform_index(buffer.size())));
  return batch;
}

}  // namespace winflow
