#pragma once

#include <cstddef>
#include <vector>

#include "hrt/rng.hpp"

namespace hrt::marl {

// Ring of the K most recent observations for one agent, oldest-first,
// zero-padded before K steps have elapsed.
class ObservationWindow {
 public:
  ObservationWindow() = default;
  ObservationWindow(std::size_t k, std::size_t obs_dim);

  void push(const std::vector<double>& obs);
  void reset();

  // Exactly K entries, oldest first.
  const std::vector<std::vector<double>>& entries() const { return entries_; }
  std::size_t k() const { return entries_.size(); }
  std::size_t obs_dim() const { return obs_dim_; }

  // Flat [K * obs_dim] concatenation, oldest first.
  std::vector<double> flat() const;

 private:
  std::vector<std::vector<double>> entries_;
  std::size_t obs_dim_ = 0;
};

// One replay record (s, h, a, r, s', h').
struct Transition {
  std::vector<std::vector<double>> s, s2;                 // per-agent observations
  std::vector<std::vector<std::vector<double>>> h, h2;    // per-agent windows, oldest first
  std::vector<std::vector<double>> a;                     // per-agent flat actions
  std::vector<double> r;                                  // per-agent rewards
};

// Fixed-capacity FIFO with uniform with-replacement sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void store(Transition t);
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

}  // namespace hrt::marl
