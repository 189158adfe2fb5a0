#include "hrt/replay.hpp"

#include <stdexcept>

namespace hrt::marl {

ObservationWindow::ObservationWindow(std::size_t k, std::size_t obs_dim) : obs_dim_(obs_dim) {
  if (k == 0) throw std::invalid_argument("ObservationWindow: K must be >= 1");
  entries_.assign(k, std::vector<double>(obs_dim, 0.0));
}

void ObservationWindow::push(const std::vector<double>& obs) {
  if (obs.size() != obs_dim_)
    throw std::invalid_argument("ObservationWindow::push: observation length mismatch");
  entries_.erase(entries_.begin());
  entries_.push_back(obs);
}

void ObservationWindow::reset() {
  for (auto& e : entries_) e.assign(obs_dim_, 0.0);
}

std::vector<double> ObservationWindow::flat() const {
  std::vector<double> out;
  out.reserve(entries_.size() * obs_dim_);
  for (const auto& e : entries_) out.insert(out.end(), e.begin(), e.end());
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::store(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);
    cursor_ = (cursor_ + 1) % capacity_;
  }
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  // With-replacement draws, so any nonempty buffer can fill any batch.
  if (data_.empty()) throw std::logic_error("ReplayBuffer::sample: buffer is empty");
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i)
    out.push_back(&data_[rng.uniform_int(data_.size())]);
  return out;
}

}  // namespace hrt::marl
