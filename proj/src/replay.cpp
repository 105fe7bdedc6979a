#include <stdexcept>
#include <unordered_set>

#include "aoilab/laa.hpp"

namespace aoilab::laa {

ReplayMemory::ReplayMemory(std::size_t capacity) : ring_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayMemory: capacity must be positive");
}

void ReplayMemory::push(Experience e) {
  ring_[inserted_ % ring_.size()] = std::move(e);
  ++inserted_;
  if (size_ < ring_.size()) ++size_;
}

bool ReplayMemory::holds(std::uint64_t n) const { return n >= oldest() && n < inserted_; }

const Experience& ReplayMemory::by_insertion(std::uint64_t n) const {
  if (!holds(n)) throw std::out_of_range("ReplayMemory: experience no longer stored");
  return ring_[n % ring_.size()];
}

std::vector<std::uint64_t> ReplayMemory::sample(std::size_t k, Rng& rng) const {
  if (k > size_) throw std::invalid_argument("ReplayMemory: sample larger than memory");
  // Floyd's algorithm: k distinct offsets, each subset equally likely.
  std::vector<std::uint64_t> picked;
  picked.reserve(k);
  std::unordered_set<std::uint64_t> seen;
  const std::uint64_t n = size_;
  for (std::uint64_t j = n - k; j < n; ++j) {
    const std::uint64_t r = std::uniform_int_distribution<std::uint64_t>(0, j)(rng);
    const std::uint64_t v = seen.insert(r).second ? r : (seen.insert(j), j);
    picked.push_back(oldest() + v);
  }
  return picked;
}

std::vector<std::uint64_t> ReplayMemory::window(std::uint64_t n, std::size_t length) const {
  const Experience& last = by_insertion(n);
  std::vector<std::uint64_t> idx{n};
  std::uint64_t cur = n;
  while (idx.size() < length && cur > oldest()) {
    const Experience& prev = ring_[(cur - 1) % ring_.size()];
    const Experience& here = ring_[cur % ring_.size()];
    if (prev.episode_id != last.episode_id || prev.slot + 1 != here.slot) break;
    --cur;
    idx.push_back(cur);
  }
  return {idx.rbegin(), idx.rend()};
}

}  // namespace aoilab::laa
