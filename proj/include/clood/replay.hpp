#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "clood/dataset.hpp"
#include "clood/network.hpp"
#include "clood/rng.hpp"
#include "json.hpp"

namespace clood {

struct MemoryItem {
  std::size_t index = 0;  // position in the source Dataset
  std::uint8_t char_id = 0;
  std::uint8_t font_id = 0;
  bool operator==(const MemoryItem&) const = default;
};

// Uniform sample of fixed capacity over the stream of observed items
// (Vitter's Algorithm R). After n observations each item is retained with
// probability min(1, capacity / n).
class ReservoirBuffer {
 public:
  ReservoirBuffer(std::size_t capacity, std::uint64_t seed);

  void observe(const MemoryItem& item);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  std::uint64_t seen() const { return seen_; }
  const std::vector<MemoryItem>& slots() const { return slots_; }

  // Debug dump: {capacity, seen_count, items: [{index, char, font}, ...]}.
  nlohmann::json dump() const;

 private:
  std::size_t capacity_;
  std::vector<MemoryItem> slots_;
  std::uint64_t seen_ = 0;
  Rng rng_;
};

bool valid_memory_size(int m);

// k items drawn uniformly: without replacement when k <= size, with
// replacement otherwise. An empty buffer yields an empty batch.
std::vector<MemoryItem> sample_memory(const ReservoirBuffer& buffer, std::size_t k, Rng& rng);

struct ErStepStats {
  double loss = 0.0;
  std::size_t current_count = 0;
  std::size_t memory_count = 0;
};

// One Experience Replay update on font labels. The memory batch
// (min(memory_batch, buffer size) items) is drawn before the current batch
// is offered to the reservoir, so a fresh buffer contributes nothing to the
// step that fills it. Passing a null buffer is plain fine-tuning.
template <typename T>
ErStepStats er_step(nn::Network<T>& net, nn::AdamState<T>& opt, const Dataset& dataset,
                    std::span<const std::size_t> current, ReservoirBuffer* buffer,
                    bool observe_current, std::size_t memory_batch, Rng& memory_rng);

}  // namespace clood
