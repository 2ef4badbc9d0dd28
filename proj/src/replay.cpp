#include "clood/replay.hpp"

#include <numeric>

#include "clood/batch.hpp"
#include "clood/errors.hpp"

namespace clood {

ReservoirBuffer::ReservoirBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(derive_seed(seed, tag("reservoir"))) {
  slots_.reserve(capacity);
}

void ReservoirBuffer::observe(const MemoryItem& item) {
  ++seen_;
  if (capacity_ == 0) return;
  if (slots_.size() < capacity_) {
    slots_.push_back(item);
    return;
  }
  const std::uint64_t j = rng_.below(seen_);
  if (j < capacity_) slots_[j] = item;
}

nlohmann::json ReservoirBuffer::dump() const {
  nlohmann::json items = nlohmann::json::array();
  for (const MemoryItem& m : slots_) {
    items.push_back({{"index", m.index}, {"char", m.char_id}, {"font", m.font_id}});
  }
  return {{"capacity", capacity_}, {"seen_count", seen_}, {"items", items}};
}

bool valid_memory_size(int m) {
  return m == 0 || m == 50 || m == 100 || m == 250 || m == 500 || m == 1000;
}

std::vector<MemoryItem> sample_memory(const ReservoirBuffer& buffer, std::size_t k, Rng& rng) {
  std::vector<MemoryItem> out;
  const auto& slots = buffer.slots();
  if (k == 0 || slots.empty()) return out;
  out.reserve(k);
  if (k > slots.size()) {
    for (std::size_t i = 0; i < k; ++i) out.push_back(slots[rng.below(slots.size())]);
    return out;
  }
  // Partial Fisher-Yates over slot positions.
  std::vector<std::size_t> pos(slots.size());
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(pos.size() - i);
    std::swap(pos[i], pos[j]);
    out.push_back(slots[pos[i]]);
  }
  return out;
}

template <typename T>
ErStepStats er_step(nn::Network<T>& net, nn::AdamState<T>& opt, const Dataset& dataset,
                    std::span<const std::size_t> current, ReservoirBuffer* buffer,
                    bool observe_current, std::size_t memory_batch, Rng& memory_rng) {
  if (current.empty()) throw DomainError("er_step needs a non-empty current batch");
  std::vector<std::size_t> indices(current.begin(), current.end());
  std::vector<MemoryItem> memory;
  if (buffer) {
    memory = sample_memory(*buffer, std::min(memory_batch, buffer->size()), memory_rng);
    if (observe_current) {
      for (std::size_t i : current) {
        const LabelPair l = dataset.labels(i);
        buffer->observe({i, l.char_id, l.font_id});
      }
    }
  }
  for (const MemoryItem& m : memory) indices.push_back(m.index);

  const auto batch = gather_images<T>(dataset, indices);
  const auto labels = gather_labels(dataset, indices, LabelKind::kFont);
  auto lg = net.loss_and_gradients(batch, labels);
  nn::adam_step(net.params(), lg.grads, opt);
  return {static_cast<double>(lg.loss), current.size(), memory.size()};
}

template ErStepStats er_step<float>(nn::Network<float>&, nn::AdamState<float>&, const Dataset&,
                                    std::span<const std::size_t>, ReservoirBuffer*, bool, std::size_t, Rng&);
template ErStepStats er_step<double>(nn::Network<double>&, nn::AdamState<double>&, const Dataset&,
                                     std::span<const std::size_t>, ReservoirBuffer*, bool, std::size_t, Rng&);

}  // namespace clood
