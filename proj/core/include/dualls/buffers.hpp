#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dualls/heatmap.hpp"
#include "dualls/param_vector.hpp"
#include "dualls/rng.hpp"
#include "dualls/sample.hpp"

namespace dualls {

// A stored sample plus the working-model heatmap captured when it was offered.
struct BufferEntry {
  Sample sample;
  Heatmap teacher;
  double score_q = 0.0;  // diversity buffer only
  std::uint64_t insertion_index = 0;  // stream position, 1-based

  friend bool operator==(const BufferEntry&, const BufferEntry&) = default;
};

// Classic reservoir: after n offers every item is retained with probability
// capacity / n.
template <typename T>
class Reservoir {
 public:
  Reservoir() = default;
  Reservoir(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

  // Returns the slot the item went to, or nullopt when it was discarded.
  std::optional<std::size_t> offer(T item) {
    ++seen_;
    if (capacity_ == 0) return std::nullopt;
    if (seen_ <= capacity_) {
      items_.push_back(std::move(item));
      return items_.size() - 1;
    }
    // r ~ Uniform{1..n}; keep when r falls on an existing slot.
    const auto r = static_cast<std::size_t>(rng_.index(seen_));
    if (r >= capacity_) return std::nullopt;
    items_[r] = std::move(item);
    return r;
  }

  const std::vector<T>& entries() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t seen_count() const { return seen_; }
  const Rng& rng() const { return rng_; }

  // Rebuilds a reservoir from a snapshot.
  static Reservoir restore(std::size_t capacity, std::uint64_t seen, std::vector<T> items, Rng rng) {
    Reservoir r;
    r.capacity_ = capacity;
    r.seen_ = seen;
    r.items_ = std::move(items);
    r.rng_ = std::move(rng);
    return r;
  }

  friend bool operator==(const Reservoir&, const Reservoir&) = default;

 private:
  std::size_t capacity_ = 0;
  std::uint64_t seen_ = 0;
  std::vector<T> items_;
  Rng rng_;
};

using ReservoirBuffer = Reservoir<BufferEntry>;

void reservoir_offer(ReservoirBuffer& buffer, BufferEntry entry);

// Similarity score of a candidate gradient: max cosine against the
// references, plus one. Zero-norm gradients are skipped; with nothing left the
// initial score is returned.
double diversity_score(const ParamVector& grad_new, std::span<const ParamVector> reference_grads);

inline constexpr double kInitialDiversityScore = 0.1;

// Same score for any gradient representation with an inner product `inner`.
template <typename G, typename Inner>
double diversity_score_with(const G& grad_new, std::span<const G> reference_grads, Inner&& inner) {
  const double new_norm = std::sqrt(inner(grad_new, grad_new));
  if (new_norm == 0.0) return kInitialDiversityScore;
  bool any = false;
  double best = -1.0;
  for (const G& ref : reference_grads) {
    const double ref_norm = std::sqrt(inner(ref, ref));
    if (ref_norm == 0.0) continue;
    const double cos = inner(grad_new, ref) / (new_norm * ref_norm);
    if (!any || cos > best) best = cos;
    any = true;
  }
  if (!any) return kInitialDiversityScore;
  return std::clamp(best, -1.0, 1.0) + 1.0;
}

enum class DiversityDecision { StoredFirst, Stored, Replaced, Rejected, Discarded };

struct DiversityOutcome {
  DiversityDecision decision = DiversityDecision::Discarded;
  double score = 0.0;
  std::optional<std::size_t> victim;  // slot drawn when the buffer was full
};

// Gradient-diversity buffer. Samples whose loss gradient points in directions
// already well covered get high scores and are replaced first.
class DiversityBuffer {
 public:
  using GradFn = std::function<ParamVector(const Sample&)>;
  // Scores a candidate against the drawn reference samples.
  using ScoreFn = std::function<double(const Sample& candidate, std::span<const Sample* const> refs)>;

  DiversityBuffer() = default;
  DiversityBuffer(std::size_t capacity, std::size_t score_batch, std::uint64_t seed);

  // Scores `entry` against `score_batch` stored samples drawn with
  // replacement, then admits or rejects it.
  DiversityOutcome offer(BufferEntry entry, const GradFn& grad_of);
  // Same reference draws as offer(); the caller supplies the score.
  DiversityOutcome offer_with_scorer(BufferEntry entry, const ScoreFn& score_of);

  // Admission step given a precomputed score (the first offer always uses the
  // initial score regardless of `score`).
  DiversityOutcome offer_scored(BufferEntry entry, double score);

  const std::vector<BufferEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t score_batch() const { return score_batch_; }
  std::uint64_t seen_count() const { return seen_; }
  const Rng& rng() const { return rng_; }

  static DiversityBuffer restore(std::size_t capacity, std::size_t score_batch, std::uint64_t seen,
                                 std::vector<BufferEntry> entries, Rng rng);

  friend bool operator==(const DiversityBuffer&, const DiversityBuffer&) = default;

 private:
  DiversityOutcome admit(BufferEntry entry, double score);

  std::size_t capacity_ = 0;
  std::size_t score_batch_ = 8;
  std::uint64_t seen_ = 0;
  std::vector<BufferEntry> entries_;
  Rng rng_;
};

void diversity_offer(DiversityBuffer& buffer, BufferEntry entry, const DiversityBuffer::GradFn& grad_of);

// Uniform draws without replacement; min(k, size) entries.
std::vector<const BufferEntry*> sample_uniform(std::span<const BufferEntry> entries, std::size_t k, Rng& rng);

struct JointDraw {
  std::vector<const BufferEntry*> reservoir;
  std::vector<const BufferEntry*> diversity;
};

JointDraw sample_joint(const ReservoirBuffer& res, const DiversityBuffer& div, std::size_t k_r, std::size_t k_d,
                       Rng& rng);

// Evaluation-only: number of stored entries per hidden task id.
std::map<int, std::size_t> composition(std::span<const BufferEntry> entries);
inline std::map<int, std::size_t> composition(const ReservoirBuffer& b) { return composition(b.entries()); }
inline std::map<int, std::size_t> composition(const DiversityBuffer& b) { return composition(b.entries()); }

}  // namespace dualls
