#include "dualls/buffers.hpp"

#include <algorithm>
#include <numeric>

#include "dualls/audit.hpp"
#include "dualls/errors.hpp"

namespace dualls {

void reservoir_offer(ReservoirBuffer& buffer, BufferEntry entry) { buffer.offer(std::move(entry)); }

double diversity_score(const ParamVector& grad_new, std::span<const ParamVector> reference_grads) {
  return diversity_score_with(grad_new, reference_grads,
                              [](const ParamVector& x, const ParamVector& y) { return dot(x, y); });
}

DiversityBuffer::DiversityBuffer(std::size_t capacity, std::size_t score_batch, std::uint64_t seed)
    : capacity_(capacity), score_batch_(score_batch), rng_(seed) {
  if (score_batch_ == 0) throw ConfigError("diversity score batch must be at least 1");
}

DiversityBuffer DiversityBuffer::restore(std::size_t capacity, std::size_t score_batch, std::uint64_t seen,
                                         std::vector<BufferEntry> entries, Rng rng) {
  DiversityBuffer b(capacity, score_batch, 0);
  b.seen_ = seen;
  b.entries_ = std::move(entries);
  b.rng_ = std::move(rng);
  return b;
}

DiversityOutcome DiversityBuffer::offer(BufferEntry entry, const GradFn& grad_of) {
  return offer_with_scorer(std::move(entry), [&](const Sample& candidate, std::span<const Sample* const> refs) {
    const ParamVector g = grad_of(candidate);
    std::vector<ParamVector> ref_grads;
    ref_grads.reserve(refs.size());
    for (const Sample* r : refs) ref_grads.push_back(grad_of(*r));
    return diversity_score(g, ref_grads);
  });
}

DiversityOutcome DiversityBuffer::offer_with_scorer(BufferEntry entry, const ScoreFn& score_of) {
  if (capacity_ == 0) {
    ++seen_;
    return {};
  }
  if (seen_ == 0 || entries_.empty()) return offer_scored(std::move(entry), kInitialDiversityScore);

  std::vector<const Sample*> refs;
  refs.reserve(score_batch_);
  for (std::size_t k = 0; k < score_batch_; ++k) refs.push_back(&entries_[rng_.index(entries_.size())].sample);
  const double score = score_of(entry.sample, refs);
  return offer_scored(std::move(entry), score);
}

DiversityOutcome DiversityBuffer::offer_scored(BufferEntry entry, double score) {
  ++seen_;
  if (capacity_ == 0) return {};
  if (seen_ == 1 || entries_.empty()) {
    entry.score_q = kInitialDiversityScore;
    entries_.push_back(std::move(entry));
    return {DiversityDecision::StoredFirst, kInitialDiversityScore, std::nullopt};
  }
  return admit(std::move(entry), score);
}

DiversityOutcome DiversityBuffer::admit(BufferEntry entry, double score) {
  DiversityOutcome outcome{DiversityDecision::Rejected, score, std::nullopt};
  if (entries_.size() < capacity_) {
    entry.score_q = score;
    entries_.push_back(std::move(entry));
    outcome.decision = DiversityDecision::Stored;
    return outcome;
  }
  if (!(score < 1.0)) return outcome;

  // Victim i ~ q_i / sum(q) by inverse CDF; ties resolve to the lower index.
  double total = 0.0;
  for (const BufferEntry& e : entries_) total += e.score_q;
  std::size_t victim = 0;
  if (total > 0.0) {
    const double u = rng_.uniform01() * total;
    double cumulative = 0.0;
    victim = entries_.size() - 1;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      cumulative += entries_[i].score_q;
      if (u < cumulative) {
        victim = i;
        break;
      }
    }
  } else {
    victim = rng_.index(entries_.size());
  }
  outcome.victim = victim;

  const double q_i = entries_[victim].score_q;
  const double r = rng_.uniform01();
  const double denom = q_i + score;
  if (denom > 0.0 && r < q_i / denom) {
    entry.score_q = score;
    entries_[victim] = std::move(entry);
    outcome.decision = DiversityDecision::Replaced;
  }
  return outcome;
}

void diversity_offer(DiversityBuffer& buffer, BufferEntry entry, const DiversityBuffer::GradFn& grad_of) {
  buffer.offer(std::move(entry), grad_of);
}

std::vector<const BufferEntry*> sample_uniform(std::span<const BufferEntry> entries, std::size_t k, Rng& rng) {
  const std::size_t take = std::min(k, entries.size());
  std::vector<const BufferEntry*> out;
  if (take == 0) return out;
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.index(order.size() - i);
    std::swap(order[i], order[j]);
    out.push_back(&entries[order[i]]);
  }
  return out;
}

JointDraw sample_joint(const ReservoirBuffer& res, const DiversityBuffer& div, std::size_t k_r, std::size_t k_d,
                       Rng& rng) {
  JointDraw draw;
  draw.reservoir = sample_uniform(res.entries(), k_r, rng);
  draw.diversity = sample_uniform(div.entries(), k_d, rng);
  return draw;
}

std::map<int, std::size_t> composition(std::span<const BufferEntry> entries) {
  std::map<int, std::size_t> counts;
  for (const BufferEntry& e : entries) ++counts[audit::task_id(e.sample)];
  return counts;
}

}  // namespace dualls
