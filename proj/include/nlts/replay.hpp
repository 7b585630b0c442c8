#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nlts/error.hpp"
#include "nlts/linalg.hpp"
#include "nlts/rng.hpp"

namespace nlts {

struct Experience {
  Vec context;
  std::size_t arm = 0;
  double reward = 0.0;
  std::uint64_t step = 0;  // global step at which the tuple was observed
};

using Featurizer = std::function<Vec(std::span<const double>)>;

/// Bounded experience memory. Each arm keeps at most `capacity_per_arm`
/// tuples; storing into a full arm drops that arm's oldest tuple. All live
/// tuples are kept in one list in global insertion order, which is the order
/// minibatch indices refer to.
class ReplayBuffer {
 public:
  static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

  ReplayBuffer(std::size_t num_arms, std::size_t context_dim,
               std::size_t capacity_per_arm = 100)
      : num_arms_(num_arms),
        context_dim_(context_dim),
        capacity_(capacity_per_arm),
        per_arm_(num_arms, 0) {
    require(num_arms > 0, ErrorCode::kInvalidParameter, "num_arms must be > 0");
    require(capacity_per_arm > 0, ErrorCode::kInvalidParameter,
            "capacity_per_arm must be > 0");
  }

  std::size_t num_arms() const noexcept { return num_arms_; }
  std::size_t context_dim() const noexcept { return context_dim_; }
  std::size_t capacity_per_arm() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  std::size_t arm_size(std::size_t arm) const {
    check_arm(arm);
    return per_arm_[arm];
  }
  const std::vector<Experience>& items() const noexcept { return items_; }

  void store(Experience exp) {
    check_arm(exp.arm);
    require(exp.context.size() == context_dim_, ErrorCode::kDimensionMismatch,
            "context has dimension " + std::to_string(exp.context.size()) +
                ", buffer expects " + std::to_string(context_dim_));
    if (per_arm_[exp.arm] >= capacity_) {
      for (auto it = items_.begin(); it != items_.end(); ++it) {
        if (it->arm == exp.arm) {
          items_.erase(it);
          --per_arm_[exp.arm];
          break;
        }
      }
    }
    ++per_arm_[exp.arm];
    items_.push_back(std::move(exp));
  }

  /// batch_size tuples drawn uniformly with replacement from all arms.
  std::vector<const Experience*> sample_minibatch(Rng& rng,
                                                  std::size_t batch_size) const {
    require(!items_.empty(), ErrorCode::kEmptyBuffer,
            "cannot sample from an empty replay buffer");
    std::vector<const Experience*> batch;
    batch.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k)
      batch.push_back(&items_[rng.below(items_.size())]);
    return batch;
  }

  /// Tuples of one arm, oldest first.
  std::vector<const Experience*> arm_items(std::size_t arm) const {
    check_arm(arm);
    std::vector<const Experience*> out;
    out.reserve(per_arm_[arm]);
    for (const auto& e : items_)
      if (e.arm == arm) out.push_back(&e);
    return out;
  }

  struct ArmData {
    Mat features;  // n_i x g, one row per stored tuple of the arm
    Vec rewards;   // n_i
  };

  /// Featurizes every stored tuple of `arm`, in insertion order.
  ArmData per_arm_matrices(std::size_t arm, const Featurizer& featurizer,
                           std::size_t feature_dim) const {
    const auto rows = arm_items(arm);
    ArmData out{Mat(rows.size(), feature_dim), Vec(rows.size())};
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const Vec phi = featurizer(rows[j]->context);
      require(phi.size() == feature_dim, ErrorCode::kDimensionMismatch,
              "featurizer returned " + std::to_string(phi.size()) +
                  " features, expected " + std::to_string(feature_dim));
      std::copy(phi.begin(), phi.end(), out.features.row(j).begin());
      out.rewards[j] = rows[j]->reward;
    }
    return out;
  }

  // Columns: step,arm,reward,c0..c{d-1}
  void dump_csv(std::ostream& os) const {
    os << "step,arm,reward";
    for (std::size_t k = 0; k < context_dim_; ++k) os << ",c" << k;
    os << '\n';
    const auto old_precision = os.precision(17);
    for (const auto& e : items_) {
      os << e.step << ',' << e.arm << ',' << e.reward;
      for (double v : e.context) os << ',' << v;
      os << '\n';
    }
    os.precision(old_precision);
  }

 private:
  void check_arm(std::size_t arm) const {
    require(arm < num_arms_, ErrorCode::kInvalidArm,
            "arm " + std::to_string(arm) + " out of range [0, " +
                std::to_string(num_arms_) + ")");
  }

  std::size_t num_arms_;
  std::size_t context_dim_;
  std::size_t capacity_;
  std::vector<std::size_t> per_arm_;
  std::vector<Experience> items_;
};

}  // namespace nlts
