#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hrl/config_file.hpp"
#include "hrl/driving_env.hpp"
#include "hrl/option.hpp"
#include "hrl/random.hpp"

namespace hrl {

struct Transition {
  StateVector state;
  OptionId option = OptionId::SSL;
  ActionId action;
  double r_option = 0.0;
  double r_action = 0.0;
  StateVector next_state;
  bool terminal = false;

  bool operator==(const Transition&) const = default;
};

/// Binary sum-tree over a fixed number of leaves. Parents are recomputed from
/// their children on every write so the root never accumulates drift.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity = 1) {
    leaves_ = 1;
    while (leaves_ < capacity) leaves_ <<= 1;
    nodes_.assign(2 * leaves_, 0.0);
  }

  std::size_t capacity() const { return leaves_; }
  double total() const { return nodes_[1]; }
  double leaf(std::size_t i) const { return nodes_[leaves_ + i]; }

  void set(std::size_t i, double value) {
    std::size_t node = leaves_ + i;
    nodes_[node] = value;
    for (node >>= 1; node >= 1; node >>= 1) nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
  }

  /// Leaf whose cumulative range contains `mass` (0 <= mass < total()).
  std::size_t find(double mass) const {
    std::size_t node = 1;
    while (node < leaves_) {
      const double left = nodes_[2 * node];
      if (mass < left || nodes_[2 * node + 1] <= 0.0) {
        node = 2 * node;
      } else {
        mass -= left;
        node = 2 * node + 1;
      }
    }
    return node - leaves_;
  }

 private:
  std::size_t leaves_;
  std::vector<double> nodes_;
};

enum class ReplayMode : std::uint8_t { HIERARCHICAL, SINGLE, UNIFORM };
enum class ReplayLevel : std::uint8_t { OPTION, ACTION };

struct ReplayConfig {
  int capacity = 50000;
  double alpha = 0.6;
  double beta = 0.4;
  double epsilon_priority = 1e-3;
  int batch_size = 64;
  ReplayMode mode = ReplayMode::HIERARCHICAL;

  void validate() const {
    if (capacity <= 0) throw ConfigError("replay config: capacity must be positive");
    if (!(alpha >= 0)) throw ConfigError("replay config: alpha must be non-negative");
    if (!(beta >= 0 && beta <= 1)) throw ConfigError("replay config: beta must be in [0, 1]");
    if (!(epsilon_priority > 0)) throw ConfigError("replay config: epsilon_priority must be positive");
    if (batch_size <= 0) throw ConfigError("replay config: batch_size must be positive");
  }

  void load(const KeyValueFile& kv) {
    kv.read("replay_capacity", capacity);
    kv.read("replay_alpha", alpha);
    kv.read("replay_beta", beta);
    kv.read("replay_epsilon", epsilon_priority);
    kv.read("batch_size", batch_size);
  }
};

/// Option priority and un-shifted action priority for one transition.
struct HierarchicalPriority {
  double option;
  double raw_action;
};

inline HierarchicalPriority hierarchical_priority(double td_option, double td_action) {
  const double p_o = std::abs(td_option);
  return {p_o, std::abs(td_action) - p_o};
}

/// Shifts raw action priorities so the batch minimum lands on `eps`.
inline std::vector<double> shift_action_priorities(const std::vector<double>& raw, double eps) {
  if (raw.empty()) return {};
  const double lo = *std::min_element(raw.begin(), raw.end());
  std::vector<double> out;
  out.reserve(raw.size());
  for (double r : raw) out.push_back(r - lo + eps);
  return out;
}

/// Bounded ring of transitions with separate option- and action-level
/// priorities, sampled proportionally to p^alpha.
class PrioritizedStore {
 public:
  struct Sample {
    std::size_t index;
    const Transition* transition;
    double is_weight;
  };

  explicit PrioritizedStore(ReplayConfig cfg = {})
      : cfg_(cfg), tree_o_(static_cast<std::size_t>(cfg.capacity)), tree_a_(static_cast<std::size_t>(cfg.capacity)) {
    cfg_.validate();
    items_.reserve(static_cast<std::size_t>(std::min(cfg_.capacity, 1 << 16)));
    p_o_.assign(static_cast<std::size_t>(cfg_.capacity), 0.0);
    p_a_.assign(static_cast<std::size_t>(cfg_.capacity), 0.0);
  }

  const ReplayConfig& config() const { return cfg_; }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return static_cast<std::size_t>(cfg_.capacity); }
  bool empty() const { return items_.empty(); }

  const Transition& at(std::size_t i) const { return items_.at(i); }
  double option_priority(std::size_t i) const { return p_o_.at(i); }
  double action_priority(std::size_t i) const { return p_a_.at(i); }
  double option_total() const { return tree_o_.total(); }
  double action_total() const { return tree_a_.total(); }
  const SumTree& option_tree() const { return tree_o_; }
  const SumTree& action_tree() const { return tree_a_; }

  /// Index of the slot the next push writes to.
  std::size_t next_slot() const { return next_; }

  void push(const Transition& t) {
    const std::size_t slot = next_;
    if (items_.size() < capacity()) items_.push_back(t);
    else items_[slot] = t;
    set_priority(slot, max_o_, max_a_);
    next_ = (next_ + 1) % capacity();
  }

  /// Draws k indices (with replacement) for the given level.
  std::vector<Sample> sample(std::size_t k, ReplayLevel level, Rng& rng) const {
    if (items_.empty()) throw std::logic_error("PrioritizedStore::sample on an empty store");
    if (k == 0) throw std::invalid_argument("PrioritizedStore::sample: k must be positive");
    std::vector<Sample> out;
    out.reserve(k);
    const auto n = static_cast<double>(items_.size());

    if (cfg_.mode == ReplayMode::UNIFORM) {
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t idx = rng.index(items_.size());
        out.push_back({idx, &items_[idx], 1.0});
      }
      return out;
    }

    const SumTree& tree = (level == ReplayLevel::ACTION && cfg_.mode == ReplayMode::HIERARCHICAL) ? tree_a_ : tree_o_;
    const double total = tree.total();
    double max_w = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t idx = tree.find(rng.uniform() * total);
      if (idx >= items_.size()) idx = items_.size() - 1;
      const double prob = tree.leaf(idx) / total;
      const double w = std::pow(n * prob, -cfg_.beta);
      max_w = std::max(max_w, w);
      out.push_back({idx, &items_[idx], w});
    }
    for (auto& s : out) s.is_weight /= max_w;
    return out;
  }

  /// Writes p^o = |td_o| and the batch-shifted p^a = |td_a| - p^o for each index.
  void update_priorities(const std::vector<std::size_t>& indices, const std::vector<double>& td_errors_o,
                         const std::vector<double>& td_errors_a) {
    if (indices.size() != td_errors_o.size() || indices.size() != td_errors_a.size())
      throw std::invalid_argument("update_priorities: list lengths differ");
    if (indices.empty()) return;
    std::vector<double> p_o(indices.size()), raw_a(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= items_.size()) throw std::out_of_range("update_priorities: index out of range");
      const auto hp = hierarchical_priority(td_errors_o[i], td_errors_a[i]);
      p_o[i] = std::max(hp.option, cfg_.epsilon_priority);
      raw_a[i] = hp.raw_action;
    }
    const auto p_a = shift_action_priorities(raw_a, cfg_.epsilon_priority);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      set_priority(indices[i], p_o[i], p_a[i]);
      max_o_ = std::max(max_o_, p_o[i]);
      max_a_ = std::max(max_a_, p_a[i]);
    }
  }

  /// Diagnostics: store size plus log10-binned priority histograms per level.
  void write_stats_csv(std::ostream& out, int bins = 12) const {
    out << "level,bin_low,bin_high,count\n";
    const double lo = std::log10(cfg_.epsilon_priority);
    double hi = lo + 1.0;
    for (std::size_t i = 0; i < items_.size(); ++i)
      hi = std::max({hi, std::log10(p_o_[i]) + 1e-9, std::log10(p_a_[i]) + 1e-9});
    const double width = (hi - lo) / bins;
    for (const auto& [name, prio] : {std::pair{"option", &p_o_}, std::pair{"action", &p_a_}}) {
      std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
      for (std::size_t i = 0; i < items_.size(); ++i) {
        const int b = std::clamp(static_cast<int>((std::log10((*prio)[i]) - lo) / width), 0, bins - 1);
        ++counts[static_cast<std::size_t>(b)];
      }
      for (int b = 0; b < bins; ++b)
        out << name << ',' << std::pow(10.0, lo + b * width) << ',' << std::pow(10.0, lo + (b + 1) * width) << ','
            << counts[static_cast<std::size_t>(b)] << '\n';
    }
    out << "size,,," << items_.size() << '\n';
  }

 private:
  void set_priority(std::size_t slot, double p_o, double p_a) {
    p_o_[slot] = p_o;
    p_a_[slot] = p_a;
    tree_o_.set(slot, std::pow(p_o, cfg_.alpha));
    tree_a_.set(slot, std::pow(p_a, cfg_.alpha));
  }

  ReplayConfig cfg_;
  std::vector<Transition> items_;
  std::vector<double> p_o_, p_a_;
  SumTree tree_o_, tree_a_;
  std::size_t next_ = 0;
  double max_o_ = 1.0;
  double max_a_ = 1.0;
};

}  // namespace hrl
