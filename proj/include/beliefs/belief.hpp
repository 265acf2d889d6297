#pragma once

#include <concepts>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "beliefs/pomdp.hpp"

namespace beliefs {

using Belief = Distribution;

struct ImpossibleObservation : std::runtime_error {
  Belief belief;
  ActionId action;
  ObsId observed;
  int prefix_length = -1;  // filled when raised while folding a history

  ImpossibleObservation(Belief b, ActionId a, ObsId o, int prefix = -1)
      : std::runtime_error("impossible observation " + std::to_string(o) + " after action " +
                           std::to_string(a) +
                           (prefix >= 0 ? " at history prefix " + std::to_string(prefix) : "")),
        belief(std::move(b)), action(a), observed(o), prefix_length(prefix) {}
};

Belief initial_belief(const Pomdp& m);
bool is_reset_belief(const Pomdp& m, const Belief& b);

/// Probability of perceiving o_next after playing a from belief b (the
/// normalizer of the Bayes update).
double observation_prob(const Pomdp& m, const Belief& b, ActionId a, ObsId o_next);

/// Exact Bayes posterior over next states.  Throws ImpossibleObservation when
/// the normalizer underflows 1e-300.
Belief belief_update(const Pomdp& m, const Belief& b, ActionId a, ObsId o_next);

/// Fold of belief_update along h from the Dirac at the initial state.
Belief filter(const Pomdp& m, const History& h);

struct BeliefBranch {
  ObsId observation;
  double probability;
  Belief belief;
};

/// All positive-probability observation branches of the belief MDP.
std::vector<BeliefBranch> belief_mdp_step(const Pomdp& m, const Belief& b, ActionId a);

/// Belief-weighted mean reward.
double belief_reward(const Pomdp& m, const Belief& b, ActionId a);

struct HistoryNode {
  History history;
  Belief belief;
  double probability;  // normalized visit-measure weight
  std::optional<double> value;
  Distribution action_dist;  // what the policy played at this node
};

struct UnfoldResult {
  std::vector<HistoryNode> nodes;  // lexicographic history order
  double pruned_mass = 0.0;        // chain mass dropped below prune_eps
  int horizon = 0;
};

struct ValueEstimate {
  double value = 0.0;
  double tail = 0.0;  // gamma^horizon * max|R| / (1-gamma)
};

/// Stateful policies factored as memory + next-action + memory-update, the
/// shape every policy in this project (history, exact-filter, encoder-based)
/// can be put in.
template <class P>
concept MealyPolicy = requires(const P& p, const typename P::Memory& mem, ActionId a, ObsId o) {
  { p.initial_memory() } -> std::convertible_to<typename P::Memory>;
  { p.action_distribution(mem) } -> std::convertible_to<Distribution>;
  { p.update_memory(mem, a, o) } -> std::convertible_to<typename P::Memory>;
};

/// History-callable policies as a trivial Mealy machine whose memory is the
/// history itself.
struct HistoryMealy {
  using Memory = History;
  HistoryPolicy policy;
  Memory initial_memory() const { return History{}; }
  Distribution action_distribution(const Memory& h) const { return policy(h); }
  Memory update_memory(const Memory& h, ActionId a, ObsId o) const { return h.extended(a, o); }
};

namespace detail {

struct ChainLayerEntry {
  Belief belief;
  double mass;
  std::size_t mem_index;
};

}  // namespace detail

/// Enumerates the history chain under `policy` for `horizon` steps.  Node
/// probabilities form the normalized visit measure of the truncated chain:
/// the chain jumps back to the empty history when an episode ends, so the
/// measure approaches the stationary history distribution as the horizon
/// grows.  Branches below prune_eps are dropped and reported as pruned_mass.
template <MealyPolicy P>
UnfoldResult unfold_histories(const Pomdp& m, const P& policy, int horizon,
                              double prune_eps = 1e-12, std::size_t node_cap = 1000000) {
  if (horizon < 1) throw ShapeError("unfold_histories: horizon must be >= 1");
  UnfoldResult out;
  out.horizon = horizon;

  std::vector<typename P::Memory> memories;
  std::map<History, detail::ChainLayerEntry> layer;
  memories.push_back(policy.initial_memory());
  layer.emplace(History{}, detail::ChainLayerEntry{initial_belief(m), 1.0, 0});

  struct Accum {
    Belief belief;
    double visit = 0.0;
    Distribution action_dist;
  };
  std::map<History, Accum> visits;
  double total_mass = 0.0;

  for (int t = 0; t <= horizon; ++t) {
    for (auto& [h, cell] : layer) {
      auto [it, fresh] = visits.try_emplace(h);
      if (fresh) {
        it->second.belief = cell.belief;
        it->second.action_dist = policy.action_distribution(memories[cell.mem_index]);
      }
      it->second.visit += cell.mass;
      total_mass += cell.mass;
    }
    if (t == horizon) break;

    std::map<History, detail::ChainLayerEntry> next;
    std::vector<typename P::Memory> next_memories;
    auto deposit = [&](const History& h, const Belief& b, const typename P::Memory& mem,
                       double mass) {
      auto it = next.find(h);
      if (it == next.end()) {
        next_memories.push_back(mem);
        next.emplace(h, detail::ChainLayerEntry{b, mass, next_memories.size() - 1});
        if (next.size() + visits.size() > node_cap)
          throw CapacityError("unfold_histories: node cap exceeded at depth " + std::to_string(t));
      } else {
        it->second.mass += mass;
      }
    };

    for (auto& [h, cell] : layer) {
      const Distribution act = visits.at(h).action_dist;
      const auto& mem = memories[cell.mem_index];
      if (is_reset_belief(m, cell.belief)) {
        // episode boundary: the chain restarts at the empty history; a
        // possible dwell keeps the ended history in place
        for (int a = 0; a < m.n_actions; ++a) {
          if (act[a] <= 0.0) continue;
          double to_init = m.trans(m.reset_state, a, m.initial_state);
          double dwell = m.trans(m.reset_state, a, m.reset_state);
          double mass = cell.mass * act[a];
          if (mass * to_init > prune_eps)
            deposit(History{}, initial_belief(m), policy.initial_memory(), mass * to_init);
          else
            out.pruned_mass += mass * to_init;
          if (dwell > 0.0) {
            if (mass * dwell > prune_eps)
              deposit(h, cell.belief, mem, mass * dwell);
            else
              out.pruned_mass += mass * dwell;
          }
        }
        continue;
      }
      for (int a = 0; a < m.n_actions; ++a) {
        if (act[a] <= 0.0) continue;
        for (const BeliefBranch& br : belief_mdp_step(m, cell.belief, a)) {
          double mass = cell.mass * act[a] * br.probability;
          if (mass <= prune_eps) {
            out.pruned_mass += mass;
            continue;
          }
          deposit(h.extended(a, br.observation), br.belief, policy.update_memory(mem, a, br.observation),
                  mass);
        }
      }
    }
    layer = std::move(next);
    memories = std::move(next_memories);
  }

  out.nodes.reserve(visits.size());
  for (auto& [h, acc] : visits) {
    HistoryNode node;
    node.history = h;
    node.belief = acc.belief;
    node.probability = acc.visit / total_mass;
    node.action_dist = acc.action_dist;
    out.nodes.push_back(std::move(node));
  }
  return out;
}

UnfoldResult unfold_histories(const Pomdp& m, const HistoryPolicy& policy, int horizon,
                              double prune_eps = 1e-12, std::size_t node_cap = 1000000);

/// Expected discounted return collected over `horizon` steps of the history
/// chain, from the chain start (forward enumeration over histories).
template <MealyPolicy P>
double chain_expected_return(const Pomdp& m, const P& policy, int horizon,
                             double prune_eps = 1e-12) {
  std::vector<typename P::Memory> memories{policy.initial_memory()};
  std::map<History, detail::ChainLayerEntry> layer;
  layer.emplace(History{}, detail::ChainLayerEntry{initial_belief(m), 1.0, 0});
  double total = 0.0;
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    std::map<History, detail::ChainLayerEntry> next;
    std::vector<typename P::Memory> next_memories;
    auto deposit = [&](const History& h, const Belief& b, const typename P::Memory& mem,
                       double mass) {
      auto it = next.find(h);
      if (it == next.end()) {
        next_memories.push_back(mem);
        next.emplace(h, detail::ChainLayerEntry{b, mass, next_memories.size() - 1});
      } else {
        it->second.mass += mass;
      }
    };
    for (auto& [h, cell] : layer) {
      Distribution act = policy.action_distribution(memories[cell.mem_index]);
      for (int a = 0; a < m.n_actions; ++a) {
        if (act[a] <= 0.0) continue;
        total += discount * cell.mass * act[a] * belief_reward(m, cell.belief, a);
      }
      if (is_reset_belief(m, cell.belief)) {
        for (int a = 0; a < m.n_actions; ++a) {
          if (act[a] <= 0.0) continue;
          double mass = cell.mass * act[a];
          double to_init = mass * m.trans(m.reset_state, a, m.initial_state);
          double dwell = mass * m.trans(m.reset_state, a, m.reset_state);
          if (to_init > prune_eps)
            deposit(History{}, initial_belief(m), policy.initial_memory(), to_init);
          if (dwell > prune_eps) deposit(h, cell.belief, memories[cell.mem_index], dwell);
        }
        continue;
      }
      for (int a = 0; a < m.n_actions; ++a) {
        if (act[a] <= 0.0) continue;
        for (const BeliefBranch& br : belief_mdp_step(m, cell.belief, a)) {
          double mass = cell.mass * act[a] * br.probability;
          if (mass <= prune_eps) continue;
          deposit(h.extended(a, br.observation), br.belief,
                  policy.update_memory(memories[cell.mem_index], a, br.observation), mass);
        }
      }
    }
    layer = std::move(next);
    memories = std::move(next_memories);
    discount *= m.gamma;
  }
  return total;
}

namespace detail {

template <MealyPolicy P>
double belief_tree_value(const Pomdp& m, const P& policy, const Belief& b,
                         const typename P::Memory& mem, int steps) {
  if (steps <= 0) return 0.0;
  Distribution act = policy.action_distribution(mem);
  double out = 0.0;
  if (is_reset_belief(m, b)) {
    for (int a = 0; a < m.n_actions; ++a) {
      if (act[a] <= 0.0) continue;
      double v = belief_reward(m, b, a);
      double to_init = m.trans(m.reset_state, a, m.initial_state);
      double dwell = m.trans(m.reset_state, a, m.reset_state);
      if (to_init > 0.0)
        v += m.gamma * to_init *
             belief_tree_value(m, policy, initial_belief(m), policy.initial_memory(), steps - 1);
      if (dwell > 0.0) v += m.gamma * dwell * belief_tree_value(m, policy, b, mem, steps - 1);
      out += act[a] * v;
    }
    return out;
  }
  for (int a = 0; a < m.n_actions; ++a) {
    if (act[a] <= 0.0) continue;
    double v = belief_reward(m, b, a);
    for (const BeliefBranch& br : belief_mdp_step(m, b, a))
      v += m.gamma * br.probability *
           belief_tree_value(m, policy, br.belief, policy.update_memory(mem, a, br.observation),
                             steps - 1);
    out += act[a] * v;
  }
  return out;
}

}  // namespace detail

/// Expected discounted return over `horizon` steps by backward recursion on
/// the belief MDP (the independent counterpart of chain_expected_return).
template <MealyPolicy P>
double belief_tree_expected_return(const Pomdp& m, const P& policy, int horizon) {
  return detail::belief_tree_value(m, policy, initial_belief(m), policy.initial_memory(), horizon);
}

/// Gap between the unfolding-chain return and the belief-tree return for the
/// same policy; the two models are bisimilar, so the gap is numerical noise.
template <MealyPolicy P>
double bisimulation_value_check(const Pomdp& m, const P& policy, int horizon) {
  double via_chain = chain_expected_return(m, policy, horizon);
  double via_tree = belief_tree_expected_return(m, policy, horizon);
  return std::abs(via_chain - via_tree);
}

/// Value of continuing `policy` after history h: expected discounted return
/// of the belief MDP rooted at filter(h), truncated at `horizon` with the
/// matching tail bound.
ValueEstimate history_value(const Pomdp& m, const History& h, const HistoryPolicy& policy,
                            int horizon);

/// Quantized belief key for value memoization.
std::vector<long long> belief_key(const Belief& b, double quantum = 1e-10);

/// Finite-horizon optimal value of the belief MDP by memoized backward
/// induction over quantized beliefs.
ValueEstimate optimal_value(const Pomdp& m, const Belief& b, int horizon);

/// Memo shared across optimal_value queries of one model.
class OptimalValueTable {
 public:
  explicit OptimalValueTable(const Pomdp& m) : m_(&m) {}
  double value(const Belief& b, int steps);
  /// Greedy action at the given lookahead, ties to the lowest action id.
  ActionId greedy_action(const Belief& b, int steps);

 private:
  const Pomdp* m_;
  std::vector<std::map<std::vector<long long>, double>> memo_;
};

/// CSV dump (history, probability, value); value column empty when unset.
void dump_nodes_csv(const std::vector<HistoryNode>& nodes, const std::string& path);

}  // namespace beliefs
