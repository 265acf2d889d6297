#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "beliefs/measures.hpp"

namespace beliefs {

using StateId = int;
using ActionId = int;
using ObsId = int;

/// Deterministic 64-bit generator wrapper.  All sampling in the project goes
/// through these helpers, never through std:: distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ull) {}

  /// Uniform in [0, 1).
  double uniform();
  /// Index drawn from an unnormalized nonnegative weight vector.
  std::size_t categorical(const std::vector<double>& weights);
  std::uint64_t next_u64();

 private:
  std::uint64_t state_;
};

/// Alternating action/observation sequence rooted at the initial state.
/// actions[t] was taken, then observations[t] perceived.
struct History {
  std::vector<ActionId> actions;
  std::vector<ObsId> observations;

  std::size_t length() const { return actions.size(); }
  bool empty() const { return actions.empty(); }
  History extended(ActionId a, ObsId o) const;
  std::string to_string() const;  // "a0 o1 a1 o2 ..."
  static History parse(const std::string& line);
};

bool operator==(const History& a, const History& b);
bool operator<(const History& a, const History& b);

struct Trajectory {
  std::vector<StateId> states;  // length = actions + 1
  std::vector<ActionId> actions;
  std::vector<double> rewards;
  bool truncated = false;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Finite tabular POMDP with explicit reset machinery: the reset state is
/// reachable almost surely under every policy, emits a dedicated observation
/// no other state can produce, and transitions back to the initial state.
struct Pomdp {
  int n_states = 0;
  int n_actions = 0;
  int n_observations = 0;
  std::vector<double> transition;   // [s][a][s']
  std::vector<double> reward;       // [s][a]
  std::vector<double> observation;  // [s'][a][o], perceived upon entering s'
  double gamma = 0.9;
  StateId initial_state = 0;
  StateId reset_state = 0;
  ObsId reset_observation = 0;
  std::string name;

  double trans(StateId s, ActionId a, StateId s2) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double& trans(StateId s, ActionId a, StateId s2) {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double rew(StateId s, ActionId a) const {
    return reward[static_cast<std::size_t>(s) * n_actions + a];
  }
  double& rew(StateId s, ActionId a) {
    return reward[static_cast<std::size_t>(s) * n_actions + a];
  }
  double obs(StateId s2, ActionId a, ObsId o) const {
    return observation[(static_cast<std::size_t>(s2) * n_actions + a) * n_observations + o];
  }
  double& obs(StateId s2, ActionId a, ObsId o) {
    return observation[(static_cast<std::size_t>(s2) * n_actions + a) * n_observations + o];
  }

  /// Largest absolute reward.
  double max_abs_reward() const;

  void allocate();  // zero tables at the configured sizes
};

/// History-conditioned behaviour: returns a distribution over actions.
using HistoryPolicy = std::function<Distribution(const History&)>;

/// Checks table shapes, row sums, and the episodic-process contract.
ValidationReport validate(const Pomdp& pomdp);

struct StepResult {
  StateId next_state;
  ObsId observation;
  double reward;
};

/// One environment transition; deterministic given the generator state.
StepResult step(const Pomdp& pomdp, StateId state, ActionId action, Rng& rng);

struct EpisodeResult {
  Trajectory trajectory;
  History history;
};

/// Runs one episode from the initial state until the reset observation is
/// perceived or max_steps transitions elapse (then trajectory.truncated).
EpisodeResult run_episode(const Pomdp& pomdp, const HistoryPolicy& policy, Rng& rng,
                          int max_steps);

/// Classic tiger domain made episodic: a fresh state randomizes the tiger
/// side on the first transition, doors lead to the reset state.  Listening is
/// 85% accurate; rewards are listen -0.01, correct door +0.1, wrong door -1.
Pomdp make_tiger(double gamma = 0.75);

/// Memory test: a stream of deck_len i.i.d. cards over `alphabet` symbols;
/// from position k on, the action is scored against the oldest card in the
/// k-card memory window.  Rewards are +-1/(deck_len-k) so the best
/// undiscounted return is 1.
Pomdp make_repeat_previous(int alphabet, int k, int deck_len, double gamma = 0.75);

/// Environments the test suites iterate over.
std::vector<Pomdp> builtin_envs();

/// Text representation (header line, then T/R/O blocks).
std::string to_text(const Pomdp& pomdp);
Pomdp pomdp_from_text(std::istream& in);
Pomdp load_pomdp_file(const std::string& path);
void save_pomdp_file(const Pomdp& pomdp, const std::string& path);

/// Resolves "tiger" or "repeat_previous(a,k,n)" or a file path.
Pomdp resolve_env(const std::string& spec);

}  // namespace beliefs
