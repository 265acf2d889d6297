#include "beliefs/pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

namespace beliefs {

// splitmix64; portable and fast enough for everything here
std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::categorical(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double r = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (r < acc && weights[i] > 0.0) return i;
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  throw ShapeError("categorical: all weights zero");
}

History History::extended(ActionId a, ObsId o) const {
  History out = *this;
  out.actions.push_back(a);
  out.observations.push_back(o);
  return out;
}

std::string History::to_string() const {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < actions.size(); ++i) {
    std::snprintf(buf, sizeof(buf), i == 0 ? "%d %d" : " %d %d", actions[i], observations[i]);
    out += buf;
  }
  return out;
}

History History::parse(const std::string& line) {
  History out;
  std::istringstream in(line);
  int a, o;
  while (in >> a) {
    if (!(in >> o)) throw ShapeError("history line has an unmatched action: " + line);
    out.actions.push_back(a);
    out.observations.push_back(o);
  }
  return out;
}

bool operator==(const History& a, const History& b) {
  return a.actions == b.actions && a.observations == b.observations;
}

bool operator<(const History& a, const History& b) {
  if (a.actions != b.actions) return a.actions < b.actions;
  return a.observations < b.observations;
}

double Pomdp::max_abs_reward() const {
  double out = 0.0;
  for (double r : reward) out = std::max(out, std::abs(r));
  return out;
}

void Pomdp::allocate() {
  transition.assign(static_cast<std::size_t>(n_states) * n_actions * n_states, 0.0);
  reward.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  observation.assign(static_cast<std::size_t>(n_states) * n_actions * n_observations, 0.0);
}

namespace {

void check_row(const Pomdp& m, const char* table, int s, int a, const double* row, int width,
               std::vector<std::string>& out) {
  double sum = 0.0;
  for (int i = 0; i < width; ++i) {
    if (row[i] < 0.0) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s row (s=%d,a=%d) has negative entry %.17g at %d", table,
                    s, a, row[i], i);
      out.push_back(buf);
      return;
    }
    sum += row[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s row (s=%d,a=%d) sums to %.12g", table, s, a, sum);
    out.push_back(buf);
  }
  (void)m;
}

// States from which some policy can avoid `avoid` forever: the largest set C
// (within reachable states minus `avoid`) where every member keeps an action
// whose successor mass stays inside C.
std::vector<StateId> closed_component_avoiding(const Pomdp& m, StateId avoid) {
  std::vector<char> reachable(m.n_states, 0);
  std::vector<StateId> stack = {m.initial_state};
  reachable[m.initial_state] = 1;
  while (!stack.empty()) {
    StateId s = stack.back();
    stack.pop_back();
    for (int a = 0; a < m.n_actions; ++a)
      for (int s2 = 0; s2 < m.n_states; ++s2)
        if (m.trans(s, a, s2) > 0.0 && !reachable[s2]) {
          reachable[s2] = 1;
          stack.push_back(s2);
        }
  }
  std::vector<char> in_c(m.n_states, 0);
  for (int s = 0; s < m.n_states; ++s) in_c[s] = reachable[s] && s != avoid;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int s = 0; s < m.n_states; ++s) {
      if (!in_c[s]) continue;
      bool has_closed_action = false;
      for (int a = 0; a < m.n_actions && !has_closed_action; ++a) {
        double inside = 0.0;
        for (int s2 = 0; s2 < m.n_states; ++s2)
          if (in_c[s2]) inside += m.trans(s, a, s2);
        if (inside >= 1.0 - 1e-12) has_closed_action = true;
      }
      if (!has_closed_action) {
        in_c[s] = 0;
        changed = true;
      }
    }
  }
  std::vector<StateId> out;
  for (int s = 0; s < m.n_states; ++s)
    if (in_c[s]) out.push_back(s);
  return out;
}

}  // namespace

ValidationReport validate(const Pomdp& m) {
  ValidationReport rep;
  auto fail = [&rep](const std::string& msg) { rep.violations.push_back(msg); };

  if (m.n_states <= 0 || m.n_actions <= 0 || m.n_observations <= 0) {
    fail("nonpositive dimensions");
    return rep;
  }
  const auto ns = static_cast<std::size_t>(m.n_states);
  const auto na = static_cast<std::size_t>(m.n_actions);
  const auto no = static_cast<std::size_t>(m.n_observations);
  if (m.transition.size() != ns * na * ns) {
    fail("transition table has " + std::to_string(m.transition.size()) + " entries, expected " +
         std::to_string(ns * na * ns));
    return rep;
  }
  if (m.reward.size() != ns * na) {
    fail("reward table has " + std::to_string(m.reward.size()) + " entries, expected " +
         std::to_string(ns * na));
    return rep;
  }
  if (m.observation.size() != ns * na * no) {
    fail("observation table has " + std::to_string(m.observation.size()) +
         " entries, expected " + std::to_string(ns * na * no));
    return rep;
  }
  if (m.initial_state < 0 || m.initial_state >= m.n_states) fail("initial state out of range");
  if (m.reset_state < 0 || m.reset_state >= m.n_states) fail("reset state out of range");
  if (m.reset_observation < 0 || m.reset_observation >= m.n_observations)
    fail("reset observation out of range");
  if (!(m.gamma >= 0.0 && m.gamma < 1.0)) fail("gamma outside [0,1)");
  if (!rep.ok()) return rep;
  if (m.initial_state == m.reset_state) fail("initial state equals reset state");

  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      check_row(m, "transition", s, a, &m.transition[(s * na + a) * ns], m.n_states,
                rep.violations);
      check_row(m, "observation", s, a, &m.observation[(s * na + a) * no], m.n_observations,
                rep.violations);
    }
  if (!rep.ok()) return rep;

  // episodic contract
  for (int a = 0; a < m.n_actions; ++a) {
    double stray = 0.0;
    for (int s2 = 0; s2 < m.n_states; ++s2)
      if (s2 != m.initial_state && s2 != m.reset_state) stray += m.trans(m.reset_state, a, s2);
    if (stray > 1e-12)
      fail("reset transition (a=" + std::to_string(a) + ") leaks mass " + std::to_string(stray) +
           " outside {initial, reset}");
    if (!(m.trans(m.reset_state, a, m.initial_state) > 0.0))
      fail("reset transition (a=" + std::to_string(a) + ") never restarts the initial state");
    if (std::abs(m.obs(m.reset_state, a, m.reset_observation) - 1.0) > 1e-12)
      fail("reset state observation (a=" + std::to_string(a) +
           ") is not a Dirac at the reset observation");
  }
  for (int s = 0; s < m.n_states; ++s) {
    if (s == m.reset_state) continue;
    for (int a = 0; a < m.n_actions; ++a)
      if (m.obs(s, a, m.reset_observation) > 0.0) {
        fail("reset observable fails: state " + std::to_string(s) + " emits the reset observation (a=" +
             std::to_string(a) + ")");
        break;
      }
  }

  auto closed = closed_component_avoiding(m, m.reset_state);
  if (!closed.empty()) {
    std::string msg = "reset not almost-surely reachable; closed component {";
    for (std::size_t i = 0; i < closed.size(); ++i)
      msg += (i ? "," : "") + std::to_string(closed[i]);
    msg += "}";
    fail(msg);
  }
  return rep;
}

StepResult step(const Pomdp& m, StateId state, ActionId action, Rng& rng) {
  if (state < 0 || state >= m.n_states || action < 0 || action >= m.n_actions)
    throw std::out_of_range("step: state/action id out of range");
  const auto ns = static_cast<std::size_t>(m.n_states);
  const auto na = static_cast<std::size_t>(m.n_actions);
  std::vector<double> row(m.transition.begin() + (state * na + action) * ns,
                          m.transition.begin() + (state * na + action + 1) * ns);
  StateId s2 = static_cast<StateId>(rng.categorical(row));
  std::vector<double> orow(m.observation.begin() + (s2 * na + action) * m.n_observations,
                           m.observation.begin() + (s2 * na + action + 1) * m.n_observations);
  ObsId o = static_cast<ObsId>(rng.categorical(orow));
  return {s2, o, m.rew(state, action)};
}

EpisodeResult run_episode(const Pomdp& m, const HistoryPolicy& policy, Rng& rng, int max_steps) {
  if (max_steps < 1) throw ShapeError("run_episode: max_steps must be >= 1");
  EpisodeResult out;
  StateId s = m.initial_state;
  out.trajectory.states.push_back(s);
  for (int t = 0; t < max_steps; ++t) {
    Distribution d = policy(out.history);
    if (d.size() != static_cast<std::size_t>(m.n_actions) || !d.is_valid(1e-6))
      throw ShapeError("policy returned an invalid action distribution");
    ActionId a = static_cast<ActionId>(rng.categorical(d.p));
    StepResult r = step(m, s, a, rng);
    out.history.actions.push_back(a);
    out.history.observations.push_back(r.observation);
    out.trajectory.actions.push_back(a);
    out.trajectory.rewards.push_back(r.reward);
    out.trajectory.states.push_back(r.next_state);
    s = r.next_state;
    if (r.observation == m.reset_observation) return out;
  }
  out.trajectory.truncated = true;
  return out;
}

Pomdp make_tiger(double gamma) {
  // states: 0 fresh, 1 tiger-left, 2 tiger-right, 3 reset
  // actions: 0 listen, 1 open-left, 2 open-right
  // observations: 0 hear-left, 1 hear-right, 2 reset
  Pomdp m;
  m.name = "tiger";
  m.n_states = 4;
  m.n_actions = 3;
  m.n_observations = 3;
  m.gamma = gamma;
  m.initial_state = 0;
  m.reset_state = 3;
  m.reset_observation = 2;
  m.allocate();

  const StateId kFresh = 0, kLeft = 1, kRight = 2, kReset = 3;
  const ActionId kListen = 0, kOpenL = 1, kOpenR = 2;

  m.trans(kFresh, kListen, kLeft) = 0.5;
  m.trans(kFresh, kListen, kRight) = 0.5;
  m.trans(kFresh, kOpenL, kReset) = 1.0;
  m.trans(kFresh, kOpenR, kReset) = 1.0;
  m.trans(kLeft, kListen, kLeft) = 1.0;
  m.trans(kLeft, kOpenL, kReset) = 1.0;
  m.trans(kLeft, kOpenR, kReset) = 1.0;
  m.trans(kRight, kListen, kRight) = 1.0;
  m.trans(kRight, kOpenL, kReset) = 1.0;
  m.trans(kRight, kOpenR, kReset) = 1.0;
  for (int a = 0; a < 3; ++a) m.trans(kReset, a, kFresh) = 1.0;

  const double kListenCost = -0.01, kGood = 0.1, kBad = -1.0;
  m.rew(kFresh, kListen) = kListenCost;
  m.rew(kFresh, kOpenL) = 0.5 * (kGood + kBad);
  m.rew(kFresh, kOpenR) = 0.5 * (kGood + kBad);
  m.rew(kLeft, kListen) = kListenCost;
  m.rew(kLeft, kOpenL) = kBad;
  m.rew(kLeft, kOpenR) = kGood;
  m.rew(kRight, kListen) = kListenCost;
  m.rew(kRight, kOpenL) = kGood;
  m.rew(kRight, kOpenR) = kBad;

  for (int a = 0; a < 3; ++a) {
    m.obs(kFresh, a, 0) = 0.5;
    m.obs(kFresh, a, 1) = 0.5;
    m.obs(kLeft, a, 0) = 0.85;
    m.obs(kLeft, a, 1) = 0.15;
    m.obs(kRight, a, 0) = 0.15;
    m.obs(kRight, a, 1) = 0.85;
    m.obs(kReset, a, 2) = 1.0;
  }
  return m;
}

Pomdp make_repeat_previous(int alphabet, int k, int deck_len, double gamma) {
  if (alphabet < 2) throw ShapeError("repeat_previous: alphabet must be >= 2");
  if (k < 1) throw ShapeError("repeat_previous: k must be >= 1");
  if (deck_len < k + 1) throw ShapeError("repeat_previous: deck_len must be >= k+1");
  double mem_count_f = std::pow(static_cast<double>(alphabet), k);
  if (mem_count_f * deck_len + 1 > 1e5)
    throw CapacityError("repeat_previous: state count " +
                        std::to_string(mem_count_f * deck_len + 1) + " exceeds cap 1e5");
  const int mem_count = static_cast<int>(mem_count_f);
  const int high = mem_count / alphabet;  // value of the oldest digit slot

  Pomdp m;
  m.name = "repeat_previous(" + std::to_string(alphabet) + "," + std::to_string(k) + "," +
           std::to_string(deck_len) + ")";
  m.n_states = mem_count * deck_len + 1;
  m.n_actions = alphabet;
  m.n_observations = alphabet + 1;
  m.gamma = gamma;
  m.initial_state = 0;  // mem 0, position 0
  m.reset_state = mem_count * deck_len;
  m.reset_observation = alphabet;
  m.allocate();

  auto state_of = [&](int mem, int pos) { return mem * deck_len + pos; };
  const double unit = 1.0 / static_cast<double>(deck_len - k);

  for (int mem = 0; mem < mem_count; ++mem)
    for (int pos = 0; pos < deck_len; ++pos) {
      StateId s = state_of(mem, pos);
      int newest = mem % alphabet;
      int oldest = mem / high;
      for (int a = 0; a < alphabet; ++a) {
        if (pos + 1 < deck_len) {
          for (int c = 0; c < alphabet; ++c) {
            int next_mem = (mem % high) * alphabet + c;
            m.trans(s, a, state_of(next_mem, pos + 1)) = 1.0 / alphabet;
          }
        } else {
          m.trans(s, a, m.reset_state) = 1.0;
        }
        if (pos >= k) m.rew(s, a) = (a == oldest) ? unit : -unit;
        m.obs(s, a, newest) = 1.0;  // the card just drawn is what the agent sees
      }
    }
  for (int a = 0; a < alphabet; ++a) {
    m.trans(m.reset_state, a, m.initial_state) = 1.0;
    m.obs(m.reset_state, a, m.reset_observation) = 1.0;
  }
  return m;
}

std::vector<Pomdp> builtin_envs() {
  std::vector<Pomdp> out;
  out.push_back(make_tiger());
  out.push_back(make_repeat_previous(2, 1, 4));
  out.push_back(make_repeat_previous(2, 1, 6));
  out.push_back(make_repeat_previous(2, 2, 4));
  return out;
}

std::string to_text(const Pomdp& m) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "pomdp v1 states=%d actions=%d obs=%d gamma=%.17g init=%d reset=%d reset_obs=%d\n",
                m.n_states, m.n_actions, m.n_observations, m.gamma, m.initial_state,
                m.reset_state, m.reset_observation);
  out << buf;
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      out << "T " << s << " " << a << ":";
      for (int s2 = 0; s2 < m.n_states; ++s2) {
        std::snprintf(buf, sizeof(buf), " %.17g", m.trans(s, a, s2));
        out << buf;
      }
      out << "\n";
    }
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      std::snprintf(buf, sizeof(buf), "R %d %d: %.17g\n", s, a, m.rew(s, a));
      out << buf;
    }
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      out << "O " << s << " " << a << ":";
      for (int o = 0; o < m.n_observations; ++o) {
        std::snprintf(buf, sizeof(buf), " %.17g", m.obs(s, a, o));
        out << buf;
      }
      out << "\n";
    }
  return out.str();
}

namespace {

bool parse_kv(const std::string& tok, const std::string& key, std::string& val) {
  if (tok.rfind(key + "=", 0) != 0) return false;
  val = tok.substr(key.size() + 1);
  return true;
}

}  // namespace

Pomdp pomdp_from_text(std::istream& in) {
  Pomdp m;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (!have_header) {
      if (tok != "pomdp") throw ShapeError("pomdp text: expected 'pomdp' header, got '" + tok + "'");
      std::string version;
      ls >> version;
      if (version != "v1") throw ShapeError("pomdp text: unsupported version '" + version + "'");
      std::string kv, val;
      while (ls >> kv) {
        if (parse_kv(kv, "states", val)) m.n_states = std::stoi(val);
        else if (parse_kv(kv, "actions", val)) m.n_actions = std::stoi(val);
        else if (parse_kv(kv, "obs", val)) m.n_observations = std::stoi(val);
        else if (parse_kv(kv, "gamma", val)) m.gamma = std::stod(val);
        else if (parse_kv(kv, "init", val)) m.initial_state = std::stoi(val);
        else if (parse_kv(kv, "reset", val)) m.reset_state = std::stoi(val);
        else if (parse_kv(kv, "reset_obs", val)) m.reset_observation = std::stoi(val);
        else throw ShapeError("pomdp text: unknown header field '" + kv + "'");
      }
      if (m.n_states <= 0 || m.n_actions <= 0 || m.n_observations <= 0)
        throw ShapeError("pomdp text: header missing dimensions");
      m.allocate();
      have_header = true;
      continue;
    }
    if (tok == "T" || tok == "O" || tok == "R") {
      int s, a;
      char colon;
      if (!(ls >> s >> a >> colon) || colon != ':')
        throw ShapeError("pomdp text: malformed block line: " + line);
      if (s < 0 || s >= m.n_states || a < 0 || a >= m.n_actions)
        throw ShapeError("pomdp text: id out of range in: " + line);
      if (tok == "R") {
        if (!(ls >> m.rew(s, a))) throw ShapeError("pomdp text: missing reward in: " + line);
      } else {
        int width = tok == "T" ? m.n_states : m.n_observations;
        for (int i = 0; i < width; ++i) {
          double v;
          if (!(ls >> v)) throw ShapeError("pomdp text: short row in: " + line);
          if (tok == "T")
            m.trans(s, a, i) = v;
          else
            m.obs(s, a, i) = v;
        }
      }
    } else {
      throw ShapeError("pomdp text: unknown block '" + tok + "'");
    }
  }
  if (!have_header) throw ShapeError("pomdp text: empty input");
  return m;
}

Pomdp load_pomdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ShapeError("cannot open pomdp file: " + path);
  Pomdp m = pomdp_from_text(in);
  m.name = path;
  return m;
}

void save_pomdp_file(const Pomdp& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ShapeError("cannot write pomdp file: " + path);
  out << to_text(m);
}

Pomdp resolve_env(const std::string& spec) {
  if (spec == "tiger") return make_tiger();
  if (spec.rfind("repeat_previous(", 0) == 0 && spec.back() == ')') {
    std::string args = spec.substr(16, spec.size() - 17);
    std::replace(args.begin(), args.end(), ',', ' ');
    std::istringstream in(args);
    int a, k, d;
    if (!(in >> a >> k >> d)) throw ShapeError("cannot parse env spec: " + spec);
    return make_repeat_previous(a, k, d);
  }
  return load_pomdp_file(spec);
}

}  // namespace beliefs
