// Copyright 2026 The Minima Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "minima/spec_decode.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "minima/errors.hpp"
#include "minima/rng.hpp"

namespace minima {
namespace {

constexpr double kRowTolerance = 1e-12;
constexpr double kResidualFloor = 1e-12;

void check_row(const Distribution& row, std::size_t vocab, const std::string& what) {
  if (row.size() != vocab) {
    throw InvalidArgument(what + " has " + std::to_string(row.size()) + " entries, expected " +
                          std::to_string(vocab));
  }
  double sum = 0.0;
  for (double v : row) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument(what + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowTolerance) throw InvalidArgument(what + " does not sum to 1");
}

Token sample(std::span<const double> dist, double u, double mass = 1.0) {
  const double target = u * mass;
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    cum += dist[i];
    last = i;
    if (target < cum) return static_cast<Token>(i);
  }
  return static_cast<Token>(last);
}

Distribution residual(std::span<const double> p, std::span<const double> q, double& mass) {
  Distribution r(p.size());
  mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    r[i] = std::max(p[i] - q[i], 0.0);
    mass += r[i];
  }
  return r;
}

void check_pair(const MarkovLM& target, const MarkovLM& draft) {
  target.validate();
  draft.validate();
  if (target.vocab_size != draft.vocab_size) throw InvalidArgument("target and draft vocabularies differ");
}

std::optional<Token> last_of(const std::vector<Token>& seq) {
  if (seq.empty()) return std::nullopt;
  return seq.back();
}

// Emitted sequences of one round starting after `prefix`, each with its
// probability. Proposals after a rejection are integrated out.
void round_law(const MarkovLM& target, const MarkovLM& draft, std::size_t k,
               std::vector<Token>& seq, std::size_t drafted, double prob,
               std::vector<std::pair<std::vector<Token>, double>>& out) {
  const Distribution& p = target.next(last_of(seq));
  if (drafted == k) {
    for (Token t = 0; t < p.size(); ++t) {
      if (p[t] <= 0.0) continue;
      seq.push_back(t);
      out.emplace_back(seq, prob * p[t]);
      seq.pop_back();
    }
    return;
  }
  const Distribution& q = draft.next(last_of(seq));
  double mass = 0.0;
  const Distribution r = residual(p, q, mass);
  for (Token x = 0; x < q.size(); ++x) {
    if (q[x] <= 0.0) continue;
    const double accept = mass < kResidualFloor ? 1.0 : std::min(1.0, p[x] / q[x]);
    if (accept > 0.0) {
      seq.push_back(x);
      round_law(target, draft, k, seq, drafted + 1, prob * q[x] * accept, out);
      seq.pop_back();
    }
    if (accept < 1.0) {
      for (Token y = 0; y < r.size(); ++y) {
        if (r[y] <= 0.0) continue;
        seq.push_back(y);
        out.emplace_back(seq, prob * q[x] * (1.0 - accept) * r[y] / mass);
        seq.pop_back();
      }
    }
  }
}

void accumulate_law(const MarkovLM& target, const MarkovLM& draft, std::size_t k,
                    std::size_t horizon, const std::vector<Token>& prefix, double prob,
                    SequenceLaw& law) {
  if (prefix.size() >= horizon) {
    law[std::vector<Token>(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(horizon))] += prob;
    return;
  }
  std::vector<std::pair<std::vector<Token>, double>> outcomes;
  std::vector<Token> seq = prefix;
  round_law(target, draft, k, seq, 0, prob, outcomes);
  for (const auto& [s, pr] : outcomes) accumulate_law(target, draft, k, horizon, s, pr, law);
}

}  // namespace

void MarkovLM::validate() const {
  if (vocab_size == 0) throw InvalidArgument("vocabulary must be non-empty");
  if (order != 0 && order != 1) throw InvalidArgument("order must be 0 or 1");
  const std::size_t rows = order == 0 ? 1 : vocab_size;
  if (table.size() != rows) {
    throw InvalidArgument("transition table has " + std::to_string(table.size()) + " rows, expected " +
                          std::to_string(rows));
  }
  check_row(initial, vocab_size, "initial distribution");
  for (std::size_t i = 0; i < rows; ++i) check_row(table[i], vocab_size, "row " + std::to_string(i));
}

const Distribution& MarkovLM::next(std::optional<Token> prev) const {
  if (!prev) return initial;
  return order == 0 ? table[0] : table.at(*prev);
}

MarkovLM markov_from_json(const nlohmann::json& doc) {
  for (const auto& [key, value] : doc.items()) {
    if (key != "vocab_size" && key != "order" && key != "initial" && key != "table") {
      throw ConfigError("unknown key '" + key + "' in Markov model");
    }
  }
  MarkovLM lm;
  try {
    lm.vocab_size = doc.at("vocab_size").get<std::size_t>();
    lm.order = doc.at("order").get<int>();
    lm.table = doc.at("table").get<std::vector<Distribution>>();
    if (doc.contains("initial")) {
      lm.initial = doc.at("initial").get<Distribution>();
    } else if (lm.order == 0 && !lm.table.empty()) {
      lm.initial = lm.table[0];
    } else {
      throw ConfigError("order-1 Markov model needs an initial distribution");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed Markov model: ") + e.what());
  }
  lm.validate();
  return lm;
}

nlohmann::json markov_to_json(const MarkovLM& lm) {
  return {{"vocab_size", lm.vocab_size}, {"order", lm.order}, {"initial", lm.initial}, {"table", lm.table}};
}

StepResult speculative_step(std::span<const double> p, std::span<const double> q, Token drafted,
                            double u_accept, double u_resample) {
  if (p.size() != q.size() || drafted >= q.size()) throw InvalidArgument("distribution sizes differ");
  if (!(q[drafted] > 0.0)) throw DraftSupportError("drafted token has zero draft probability");
  double mass = 0.0;
  const Distribution r = residual(p, q, mass);
  if (mass < kResidualFloor || u_accept * q[drafted] < p[drafted]) return {true, drafted};
  return {false, sample(r, u_resample, mass)};
}

Generation generate(const MarkovLM& target, const MarkovLM& draft, std::size_t k,
                    std::size_t n_tokens, std::uint64_t seed) {
  if (k == 0) throw InvalidArgument("lookahead k must be at least 1");
  check_pair(target, draft);
  Rng rng(seed);
  Generation g;
  SpecDecodeStats& s = g.stats;
  s.accepted_per_round.assign(k + 1, 0);
  std::vector<Token>& out = g.tokens;
  std::vector<Token> proposal;
  while (out.size() < n_tokens) {
    proposal.clear();
    std::optional<Token> ctx = last_of(out);
    for (std::size_t i = 0; i < k; ++i) {
      const Token x = sample(draft.next(ctx), rng.uniform());
      proposal.push_back(x);
      ctx = x;
    }
    std::size_t accepted = 0;
    bool rejected = false;
    for (std::size_t i = 0; i < k && !rejected; ++i) {
      const std::optional<Token> prev = i == 0 ? last_of(out) : std::optional<Token>(proposal[i - 1]);
      const double ua = rng.uniform();
      const double ur = rng.uniform();
      const StepResult r = speculative_step(target.next(prev), draft.next(prev), proposal[i], ua, ur);
      out.push_back(r.token);
      if (r.accepted) {
        ++accepted;
      } else {
        rejected = true;
      }
    }
    if (!rejected) out.push_back(sample(target.next(out.back()), rng.uniform()));
    ++s.rounds;
    s.proposed += rejected ? accepted + 1 : k;
    s.accepted += accepted;
    ++s.accepted_per_round[accepted];
  }
  s.tokens_generated = out.size();
  s.acceptance_rate = s.proposed ? static_cast<double>(s.accepted) / static_cast<double>(s.proposed) : 0.0;
  s.tokens_per_round = s.rounds ? static_cast<double>(s.tokens_generated) / static_cast<double>(s.rounds) : 0.0;
  return g;
}

SequenceLaw exact_output_distribution(const MarkovLM& target, const MarkovLM& draft,
                                      std::size_t k, std::size_t horizon) {
  if (k == 0) throw InvalidArgument("lookahead k must be at least 1");
  if (target.vocab_size > 6 || horizon > 3 || k > 4) {
    throw OracleTooLargeError("exact oracle is limited to V <= 6, horizon <= 3, k <= 4");
  }
  check_pair(target, draft);
  SequenceLaw law;
  accumulate_law(target, draft, k, horizon, {}, 1.0, law);
  return law;
}

SequenceLaw sequence_law(const MarkovLM& lm, std::size_t horizon) {
  lm.validate();
  SequenceLaw law{{{}, 1.0}};
  for (std::size_t step = 0; step < horizon; ++step) {
    SequenceLaw next;
    for (const auto& [seq, prob] : law) {
      const Distribution& p = lm.next(last_of(seq));
      for (Token t = 0; t < p.size(); ++t) {
        if (p[t] <= 0.0) continue;
        auto s = seq;
        s.push_back(t);
        next[s] += prob * p[t];
      }
    }
    law.swap(next);
  }
  return law;
}

double total_variation(const SequenceLaw& a, const SequenceLaw& b) {
  double tv = 0.0;
  for (const auto& [s, p] : a) {
    const auto it = b.find(s);
    tv += std::abs(p - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [s, p] : b) {
    if (!a.count(s)) tv += p;
  }
  return 0.5 * tv;
}

double expected_tokens_per_round(double alpha, std::size_t k) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (k == 0) throw InvalidArgument("lookahead k must be at least 1");
  if (alpha == 1.0) return static_cast<double>(k + 1);
  return (1.0 - std::pow(alpha, static_cast<double>(k + 1))) / (1.0 - alpha);
}

double acceptance_probability(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("distribution sizes differ");
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) a += std::min(p[i], q[i]);
  return a;
}

}  // namespace minima
