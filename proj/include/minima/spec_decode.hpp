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
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace minima {

using Token = std::uint32_t;
using Distribution = std::vector<double>;

// Order 0: every token is drawn from table[0]. Order 1: the token after t is
// drawn from table[t]. The first token of a stream comes from `initial`.
struct MarkovLM {
  std::size_t vocab_size = 0;
  int order = 0;
  Distribution initial;
  std::vector<Distribution> table;

  // Throws InvalidArgument unless rows are non-negative and sum to 1 within 1e-12.
  void validate() const;
  const Distribution& next(std::optional<Token> prev) const;
};

// {"vocab_size": V, "order": 0|1, "initial": [...], "table": [[...], ...]}.
// "initial" defaults to table[0] for order 0.
MarkovLM markov_from_json(const nlohmann::json& doc);
nlohmann::json markov_to_json(const MarkovLM& lm);

struct StepResult {
  bool accepted = false;
  Token token = 0;
};

// Accepts the drafted token when u_accept * q[x] < p[x], otherwise samples the
// normalized residual max(p - q, 0) with u_resample. A residual with mass
// below 1e-12 forces acceptance. Throws DraftSupportError when q[x] == 0.
StepResult speculative_step(std::span<const double> p, std::span<const double> q, Token drafted,
                            double u_accept, double u_resample);

struct SpecDecodeStats {
  std::size_t tokens_generated = 0;
  std::size_t rounds = 0;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  std::vector<std::size_t> accepted_per_round;  // bins 0..k
  double acceptance_rate = 0.0;                 // accepted / proposed
  double tokens_per_round = 0.0;
};

struct Generation {
  std::vector<Token> tokens;
  SpecDecodeStats stats;
};

// Draft proposes k tokens, the target verifies them in order; the first
// rejection emits the corrected token and ends the round, and a fully
// accepted round appends a bonus token from the target. Rounds continue until
// at least n_tokens are emitted; the last round is not truncated.
Generation generate(const MarkovLM& target, const MarkovLM& draft, std::size_t k,
                    std::size_t n_tokens, std::uint64_t seed);

using SequenceLaw = std::map<std::vector<Token>, double>;

// Exact law of the first `horizon` emitted tokens, integrating over the
// acceptance variates rather than sampling them. Throws OracleTooLargeError
// beyond V = 6, horizon = 3 or k = 4.
SequenceLaw exact_output_distribution(const MarkovLM& target, const MarkovLM& draft,
                                      std::size_t k, std::size_t horizon);
// Law of the first `horizon` tokens sampled from the model directly.
SequenceLaw sequence_law(const MarkovLM& lm, std::size_t horizon);
double total_variation(const SequenceLaw& a, const SequenceLaw& b);

// (1 - alpha^(k+1)) / (1 - alpha), or k + 1 at alpha = 1.
double expected_tokens_per_round(double alpha, std::size_t k);
// sum_x min(p(x), q(x)).
double acceptance_probability(std::span<const double> p, std::span<const double> q);

}  // namespace minima
