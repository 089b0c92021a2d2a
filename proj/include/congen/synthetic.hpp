#ifndef CONGEN_SYNTHETIC_HPP
#define CONGEN_SYNTHETIC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "congen/corpus.hpp"

namespace congen {

// Corpus with planted concept transitions: every utterance instantiates the
// response template, and consecutive turns follow the transition rule. The
// emitted ground-truth table backs the graph and planner oracles.
struct SyntheticSpec {
  int num_concepts = 12;
  int concepts_per_turn = 1;

  enum class Rule { Chain, Stochastic };
  Rule rule = Rule::Chain;
  // row-stochastic matrix, used when rule == Stochastic
  std::vector<std::vector<double>> transition;

  int sessions = 200;
  int turns = 4;

  // "<c>" marks concept slots; must contain exactly concepts_per_turn slots.
  // Empty selects a built-in template.
  std::vector<std::string> template_tokens;

  std::uint64_t seed = 1;

  void validate() const;
  std::vector<std::string> effective_template() const;
  std::string concept_token(int i) const;
};

struct TruthEdge {
  std::string head;
  std::string tail;
  double prob;
};

struct SyntheticCorpus {
  std::vector<DialogueSession> sessions;
  std::vector<TruthEdge> truth;  // planted transition table
  long total_tokens = 0;
};

SyntheticCorpus make_synthetic(const SyntheticSpec& spec);

// expected successor under the chain rule
int chain_next(int current, int num_concepts);

void save_truth(const std::vector<TruthEdge>& truth, const std::string& path);
std::vector<TruthEdge> load_truth(const std::string& path);

}  // namespace congen

#endif  // CONGEN_SYNTHETIC_HPP
