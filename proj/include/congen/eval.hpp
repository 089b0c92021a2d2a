#ifndef CONGEN_EVAL_HPP
#define CONGEN_EVAL_HPP

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "congen/concept_graph.hpp"

namespace congen {

using TokenSeq = std::vector<std::string>;

// Corpus-level BLEU with up to 4-grams. `averaged` gives the mean of the
// cumulative BLEU-1..BLEU-4 scores; otherwise plain BLEU-4. Zero n-gram
// precisions are smoothed with add-epsilon (1e-9).
double bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
            bool averaged = true);

// (ROUGE-1 F1, ROUGE-L F1), each averaged over pairs
std::pair<double, double> rouge_1_l(const std::vector<TokenSeq>& candidates,
                                    const std::vector<TokenSeq>& references);

// distinct n-grams across all candidates / total n-gram tokens
double distinct_n(const std::vector<TokenSeq>& candidates, int n);

struct ConceptPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double avg_num = 0.0;
  bool degenerate = false;  // no predictions or no gold concepts anywhere
};

// Set precision/recall/F1 of predicted vs gold concepts, micro-averaged
// over pairs by default.
ConceptPRF concept_prf(const std::vector<std::set<std::string>>& predicted,
                       const std::vector<std::set<std::string>>& gold, bool micro = true);

// Concepts mentioned in a token sequence, by exact match against graph
// vertices (greedy longest match for multi-word vertices).
std::set<std::string> extract_concepts(const TokenSeq& tokens, const ConceptGraph& graph);

struct MetricReport {
  double bleu = 0.0;
  double rouge1_f = 0.0;
  double rougeL_f = 0.0;
  double dist1 = 0.0;
  double dist2 = 0.0;
  ConceptPRF concepts;
  long pair_count = 0;

  std::string to_text() const;
};

MetricReport evaluate_responses(const std::vector<TokenSeq>& candidates,
                                const std::vector<TokenSeq>& references,
                                const ConceptGraph& graph);

struct SpeedReport {
  double total_seconds = 0.0;
  double words_per_second = 0.0;
  long decoder_passes_total = 0;
  long words_total = 0;
  std::size_t params_count = 0;

  // Pass counts are the primary, hardware-independent signal; wall-clock
  // timing is informative and can be left out of deterministic outputs.
  std::string to_text(bool with_timing = true) const;
};

struct DecodeOutcome {
  TokenSeq tokens;
  long passes = 0;
};

using BenchDecoder = std::function<DecodeOutcome(const ContextResponsePair&)>;

// Wall-clock throughput plus hardware-independent decoder pass counts.
SpeedReport speed_bench(const BenchDecoder& decoder,
                        const std::vector<ContextResponsePair>& pairs,
                        std::size_t params_count);

}  // namespace congen

#endif  // CONGEN_EVAL_HPP
