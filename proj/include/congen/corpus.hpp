#ifndef CONGEN_CORPUS_HPP
#define CONGEN_CORPUS_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "congen/vocab.hpp"

namespace congen {

struct Utterance {
  std::string speaker;
  std::vector<std::string> tokens;
  std::vector<std::string> pos_tags;     // empty when untagged
  std::vector<int> concept_indices;      // strictly increasing positions

  // tokens at concept_indices, left-to-right, duplicates dropped
  std::vector<std::string> concept_tokens() const;
  void validate() const;
};

struct DialogueSession {
  std::string id;
  std::vector<Utterance> utterances;
};

struct ContextResponsePair {
  std::string id;
  std::vector<Utterance> context;
  Utterance response;
  std::vector<std::string> gold_concepts;  // ordered as in the response, <= n_max
};

// One session per line:
//   {"id": "...", "utterances": [{"speaker": "...", "tokens": [...],
//    "pos_tags": [...]?, "concept_indices": [...]?}, ...]}
std::vector<DialogueSession> load_corpus(const std::string& path);
void save_corpus(const std::vector<DialogueSession>& sessions, const std::string& path);

std::set<std::string> load_stopwords(const std::string& path);
std::set<std::string> load_tag_whitelist(const std::string& path);

// idf(w) = log((1 + U) / (1 + df(w))) over all utterances U in the corpus
std::map<std::string, double> compute_idf(const std::vector<DialogueSession>& sessions);

// tf-idf keyword salience. A token is a concept iff its tag is whitelisted
// (vacuous when untagged or the whitelist is empty), it is not a stopword,
// and its in-utterance tf*idf is >= theta_sal * (max candidate score).
std::vector<std::vector<int>> score_salience(const DialogueSession& session,
                                             const std::map<std::string, double>& idf,
                                             const std::set<std::string>& stopwords,
                                             const std::set<std::string>& pos_whitelist,
                                             double theta_sal);

void annotate_corpus(std::vector<DialogueSession>& sessions,
                     const std::set<std::string>& stopwords,
                     const std::set<std::string>& pos_whitelist, double theta_sal);

// One pair per non-first utterance. context_window 0 keeps all preceding
// utterances. Sessions with fewer than two utterances are skipped and
// counted in *skipped.
std::vector<ContextResponsePair> make_pairs(const std::vector<DialogueSession>& sessions,
                                            int context_window, int n_max,
                                            int* skipped = nullptr);

// word vocabulary over all corpus tokens, sorted for order-independence
Vocabulary build_vocabulary(const std::vector<DialogueSession>& sessions);

long total_token_count(const std::vector<DialogueSession>& sessions);

}  // namespace congen

#endif  // CONGEN_CORPUS_HPP
