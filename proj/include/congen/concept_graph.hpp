#ifndef CONGEN_CONCEPT_GRAPH_HPP
#define CONGEN_CONCEPT_GRAPH_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "congen/corpus.hpp"

namespace congen {

using ConceptId = int;

// Co-occurrence tables over (context, response) pairs with set semantics:
// a concept counts once per pair per side, however often it repeats.
struct CooccurrenceCounts {
  std::map<std::pair<std::string, std::string>, long> joint;
  std::map<std::string, long> head_marginal;  // pairs with x among context concepts
  std::map<std::string, long> tail_marginal;  // pairs with y among response concepts
  long total = 0;

  long joint_count(const std::string& x, const std::string& y) const;
};

CooccurrenceCounts count_pairs(const std::vector<ContextResponsePair>& pairs);

// log[(joint * total) / (head * tail)], natural log; nullopt below min_count
std::optional<double> pmi(const CooccurrenceCounts& counts, const std::string& x,
                          const std::string& y, long min_count);

// Concept vertices plus top-K PMI-ranked transition edges. Vertex ids are
// assigned over the sorted token set, so the graph is independent of pair
// order. Ids 0..2 are the reserved NULL / STOP / begin-of-plan vertices.
class ConceptGraph {
 public:
  static constexpr ConceptId kNull = 0;
  static constexpr ConceptId kStop = 1;
  static constexpr ConceptId kBop = 2;
  static constexpr int kReservedCount = 3;

  struct Edge {
    ConceptId tail;
    double pmi;
  };

  ConceptGraph();

  ConceptId add_vertex(const std::string& token);
  std::optional<ConceptId> id(const std::string& token) const;
  const std::string& token(ConceptId id) const;
  int vertex_count() const { return static_cast<int>(tokens_.size()); }
  long edge_count() const;

  void set_edges(ConceptId head, std::vector<Edge> edges);
  const std::vector<Edge>& tails(ConceptId head) const;

  // vertex tokens after the reserved block, in id order
  std::vector<std::string> user_vertices() const;

  void save(const std::string& path) const;
  static ConceptGraph load(const std::string& path);

  CooccurrenceCounts stats;  // populated by build_graph only

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, ConceptId> index_;
  std::map<ConceptId, std::vector<Edge>> adjacency_;
};

// Keep, for each head, the K tails with highest PMI among pairs seen at
// least min_count times; ties broken by lower tail id; self-loops dropped.
ConceptGraph build_graph(const std::vector<ContextResponsePair>& pairs, int k,
                         long min_count);

struct Subgraph {
  ConceptId head;
  std::vector<ConceptId> tails;  // STOP appended as the final tail
};

// One subgraph per in-graph concept of the last utterance, in utterance
// order; a single NULL-headed {STOP} subgraph when none qualifies.
std::vector<Subgraph> subgraphs_for(const ConceptGraph& graph,
                                    const std::vector<std::string>& last_utterance_concepts);

}  // namespace congen

#endif  // CONGEN_CONCEPT_GRAPH_HPP
