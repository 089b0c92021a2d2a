#include "congen/concept_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace congen {

long CooccurrenceCounts::joint_count(const std::string& x, const std::string& y) const {
  auto it = joint.find({x, y});
  return it == joint.end() ? 0 : it->second;
}

CooccurrenceCounts count_pairs(const std::vector<ContextResponsePair>& pairs) {
  CooccurrenceCounts c;
  for (const auto& p : pairs) {
    std::set<std::string> ctx;
    for (const auto& u : p.context) {
      for (const auto& t : u.concept_tokens()) ctx.insert(t);
    }
    std::set<std::string> resp;
    for (const auto& t : p.response.concept_tokens()) resp.insert(t);

    for (const auto& x : ctx) ++c.head_marginal[x];
    for (const auto& y : resp) ++c.tail_marginal[y];
    for (const auto& x : ctx) {
      for (const auto& y : resp) ++c.joint[{x, y}];
    }
    ++c.total;
  }
  return c;
}

std::optional<double> pmi(const CooccurrenceCounts& counts, const std::string& x,
                          const std::string& y, long min_count) {
  const long j = counts.joint_count(x, y);
  if (j < min_count || j == 0) return std::nullopt;
  const long hx = counts.head_marginal.at(x);
  const long ty = counts.tail_marginal.at(y);
  return std::log(static_cast<double>(j) * static_cast<double>(counts.total) /
                  (static_cast<double>(hx) * static_cast<double>(ty)));
}

namespace {
const char* kReservedVertices[] = {"<null>", "<stop>", "<bop>"};
}

ConceptGraph::ConceptGraph() {
  for (const char* r : kReservedVertices) {
    index_[r] = static_cast<ConceptId>(tokens_.size());
    tokens_.push_back(r);
  }
}

ConceptId ConceptGraph::add_vertex(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const ConceptId id = static_cast<ConceptId>(tokens_.size());
  index_[token] = id;
  tokens_.push_back(token);
  return id;
}

std::optional<ConceptId> ConceptGraph::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& ConceptGraph::token(ConceptId id) const {
  if (id < 0 || id >= vertex_count()) throw std::out_of_range("vertex id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

long ConceptGraph::edge_count() const {
  long n = 0;
  for (const auto& [head, edges] : adjacency_) n += static_cast<long>(edges.size());
  return n;
}

void ConceptGraph::set_edges(ConceptId head, std::vector<Edge> edges) {
  for (const auto& e : edges) {
    if (e.tail < 0 || e.tail >= vertex_count()) {
      throw std::runtime_error("edge tail id not a vertex");
    }
    if (e.tail == head) throw std::runtime_error("self-loop edge");
  }
  adjacency_[head] = std::move(edges);
}

const std::vector<ConceptGraph::Edge>& ConceptGraph::tails(ConceptId head) const {
  static const std::vector<Edge> kEmpty;
  auto it = adjacency_.find(head);
  return it == adjacency_.end() ? kEmpty : it->second;
}

std::vector<std::string> ConceptGraph::user_vertices() const {
  return {tokens_.begin() + kReservedCount, tokens_.end()};
}

void ConceptGraph::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file: " + path);
  out << "congen-graph v1 vertices=" << vertex_count() - kReservedCount
      << " edges=" << edge_count() << "\n";
  out << std::setprecision(17);
  for (int i = kReservedCount; i < vertex_count(); ++i) {
    out << i << "\t" << tokens_[static_cast<std::size_t>(i)] << "\n";
  }
  for (const auto& [head, edges] : adjacency_) {
    for (const auto& e : edges) {
      out << tokens_[static_cast<std::size_t>(head)] << "\t"
          << tokens_[static_cast<std::size_t>(e.tail)] << "\t" << e.pmi << "\n";
    }
  }
}

ConceptGraph ConceptGraph::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path);
  std::string header;
  if (!std::getline(in, header) || header.rfind("congen-graph v1", 0) != 0) {
    throw std::runtime_error("bad graph header in " + path);
  }
  long n_vertices = 0, n_edges = 0;
  {
    std::istringstream hs(header);
    std::string tag, ver, field;
    hs >> tag >> ver;
    while (hs >> field) {
      if (field.rfind("vertices=", 0) == 0) n_vertices = std::stol(field.substr(9));
      if (field.rfind("edges=", 0) == 0) n_edges = std::stol(field.substr(6));
    }
  }
  ConceptGraph g;
  std::string line;
  for (long i = 0; i < n_vertices; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated vertex table");
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("bad vertex line: " + line);
    g.add_vertex(line.substr(tab + 1));
  }
  std::map<ConceptId, std::vector<Edge>> adj;
  for (long i = 0; i < n_edges; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated edge table");
    std::istringstream es(line);
    std::string head, tail, score;
    if (!std::getline(es, head, '\t') || !std::getline(es, tail, '\t') ||
        !std::getline(es, score, '\t')) {
      throw std::runtime_error("bad edge line: " + line);
    }
    const auto h = g.id(head);
    const auto t = g.id(tail);
    if (!h || !t) throw std::runtime_error("edge references unknown vertex: " + line);
    adj[*h].push_back({*t, std::stod(score)});
  }
  for (auto& [head, edges] : adj) g.set_edges(head, std::move(edges));
  return g;
}

ConceptGraph build_graph(const std::vector<ContextResponsePair>& pairs, int k,
                         long min_count) {
  if (k < 1) throw std::runtime_error("build_graph: K must be >= 1");
  CooccurrenceCounts counts = count_pairs(pairs);

  // vertex set: every concept observed on either side, sorted so that ids
  // do not depend on pair order
  std::set<std::string> vertex_tokens;
  for (const auto& [tok, n] : counts.head_marginal) vertex_tokens.insert(tok);
  for (const auto& [tok, n] : counts.tail_marginal) vertex_tokens.insert(tok);

  ConceptGraph g;
  for (const auto& tok : vertex_tokens) g.add_vertex(tok);

  std::map<ConceptId, std::vector<ConceptGraph::Edge>> candidates;
  for (const auto& [key, n] : counts.joint) {
    if (n < min_count) continue;
    const auto score = pmi(counts, key.first, key.second, min_count);
    if (!score) continue;
    const ConceptId head = *g.id(key.first);
    const ConceptId tail = *g.id(key.second);
    if (head == tail) continue;
    candidates[head].push_back({tail, *score});
  }
  for (auto& [head, edges] : candidates) {
    std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
      if (a.pmi != b.pmi) return a.pmi > b.pmi;
      return a.tail < b.tail;
    });
    if (static_cast<int>(edges.size()) > k) edges.resize(static_cast<std::size_t>(k));
    g.set_edges(head, std::move(edges));
  }
  g.stats = std::move(counts);
  return g;
}

std::vector<Subgraph> subgraphs_for(const ConceptGraph& graph,
                                    const std::vector<std::string>& last_utterance_concepts) {
  std::vector<Subgraph> subs;
  std::set<ConceptId> seen_heads;
  for (const auto& tok : last_utterance_concepts) {
    const auto head = graph.id(tok);
    if (!head || *head < ConceptGraph::kReservedCount) continue;
    if (!seen_heads.insert(*head).second) continue;
    Subgraph sg;
    sg.head = *head;
    for (const auto& e : graph.tails(*head)) sg.tails.push_back(e.tail);
    sg.tails.push_back(ConceptGraph::kStop);
    subs.push_back(std::move(sg));
  }
  if (subs.empty()) {
    subs.push_back(Subgraph{ConceptGraph::kNull, {ConceptGraph::kStop}});
  }
  return subs;
}

}  // namespace congen
