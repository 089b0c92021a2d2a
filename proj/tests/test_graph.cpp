#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "congen/concept_graph.hpp"
#include "congen/matrix.hpp"

using namespace congen;

namespace {

Utterance concept_utt(const std::vector<std::string>& concepts) {
  Utterance u;
  u.tokens = concepts;
  for (int i = 0; i < static_cast<int>(concepts.size()); ++i) u.concept_indices.push_back(i);
  return u;
}

ContextResponsePair mk_pair(const std::vector<std::vector<std::string>>& ctx_concepts,
                            const std::vector<std::string>& resp_concepts) {
  ContextResponsePair p;
  for (const auto& c : ctx_concepts) p.context.push_back(concept_utt(c));
  p.response = concept_utt(resp_concepts);
  p.gold_concepts = p.response.concept_tokens();
  return p;
}

// Independent brute-force counter: for every candidate token pair, scan all
// pairs and test set membership from scratch.
struct BruteCounts {
  std::map<std::pair<std::string, std::string>, long> joint;
  std::map<std::string, long> head, tail;
  long total = 0;
};

BruteCounts brute_force_counts(const std::vector<ContextResponsePair>& pairs) {
  BruteCounts out;
  out.total = static_cast<long>(pairs.size());
  std::set<std::string> all;
  for (const auto& p : pairs) {
    for (const auto& u : p.context)
      for (const auto& t : u.concept_tokens()) all.insert(t);
    for (const auto& t : p.response.concept_tokens()) all.insert(t);
  }
  auto in_context = [](const ContextResponsePair& p, const std::string& tok) {
    for (const auto& u : p.context) {
      const auto c = u.concept_tokens();
      if (std::find(c.begin(), c.end(), tok) != c.end()) return true;
    }
    return false;
  };
  auto in_response = [](const ContextResponsePair& p, const std::string& tok) {
    const auto c = p.response.concept_tokens();
    return std::find(c.begin(), c.end(), tok) != c.end();
  };
  for (const auto& x : all) {
    long hx = 0;
    for (const auto& p : pairs) hx += in_context(p, x) ? 1 : 0;
    if (hx > 0) out.head[x] = hx;
    long tx = 0;
    for (const auto& p : pairs) tx += in_response(p, x) ? 1 : 0;
    if (tx > 0) out.tail[x] = tx;
    for (const auto& y : all) {
      long j = 0;
      for (const auto& p : pairs) j += in_context(p, x) && in_response(p, y) ? 1 : 0;
      if (j > 0) out.joint[{x, y}] = j;
    }
  }
  return out;
}

std::vector<ContextResponsePair> toy_corpus() {
  // deterministic 20-pair corpus over 6 concepts
  const std::vector<std::string> names = {"ant", "bee", "cat", "dog", "elk", "fox"};
  Rng rng(2024);
  std::vector<ContextResponsePair> pairs;
  for (int i = 0; i < 20; ++i) {
    std::vector<std::string> ctx, resp;
    const int nc = 1 + static_cast<int>(rng.below(3));
    for (int j = 0; j < nc; ++j) ctx.push_back(names[rng.below(names.size())]);
    const int nr = 1 + static_cast<int>(rng.below(2));
    for (int j = 0; j < nr; ++j) resp.push_back(names[rng.below(names.size())]);
    pairs.push_back(mk_pair({ctx}, resp));
  }
  return pairs;
}

}  // namespace

TEST_CASE("single pair counting") {
  const auto counts = count_pairs({mk_pair({{"a"}}, {"b"})});
  CHECK(counts.total == 1);
  CHECK(counts.joint_count("a", "b") == 1);
  CHECK(counts.head_marginal.at("a") == 1);
  CHECK(counts.tail_marginal.at("b") == 1);
}

TEST_CASE("repeated concept within one context counts once per pair") {
  const auto once = count_pairs({mk_pair({{"a"}}, {"b"})});
  const auto twice = count_pairs({mk_pair({{"a", "a"}, {"a"}}, {"b", "b"})});
  CHECK(once.joint_count("a", "b") == twice.joint_count("a", "b"));
  CHECK(once.head_marginal.at("a") == twice.head_marginal.at("a"));
  CHECK(once.tail_marginal.at("b") == twice.tail_marginal.at("b"));
}

TEST_CASE("20-pair toy corpus matches the brute-force oracle exactly") {
  const auto pairs = toy_corpus();
  const auto counts = count_pairs(pairs);
  const auto oracle = brute_force_counts(pairs);
  CHECK(counts.total == oracle.total);
  CHECK(counts.joint == oracle.joint);
  CHECK(counts.head_marginal == oracle.head);
  CHECK(counts.tail_marginal == oracle.tail);
}

TEST_CASE("pmi is zero under statistical independence") {
  CooccurrenceCounts c;
  c.total = 8;
  c.head_marginal["a"] = 4;
  c.tail_marginal["b"] = 4;
  c.joint[{"a", "b"}] = 2;  // 2/8 == (4/8)(4/8)
  const auto score = pmi(c, "a", "b", 1);
  REQUIRE(score.has_value());
  CHECK(*score == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pmi matches direct arithmetic: log 2") {
  CooccurrenceCounts c;
  c.total = 8;
  c.head_marginal["a"] = 4;
  c.tail_marginal["b"] = 4;
  c.joint[{"a", "b"}] = 4;
  const auto score = pmi(c, "a", "b", 1);
  REQUIRE(score.has_value());
  CHECK(*score == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("pmi at the min_count boundary is finite and negative for anti-correlated pairs") {
  CooccurrenceCounts c;
  c.total = 10;
  c.head_marginal["x"] = 5;
  c.tail_marginal["y"] = 8;
  c.joint[{"x", "y"}] = 2;
  // log(2 * 10 / (5 * 8)) = log(0.5)
  const auto score = pmi(c, "x", "y", 2);
  REQUIRE(score.has_value());
  CHECK(*score == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(!pmi(c, "x", "y", 3).has_value());
}

TEST_CASE("build_graph keeps both tails when under capacity") {
  std::vector<ContextResponsePair> pairs;
  for (int i = 0; i < 3; ++i) {
    pairs.push_back(mk_pair({{"head"}}, {"t1"}));
    pairs.push_back(mk_pair({{"head"}}, {"t2"}));
  }
  const auto g = build_graph(pairs, 5, 2);
  const auto head = g.id("head");
  REQUIRE(head.has_value());
  CHECK(g.tails(*head).size() == 2);
}

TEST_CASE("top-K selection matches a full-sort oracle") {
  // head co-occurs with 10 tails at varying rates
  std::vector<ContextResponsePair> pairs;
  for (int t = 0; t < 10; ++t) {
    const std::string tail = "tail" + std::to_string(t);
    for (int n = 0; n < 2 + t; ++n) pairs.push_back(mk_pair({{"head"}}, {tail}));
    // inflate tail marginals unevenly so pmi ordering differs from count ordering
    for (int n = 0; n < (t % 3) * 4; ++n) pairs.push_back(mk_pair({{"other"}}, {tail}));
  }
  const auto g = build_graph(pairs, 3, 2);
  const auto counts = count_pairs(pairs);

  // oracle: score every candidate, full sort, take the prefix
  std::vector<std::pair<double, std::string>> scored;
  for (int t = 0; t < 10; ++t) {
    const std::string tail = "tail" + std::to_string(t);
    const auto s = pmi(counts, "head", tail, 2);
    if (s) scored.push_back({*s, tail});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const auto head = g.id("head");
  REQUIRE(head.has_value());
  const auto& edges = g.tails(*head);
  REQUIRE(edges.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(g.token(edges[static_cast<std::size_t>(i)].tail) == scored[static_cast<std::size_t>(i)].second);
    CHECK(edges[static_cast<std::size_t>(i)].pmi ==
          doctest::Approx(scored[static_cast<std::size_t>(i)].first).epsilon(1e-12));
  }
}

TEST_CASE("adjacency is sorted by descending pmi and capped") {
  const auto pairs = toy_corpus();
  const auto g = build_graph(pairs, 3, 1);
  for (int v = ConceptGraph::kReservedCount; v < g.vertex_count(); ++v) {
    const auto& edges = g.tails(v);
    CHECK(edges.size() <= 3);
    for (std::size_t i = 1; i < edges.size(); ++i) {
      const bool ordered = edges[i - 1].pmi > edges[i].pmi ||
                           (edges[i - 1].pmi == edges[i].pmi &&
                            edges[i - 1].tail < edges[i].tail);
      CHECK(ordered);
    }
  }
}

TEST_CASE("build_graph is invariant to pair order") {
  auto pairs = toy_corpus();
  const auto g1 = build_graph(pairs, 4, 2);
  std::reverse(pairs.begin(), pairs.end());
  std::rotate(pairs.begin(), pairs.begin() + 7, pairs.end());
  const auto g2 = build_graph(pairs, 4, 2);

  const char* path1 = "/tmp/congen_test_graph1.txt";
  const char* path2 = "/tmp/congen_test_graph2.txt";
  g1.save(path1);
  g2.save(path2);
  std::ifstream a(path1), b(path2);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  std::remove(path1);
  std::remove(path2);
}

TEST_CASE("graph file round-trips exactly") {
  const auto g = build_graph(toy_corpus(), 4, 1);
  const char* path = "/tmp/congen_test_graph_rt.txt";
  g.save(path);
  const auto loaded = ConceptGraph::load(path);
  CHECK(loaded.vertex_count() == g.vertex_count());
  CHECK(loaded.edge_count() == g.edge_count());
  for (int v = 0; v < g.vertex_count(); ++v) {
    CHECK(loaded.token(v) == g.token(v));
    const auto& e1 = g.tails(v);
    const auto& e2 = loaded.tails(v);
    REQUIRE(e1.size() == e2.size());
    for (std::size_t i = 0; i < e1.size(); ++i) {
      CHECK(e1[i].tail == e2[i].tail);
      CHECK(e1[i].pmi == e2[i].pmi);  // exact: %.17g round trip
    }
  }
  std::remove(path);
}

TEST_CASE("an empty corpus builds an empty graph") {
  const auto g = build_graph({}, 5, 2);
  CHECK(g.vertex_count() == ConceptGraph::kReservedCount);
  CHECK(g.edge_count() == 0);
}

TEST_CASE("subgraphs: known head lists its tails then STOP") {
  const auto g = build_graph({mk_pair({{"a"}}, {"b"}), mk_pair({{"a"}}, {"b"}),
                              mk_pair({{"a"}}, {"c"}), mk_pair({{"a"}}, {"c"})},
                             5, 2);
  const auto subs = subgraphs_for(g, {"a"});
  REQUIRE(subs.size() == 1);
  CHECK(subs[0].head == *g.id("a"));
  REQUIRE(subs[0].tails.size() == 3);
  CHECK(subs[0].tails.back() == ConceptGraph::kStop);
  CHECK(std::count(subs[0].tails.begin(), subs[0].tails.end(), ConceptGraph::kStop) == 1);
}

TEST_CASE("subgraphs: empty concept set falls back to a NULL-headed STOP subgraph") {
  const auto g = build_graph(toy_corpus(), 4, 1);
  const auto subs = subgraphs_for(g, {});
  REQUIRE(subs.size() == 1);
  CHECK(subs[0].head == ConceptGraph::kNull);
  CHECK(subs[0].tails == std::vector<ConceptId>{ConceptGraph::kStop});
}

TEST_CASE("subgraphs: unknown concepts are filtered") {
  const auto g = build_graph({mk_pair({{"a"}}, {"b"}), mk_pair({{"a"}}, {"b"})}, 5, 2);
  const auto subs = subgraphs_for(g, {"a", "unknown-token"});
  REQUIRE(subs.size() == 1);
  CHECK(subs[0].head == *g.id("a"));
}

TEST_CASE("every subgraph ends with exactly one STOP") {
  const auto g = build_graph(toy_corpus(), 4, 1);
  const auto subs = subgraphs_for(g, {"ant", "bee", "cat", "dog", "elk", "fox"});
  for (const auto& sg : subs) {
    CHECK(std::count(sg.tails.begin(), sg.tails.end(), ConceptGraph::kStop) == 1);
    CHECK(sg.tails.back() == ConceptGraph::kStop);
    std::set<ConceptId> uniq(sg.tails.begin(), sg.tails.end());
    CHECK(uniq.size() == sg.tails.size());
  }
}
