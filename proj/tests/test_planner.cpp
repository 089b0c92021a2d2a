#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "congen/planner.hpp"
#include "gradcheck.hpp"

using namespace congen;
using D = double;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.ffn = 12;
  cfg.gru_hidden = 4;
  cfg.word_emb = 6;
  cfg.vertex_emb = 4;
  cfg.n_max = 5;
  cfg.dropout = 0.0;
  return cfg;
}

Utterance concept_utt(const std::vector<std::string>& concepts) {
  Utterance u;
  u.tokens = concepts;
  for (int i = 0; i < static_cast<int>(concepts.size()); ++i) u.concept_indices.push_back(i);
  return u;
}

ContextResponsePair mk_pair(const std::vector<std::vector<std::string>>& ctx,
                            const std::vector<std::string>& resp) {
  ContextResponsePair p;
  for (const auto& c : ctx) p.context.push_back(concept_utt(c));
  p.response = concept_utt(resp);
  p.gold_concepts = p.response.concept_tokens();
  return p;
}

ConceptGraph chain_graph() {
  // a -> b -> c -> d plus extra edges so subgraphs have several tails
  std::vector<ContextResponsePair> pairs;
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  for (int rep = 0; rep < 3; ++rep) {
    for (int i = 0; i < 4; ++i) {
      pairs.push_back(mk_pair({{names[i]}}, {names[(i + 1) % 4]}));
      pairs.push_back(mk_pair({{names[i]}}, {names[(i + 2) % 4]}));
    }
  }
  return build_graph(pairs, 5, 2);
}

}  // namespace

TEST_CASE("encode_dialogue yields one row per context utterance") {
  const auto cfg = tiny_config();
  PlannerModel<D> model(cfg, 20, 10);
  model.init(31);
  Tape<D> t;
  CHECK(model.encode_dialogue(t, {{8, 9, 10}}).rows() == 1);
  Tape<D> t2;
  CHECK(model.encode_dialogue(t2, {{8, 9}, {10}, {11, 12, 13}}).rows() == 3);
}

TEST_CASE("dialogue encoding is the utterance-level fusion of word-level CLS rows") {
  const auto cfg = tiny_config();
  PlannerModel<D> model(cfg, 20, 10);
  model.init(98);
  const std::vector<std::vector<int>> ctx = {{8, 9, 10}, {11, 12}, {13}};
  Tape<D> t;
  Var<D> direct = model.encode_dialogue(t, ctx);
  // same computation assembled by hand from the two encoder stages
  std::vector<Var<D>> cls_rows;
  for (const auto& utt : ctx) {
    std::vector<int> ids = {Vocabulary::kCls};
    ids.insert(ids.end(), utt.begin(), utt.end());
    Var<D> emb = gather_rows(t.param(*model.word_emb), ids);
    cls_rows.push_back(row(model.dialog.word_enc(t, emb), 0));
  }
  Var<D> fused = model.dialog.utt_enc(t, concat_rows(cls_rows));
  CHECK((direct.value() - fused.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("masking every action forces a unit-probability STOP") {
  PlannerModel<D> model(tiny_config(), 20, 12);
  model.init(99);
  Tape<D> t;
  Var<D> m_t = t.leaf(Mat<D>::Random(1, 8), false);
  Var<D> s_n = t.leaf(Mat<D>::Random(1, 4), false);
  const std::vector<Subgraph> subs = {{3, {4, 5, ConceptGraph::kStop}}};
  const auto dist = model.extract_step(t, m_t, s_n, subs, {4, 5, ConceptGraph::kStop});
  CHECK(dist.forced_stop);
  REQUIRE(dist.actions.size() == 1);
  CHECK(dist.actions[0].concept_id == ConceptGraph::kStop);
  CHECK(dist.actions[0].value == 1.0);
}

TEST_CASE("overlong utterances are truncated and counted") {
  ModelConfig cfg = tiny_config();
  cfg.max_utt_len = 4;
  PlannerModel<D> model(cfg, 30, 10);
  model.init(97);
  Tape<D> t;
  int truncated = 0;
  std::vector<int> longutt;
  for (int i = 0; i < 12; ++i) longutt.push_back(8 + i);
  Var<D> h = model.dialog.encode(t, {longutt, {8, 9}}, nullptr, &truncated);
  CHECK(truncated == 1);
  CHECK(h.rows() == 2);
  CHECK(h.value().allFinite());
}

TEST_CASE("flow attention over a singleton set is exactly one") {
  PlannerModel<D> model(tiny_config(), 20, 10);
  model.init(32);
  Tape<D> t;
  std::vector<Mat<D>> alphas;
  model.encode_flow(t, {{4}, {7}}, &alphas);
  REQUIRE(alphas.size() == 2);
  CHECK(alphas[0](0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(alphas[1](0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero initial state makes the first flow attention uniform") {
  PlannerModel<D> model(tiny_config(), 20, 10);
  model.init(33);  // W_f arbitrary; s_0 = 0 zeroes every beta
  Tape<D> t;
  std::vector<Mat<D>> alphas;
  model.encode_flow(t, {{3, 4, 5}}, &alphas);
  REQUIRE(alphas.size() == 1);
  for (int j = 0; j < 3; ++j) {
    CHECK(alphas[0](0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("flow attention matches a hand-computed softmax") {
  ModelConfig cfg = tiny_config();
  cfg.vertex_emb = 2;
  cfg.gru_hidden = 2;
  PlannerModel<D> model(cfg, 20, 8);
  // everything zero except the pieces under test
  auto& emb = *model.vertex_emb;
  emb.value.setZero();
  emb.value.row(3) << 0.4, -0.2;  // utterance-1 concept
  emb.value.row(4) << 1.0, 0.0;   // utterance-2 concepts
  emb.value.row(5) << 0.0, 1.0;
  model.store.at("flow.W_f").value << 2.0, 0.0, 0.0, 2.0;
  model.store.at("flow.gru.Wc").value << 1.0, 0.0, 0.0, 1.0;  // c = tanh(f)

  // step 1: alpha = [1], f1 = e3, gates at 0.5 -> s1 = 0.5 * tanh(e3)
  // step 2: q = s1 W_f, beta_j = q . e_j -> softmax by hand
  const double s1x = 0.5 * std::tanh(0.4);
  const double s1y = 0.5 * std::tanh(-0.2);
  const double beta_b = 2.0 * s1x;  // q . (1,0)
  const double beta_c = 2.0 * s1y;  // q . (0,1)
  const double zb = std::exp(beta_b), zc = std::exp(beta_c);

  Tape<D> t;
  std::vector<Mat<D>> alphas;
  model.encode_flow(t, {{3}, {4, 5}}, &alphas);
  REQUIRE(alphas.size() == 2);
  CHECK(alphas[1](0, 0) == doctest::Approx(zb / (zb + zc)).epsilon(1e-9));
  CHECK(alphas[1](0, 1) == doctest::Approx(zc / (zb + zc)).epsilon(1e-9));
}

TEST_CASE("empty flow sets read the NULL vertex") {
  PlannerModel<D> model(tiny_config(), 20, 10);
  model.init(34);
  Tape<D> t1, t2;
  std::vector<Mat<D>> a1;
  FlowState f1 = model.encode_flow(t1, {{}}, &a1);
  FlowState f2 = model.encode_flow(t2, {{ConceptGraph::kNull}});
  CHECK(a1[0].cols() == 1);
  CHECK((t1.value(f1.state_ids.back()) - t2.value(f2.state_ids.back()))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("extract_step with one subgraph makes the top level trivial") {
  PlannerModel<D> model(tiny_config(), 20, 10);
  model.init(35);
  Tape<D> t;
  Var<D> m_t = t.leaf(Mat<D>::Random(1, 8), false);
  Var<D> s_n = t.leaf(Mat<D>::Random(1, 4), false);
  const std::vector<Subgraph> subs = {{5, {6, ConceptGraph::kStop}}};
  const auto dist = model.extract_step(t, m_t, s_n, subs, {});
  REQUIRE(dist.actions.size() == 2);
  CHECK(dist.premask_sum == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& a : dist.actions) {
    CHECK(a.alpha_t == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(a.value == doctest::Approx(a.alpha_g).epsilon(1e-9));
  }
}

TEST_CASE("pre-mask action distribution sums to one") {
  PlannerModel<D> model(tiny_config(), 20, 12);
  Rng seeds(36);
  const std::vector<Subgraph> subs = {{3, {4, 5, ConceptGraph::kStop}},
                                      {4, {5, 6, 7, ConceptGraph::kStop}},
                                      {8, {3, ConceptGraph::kStop}}};
  for (int draw = 0; draw < 50; ++draw) {
    model.init(seeds.raw());
    Tape<D> t;
    Var<D> m_t = t.leaf(Mat<D>::Random(1, 8), false);
    Var<D> s_n = t.leaf(Mat<D>::Random(1, 4), false);
    const auto dist = model.extract_step(t, m_t, s_n, subs, {});
    CHECK(std::abs(dist.premask_sum - 1.0) < 1e-6);
    double post = 0.0;
    for (const auto& a : dist.actions) post += a.value;
    CHECK(std::abs(post - 1.0) < 1e-6);
  }
}

TEST_CASE("extract_step matches a hand-computed table for 2 subgraphs x 3 tails") {
  ModelConfig cfg = tiny_config();
  cfg.hidden = 2;
  cfg.gru_hidden = 2;
  cfg.vertex_emb = 2;
  cfg.heads = 1;
  PlannerModel<D> model(cfg, 20, 8);
  model.init(37);

  // small hand-set weights
  Mat<D> emb(8, 2);
  emb.setZero();
  emb.row(1) << -0.3, 0.1;  // STOP vertex
  emb.row(3) << 0.5, -0.2;
  emb.row(4) << -0.1, 0.4;
  emb.row(5) << 0.3, 0.3;
  emb.row(6) << -0.4, -0.1;
  model.vertex_emb->value = emb;

  Mat<D> wgq(6, 2), wgk(2, 2), wtq(4, 2), wtk(4, 2);
  wgq << 0.2, -0.1, 0.05, 0.3, -0.2, 0.1, 0.15, -0.05, 0.1, 0.2, -0.3, 0.25;
  wgk << 0.4, -0.2, 0.1, 0.3;
  wtq << 0.25, -0.15, 0.05, 0.2, -0.1, 0.35, 0.3, -0.25;
  wtk << 0.2, 0.1, -0.15, 0.3, 0.25, -0.2, 0.05, 0.15;
  model.store.at("ext.Wgq").value = wgq;
  model.store.at("ext.Wgk").value = wgk;
  model.store.at("ext.Wtq").value = wtq;
  model.store.at("ext.Wtk").value = wtk;

  const Mat<D> m_t = (Mat<D>(1, 2) << 0.7, -0.4).finished();
  const Mat<D> s_n = (Mat<D>(1, 2) << -0.2, 0.6).finished();
  const std::vector<Subgraph> subs = {{3, {4, 5, ConceptGraph::kStop}},
                                      {4, {5, 6, ConceptGraph::kStop}}};

  // hand computation with plain scalar loops
  auto row_of = [&](ConceptId v) { return emb.row(v); };
  std::vector<std::vector<double>> alpha_g;
  std::vector<double> beta_t;
  for (const auto& sg : subs) {
    Eigen::RowVector2d q_in0;
    Eigen::Matrix<double, 1, 6> q_in;
    q_in << m_t(0, 0), m_t(0, 1), s_n(0, 0), s_n(0, 1), row_of(sg.head)(0), row_of(sg.head)(1);
    Eigen::RowVector2d q = q_in * wgq;
    std::vector<double> betas;
    double zsum = 0.0;
    for (ConceptId tail : sg.tails) {
      Eigen::RowVector2d key = row_of(tail) * wgk;
      betas.push_back(q.dot(key));
    }
    const double bmax = *std::max_element(betas.begin(), betas.end());
    std::vector<double> a;
    for (double b : betas) {
      a.push_back(std::exp(b - bmax));
      zsum += a.back();
    }
    for (double& x : a) x /= zsum;
    alpha_g.push_back(a);

    Eigen::RowVector2d tail_mix;
    tail_mix.setZero();
    for (std::size_t k = 0; k < sg.tails.size(); ++k) {
      tail_mix += alpha_g.back()[k] * row_of(sg.tails[k]);
    }
    Eigen::Matrix<double, 1, 4> g_j;
    g_j << row_of(sg.head)(0), row_of(sg.head)(1), tail_mix(0), tail_mix(1);
    Eigen::Matrix<double, 1, 4> ms;
    ms << m_t(0, 0), m_t(0, 1), s_n(0, 0), s_n(0, 1);
    beta_t.push_back((ms * wtq).dot(g_j * wtk));
  }
  const double btmax = std::max(beta_t[0], beta_t[1]);
  double at0 = std::exp(beta_t[0] - btmax), at1 = std::exp(beta_t[1] - btmax);
  const double atsum = at0 + at1;
  at0 /= atsum;
  at1 /= atsum;

  std::map<ConceptId, double> expected;
  for (std::size_t k = 0; k < 3; ++k) {
    expected[subs[0].tails[k]] += at0 * alpha_g[0][k];
    expected[subs[1].tails[k]] += at1 * alpha_g[1][k];
  }

  Tape<D> t;
  const auto dist =
      model.extract_step(t, t.leaf(m_t, false), t.leaf(s_n, false), subs, {});
  REQUIRE(dist.actions.size() == expected.size());
  for (const auto& a : dist.actions) {
    CHECK(a.value == doctest::Approx(expected.at(a.concept_id)).epsilon(1e-8));
  }
}

TEST_CASE("masked concepts get zero mass and the rest renormalizes") {
  PlannerModel<D> model(tiny_config(), 20, 12);
  model.init(38);
  Tape<D> t;
  Var<D> m_t = t.leaf(Mat<D>::Random(1, 8), false);
  Var<D> s_n = t.leaf(Mat<D>::Random(1, 4), false);
  const std::vector<Subgraph> subs = {{3, {4, 5, 6, ConceptGraph::kStop}}};
  const auto dist = model.extract_step(t, m_t, s_n, subs, {4, 6});
  double sum = 0.0;
  for (const auto& a : dist.actions) {
    CHECK(a.concept_id != 4);
    CHECK(a.concept_id != 6);
    sum += a.value;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("planning invariants hold under random parameters") {
  const auto graph = chain_graph();
  PlannerModel<D> model(tiny_config(), 30, graph.vertex_count());
  Vocabulary vocab;
  for (const char* w : {"a", "b", "c", "d", "hello"}) vocab.add(w);

  const auto pair = mk_pair({{"a"}, {"b", "c"}}, {"d"});
  const PlannerInput input = make_planner_input(pair.context, vocab, graph);
  std::set<ConceptId> allowed;
  for (const auto& sg : input.subgraphs)
    for (ConceptId c : sg.tails) allowed.insert(c);

  Rng seeds(39);
  int stopped = 0, capped = 0;
  for (int draw = 0; draw < 200; ++draw) {
    model.init(seeds.raw());
    const auto plan = model.plan(input);
    CHECK(static_cast<int>(plan.concepts.size()) <= model.cfg.n_max);
    std::set<ConceptId> seen;
    for (ConceptId c : plan.concepts) {
      CHECK(c != ConceptGraph::kStop);
      CHECK(allowed.count(c) == 1);
      CHECK(seen.insert(c).second);  // no duplicates
    }
    if (plan.stop_reason == StopReason::StopToken) {
      ++stopped;
      CHECK(plan.steps.back().concept_id == ConceptGraph::kStop);
    } else {
      ++capped;
      CHECK(static_cast<int>(plan.concepts.size()) ==
            std::min<int>(model.cfg.n_max, static_cast<int>(allowed.size()) - 1));
    }
  }
  CHECK(stopped + capped == 200);
  CHECK(stopped > 0);  // both stop conditions exercised across draws
}

TEST_CASE("a wide subgraph exercises the N_max stop condition") {
  PlannerModel<D> model(tiny_config(), 30, 20);
  PlannerInput input;
  input.context_word_ids = {{8, 9, 10}};
  input.flow = {{3}};
  Subgraph sg;
  sg.head = 3;
  for (ConceptId c = 4; c < 17; ++c) sg.tails.push_back(c);
  sg.tails.push_back(ConceptGraph::kStop);
  input.subgraphs = {sg};

  Rng seeds(96);
  int capped = 0, stopped = 0;
  for (int draw = 0; draw < 300; ++draw) {
    model.init(seeds.raw());
    const auto plan = model.plan(input);
    if (plan.stop_reason == StopReason::MaxLen) {
      ++capped;
      CHECK(static_cast<int>(plan.concepts.size()) == model.cfg.n_max);
      CHECK(plan.steps.back().concept_id != ConceptGraph::kStop);
    } else {
      ++stopped;
      CHECK(static_cast<int>(plan.concepts.size()) < model.cfg.n_max);
    }
  }
  // both stop conditions must occur across 300 random draws
  CHECK(capped > 0);
  CHECK(stopped > 0);
}

TEST_CASE("planning is deterministic for a fixed seed") {
  const auto graph = chain_graph();
  PlannerModel<D> model(tiny_config(), 30, graph.vertex_count());
  Vocabulary vocab;
  for (const char* w : {"a", "b", "c", "d"}) vocab.add(w);
  const auto pair = mk_pair({{"a", "b"}}, {"c"});
  const PlannerInput input = make_planner_input(pair.context, vocab, graph);

  model.init(777);
  const auto p1 = model.plan(input);
  model.init(777);
  const auto p2 = model.plan(input);
  CHECK(p1.concepts == p2.concepts);
  REQUIRE(p1.steps.size() == p2.steps.size());
  for (std::size_t i = 0; i < p1.steps.size(); ++i) {
    CHECK(p1.steps[i].prob == p2.steps[i].prob);
  }
}

TEST_CASE("loss is exactly zero when the only action is the gold STOP") {
  PlannerModel<D> model(tiny_config(), 20, 10);
  model.init(40);
  PlannerExample ex;
  ex.input.context_word_ids = {{8, 9}};
  ex.input.flow = {{}};
  ex.input.subgraphs = {{ConceptGraph::kNull, {ConceptGraph::kStop}}};
  Tape<D> t;
  CHECK(model.loss(t, {ex}).value()(0, 0) == 0.0);
}

TEST_CASE("uniform action distributions give log V loss") {
  ModelConfig cfg = tiny_config();
  PlannerModel<D> model(cfg, 20, 12);
  // zero extractor weights and embeddings -> all betas zero -> uniform
  PlannerExample ex;
  ex.input.context_word_ids = {{8, 9, 10}};
  ex.input.flow = {{3}};
  ex.input.subgraphs = {{3, {4, 5, 6, 7, ConceptGraph::kStop}}};  // V = 5 actions

  SUBCASE("single STOP step over V uniform candidates") {
    Tape<D> t;
    const double loss = model.loss(t, {ex}).value()(0, 0);
    CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(1e-9));
  }

  SUBCASE("gold step plus STOP step averages the two uniform NLLs") {
    ex.gold = {4};
    Tape<D> t;
    const double loss = model.loss(t, {ex}).value()(0, 0);
    // step 1: -log(1/5); step 2 after masking one concept: -log(1/4)
    CHECK(loss == doctest::Approx((std::log(5.0) + std::log(4.0)) / 2.0).epsilon(1e-9));
  }
}

TEST_CASE("planner loss gradients match finite differences") {
  const auto graph = chain_graph();
  Vocabulary vocab;
  for (const char* w : {"a", "b", "c", "d", "so", "then"}) vocab.add(w);

  ModelConfig cfg = tiny_config();
  PlannerModel<D> model(cfg, vocab.size(), graph.vertex_count());
  model.init(41);

  std::vector<PlannerExample> batch;
  for (const auto& pair :
       {mk_pair({{"a"}, {"b"}}, {"c", "d"}), mk_pair({{"c", "d"}}, {"a"})}) {
    const auto ex = make_planner_example(pair, vocab, graph);
    REQUIRE(ex.has_value());
    batch.push_back(*ex);
  }
  auto build = [&](Tape<D>& t) { return model.loss(t, batch); };
  const auto res = testing::check_gradients(model.store, build, 1e-4, 4);
  CAPTURE(res.worst_param);
  CAPTURE(res.checked);
  CHECK(res.max_rel < 1e-4);
}

TEST_CASE("examples with unreachable or duplicate gold concepts are excluded") {
  const auto graph = chain_graph();
  Vocabulary vocab;
  for (const char* w : {"a", "b", "c", "d", "zzz"}) vocab.add(w);

  CHECK(make_planner_example(mk_pair({{"a"}}, {"b"}), vocab, graph).has_value());
  // zzz is not a graph vertex
  CHECK(!make_planner_example(mk_pair({{"a"}}, {"zzz"}), vocab, graph).has_value());
  // d is not a tail of a's subgraph (a -> b, c only)
  CHECK(!make_planner_example(mk_pair({{"a"}}, {"d"}), vocab, graph).has_value());
  // duplicate gold concept is unreachable after masking
  auto dup = mk_pair({{"a"}}, {"b", "b"});
  dup.gold_concepts = {"b", "b"};
  CHECK(!make_planner_example(dup, vocab, graph).has_value());
}
