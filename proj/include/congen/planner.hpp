#ifndef CONGEN_PLANNER_HPP
#define CONGEN_PLANNER_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "congen/concept_graph.hpp"
#include "congen/dialogue.hpp"

namespace congen {

enum class StopReason { StopToken, MaxLen };

struct PlanStep {
  ConceptId concept_id;  // chosen action, possibly STOP
  int subgraph = 0;   // provenance: j of the strongest contributing edge
  int tail = 0;       // provenance: k within that subgraph
  double alpha_t = 0.0;
  double alpha_g = 0.0;
  double prob = 0.0;  // post-mask renormalized probability
};

struct PlannedConcepts {
  std::vector<ConceptId> concepts;  // never contains STOP, length <= n_max
  std::vector<PlanStep> steps;
  StopReason stop_reason = StopReason::StopToken;
};

// Per-pair features the planner consumes: context token ids, the concept
// flow as vertex ids per utterance, and the subgraphs retrieved for the
// last utterance.
struct PlannerInput {
  std::vector<std::vector<int>> context_word_ids;
  std::vector<std::vector<ConceptId>> flow;
  std::vector<Subgraph> subgraphs;
};

struct PlannerExample {
  PlannerInput input;
  std::vector<ConceptId> gold;  // ordered target concepts, STOP excluded
};

inline PlannerInput make_planner_input(const std::vector<Utterance>& context,
                                       const Vocabulary& vocab, const ConceptGraph& graph) {
  PlannerInput in;
  for (const auto& u : context) {
    in.context_word_ids.push_back(vocab.ids(u.tokens));
    std::vector<ConceptId> f;
    for (const auto& tok : u.concept_tokens()) {
      if (auto id = graph.id(tok)) {
        if (*id >= ConceptGraph::kReservedCount) f.push_back(*id);
      }
    }
    in.flow.push_back(std::move(f));
  }
  in.subgraphs = subgraphs_for(graph, context.back().concept_tokens());
  return in;
}

// nullopt when a gold concept is not reachable from the retrieved
// subgraphs under the no-duplicates rule (such pairs are excluded from
// training and counted by the caller).
inline std::optional<PlannerExample> make_planner_example(const ContextResponsePair& pair,
                                                          const Vocabulary& vocab,
                                                          const ConceptGraph& graph) {
  PlannerExample ex;
  ex.input = make_planner_input(pair.context, vocab, graph);
  std::set<ConceptId> reachable;
  for (const auto& sg : ex.input.subgraphs) {
    for (ConceptId t : sg.tails) reachable.insert(t);
  }
  std::set<ConceptId> chosen;
  for (const auto& tok : pair.gold_concepts) {
    const auto id = graph.id(tok);
    if (!id || *id < ConceptGraph::kReservedCount) return std::nullopt;
    if (!reachable.count(*id) || chosen.count(*id)) return std::nullopt;
    chosen.insert(*id);
    ex.gold.push_back(*id);
  }
  return ex;
}

// action distribution of one extraction step, merged per concept
template <class S>
struct ActionDist {
  struct Action {
    ConceptId concept_id;
    Var<S> prob;   // renormalized post-mask probability node
    double value;  // prob at forward time
    int subgraph, tail;
    double alpha_t, alpha_g;
  };
  std::vector<Action> actions;  // ascending concept id
  double premask_sum = 0.0;     // sum of all alpha_t * alpha_g products
  bool forced_stop = false;
};

struct FlowState {
  // states s_1..s_N; memory is s_N
  std::vector<int> state_ids;
};

// Multi-concept planner: hierarchical dialogue encoder, recurrent concept
// flow encoder, and a pointer-style extractor over retrieved subgraphs.
template <class S>
struct PlannerModel {
  ModelConfig cfg;
  int vocab_size = 0;
  int vertex_count = 0;
  ParamStore<S> store;

  Param<S>* word_emb = nullptr;
  Param<S>* vertex_emb = nullptr;
  DialogueEncoder<S> dialog;
  GruCell<S> gru;
  Param<S>* W_f = nullptr;
  TransformerDecoder<S> decoder;
  Param<S>*Wgq, *Wgk, *Wtq, *Wtk;

  PlannerModel(const ModelConfig& c, int vocab, int vertices)
      : cfg(c), vocab_size(vocab), vertex_count(vertices) {
    cfg.validate();
    word_emb = &store.add("word_emb", vocab_size, cfg.word_emb, Init::Embedding);
    vertex_emb = &store.add("vertex_emb", vertex_count, cfg.vertex_emb, Init::Embedding);
    dialog = DialogueEncoder<S>(store, "enc", word_emb, cfg);
    gru = GruCell<S>(store, "flow.gru", cfg.vertex_emb, cfg.gru_hidden);
    W_f = &store.add("flow.W_f", cfg.gru_hidden, cfg.vertex_emb, Init::Glorot);
    decoder = TransformerDecoder<S>(store, "dec", cfg.vertex_emb, cfg.hidden, cfg.heads,
                                    cfg.ffn, cfg.layers, /*causal=*/true);
    const int att = cfg.vertex_emb;
    Wgq = &store.add("ext.Wgq", cfg.hidden + cfg.gru_hidden + cfg.vertex_emb, att, Init::Glorot);
    Wgk = &store.add("ext.Wgk", cfg.vertex_emb, att, Init::Glorot);
    Wtq = &store.add("ext.Wtq", cfg.hidden + cfg.gru_hidden, att, Init::Glorot);
    Wtk = &store.add("ext.Wtk", 2 * cfg.vertex_emb, att, Init::Glorot);
  }

  void init(std::uint64_t seed) { store.init_values(seed); }

  Var<S> encode_dialogue(Tape<S>& t, const std::vector<std::vector<int>>& ctx,
                         AttnTrace<S>* trace = nullptr, int* truncated = nullptr) const {
    return dialog.encode(t, ctx, trace, truncated);
  }

  // Weighted concept-set reading followed by a recurrent update per
  // utterance; s_0 is the zero vector. Empty sets read the NULL vertex.
  // `alphas_out`, when given, receives the per-utterance attention rows.
  FlowState encode_flow(Tape<S>& t, const std::vector<std::vector<ConceptId>>& flow,
                        std::vector<Mat<S>>* alphas_out = nullptr) const {
    FlowState fs;
    Var<S> s = gru.zero_state(t);
    for (const auto& concepts : flow) {
      std::vector<int> ids(concepts.begin(), concepts.end());
      if (ids.empty()) ids.push_back(ConceptGraph::kNull);
      Var<S> E = gather_rows(t.param(*vertex_emb), ids);          // m x vemb
      Var<S> beta = matmul(matmul(s, t.param(*W_f)), transpose(E));  // 1 x m
      Var<S> alpha = softmax_rows(beta);
      if (alphas_out) alphas_out->push_back(alpha.value());
      Var<S> f = matmul(alpha, E);  // 1 x vemb
      s = gru.step(t, s, f);
      fs.state_ids.push_back(s.id);
    }
    return fs;
  }

  Var<S> flow_memory(Tape<S>& t, const FlowState& fs) const {
    if (fs.state_ids.empty()) return gru.zero_state(t);
    return Var<S>{&t, fs.state_ids.back()};
  }

  // decoder states over the begin-of-plan sentinel plus previously chosen
  // concepts; row t-1 is the state used to extract concept t
  Var<S> decode_prefix(Tape<S>& t, const std::vector<ConceptId>& prefix, Var<S> h_cls) const {
    std::vector<int> ids;
    ids.reserve(prefix.size() + 1);
    ids.push_back(ConceptGraph::kBop);
    ids.insert(ids.end(), prefix.begin(), prefix.end());
    Var<S> emb = gather_rows(t.param(*vertex_emb), ids);
    return decoder(t, emb, h_cls);
  }

  // One extraction step: dynamic graph attention within each subgraph,
  // top-level subgraph selection, products merged per concept, then
  // duplicate masking with renormalization.
  ActionDist<S> extract_step(Tape<S>& t, Var<S> m_t, Var<S> s_n,
                             const std::vector<Subgraph>& subgraphs,
                             const std::set<ConceptId>& already_chosen) const {
    if (subgraphs.empty()) throw std::runtime_error("extract_step: no subgraphs");
    struct EdgeProb {
      Var<S> prob;
      int j, k;
      double alpha_t, alpha_g;
    };
    std::map<ConceptId, std::vector<EdgeProb>> per_concept;

    std::vector<Var<S>> subgraph_vecs;
    std::vector<Var<S>> alpha_gs;
    for (std::size_t j = 0; j < subgraphs.size(); ++j) {
      const Subgraph& sg = subgraphs[j];
      Var<S> e_head = gather_rows(t.param(*vertex_emb), {sg.head});
      std::vector<int> tail_ids(sg.tails.begin(), sg.tails.end());
      Var<S> e_tails = gather_rows(t.param(*vertex_emb), tail_ids);  // k x vemb
      Var<S> q = matmul(concat_cols<S>({m_t, s_n, e_head}), t.param(*Wgq));  // 1 x att
      Var<S> keys = matmul(e_tails, t.param(*Wgk));                          // k x att
      Var<S> beta_g = matmul(q, transpose(keys));                            // 1 x k
      Var<S> alpha_g = softmax_rows(beta_g);
      alpha_gs.push_back(alpha_g);
      // sum_k a_gk [e_head ; e_tail_k] = [e_head ; a_g E_tails]
      subgraph_vecs.push_back(concat_cols<S>({e_head, matmul(alpha_g, e_tails)}));
    }
    Var<S> g_all = concat_rows(subgraph_vecs);                            // m x 2vemb
    Var<S> q_t = matmul(concat_cols<S>({m_t, s_n}), t.param(*Wtq));       // 1 x att
    Var<S> k_t = matmul(g_all, t.param(*Wtk));                            // m x att
    Var<S> alpha_t = softmax_rows(matmul(q_t, transpose(k_t)));           // 1 x m

    ActionDist<S> dist;
    for (std::size_t j = 0; j < subgraphs.size(); ++j) {
      Var<S> at = pick(alpha_t, 0, static_cast<int>(j));
      const double at_v = at.value()(0, 0);
      for (std::size_t k = 0; k < subgraphs[j].tails.size(); ++k) {
        Var<S> ag = pick(alpha_gs[j], 0, static_cast<int>(k));
        const double ag_v = ag.value()(0, 0);
        Var<S> p = mul(at, ag);
        dist.premask_sum += p.value()(0, 0);
        per_concept[subgraphs[j].tails[k]].push_back(
            {p, static_cast<int>(j), static_cast<int>(k), at_v, ag_v});
      }
    }

    // merge per concept, drop masked, renormalize
    std::vector<typename ActionDist<S>::Action> unmasked;
    for (auto& [concept_id, edges] : per_concept) {
      if (already_chosen.count(concept_id)) continue;
      Var<S> total = edges[0].prob;
      const EdgeProb* best = &edges[0];
      for (std::size_t i = 1; i < edges.size(); ++i) {
        total = add(total, edges[i].prob);
        if (edges[i].prob.value()(0, 0) > best->prob.value()(0, 0)) best = &edges[i];
      }
      unmasked.push_back({concept_id, total, total.value()(0, 0), best->j, best->k,
                          best->alpha_t, best->alpha_g});
    }
    double mass = 0.0;
    for (const auto& a : unmasked) mass += a.value;
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      // all remaining mass masked away: forced STOP
      typename ActionDist<S>::Action stop;
      stop.concept_id = ConceptGraph::kStop;
      stop.prob = t.constant(Mat<S>::Ones(1, 1));
      stop.value = 1.0;
      stop.subgraph = 0;
      stop.tail = static_cast<int>(subgraphs[0].tails.size()) - 1;
      stop.alpha_t = 0.0;
      stop.alpha_g = 0.0;
      dist.actions.push_back(stop);
      dist.forced_stop = true;
      return dist;
    }
    Var<S> norm = unmasked[0].prob;
    for (std::size_t i = 1; i < unmasked.size(); ++i) norm = add(norm, unmasked[i].prob);
    for (auto& a : unmasked) {
      a.prob = div_by(a.prob, norm);
      a.value = a.prob.value()(0, 0);
      dist.actions.push_back(a);
    }
    return dist;
  }

  // Greedy decoding loop. Stops on the STOP action or at n_max concepts;
  // never emits duplicates.
  PlannedConcepts plan(const PlannerInput& input) const {
    Tape<S> t;
    Var<S> h_cls = encode_dialogue(t, input.context_word_ids);
    FlowState fs = encode_flow(t, input.flow);
    Var<S> s_n = flow_memory(t, fs);

    PlannedConcepts out;
    std::set<ConceptId> chosen;
    while (true) {
      Var<S> states = decode_prefix(t, out.concepts, h_cls);
      Var<S> m_t = row(states, states.rows() - 1);
      ActionDist<S> dist = extract_step(t, m_t, s_n, input.subgraphs, chosen);
      const auto* best = &dist.actions[0];
      for (const auto& a : dist.actions) {
        if (a.value > best->value) best = &a;
      }
      PlanStep step;
      step.concept_id = best->concept_id;
      step.subgraph = best->subgraph;
      step.tail = best->tail;
      step.alpha_t = best->alpha_t;
      step.alpha_g = best->alpha_g;
      step.prob = best->value;
      out.steps.push_back(step);
      if (best->concept_id == ConceptGraph::kStop) {
        out.stop_reason = StopReason::StopToken;
        break;
      }
      out.concepts.push_back(best->concept_id);
      chosen.insert(best->concept_id);
      if (static_cast<int>(out.concepts.size()) >= cfg.n_max) {
        out.stop_reason = StopReason::MaxLen;
        break;
      }
    }
    return out;
  }

  // Teacher-forced NLL over the gold sequence plus a terminal STOP step,
  // averaged per pair and then over the batch.
  Var<S> loss(Tape<S>& t, const std::vector<PlannerExample>& batch) const {
    if (batch.empty()) throw std::runtime_error("planner loss: empty batch");
    std::vector<Var<S>> pair_losses;
    for (const auto& ex : batch) {
      Var<S> h_cls = encode_dialogue(t, ex.input.context_word_ids);
      FlowState fs = encode_flow(t, ex.input.flow);
      Var<S> s_n = flow_memory(t, fs);
      Var<S> states = decode_prefix(t, ex.gold, h_cls);

      std::set<ConceptId> chosen;
      std::vector<Var<S>> step_losses;
      for (std::size_t step = 0; step <= ex.gold.size(); ++step) {
        const ConceptId target =
            step < ex.gold.size() ? ex.gold[step] : ConceptGraph::kStop;
        Var<S> m_t = row(states, static_cast<int>(step));
        ActionDist<S> dist = extract_step(t, m_t, s_n, ex.input.subgraphs, chosen);
        const typename ActionDist<S>::Action* hit = nullptr;
        for (const auto& a : dist.actions) {
          if (a.concept_id == target) hit = &a;
        }
        if (!hit) throw std::runtime_error("planner loss: gold concept not reachable");
        step_losses.push_back(scale(log_elem(hit->prob), S(-1)));
        if (target != ConceptGraph::kStop) chosen.insert(target);
      }
      Var<S> sum = step_losses[0];
      for (std::size_t i = 1; i < step_losses.size(); ++i) sum = add(sum, step_losses[i]);
      pair_losses.push_back(scale(sum, S(1) / static_cast<S>(step_losses.size())));
    }
    Var<S> total = pair_losses[0];
    for (std::size_t i = 1; i < pair_losses.size(); ++i) total = add(total, pair_losses[i]);
    Var<S> out = scale(total, S(1) / static_cast<S>(pair_losses.size()));
    require_finite(out.value(), "planner loss");
    return out;
  }
};

}  // namespace congen

#endif  // CONGEN_PLANNER_HPP
