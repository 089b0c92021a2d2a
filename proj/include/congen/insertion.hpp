#ifndef CONGEN_INSERTION_HPP
#define CONGEN_INSERTION_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "congen/corpus.hpp"
#include "congen/dialogue.hpp"

namespace congen {

// Growing token sequence with one finished flag per insertion slot
// (slot count = token count + 1).
struct Hypothesis {
  std::vector<int> tokens;
  std::vector<bool> slot_finished;
  int step = 0;

  int slot_count() const { return static_cast<int>(slot_finished.size()); }
  bool all_finished() const {
    for (bool f : slot_finished)
      if (!f) return false;
    return true;
  }
};

inline Hypothesis init_from_concepts(const std::vector<int>& concept_word_ids) {
  Hypothesis h;
  h.tokens = concept_word_ids;
  h.slot_finished.assign(concept_word_ids.size() + 1, false);
  return h;
}

// per-slot outcome of one decoding pass
struct SlotDecision {
  bool finish = false;
  int token = -1;
};

struct IterationTrace {
  std::vector<std::pair<int, int>> insertions;  // (slot, token)
  std::vector<int> finished_slots;
};

struct DecodeTrace {
  std::vector<int> tokens;
  long passes = 0;
  std::vector<IterationTrace> iterations;
};

// Applies simultaneous per-slot decisions. Insertions split their slot into
// two unfinished child slots; SLOT-END marks a slot finished. Insertions
// are applied left to right and stop once max_len is reached.
inline void apply_decisions(Hypothesis& h, const std::vector<SlotDecision>& decisions,
                            int max_len, IterationTrace* trace = nullptr) {
  std::vector<int> new_tokens;
  std::vector<bool> new_finished;
  int len = static_cast<int>(h.tokens.size());
  for (int l = 0; l < h.slot_count(); ++l) {
    const bool open = !h.slot_finished[static_cast<std::size_t>(l)];
    const SlotDecision& d = decisions[static_cast<std::size_t>(l)];
    if (open && !d.finish && d.token >= 0 && len < max_len) {
      new_finished.push_back(false);
      new_tokens.push_back(d.token);
      new_finished.push_back(false);
      ++len;
      if (trace) trace->insertions.emplace_back(l, d.token);
    } else {
      const bool fin = h.slot_finished[static_cast<std::size_t>(l)] || (open && d.finish);
      if (trace && open && d.finish) trace->finished_slots.push_back(l);
      new_finished.push_back(fin);
    }
    if (l < static_cast<int>(h.tokens.size())) {
      new_tokens.push_back(h.tokens[static_cast<std::size_t>(l)]);
    }
  }
  h.tokens = std::move(new_tokens);
  h.slot_finished = std::move(new_finished);
  ++h.step;
}

// Training instance: the sampled subsequence plus the target span of each
// of its k+1 slots. Interleaving kept tokens with spans reconstructs the
// response exactly.
struct InsertionTrainingInstance {
  std::vector<std::vector<int>> context_word_ids;
  std::vector<int> kept;
  std::vector<std::vector<int>> spans;  // kept.size() + 1 entries
};

// Positions of the gold concepts inside the response (first occurrence per
// distinct concept token, at most n_max, ascending).
inline std::vector<int> gold_concept_positions(const Utterance& response, int n_max) {
  std::vector<int> order = response.concept_indices;
  std::sort(order.begin(), order.end());
  std::vector<int> keep;
  std::set<std::string> seen;
  for (int idx : order) {
    if (static_cast<int>(keep.size()) >= n_max) break;
    if (seen.insert(response.tokens[static_cast<std::size_t>(idx)]).second) keep.push_back(idx);
  }
  return keep;
}

// Keeps every gold-concept position and each other position independently
// with probability p_keep.
inline InsertionTrainingInstance sample_subsequence(const ContextResponsePair& pair,
                                                    const Vocabulary& vocab, Rng& rng,
                                                    double p_keep, int n_max) {
  InsertionTrainingInstance inst;
  for (const auto& u : pair.context) inst.context_word_ids.push_back(vocab.ids(u.tokens));

  const std::vector<int> concept_pos = gold_concept_positions(pair.response, n_max);
  std::vector<bool> keep(pair.response.tokens.size(), false);
  for (int p : concept_pos) keep[static_cast<std::size_t>(p)] = true;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i] && rng.bernoulli(p_keep)) keep[i] = true;
  }

  inst.spans.emplace_back();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const int id = vocab.id(pair.response.tokens[i]);
    if (keep[i]) {
      inst.kept.push_back(id);
      inst.spans.emplace_back();
    } else {
      inst.spans.back().push_back(id);
    }
  }
  return inst;
}

// softmax over -|i - center| / tau across a span; even spans give the two
// middle positions the same top weight
inline std::vector<double> span_center_weights(int span_len, double tau) {
  std::vector<double> w(static_cast<std::size_t>(span_len));
  const double center = (span_len - 1) / 2.0;
  double max_logit = -1e300;
  for (int i = 0; i < span_len; ++i) {
    w[static_cast<std::size_t>(i)] = -std::abs(i - center) / tau;
    max_logit = std::max(max_logit, w[static_cast<std::size_t>(i)]);
  }
  double sum = 0.0;
  for (auto& x : w) {
    x = std::exp(x - max_logit);
    sum += x;
  }
  for (auto& x : w) x /= sum;
  return w;
}

// Concept-initialized Insertion Transformer: a bidirectional decoder over
// the current hypothesis with cross-attention on the dialogue encoding;
// every slot predicts a token (or SLOT-END) in parallel.
template <class S>
struct InsertionModel {
  ModelConfig cfg;
  int vocab_size = 0;
  ParamStore<S> store;

  Param<S>* word_emb = nullptr;
  DialogueEncoder<S> dialog;
  TransformerDecoder<S> decoder;
  Linear<S> slot_proj;
  Linear<S> out_proj;

  InsertionModel(const ModelConfig& c, int vocab) : cfg(c), vocab_size(vocab) {
    cfg.validate();
    word_emb = &store.add("word_emb", vocab_size, cfg.word_emb, Init::Embedding);
    dialog = DialogueEncoder<S>(store, "enc", word_emb, cfg);
    decoder = TransformerDecoder<S>(store, "dec", cfg.word_emb, cfg.hidden, cfg.heads, cfg.ffn,
                                    cfg.layers, /*causal=*/false);
    slot_proj = Linear<S>(store, "slot", 2 * cfg.hidden, cfg.hidden);
    out_proj = Linear<S>(store, "out", cfg.hidden, vocab_size);
  }

  void init(std::uint64_t seed) { store.init_values(seed); }

  Var<S> encode_dialogue(Tape<S>& t, const std::vector<std::vector<int>>& ctx,
                         AttnTrace<S>* trace = nullptr, int* truncated = nullptr) const {
    return dialog.encode(t, ctx, trace, truncated);
  }

  // log-probabilities, one row per slot over vocabulary (incl. SLOT-END)
  Var<S> predict_insertions(Tape<S>& t, const std::vector<int>& hyp_tokens,
                            Var<S> h_cls) const {
    std::vector<int> ids;
    ids.reserve(hyp_tokens.size() + 2);
    ids.push_back(Vocabulary::kBos);
    ids.insert(ids.end(), hyp_tokens.begin(), hyp_tokens.end());
    ids.push_back(Vocabulary::kEos);
    Var<S> emb = gather_rows(t.param(*word_emb), ids);
    Var<S> h = decoder(t, emb, h_cls);  // (n+2) x hidden
    const int n_slots = static_cast<int>(hyp_tokens.size()) + 1;
    Var<S> left = slice_rows(h, 0, n_slots);
    Var<S> right = slice_rows(h, 1, n_slots);
    Var<S> slots = relu(slot_proj(t, concat_cols<S>({left, right})));
    Var<S> logp = log_softmax_rows(out_proj(t, slots));
    require_finite(logp.value(), "insertion slot distribution");
    return logp;
  }

  // Greedy parallel decode: every unfinished slot takes its argmax token
  // simultaneously each pass; SLOT-END finishes a slot. Terminates on all
  // slots finished, the length cap, or the iteration cap.
  DecodeTrace decode_parallel(const Hypothesis& start,
                              const std::vector<std::vector<int>>& ctx, int max_len,
                              int max_iters) const {
    Tape<S> t;
    Var<S> h_cls = encode_dialogue(t, ctx);
    Hypothesis h = start;
    DecodeTrace out;
    while (!h.all_finished() && static_cast<int>(h.tokens.size()) < max_len &&
           h.step < max_iters) {
      Var<S> logp = predict_insertions(t, h.tokens, h_cls);
      ++out.passes;
      std::vector<SlotDecision> decisions(static_cast<std::size_t>(h.slot_count()));
      for (int l = 0; l < h.slot_count(); ++l) {
        if (h.slot_finished[static_cast<std::size_t>(l)]) continue;
        int best = 0;
        const auto& p = logp.value();
        for (int v = 1; v < vocab_size; ++v) {
          if (p(l, v) > p(l, best)) best = v;
        }
        if (best == Vocabulary::kSlotEnd) {
          decisions[static_cast<std::size_t>(l)].finish = true;
        } else {
          decisions[static_cast<std::size_t>(l)].token = best;
        }
      }
      IterationTrace iter;
      apply_decisions(h, decisions, max_len, &iter);
      out.iterations.push_back(std::move(iter));
    }
    out.tokens = h.tokens;
    return out;
  }

  // Span-weighted per-slot NLL: each slot's span contributes the weighted
  // sum of word NLLs under the span-center weighting; empty spans
  // contribute -log p(SLOT-END).
  Var<S> loss(Tape<S>& t, const std::vector<InsertionTrainingInstance>& batch,
              double tau) const {
    if (batch.empty()) throw std::runtime_error("insertion loss: empty batch");
    std::vector<Var<S>> instance_losses;
    for (const auto& inst : batch) {
      Var<S> h_cls = encode_dialogue(t, inst.context_word_ids);
      Var<S> logp = predict_insertions(t, inst.kept, h_cls);
      std::vector<Var<S>> slot_losses;
      for (std::size_t l = 0; l < inst.spans.size(); ++l) {
        const auto& span = inst.spans[l];
        if (span.empty()) {
          slot_losses.push_back(
              scale(pick(logp, static_cast<int>(l), Vocabulary::kSlotEnd), S(-1)));
          continue;
        }
        const auto weights = span_center_weights(static_cast<int>(span.size()), tau);
        Var<S> acc = scale(pick(logp, static_cast<int>(l), span[0]),
                           static_cast<S>(-weights[0]));
        for (std::size_t i = 1; i < span.size(); ++i) {
          acc = add(acc, scale(pick(logp, static_cast<int>(l), span[i]),
                               static_cast<S>(-weights[i])));
        }
        slot_losses.push_back(acc);
      }
      Var<S> sum = slot_losses[0];
      for (std::size_t i = 1; i < slot_losses.size(); ++i) sum = add(sum, slot_losses[i]);
      instance_losses.push_back(scale(sum, S(1) / static_cast<S>(slot_losses.size())));
    }
    Var<S> total = instance_losses[0];
    for (std::size_t i = 1; i < instance_losses.size(); ++i) {
      total = add(total, instance_losses[i]);
    }
    Var<S> out = scale(total, S(1) / static_cast<S>(instance_losses.size()));
    require_finite(out.value(), "insertion loss");
    return out;
  }
};

}  // namespace congen

#endif  // CONGEN_INSERTION_HPP
