#ifndef CONGEN_DIALOGUE_HPP
#define CONGEN_DIALOGUE_HPP

#include <string>
#include <vector>

#include "congen/config.hpp"
#include "congen/layers.hpp"
#include "congen/vocab.hpp"

namespace congen {

// Hierarchical context encoder: each utterance is read by a word-level
// transformer with a prepended CLS position, and the per-utterance CLS
// vectors are fused by an utterance-level transformer. The output rows are
// the context-aware utterance representations used as decoder memory.
template <class S>
struct DialogueEncoder {
  Param<S>* word_emb = nullptr;  // owned by the enclosing model
  TransformerEncoder<S> word_enc;
  TransformerEncoder<S> utt_enc;
  int max_utt_len = 32;

  DialogueEncoder() = default;
  DialogueEncoder(ParamStore<S>& ps, const std::string& name, Param<S>* emb,
                  const ModelConfig& cfg)
      : word_emb(emb),
        word_enc(ps, name + ".words", cfg.word_emb, cfg.hidden, cfg.heads, cfg.ffn, cfg.layers),
        utt_enc(ps, name + ".utts", cfg.hidden, cfg.hidden, cfg.heads, cfg.ffn, cfg.layers),
        max_utt_len(cfg.max_utt_len) {}

  // one token-id sequence per context utterance -> N x hidden
  Var<S> encode(Tape<S>& t, const std::vector<std::vector<int>>& utterances,
                AttnTrace<S>* trace = nullptr, int* truncated = nullptr) const {
    if (utterances.empty()) throw std::runtime_error("dialogue encoder: empty context");
    std::vector<Var<S>> cls_rows;
    cls_rows.reserve(utterances.size());
    for (const auto& utt : utterances) {
      std::vector<int> ids;
      ids.reserve(utt.size() + 1);
      ids.push_back(Vocabulary::kCls);
      for (int id : utt) {
        if (static_cast<int>(ids.size()) > max_utt_len) {
          if (truncated) ++*truncated;
          break;
        }
        ids.push_back(id);
      }
      Var<S> emb = gather_rows(t.param(*word_emb), ids);
      Var<S> h = word_enc(t, emb, nullptr, trace);
      cls_rows.push_back(row(h, 0));
    }
    return utt_enc(t, concat_rows(cls_rows), nullptr, trace);
  }
};

}  // namespace congen

#endif  // CONGEN_DIALOGUE_HPP
