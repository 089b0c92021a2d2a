#ifndef CONGEN_CONFIG_HPP
#define CONGEN_CONFIG_HPP

#include <cstdint>
#include <string>

namespace congen {

// Network dimensions. Desk-scale defaults; reference scale (layers 3,
// hidden 768, heads 8, ffn 2048, gru_hidden 768, word_emb 300,
// vertex_emb 128) stays reachable through the config file.
struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn = 128;
  int gru_hidden = 64;
  int word_emb = 64;
  int vertex_emb = 32;
  int n_max = 5;
  double dropout = 0.1;
  int max_utt_len = 32;

  void validate() const;
};

// Everything a subcommand run needs: paths, graph knobs, model dims,
// schedule, decoding caps, seed.
struct RunConfig {
  std::string train_corpus;
  std::string valid_corpus;
  std::string graph_path;

  // concept graph construction
  int graph_k = 20;
  int graph_min_count = 2;
  double theta_sal = 0.1;
  std::string stopwords_path;
  std::string pos_whitelist_path;

  ModelConfig model;

  // training schedule (reference scale: 100000 steps, 8000 warmup,
  // checkpoint every 2000)
  long steps = 3000;
  long warmup = 300;
  long checkpoint_every = 200;
  int batch = 32;
  double lr = 1e-3;

  // decoding caps
  int max_len = 64;
  int max_iters = 16;

  // pair construction; 0 means "all preceding utterances"
  int context_window = 0;

  double p_keep = 0.5;
  double tau = 1.0;

  std::uint64_t seed = 42;
  int threads = 1;

  void set(const std::string& key, const std::string& value);
  static RunConfig from_file(const std::string& path);
};

}  // namespace congen

#endif  // CONGEN_CONFIG_HPP
