#include "congen/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace congen {

void ModelConfig::validate() const {
  if (hidden % heads != 0) throw std::runtime_error("config: hidden must be divisible by heads");
  if (layers < 1 || hidden < 1 || heads < 1 || ffn < 1 || gru_hidden < 1 || word_emb < 1 ||
      vertex_emb < 1 || n_max < 1) {
    throw std::runtime_error("config: all widths and counts must be >= 1");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::runtime_error("config: dropout out of range");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto as_long = [&] { return std::stol(value); };
  auto as_int = [&] { return std::stoi(value); };
  auto as_double = [&] { return std::stod(value); };

  if (key == "train_corpus") train_corpus = value;
  else if (key == "valid_corpus") valid_corpus = value;
  else if (key == "graph_path") graph_path = value;
  else if (key == "graph_k") graph_k = as_int();
  else if (key == "graph_min_count") graph_min_count = as_int();
  else if (key == "theta_sal") theta_sal = as_double();
  else if (key == "stopwords_path") stopwords_path = value;
  else if (key == "pos_whitelist_path") pos_whitelist_path = value;
  else if (key == "layers") model.layers = as_int();
  else if (key == "hidden") model.hidden = as_int();
  else if (key == "heads") model.heads = as_int();
  else if (key == "ffn") model.ffn = as_int();
  else if (key == "gru_hidden") model.gru_hidden = as_int();
  else if (key == "word_emb") model.word_emb = as_int();
  else if (key == "vertex_emb") model.vertex_emb = as_int();
  else if (key == "n_max") model.n_max = as_int();
  else if (key == "dropout") model.dropout = as_double();
  else if (key == "max_utt_len") model.max_utt_len = as_int();
  else if (key == "steps") steps = as_long();
  else if (key == "warmup") warmup = as_long();
  else if (key == "checkpoint_every") checkpoint_every = as_long();
  else if (key == "batch") batch = as_int();
  else if (key == "lr") lr = as_double();
  else if (key == "max_len") max_len = as_int();
  else if (key == "max_iters") max_iters = as_int();
  else if (key == "context_window") context_window = as_int();
  else if (key == "p_keep") p_keep = as_double();
  else if (key == "tau") tau = as_double();
  else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "threads") threads = as_int();
  else throw std::runtime_error("config: unknown key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: line " + std::to_string(lineno) + " is not key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace congen
