#ifndef CONGEN_CHECKPOINT_HPP
#define CONGEN_CHECKPOINT_HPP

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "congen/config.hpp"
#include "congen/params.hpp"

namespace congen {

// Checkpoint container: a text header and manifest line, then raw
// little-endian float32 payloads (value, then Adam moments when present)
// for each parameter in manifest order, row-major. Reload is bit-exact.
inline constexpr const char* kCheckpointMagic = "congen-checkpoint v1";

namespace detail {

inline void write_f32(std::ostream& out, float v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(float));
}

inline float read_f32(std::istream& in) {
  float v = 0.0f;
  in.read(reinterpret_cast<char*>(&v), sizeof(float));
  if (!in) throw std::runtime_error("checkpoint: truncated payload");
  return v;
}

template <class S>
void write_matrix(std::ostream& out, const Mat<S>& m) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) write_f32(out, static_cast<float>(m(r, c)));
}

template <class S>
void read_matrix(std::istream& in, Mat<S>& m) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(read_f32(in));
}

}  // namespace detail

inline nlohmann::json model_config_to_json(const ModelConfig& m) {
  return {{"layers", m.layers},   {"hidden", m.hidden},
          {"heads", m.heads},     {"ffn", m.ffn},
          {"gru_hidden", m.gru_hidden}, {"word_emb", m.word_emb},
          {"vertex_emb", m.vertex_emb}, {"n_max", m.n_max},
          {"dropout", m.dropout}, {"max_utt_len", m.max_utt_len}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.layers = j.at("layers").get<int>();
  m.hidden = j.at("hidden").get<int>();
  m.heads = j.at("heads").get<int>();
  m.ffn = j.at("ffn").get<int>();
  m.gru_hidden = j.at("gru_hidden").get<int>();
  m.word_emb = j.at("word_emb").get<int>();
  m.vertex_emb = j.at("vertex_emb").get<int>();
  m.n_max = j.at("n_max").get<int>();
  m.dropout = j.at("dropout").get<double>();
  m.max_utt_len = j.at("max_utt_len").get<int>();
  return m;
}

template <class S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store,
                     const nlohmann::json& extra, bool with_opt_state = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  nlohmann::json manifest;
  manifest["step"] = store.step();
  manifest["opt_state"] = with_opt_state;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : store.params()) {
    params.push_back({{"name", p->name},
                      {"rows", static_cast<long>(p->value.rows())},
                      {"cols", static_cast<long>(p->value.cols())}});
  }
  manifest["params"] = std::move(params);
  manifest["extra"] = extra;
  out << kCheckpointMagic << "\n" << manifest.dump() << "\n";
  for (const auto& p : store.params()) {
    detail::write_matrix(out, p->value);
    if (with_opt_state) {
      detail::write_matrix(out, p->m);
      detail::write_matrix(out, p->v);
    }
  }
}

inline nlohmann::json read_checkpoint_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic, manifest_line;
  if (!std::getline(in, magic) || magic != kCheckpointMagic) {
    throw std::runtime_error("bad checkpoint header in " + path);
  }
  if (!std::getline(in, manifest_line)) throw std::runtime_error("missing manifest in " + path);
  return nlohmann::json::parse(manifest_line);
}

// The store must already hold parameters with the manifest's names and
// shapes (i.e. the model was constructed from the manifest config).
template <class S>
nlohmann::json load_checkpoint(const std::string& path, ParamStore<S>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic, manifest_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw std::runtime_error("bad checkpoint header in " + path);
  std::getline(in, manifest_line);
  const nlohmann::json manifest = nlohmann::json::parse(manifest_line);
  const bool opt_state = manifest.at("opt_state").get<bool>();
  const auto& params = manifest.at("params");
  if (params.size() != store.params().size()) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *store.params()[i];
    const auto& meta = params[static_cast<int>(i)];
    if (meta.at("name").get<std::string>() != p.name ||
        meta.at("rows").get<long>() != p.value.rows() ||
        meta.at("cols").get<long>() != p.value.cols()) {
      throw std::runtime_error("checkpoint: parameter mismatch at " + p.name);
    }
    detail::read_matrix(in, p.value);
    if (opt_state) {
      detail::read_matrix(in, p.m);
      detail::read_matrix(in, p.v);
    }
  }
  store.set_step(manifest.at("step").get<long>());
  return manifest.at("extra");
}

}  // namespace congen

#endif  // CONGEN_CHECKPOINT_HPP
