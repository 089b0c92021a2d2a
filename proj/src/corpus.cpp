#include "congen/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace congen {

using nlohmann::json;

std::vector<std::string> Utterance::concept_tokens() const {
  std::vector<int> order = concept_indices;
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (int idx : order) {
    const std::string& tok = tokens[static_cast<std::size_t>(idx)];
    if (seen.insert(tok).second) out.push_back(tok);
  }
  return out;
}

void Utterance::validate() const {
  int prev = -1;
  for (int idx : concept_indices) {
    if (idx <= prev) throw std::runtime_error("concept_indices not strictly increasing");
    if (idx < 0 || idx >= static_cast<int>(tokens.size())) {
      throw std::runtime_error("concept index out of range");
    }
    prev = idx;
  }
  if (!pos_tags.empty() && pos_tags.size() != tokens.size()) {
    throw std::runtime_error("pos_tags length mismatch");
  }
}

namespace {

Utterance utterance_from_json(const json& j) {
  Utterance u;
  u.speaker = j.value("speaker", "");
  for (const auto& t : j.at("tokens")) u.tokens.push_back(t.get<std::string>());
  if (j.contains("pos_tags")) {
    for (const auto& t : j.at("pos_tags")) u.pos_tags.push_back(t.get<std::string>());
  }
  if (j.contains("concept_indices")) {
    for (const auto& i : j.at("concept_indices")) u.concept_indices.push_back(i.get<int>());
  }
  u.validate();
  return u;
}

json utterance_to_json(const Utterance& u) {
  json j;
  j["speaker"] = u.speaker;
  j["tokens"] = u.tokens;
  if (!u.pos_tags.empty()) j["pos_tags"] = u.pos_tags;
  if (!u.concept_indices.empty()) j["concept_indices"] = u.concept_indices;
  return j;
}

}  // namespace

std::vector<DialogueSession> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<DialogueSession> sessions;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      DialogueSession s;
      s.id = j.value("id", "session-" + std::to_string(lineno));
      for (const auto& ju : j.at("utterances")) s.utterances.push_back(utterance_from_json(ju));
      sessions.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus parse failure at line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return sessions;
}

void save_corpus(const std::vector<DialogueSession>& sessions, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& s : sessions) {
    json j;
    j["id"] = s.id;
    json utts = json::array();
    for (const auto& u : s.utterances) utts.push_back(utterance_to_json(u));
    j["utterances"] = std::move(utts);
    out << j.dump() << "\n";
  }
}

namespace {

std::set<std::string> load_line_set(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(std::string("cannot open ") + what + ": " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

}  // namespace

std::set<std::string> load_stopwords(const std::string& path) {
  return load_line_set(path, "stopword list");
}

std::set<std::string> load_tag_whitelist(const std::string& path) {
  return load_line_set(path, "tag whitelist");
}

std::map<std::string, double> compute_idf(const std::vector<DialogueSession>& sessions) {
  std::map<std::string, long> df;
  long docs = 0;
  for (const auto& s : sessions) {
    for (const auto& u : s.utterances) {
      ++docs;
      std::set<std::string> uniq(u.tokens.begin(), u.tokens.end());
      for (const auto& t : uniq) ++df[t];
    }
  }
  std::map<std::string, double> idf;
  for (const auto& [tok, n] : df) {
    idf[tok] = std::log(static_cast<double>(1 + docs) / static_cast<double>(1 + n));
  }
  return idf;
}

std::vector<std::vector<int>> score_salience(const DialogueSession& session,
                                             const std::map<std::string, double>& idf,
                                             const std::set<std::string>& stopwords,
                                             const std::set<std::string>& pos_whitelist,
                                             double theta_sal) {
  std::vector<std::vector<int>> result;
  result.reserve(session.utterances.size());
  for (const auto& u : session.utterances) {
    std::map<std::string, int> tf;
    for (const auto& t : u.tokens) ++tf[t];

    const bool tags_usable = !u.pos_tags.empty() && !pos_whitelist.empty();
    std::vector<double> score(u.tokens.size(), -1.0);  // -1 marks non-candidates
    double max_score = 0.0;
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      const std::string& tok = u.tokens[i];
      if (tags_usable && pos_whitelist.count(u.pos_tags[i]) == 0) continue;
      if (stopwords.count(tok)) continue;
      auto it = idf.find(tok);
      const double w = it == idf.end() ? 0.0 : it->second;
      if (w < 0.0) throw std::runtime_error("idf weights must be nonnegative");
      score[i] = tf[tok] * w;
      max_score = std::max(max_score, score[i]);
    }
    std::vector<int> marked;
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      if (score[i] >= 0.0 && score[i] >= theta_sal * max_score) {
        marked.push_back(static_cast<int>(i));
      }
    }
    result.push_back(std::move(marked));
  }
  return result;
}

void annotate_corpus(std::vector<DialogueSession>& sessions,
                     const std::set<std::string>& stopwords,
                     const std::set<std::string>& pos_whitelist, double theta_sal) {
  const auto idf = compute_idf(sessions);
  for (auto& s : sessions) {
    auto marks = score_salience(s, idf, stopwords, pos_whitelist, theta_sal);
    for (std::size_t i = 0; i < s.utterances.size(); ++i) {
      s.utterances[i].concept_indices = std::move(marks[i]);
    }
  }
}

std::vector<ContextResponsePair> make_pairs(const std::vector<DialogueSession>& sessions,
                                            int context_window, int n_max, int* skipped) {
  std::vector<ContextResponsePair> pairs;
  int skip_count = 0;
  for (const auto& s : sessions) {
    if (s.utterances.size() < 2) {
      ++skip_count;
      continue;
    }
    for (std::size_t r = 1; r < s.utterances.size(); ++r) {
      ContextResponsePair p;
      p.id = s.id + "#" + std::to_string(r);
      const std::size_t window =
          context_window <= 0 ? r : std::min<std::size_t>(static_cast<std::size_t>(context_window), r);
      p.context.assign(s.utterances.begin() + static_cast<long>(r - window),
                       s.utterances.begin() + static_cast<long>(r));
      p.response = s.utterances[r];
      auto golds = p.response.concept_tokens();
      if (static_cast<int>(golds.size()) > n_max) golds.resize(static_cast<std::size_t>(n_max));
      p.gold_concepts = std::move(golds);
      pairs.push_back(std::move(p));
    }
  }
  if (skipped) *skipped = skip_count;
  return pairs;
}

Vocabulary build_vocabulary(const std::vector<DialogueSession>& sessions) {
  std::set<std::string> tokens;
  for (const auto& s : sessions)
    for (const auto& u : s.utterances) tokens.insert(u.tokens.begin(), u.tokens.end());
  Vocabulary v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

long total_token_count(const std::vector<DialogueSession>& sessions) {
  long n = 0;
  for (const auto& s : sessions)
    for (const auto& u : s.utterances) n += static_cast<long>(u.tokens.size());
  return n;
}

}  // namespace congen
