#include "congen/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "congen/matrix.hpp"

namespace congen {

void SyntheticSpec::validate() const {
  if (num_concepts < 2) throw std::runtime_error("synthetic: need at least 2 concepts");
  if (concepts_per_turn < 1) throw std::runtime_error("synthetic: concepts_per_turn >= 1");
  if (sessions < 1 || turns < 2) throw std::runtime_error("synthetic: need >= 1 session, >= 2 turns");
  if (rule == Rule::Stochastic) {
    if (static_cast<int>(transition.size()) != num_concepts) {
      throw std::runtime_error("synthetic: transition matrix must have num_concepts rows");
    }
    for (const auto& row : transition) {
      if (static_cast<int>(row.size()) != num_concepts) {
        throw std::runtime_error("synthetic: transition matrix must be square");
      }
      double s = 0.0;
      for (double p : row) {
        if (p < 0.0) throw std::runtime_error("synthetic: negative transition probability");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-9) throw std::runtime_error("synthetic: rows must sum to 1");
    }
  }
  const auto tmpl = effective_template();
  const long slots = std::count(tmpl.begin(), tmpl.end(), std::string("<c>"));
  if (slots != concepts_per_turn) {
    throw std::runtime_error("synthetic: template must contain exactly concepts_per_turn slots");
  }
}

std::vector<std::string> SyntheticSpec::effective_template() const {
  if (!template_tokens.empty()) return template_tokens;
  if (concepts_per_turn == 1) {
    return {"i", "think", "<c>", "is", "really", "worth", "discussing"};
  }
  std::vector<std::string> t = {"well"};
  for (int i = 0; i < concepts_per_turn; ++i) {
    if (i > 0) t.push_back("and");
    t.push_back("<c>");
  }
  t.insert(t.end(), {"belong", "together", "here"});
  return t;
}

std::string SyntheticSpec::concept_token(int i) const {
  std::ostringstream os;
  os << "topic" << std::setw(2) << std::setfill('0') << i;
  return os.str();
}

int chain_next(int current, int num_concepts) { return (current + 1) % num_concepts; }

SyntheticCorpus make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto tmpl = spec.effective_template();
  SyntheticCorpus out;

  auto next_concept = [&](int cur) -> int {
    if (spec.rule == SyntheticSpec::Rule::Chain) return chain_next(cur, spec.num_concepts);
    const double u = rng.unit();
    double acc = 0.0;
    const auto& row = spec.transition[static_cast<std::size_t>(cur)];
    for (int j = 0; j < spec.num_concepts; ++j) {
      acc += row[static_cast<std::size_t>(j)];
      if (u < acc) return j;
    }
    return spec.num_concepts - 1;
  };

  for (int s = 0; s < spec.sessions; ++s) {
    DialogueSession session;
    session.id = "syn-" + std::to_string(s);
    int cur = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_concepts)));
    for (int turn = 0; turn < spec.turns; ++turn) {
      Utterance u;
      u.speaker = turn % 2 == 0 ? "a" : "b";
      for (const auto& word : tmpl) {
        if (word == "<c>") {
          u.concept_indices.push_back(static_cast<int>(u.tokens.size()));
          u.tokens.push_back(spec.concept_token(cur));
          cur = next_concept(cur);
        } else {
          u.tokens.push_back(word);
        }
      }
      session.utterances.push_back(std::move(u));
      out.total_tokens += static_cast<long>(tmpl.size());
    }
    out.sessions.push_back(std::move(session));
  }

  if (spec.rule == SyntheticSpec::Rule::Chain) {
    for (int i = 0; i < spec.num_concepts; ++i) {
      out.truth.push_back(
          {spec.concept_token(i), spec.concept_token(chain_next(i, spec.num_concepts)), 1.0});
    }
  } else {
    for (int i = 0; i < spec.num_concepts; ++i) {
      for (int j = 0; j < spec.num_concepts; ++j) {
        const double p = spec.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        if (p > 0.0) out.truth.push_back({spec.concept_token(i), spec.concept_token(j), p});
      }
    }
  }
  return out;
}

void save_truth(const std::vector<TruthEdge>& truth, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write truth table: " + path);
  out << std::setprecision(17);
  for (const auto& e : truth) out << e.head << "\t" << e.tail << "\t" << e.prob << "\n";
}

std::vector<TruthEdge> load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open truth table: " + path);
  std::vector<TruthEdge> truth;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    TruthEdge e;
    std::string prob;
    if (!std::getline(ss, e.head, '\t') || !std::getline(ss, e.tail, '\t') ||
        !std::getline(ss, prob, '\t')) {
      throw std::runtime_error("bad truth line: " + line);
    }
    e.prob = std::stod(prob);
    truth.push_back(std::move(e));
  }
  return truth;
}

}  // namespace congen
