#include "congen/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace congen {

namespace {

constexpr double kBleuEps = 1e-9;

std::map<TokenSeq, long> ngram_counts(const TokenSeq& tokens, int n) {
  std::map<TokenSeq, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    ++counts[TokenSeq(tokens.begin() + static_cast<long>(i),
                      tokens.begin() + static_cast<long>(i) + n)];
  }
  return counts;
}

long lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<long> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
            bool averaged) {
  if (candidates.size() != references.size()) {
    throw std::runtime_error("bleu: candidate/reference count mismatch");
  }
  long cand_len = 0, ref_len = 0;
  double precision[4];
  for (int n = 1; n <= 4; ++n) {
    long matched = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto cand = ngram_counts(candidates[i], n);
      const auto ref = ngram_counts(references[i], n);
      for (const auto& [gram, cnt] : cand) {
        total += cnt;
        auto it = ref.find(gram);
        if (it != ref.end()) matched += std::min(cnt, it->second);
      }
    }
    precision[n - 1] = total > 0 ? static_cast<double>(matched) / static_cast<double>(total) : 0.0;
    if (precision[n - 1] <= 0.0) precision[n - 1] = kBleuEps;
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<long>(candidates[i].size());
    ref_len += static_cast<long>(references[i].size());
  }
  const double bp =
      cand_len >= ref_len || cand_len == 0
          ? (cand_len == 0 ? 0.0 : 1.0)
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));

  auto cumulative = [&](int k) {
    double log_sum = 0.0;
    for (int n = 1; n <= k; ++n) log_sum += std::log(precision[n - 1]);
    return bp * std::exp(log_sum / k);
  };
  if (!averaged) return cumulative(4);
  double s = 0.0;
  for (int k = 1; k <= 4; ++k) s += cumulative(k);
  return s / 4.0;
}

std::pair<double, double> rouge_1_l(const std::vector<TokenSeq>& candidates,
                                    const std::vector<TokenSeq>& references) {
  if (candidates.size() != references.size()) {
    throw std::runtime_error("rouge: candidate/reference count mismatch");
  }
  if (candidates.empty()) return {0.0, 0.0};
  double r1_sum = 0.0, rl_sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& ref = references[i];
    if (cand.empty() || ref.empty()) continue;

    const auto cu = ngram_counts(cand, 1);
    const auto ru = ngram_counts(ref, 1);
    long overlap = 0;
    for (const auto& [gram, cnt] : cu) {
      auto it = ru.find(gram);
      if (it != ru.end()) overlap += std::min(cnt, it->second);
    }
    r1_sum += f1(static_cast<double>(overlap) / static_cast<double>(cand.size()),
                 static_cast<double>(overlap) / static_cast<double>(ref.size()));

    const long lcs = lcs_length(cand, ref);
    rl_sum += f1(static_cast<double>(lcs) / static_cast<double>(cand.size()),
                 static_cast<double>(lcs) / static_cast<double>(ref.size()));
  }
  const double n = static_cast<double>(candidates.size());
  return {r1_sum / n, rl_sum / n};
}

double distinct_n(const std::vector<TokenSeq>& candidates, int n) {
  std::set<TokenSeq> unique;
  long total = 0;
  for (const auto& cand : candidates) {
    for (const auto& [gram, cnt] : ngram_counts(cand, n)) {
      unique.insert(gram);
      total += cnt;
    }
  }
  return total > 0 ? static_cast<double>(unique.size()) / static_cast<double>(total) : 0.0;
}

ConceptPRF concept_prf(const std::vector<std::set<std::string>>& predicted,
                       const std::vector<std::set<std::string>>& gold, bool micro) {
  if (predicted.size() != gold.size()) {
    throw std::runtime_error("concept_prf: predicted/gold count mismatch");
  }
  ConceptPRF out;
  long pred_total = 0, gold_total = 0, hit_total = 0;
  double p_sum = 0.0, r_sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    long hits = 0;
    for (const auto& c : predicted[i]) hits += gold[i].count(c) ? 1 : 0;
    pred_total += static_cast<long>(predicted[i].size());
    gold_total += static_cast<long>(gold[i].size());
    hit_total += hits;
    p_sum += predicted[i].empty()
                 ? 0.0
                 : static_cast<double>(hits) / static_cast<double>(predicted[i].size());
    r_sum += gold[i].empty() ? 0.0
                             : static_cast<double>(hits) / static_cast<double>(gold[i].size());
  }
  const double n = predicted.empty() ? 1.0 : static_cast<double>(predicted.size());
  if (micro) {
    out.precision = pred_total > 0
                        ? static_cast<double>(hit_total) / static_cast<double>(pred_total)
                        : 0.0;
    out.recall =
        gold_total > 0 ? static_cast<double>(hit_total) / static_cast<double>(gold_total) : 0.0;
  } else {
    out.precision = p_sum / n;
    out.recall = r_sum / n;
  }
  out.f1 = f1(out.precision, out.recall);
  out.avg_num = static_cast<double>(pred_total) / n;
  out.degenerate = pred_total == 0 || gold_total == 0;
  return out;
}

std::set<std::string> extract_concepts(const TokenSeq& tokens, const ConceptGraph& graph) {
  // vertex surface forms split into token runs, longest-first per leading token
  std::map<std::string, std::vector<std::pair<TokenSeq, std::string>>> by_first;
  for (int v = ConceptGraph::kReservedCount; v < graph.vertex_count(); ++v) {
    const std::string& surface = graph.token(v);
    TokenSeq run;
    std::istringstream ss(surface);
    std::string w;
    while (ss >> w) run.push_back(w);
    if (run.empty()) continue;
    by_first[run.front()].emplace_back(run, surface);
  }
  for (auto& [first, runs] : by_first) {
    std::sort(runs.begin(), runs.end(),
              [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  }

  std::set<std::string> found;
  std::size_t i = 0;
  while (i < tokens.size()) {
    auto it = by_first.find(tokens[i]);
    std::size_t advance = 1;
    if (it != by_first.end()) {
      for (const auto& [run, surface] : it->second) {
        if (i + run.size() > tokens.size()) continue;
        if (std::equal(run.begin(), run.end(), tokens.begin() + static_cast<long>(i))) {
          found.insert(surface);
          advance = run.size();
          break;
        }
      }
    }
    i += advance;
  }
  return found;
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "pairs: " << pair_count << "\n";
  os << "bleu: " << bleu << "\n";
  os << "rouge1_f: " << rouge1_f << "\n";
  os << "rougeL_f: " << rougeL_f << "\n";
  os << "dist1: " << dist1 << "\n";
  os << "dist2: " << dist2 << "\n";
  os << "concept_p: " << concepts.precision << "\n";
  os << "concept_r: " << concepts.recall << "\n";
  os << "concept_f1: " << concepts.f1 << "\n";
  os << "concept_num: " << concepts.avg_num << "\n";
  if (concepts.degenerate) os << "concept_flag: degenerate\n";
  return os.str();
}

MetricReport evaluate_responses(const std::vector<TokenSeq>& candidates,
                                const std::vector<TokenSeq>& references,
                                const ConceptGraph& graph) {
  MetricReport r;
  r.pair_count = static_cast<long>(candidates.size());
  r.bleu = bleu(candidates, references);
  std::tie(r.rouge1_f, r.rougeL_f) = rouge_1_l(candidates, references);
  r.dist1 = distinct_n(candidates, 1);
  r.dist2 = distinct_n(candidates, 2);
  std::vector<std::set<std::string>> pred, gold;
  pred.reserve(candidates.size());
  gold.reserve(references.size());
  for (const auto& c : candidates) pred.push_back(extract_concepts(c, graph));
  for (const auto& g : references) gold.push_back(extract_concepts(g, graph));
  r.concepts = concept_prf(pred, gold);
  return r;
}

std::string SpeedReport::to_text(bool with_timing) const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  if (with_timing) {
    os << "total_seconds: " << total_seconds << "\n";
    os << "words_per_second: " << words_per_second << "\n";
  }
  os << "decoder_passes_total: " << decoder_passes_total << "\n";
  os << "words_total: " << words_total << "\n";
  os << "params_count: " << params_count << "\n";
  return os.str();
}

SpeedReport speed_bench(const BenchDecoder& decoder,
                        const std::vector<ContextResponsePair>& pairs,
                        std::size_t params_count) {
  SpeedReport report;
  report.params_count = params_count;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& p : pairs) {
    const DecodeOutcome out = decoder(p);
    report.decoder_passes_total += out.passes;
    report.words_total += static_cast<long>(out.tokens.size());
  }
  const auto end = std::chrono::steady_clock::now();
  report.total_seconds = std::chrono::duration<double>(end - start).count();
  report.words_per_second =
      report.total_seconds > 0.0 ? static_cast<double>(report.words_total) / report.total_seconds
                                 : 0.0;
  return report;
}

}  // namespace congen
