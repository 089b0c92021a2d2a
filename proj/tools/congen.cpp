// congen: concept-graph planning plus parallel insertion decoding for
// dialogue responses. Subcommands cover the whole pipeline from corpus
// annotation to metric reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "congen/pipeline.hpp"
#include "congen/synthetic.hpp"

using namespace congen;
using nlohmann::json;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error("--set expects key=value, got '" + kv + "'");
      }
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
  }
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key = value config file");
  cmd->add_option("--set", flags.overrides, "override a config key (key=value, repeatable)");
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

json step_to_json(const PlanStep& s, const ConceptGraph& graph) {
  return {{"concept", graph.token(s.concept_id)}, {"subgraph", s.subgraph},
          {"tail", s.tail},     {"alpha_t", s.alpha_t},
          {"alpha_g", s.alpha_g}, {"prob", s.prob}};
}

int cmd_make_synthetic(const std::string& out_dir, SyntheticSpec spec, double alt_prob,
                       double valid_frac, double test_frac) {
  if (alt_prob > 0.0) {
    spec.rule = SyntheticSpec::Rule::Stochastic;
    spec.transition.assign(static_cast<std::size_t>(spec.num_concepts),
                           std::vector<double>(static_cast<std::size_t>(spec.num_concepts), 0.0));
    for (int i = 0; i < spec.num_concepts; ++i) {
      const int succ = chain_next(i, spec.num_concepts);
      const int alt = chain_next(succ, spec.num_concepts);
      spec.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(succ)] =
          1.0 - alt_prob;
      spec.transition[static_cast<std::size_t>(i)][static_cast<std::size_t>(alt)] = alt_prob;
    }
  }
  const auto corpus = make_synthetic(spec);
  std::filesystem::create_directories(out_dir);

  const int n = static_cast<int>(corpus.sessions.size());
  const int n_test = std::max(1, static_cast<int>(n * test_frac));
  const int n_valid = std::max(1, static_cast<int>(n * valid_frac));
  const int n_train = n - n_valid - n_test;
  if (n_train < 1) throw std::runtime_error("make-synthetic: not enough sessions to split");

  const auto& s = corpus.sessions;
  save_corpus({s.begin(), s.begin() + n_train}, out_dir + "/train.jsonl");
  save_corpus({s.begin() + n_train, s.begin() + n_train + n_valid}, out_dir + "/valid.jsonl");
  save_corpus({s.begin() + n_train + n_valid, s.end()}, out_dir + "/test.jsonl");
  save_truth(corpus.truth, out_dir + "/truth.tsv");

  std::cout << "sessions: " << n << " (train " << n_train << ", valid " << n_valid << ", test "
            << n_test << ")\n"
            << "tokens: " << corpus.total_tokens << "\n"
            << "truth edges: " << corpus.truth.size() << "\n";
  return 0;
}

int cmd_annotate(const RunConfig& cfg, const std::string& in_path, const std::string& out_path) {
  auto sessions = load_corpus(in_path);
  std::set<std::string> stopwords;
  if (!cfg.stopwords_path.empty()) stopwords = load_stopwords(cfg.stopwords_path);
  std::set<std::string> whitelist;
  if (!cfg.pos_whitelist_path.empty()) whitelist = load_tag_whitelist(cfg.pos_whitelist_path);
  annotate_corpus(sessions, stopwords, whitelist, cfg.theta_sal);
  save_corpus(sessions, out_path);
  long marked = 0;
  for (const auto& s : sessions)
    for (const auto& u : s.utterances) marked += static_cast<long>(u.concept_indices.size());
  std::cout << "sessions: " << sessions.size() << "\nconcept mentions: " << marked << "\n";
  return 0;
}

int cmd_build_graph(const RunConfig& cfg, const std::string& in_path,
                    const std::string& out_path) {
  const auto sessions = load_corpus(in_path);
  int skipped = 0;
  const auto pairs = make_pairs(sessions, cfg.context_window, cfg.model.n_max, &skipped);
  const auto graph = build_graph(pairs, cfg.graph_k, cfg.graph_min_count);
  graph.save(out_path);
  std::cout << "pairs: " << pairs.size() << " (skipped sessions: " << skipped << ")\n"
            << "vertices: " << graph.vertex_count() - ConceptGraph::kReservedCount << "\n"
            << "edges: " << graph.edge_count() << "\n";
  return 0;
}

int cmd_inspect_graph(const std::string& graph_path, int top) {
  const auto graph = ConceptGraph::load(graph_path);
  std::map<std::size_t, int> degree_histogram;
  struct EdgeRow {
    std::string head, tail;
    double pmi;
  };
  std::vector<EdgeRow> edges;
  for (int v = ConceptGraph::kReservedCount; v < graph.vertex_count(); ++v) {
    const auto& tails = graph.tails(v);
    ++degree_histogram[tails.size()];
    for (const auto& e : tails) edges.push_back({graph.token(v), graph.token(e.tail), e.pmi});
  }
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    if (a.pmi != b.pmi) return a.pmi > b.pmi;
    return std::tie(a.head, a.tail) < std::tie(b.head, b.tail);
  });
  std::cout << "vertices: " << graph.vertex_count() - ConceptGraph::kReservedCount
            << "\nedges: " << graph.edge_count() << "\nout-degree histogram:\n";
  for (const auto& [deg, count] : degree_histogram) {
    std::cout << "  " << deg << ": " << count << "\n";
  }
  std::cout << "top edges by pmi:\n";
  for (int i = 0; i < std::min<int>(top, static_cast<int>(edges.size())); ++i) {
    std::cout << "  " << edges[static_cast<std::size_t>(i)].head << " -> "
              << edges[static_cast<std::size_t>(i)].tail << "  "
              << edges[static_cast<std::size_t>(i)].pmi << "\n";
  }
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& which, const std::string& out_dir,
              const std::string& resume) {
  const auto train_sessions = load_corpus(cfg.train_corpus);
  const auto valid_sessions =
      cfg.valid_corpus.empty() ? std::vector<DialogueSession>{} : load_corpus(cfg.valid_corpus);
  const auto graph = ConceptGraph::load(cfg.graph_path);
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir + "/train_" + which + ".log");

  TrainStats stats;
  if (which == "planner") {
    stats = train_planner(cfg, train_sessions, valid_sessions, graph, out_dir, log, resume);
  } else if (which == "generator") {
    stats = train_generator(cfg, train_sessions, valid_sessions, graph, out_dir, log, resume);
  } else {
    throw std::runtime_error("train: model must be 'planner' or 'generator'");
  }
  std::cout << "steps: " << stats.steps_done << "\nfinal train loss: " << stats.final_train_loss
            << "\nbest checkpoint: " << stats.best_checkpoint
            << "\nlast checkpoint: " << stats.last_checkpoint << "\n";
  if (stats.diverged) {
    std::cerr << "error: training diverged; last good checkpoint retained\n";
    return 2;
  }
  return 0;
}

int cmd_plan(const RunConfig& cfg, const std::string& ckpt, const std::string& in_path,
             const std::string& out_path) {
  const auto graph = ConceptGraph::load(cfg.graph_path);
  const auto lp = load_planner(ckpt, graph);
  const auto sessions = load_corpus(in_path);
  const auto pairs = make_pairs(sessions, cfg.context_window, lp.model->cfg.n_max);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  for (const auto& p : pairs) {
    const auto plan = plan_pair(*lp.model, lp.vocab, graph, p.context);
    json rec;
    rec["id"] = p.id;
    json concepts = json::array();
    for (ConceptId c : plan.concepts) concepts.push_back(graph.token(c));
    rec["concepts"] = std::move(concepts);
    rec["stop_reason"] = plan.stop_reason == StopReason::StopToken ? "stop_token" : "max_len";
    json steps = json::array();
    for (const auto& s : plan.steps) steps.push_back(step_to_json(s, graph));
    rec["steps"] = std::move(steps);
    out << rec.dump() << "\n";
  }
  std::cout << "planned pairs: " << pairs.size() << "\n";
  return 0;
}

std::map<std::string, std::vector<std::string>> load_plans(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plans file: " + path);
  std::map<std::string, std::vector<std::string>> plans;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    plans[rec.at("id").get<std::string>()] =
        rec.at("concepts").get<std::vector<std::string>>();
  }
  return plans;
}

int cmd_generate(const RunConfig& cfg, const std::string& ckpt, const std::string& in_path,
                 const std::string& out_path, const std::string& plans_path, bool gold_concepts,
                 bool from_scratch, bool trace) {
  const auto graph = ConceptGraph::load(cfg.graph_path);
  const auto lg = load_generator(ckpt);
  const auto sessions = load_corpus(in_path);
  const auto pairs = make_pairs(sessions, cfg.context_window, lg.model->cfg.n_max);
  std::map<std::string, std::vector<std::string>> plans;
  if (!plans_path.empty()) plans = load_plans(plans_path);

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  long words = 0, passes = 0;
  for (const auto& p : pairs) {
    std::vector<std::string> concepts;
    if (!from_scratch) {
      if (!plans_path.empty()) {
        auto it = plans.find(p.id);
        if (it != plans.end()) concepts = it->second;
      } else if (gold_concepts) {
        concepts = p.gold_concepts;
      } else {
        throw std::runtime_error("generate: pass --plans, --gold-concepts or --from-scratch");
      }
    }
    const auto gen =
        generate_response(*lg.model, lg.vocab, p.context, concepts, cfg.max_len, cfg.max_iters);
    json rec;
    rec["id"] = p.id;
    rec["tokens"] = gen.tokens;
    rec["concepts"] = concepts;
    rec["passes"] = gen.passes;
    if (trace) {
      json iters = json::array();
      for (const auto& it : gen.iterations) {
        json ins = json::array();
        for (const auto& [slot, tok] : it.insertions) {
          ins.push_back({{"slot", slot}, {"token", lg.vocab.token(tok)}});
        }
        iters.push_back({{"insertions", ins}, {"finished", it.finished_slots}});
      }
      rec["iterations"] = std::move(iters);
    }
    out << rec.dump() << "\n";
    words += static_cast<long>(gen.tokens.size());
    passes += gen.passes;
  }
  std::cout << "generated pairs: " << pairs.size() << "\nwords: " << words
            << "\ndecoder passes: " << passes << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& pred_path, const std::string& ref_path,
                 const std::string& out_path, const std::string& plans_path) {
  const auto graph = ConceptGraph::load(cfg.graph_path);
  const auto sessions = load_corpus(ref_path);
  const auto pairs = make_pairs(sessions, cfg.context_window, cfg.model.n_max);

  std::ifstream in(pred_path);
  if (!in) throw std::runtime_error("cannot open predictions: " + pred_path);
  std::map<std::string, std::vector<std::string>> preds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    preds[rec.at("id").get<std::string>()] = rec.at("tokens").get<std::vector<std::string>>();
  }

  std::vector<TokenSeq> cands, refs;
  for (const auto& p : pairs) {
    auto it = preds.find(p.id);
    if (it == preds.end()) throw std::runtime_error("missing prediction for pair " + p.id);
    cands.push_back(it->second);
    refs.push_back(p.response.tokens);
  }
  const MetricReport report = evaluate_responses(cands, refs, graph);
  std::ostringstream text;
  text << report.to_text();

  if (!plans_path.empty()) {
    const auto plans = load_plans(plans_path);
    std::vector<std::set<std::string>> planned, gold;
    for (const auto& p : pairs) {
      auto it = plans.find(p.id);
      planned.emplace_back(it == plans.end() ? std::set<std::string>{}
                                             : std::set<std::string>(it->second.begin(),
                                                                     it->second.end()));
      gold.emplace_back(p.gold_concepts.begin(), p.gold_concepts.end());
    }
    const ConceptPRF prf = concept_prf(planned, gold);
    text << "plan_p: " << prf.precision << "\nplan_r: " << prf.recall
         << "\nplan_f1: " << prf.f1 << "\nplan_num: " << prf.avg_num << "\n";
  }

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << text.str();
  std::cout << text.str();
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& gen_ckpt, const std::string& planner_ckpt,
              const std::string& in_path, const std::string& out_path, int limit) {
  const auto graph = ConceptGraph::load(cfg.graph_path);
  const auto lg = load_generator(gen_ckpt);
  std::optional<LoadedPlanner> lp;
  if (!planner_ckpt.empty()) lp.emplace(load_planner(planner_ckpt, graph));

  const auto sessions = load_corpus(in_path);
  auto pairs = make_pairs(sessions, cfg.context_window, lg.model->cfg.n_max);
  if (limit > 0 && static_cast<int>(pairs.size()) > limit) {
    pairs.resize(static_cast<std::size_t>(limit));
  }

  // warm-up decode so allocation effects do not skew the measurement
  if (!pairs.empty()) {
    generate_response(*lg.model, lg.vocab, pairs[0].context, pairs[0].gold_concepts,
                      cfg.max_len, cfg.max_iters);
  }

  auto decoder = [&](const ContextResponsePair& p) {
    std::vector<std::string> concepts;
    if (lp) {
      const auto plan = plan_pair(*lp->model, lp->vocab, graph, p.context);
      for (ConceptId c : plan.concepts) concepts.push_back(graph.token(c));
    } else {
      concepts = p.gold_concepts;
    }
    const auto gen =
        generate_response(*lg.model, lg.vocab, p.context, concepts, cfg.max_len, cfg.max_iters);
    return DecodeOutcome{gen.tokens, gen.passes};
  };
  const SpeedReport report = speed_bench(decoder, pairs, lg.model->store.value_count());

  // the report file carries only the hardware-independent fields so reruns
  // are bit-identical; timing goes to stdout
  std::ostringstream file_text;
  file_text << report.to_text(/*with_timing=*/false);
  file_text << "ar_reference_passes: " << report.words_total << "\n";
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << file_text.str();
  std::cout << report.to_text() << "ar_reference_passes: " << report.words_total << "\n";
  return 0;
}

int cmd_chat(const RunConfig& cfg, const std::string& planner_ckpt,
             const std::string& gen_ckpt) {
  const auto graph = ConceptGraph::load(cfg.graph_path);
  const auto lp = load_planner(planner_ckpt, graph);
  const auto lg = load_generator(gen_ckpt);

  std::vector<Utterance> history;
  bool show_trace = true;
  std::string line;
  std::cout << "chat ready. /reset clears context, /trace on|off, /quit exits.\n";
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line == "/quit") break;
    if (line == "/reset") {
      history.clear();
      std::cout << "context cleared\n";
      continue;
    }
    if (line == "/trace on") {
      show_trace = true;
      continue;
    }
    if (line == "/trace off") {
      show_trace = false;
      continue;
    }
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;  // reprompt, no state change

    Utterance user;
    user.tokens = tokens;
    for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
      if (graph.id(tokens[static_cast<std::size_t>(i)])) user.concept_indices.push_back(i);
    }
    history.push_back(user);

    const auto plan = plan_pair(*lp.model, lp.vocab, graph, history);
    std::vector<std::string> concepts;
    for (ConceptId c : plan.concepts) concepts.push_back(graph.token(c));
    const auto gen = generate_response(*lg.model, lg.vocab, history, concepts, cfg.max_len,
                                       cfg.max_iters);
    if (show_trace) {
      std::cout << "[concepts: " << join(concepts) << "] [stop: "
                << (plan.stop_reason == StopReason::StopToken ? "stop_token" : "max_len")
                << "] [passes: " << gen.passes << "]\n";
    }
    std::cout << join(gen.tokens) << "\n";

    Utterance reply;
    reply.tokens = gen.tokens;
    for (int i = 0; i < static_cast<int>(gen.tokens.size()); ++i) {
      if (graph.id(gen.tokens[static_cast<std::size_t>(i)])) reply.concept_indices.push_back(i);
    }
    history.push_back(reply);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concept-planned non-autoregressive dialogue generation"};
  app.require_subcommand(1);

  // make-synthetic
  auto* syn = app.add_subcommand("make-synthetic", "emit a planted-transition corpus");
  std::string syn_out = "synthetic";
  SyntheticSpec spec;
  double alt_prob = 0.0, valid_frac = 0.05, test_frac = 0.05;
  syn->add_option("--out", syn_out, "output directory");
  syn->add_option("--sessions", spec.sessions);
  syn->add_option("--turns", spec.turns);
  syn->add_option("--concepts", spec.num_concepts);
  syn->add_option("--concepts-per-turn", spec.concepts_per_turn);
  syn->add_option("--alt-prob", alt_prob,
                  "nonzero makes transitions stochastic with this alternative mass");
  syn->add_option("--valid-frac", valid_frac);
  syn->add_option("--test-frac", test_frac);
  syn->add_option("--seed", spec.seed);

  // annotate
  auto* ann = app.add_subcommand("annotate", "mark salient concept tokens");
  ConfigFlags ann_cfg;
  std::string ann_in, ann_out;
  add_config_flags(ann, ann_cfg);
  ann->add_option("--in", ann_in)->required();
  ann->add_option("--out", ann_out)->required();

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "build the PMI concept graph");
  ConfigFlags bg_cfg;
  std::string bg_in, bg_out;
  add_config_flags(bg, bg_cfg);
  bg->add_option("--in", bg_in)->required();
  bg->add_option("--out", bg_out)->required();

  // inspect-graph
  auto* ig = app.add_subcommand("inspect-graph", "degree histogram and top edges");
  std::string ig_graph;
  int ig_top = 20;
  ig->add_option("--graph", ig_graph)->required();
  ig->add_option("--top", ig_top);

  // train
  auto* tr = app.add_subcommand("train", "train the planner or the generator");
  ConfigFlags tr_cfg;
  std::string tr_model, tr_out = "run", tr_resume;
  add_config_flags(tr, tr_cfg);
  tr->add_option("--model", tr_model, "planner | generator")->required();
  tr->add_option("--out", tr_out, "checkpoint/log directory");
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");

  // plan
  auto* pl = app.add_subcommand("plan", "plan concept sequences for a corpus");
  ConfigFlags pl_cfg;
  std::string pl_ckpt, pl_in, pl_out;
  add_config_flags(pl, pl_cfg);
  pl->add_option("--ckpt", pl_ckpt)->required();
  pl->add_option("--in", pl_in)->required();
  pl->add_option("--out", pl_out)->required();

  // generate
  auto* ge = app.add_subcommand("generate", "complete responses around concepts");
  ConfigFlags ge_cfg;
  std::string ge_ckpt, ge_in, ge_out, ge_plans;
  bool ge_gold = false, ge_scratch = false, ge_trace = false;
  add_config_flags(ge, ge_cfg);
  ge->add_option("--ckpt", ge_ckpt)->required();
  ge->add_option("--in", ge_in)->required();
  ge->add_option("--out", ge_out)->required();
  ge->add_option("--plans", ge_plans, "plans file from the plan subcommand");
  ge->add_flag("--gold-concepts", ge_gold, "initialize from gold concepts");
  ge->add_flag("--from-scratch", ge_scratch, "empty initial hypothesis");
  ge->add_flag("--trace", ge_trace, "record per-iteration insertions");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score predictions against references");
  ConfigFlags ev_cfg;
  std::string ev_in, ev_ref, ev_out, ev_plans;
  add_config_flags(ev, ev_cfg);
  ev->add_option("--in", ev_in)->required();
  ev->add_option("--ref", ev_ref)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--plans", ev_plans, "also score planned concepts against gold");

  // bench
  auto* be = app.add_subcommand("bench", "decoding speed and pass counts");
  ConfigFlags be_cfg;
  std::string be_gen, be_planner, be_in, be_out;
  int be_limit = 0;
  add_config_flags(be, be_cfg);
  be->add_option("--gen", be_gen)->required();
  be->add_option("--planner", be_planner);
  be->add_option("--in", be_in)->required();
  be->add_option("--out", be_out)->required();
  be->add_option("--limit", be_limit, "bench at most this many pairs");

  // chat
  auto* ch = app.add_subcommand("chat", "interactive loop with plan traces");
  ConfigFlags ch_cfg;
  std::string ch_planner, ch_gen;
  add_config_flags(ch, ch_cfg);
  ch->add_option("--planner", ch_planner)->required();
  ch->add_option("--gen", ch_gen)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (syn->parsed()) return cmd_make_synthetic(syn_out, spec, alt_prob, valid_frac, test_frac);
    if (ann->parsed()) return cmd_annotate(ann_cfg.resolve(), ann_in, ann_out);
    if (bg->parsed()) return cmd_build_graph(bg_cfg.resolve(), bg_in, bg_out);
    if (ig->parsed()) return cmd_inspect_graph(ig_graph, ig_top);
    if (tr->parsed()) return cmd_train(tr_cfg.resolve(), tr_model, tr_out, tr_resume);
    if (pl->parsed()) return cmd_plan(pl_cfg.resolve(), pl_ckpt, pl_in, pl_out);
    if (ge->parsed()) {
      return cmd_generate(ge_cfg.resolve(), ge_ckpt, ge_in, ge_out, ge_plans, ge_gold,
                          ge_scratch, ge_trace);
    }
    if (ev->parsed()) return cmd_evaluate(ev_cfg.resolve(), ev_in, ev_ref, ev_out, ev_plans);
    if (be->parsed()) return cmd_bench(be_cfg.resolve(), be_gen, be_planner, be_in, be_out,
                                       be_limit);
    if (ch->parsed()) return cmd_chat(ch_cfg.resolve(), ch_planner, ch_gen);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
