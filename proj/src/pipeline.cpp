#include "congen/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

namespace congen {

namespace {

// per-step rngs are derived statelessly from (seed, step) so a resumed run
// draws the same batches and dropout masks as an uninterrupted one
Rng step_rng(std::uint64_t seed, long step, std::uint64_t salt) {
  return Rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(step) * 2654435761ULL +
             salt);
}

std::vector<std::size_t> sample_batch(Rng& rng, std::size_t population, int batch) {
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) idx.push_back(rng.below(population));
  return idx;
}

nlohmann::json manifest_extra(const char* type, const ModelConfig& m, const Vocabulary& vocab,
                              int vertex_count) {
  nlohmann::json extra;
  extra["type"] = type;
  extra["model"] = model_config_to_json(m);
  extra["vocab"] = vocab.user_tokens();
  extra["vertices"] = vertex_count;
  return extra;
}

template <class Model>
struct Trainer {
  const RunConfig& cfg;
  Model& model;
  const Vocabulary& vocab;
  const nlohmann::json extra;
  const std::string out_dir;
  const std::string prefix;
  std::ostream& log;

  TrainStats stats;
  double best_valid = std::numeric_limits<double>::infinity();

  std::string path_for(const std::string& tag) const {
    return out_dir + "/" + prefix + "_" + tag + ".ckpt";
  }

  void save(const std::string& tag) {
    save_checkpoint(path_for(tag), model.store, extra, /*with_opt_state=*/true);
  }

  template <class ValidLoss>
  void checkpoint(long step, ValidLoss valid_loss) {
    const std::string tag = "step" + std::to_string(step);
    save(tag);
    stats.last_checkpoint = path_for(tag);
    const double vl = valid_loss();
    log << "checkpoint step=" << step << " valid_loss=" << vl << "\n";
    if (vl < best_valid) {
      best_valid = vl;
      save("best");
      stats.best_checkpoint = path_for("best");
      stats.best_valid_loss = vl;
    }
  }
};

}  // namespace

TrainStats train_planner(const RunConfig& cfg, const std::vector<DialogueSession>& train_sessions,
                         const std::vector<DialogueSession>& valid_sessions,
                         const ConceptGraph& graph, const std::string& out_dir,
                         std::ostream& log, const std::string& resume_from) {
  const Vocabulary vocab = build_vocabulary(train_sessions);
  auto model = std::make_unique<PlannerModel<Real>>(cfg.model, vocab.size(), graph.vertex_count());
  if (resume_from.empty()) {
    model->init(cfg.seed);
  } else {
    load_checkpoint(resume_from, model->store);
  }

  int skipped = 0;
  std::vector<PlannerExample> train_ex, valid_ex;
  for (const auto& p : make_pairs(train_sessions, cfg.context_window, cfg.model.n_max)) {
    if (auto ex = make_planner_example(p, vocab, graph)) train_ex.push_back(std::move(*ex));
    else ++skipped;
  }
  for (const auto& p : make_pairs(valid_sessions, cfg.context_window, cfg.model.n_max)) {
    if (auto ex = make_planner_example(p, vocab, graph)) valid_ex.push_back(std::move(*ex));
    else ++skipped;
  }
  if (train_ex.empty()) throw std::runtime_error("train: no reachable planner examples");
  log << "planner examples train=" << train_ex.size() << " valid=" << valid_ex.size()
      << " skipped=" << skipped << "\n";

  Trainer<PlannerModel<Real>> tr{cfg, *model, vocab,
                                 manifest_extra("planner", cfg.model, vocab, graph.vertex_count()),
                                 out_dir, "planner", log, {}, std::numeric_limits<double>::infinity()};
  tr.stats.skipped_pairs = skipped;

  auto valid_loss = [&]() {
    if (valid_ex.empty()) return 0.0;
    double total = 0.0;
    std::size_t done = 0;
    while (done < valid_ex.size()) {
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch),
                                                  valid_ex.size() - done);
      std::vector<PlannerExample> batch(valid_ex.begin() + static_cast<long>(done),
                                        valid_ex.begin() + static_cast<long>(done + n));
      Tape<Real> t;
      total += static_cast<double>(model->loss(t, batch).value()(0, 0)) * static_cast<double>(n);
      done += n;
    }
    return total / static_cast<double>(valid_ex.size());
  };

  tr.save("step" + std::to_string(model->store.step()));
  tr.stats.last_checkpoint = tr.path_for("step" + std::to_string(model->store.step()));

  const long start = model->store.step();
  for (long step = start + 1; step <= cfg.steps; ++step) {
    Rng batch_rng = step_rng(cfg.seed, step, 11);
    Rng drop_rng = step_rng(cfg.seed, step, 13);
    std::vector<PlannerExample> batch;
    for (std::size_t i : sample_batch(batch_rng, train_ex.size(), cfg.batch)) {
      batch.push_back(train_ex[i]);
    }
    model->store.zero_grads();
    Tape<Real> t;
    if (cfg.model.dropout > 0.0) {
      t.dropout_rng = &drop_rng;
      t.dropout_rate = cfg.model.dropout;
    }
    double loss_value;
    try {
      Var<Real> loss = model->loss(t, batch);
      loss_value = static_cast<double>(loss.value()(0, 0));
      t.backward(loss);
    } catch (const std::runtime_error&) {
      tr.stats.diverged = true;
      log << "diverged at step " << step << "; last good checkpoint: "
          << tr.stats.last_checkpoint << "\n";
      return tr.stats;
    }
    if (!std::isfinite(loss_value) || !model->store.grads_finite()) {
      tr.stats.diverged = true;
      log << "diverged at step " << step << "; last good checkpoint: "
          << tr.stats.last_checkpoint << "\n";
      return tr.stats;
    }
    model->store.adam_step(warmup_rsqrt_lr(cfg.lr, cfg.warmup, step));
    tr.stats.final_train_loss = loss_value;
    if (step == start + 1 || loss_value < tr.stats.min_train_loss) {
      tr.stats.min_train_loss = loss_value;
    }
    tr.stats.steps_done = step;
    log << "step " << step << " loss " << loss_value << " lr "
        << warmup_rsqrt_lr(cfg.lr, cfg.warmup, step) << "\n";
    if (step % cfg.checkpoint_every == 0 || step == cfg.steps) tr.checkpoint(step, valid_loss);
  }
  if (cfg.steps == start) tr.checkpoint(start, valid_loss);
  return tr.stats;
}

TrainStats train_generator(const RunConfig& cfg,
                           const std::vector<DialogueSession>& train_sessions,
                           const std::vector<DialogueSession>& valid_sessions,
                           const ConceptGraph& graph, const std::string& out_dir,
                           std::ostream& log, const std::string& resume_from) {
  (void)graph;
  const Vocabulary vocab = build_vocabulary(train_sessions);
  auto model = std::make_unique<InsertionModel<Real>>(cfg.model, vocab.size());
  if (resume_from.empty()) {
    model->init(cfg.seed + 1);
  } else {
    load_checkpoint(resume_from, model->store);
  }

  const auto train_pairs = make_pairs(train_sessions, cfg.context_window, cfg.model.n_max);
  const auto valid_pairs = make_pairs(valid_sessions, cfg.context_window, cfg.model.n_max);
  if (train_pairs.empty()) throw std::runtime_error("train: no generator pairs");
  log << "generator pairs train=" << train_pairs.size() << " valid=" << valid_pairs.size()
      << "\n";

  // fixed validation instances for comparable checkpoint scores
  std::vector<InsertionTrainingInstance> valid_inst;
  {
    Rng vrng(cfg.seed + 7);
    for (const auto& p : valid_pairs) {
      valid_inst.push_back(sample_subsequence(p, vocab, vrng, cfg.p_keep, cfg.model.n_max));
    }
  }

  Trainer<InsertionModel<Real>> tr{cfg, *model, vocab,
                                   manifest_extra("generator", cfg.model, vocab, 0), out_dir,
                                   "generator", log, {}, std::numeric_limits<double>::infinity()};

  auto valid_loss = [&]() {
    if (valid_inst.empty()) return 0.0;
    double total = 0.0;
    std::size_t done = 0;
    while (done < valid_inst.size()) {
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch),
                                                  valid_inst.size() - done);
      std::vector<InsertionTrainingInstance> batch(
          valid_inst.begin() + static_cast<long>(done),
          valid_inst.begin() + static_cast<long>(done + n));
      Tape<Real> t;
      total +=
          static_cast<double>(model->loss(t, batch, cfg.tau).value()(0, 0)) * static_cast<double>(n);
      done += n;
    }
    return total / static_cast<double>(valid_inst.size());
  };

  tr.save("step" + std::to_string(model->store.step()));
  tr.stats.last_checkpoint = tr.path_for("step" + std::to_string(model->store.step()));

  const long start = model->store.step();
  for (long step = start + 1; step <= cfg.steps; ++step) {
    Rng batch_rng = step_rng(cfg.seed, step, 17);
    Rng drop_rng = step_rng(cfg.seed, step, 19);
    std::vector<InsertionTrainingInstance> batch;
    for (std::size_t i : sample_batch(batch_rng, train_pairs.size(), cfg.batch)) {
      batch.push_back(
          sample_subsequence(train_pairs[i], vocab, batch_rng, cfg.p_keep, cfg.model.n_max));
    }
    model->store.zero_grads();
    Tape<Real> t;
    if (cfg.model.dropout > 0.0) {
      t.dropout_rng = &drop_rng;
      t.dropout_rate = cfg.model.dropout;
    }
    double loss_value;
    try {
      Var<Real> loss = model->loss(t, batch, cfg.tau);
      loss_value = static_cast<double>(loss.value()(0, 0));
      t.backward(loss);
    } catch (const std::runtime_error&) {
      tr.stats.diverged = true;
      log << "diverged at step " << step << "; last good checkpoint: "
          << tr.stats.last_checkpoint << "\n";
      return tr.stats;
    }
    if (!std::isfinite(loss_value) || !model->store.grads_finite()) {
      tr.stats.diverged = true;
      log << "diverged at step " << step << "; last good checkpoint: "
          << tr.stats.last_checkpoint << "\n";
      return tr.stats;
    }
    model->store.adam_step(warmup_rsqrt_lr(cfg.lr, cfg.warmup, step));
    tr.stats.final_train_loss = loss_value;
    if (step == start + 1 || loss_value < tr.stats.min_train_loss) {
      tr.stats.min_train_loss = loss_value;
    }
    tr.stats.steps_done = step;
    log << "step " << step << " loss " << loss_value << " lr "
        << warmup_rsqrt_lr(cfg.lr, cfg.warmup, step) << "\n";
    if (step % cfg.checkpoint_every == 0 || step == cfg.steps) tr.checkpoint(step, valid_loss);
  }
  if (cfg.steps == start) tr.checkpoint(start, valid_loss);
  return tr.stats;
}

LoadedPlanner load_planner(const std::string& checkpoint_path, const ConceptGraph& graph) {
  const nlohmann::json extra = read_checkpoint_manifest(checkpoint_path).at("extra");
  if (extra.at("type").get<std::string>() != "planner") {
    throw std::runtime_error("checkpoint is not a planner: " + checkpoint_path);
  }
  LoadedPlanner lp;
  lp.vocab = Vocabulary::from_tokens(extra.at("vocab").get<std::vector<std::string>>());
  const ModelConfig mc = model_config_from_json(extra.at("model"));
  const int vertices = extra.at("vertices").get<int>();
  if (vertices != graph.vertex_count()) {
    throw std::runtime_error("checkpoint/graph vertex count mismatch");
  }
  lp.model = std::make_unique<PlannerModel<Real>>(mc, lp.vocab.size(), vertices);
  load_checkpoint(checkpoint_path, lp.model->store);
  return lp;
}

LoadedGenerator load_generator(const std::string& checkpoint_path) {
  const nlohmann::json extra = read_checkpoint_manifest(checkpoint_path).at("extra");
  if (extra.at("type").get<std::string>() != "generator") {
    throw std::runtime_error("checkpoint is not a generator: " + checkpoint_path);
  }
  LoadedGenerator lg;
  lg.vocab = Vocabulary::from_tokens(extra.at("vocab").get<std::vector<std::string>>());
  const ModelConfig mc = model_config_from_json(extra.at("model"));
  lg.model = std::make_unique<InsertionModel<Real>>(mc, lg.vocab.size());
  load_checkpoint(checkpoint_path, lg.model->store);
  return lg;
}

PlannedConcepts plan_pair(const PlannerModel<Real>& model, const Vocabulary& vocab,
                          const ConceptGraph& graph, const std::vector<Utterance>& context) {
  return model.plan(make_planner_input(context, vocab, graph));
}

GeneratedResponse generate_response(const InsertionModel<Real>& model, const Vocabulary& vocab,
                                    const std::vector<Utterance>& context,
                                    const std::vector<std::string>& concepts, int max_len,
                                    int max_iters) {
  std::vector<std::vector<int>> ctx_ids;
  for (const auto& u : context) ctx_ids.push_back(vocab.ids(u.tokens));
  const DecodeTrace trace =
      model.decode_parallel(init_from_concepts(vocab.ids(concepts)), ctx_ids, max_len, max_iters);
  GeneratedResponse out;
  for (int id : trace.tokens) out.tokens.push_back(vocab.token(id));
  out.passes = trace.passes;
  out.iterations = trace.iterations;
  return out;
}

}  // namespace congen
