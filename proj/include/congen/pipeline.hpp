#ifndef CONGEN_PIPELINE_HPP
#define CONGEN_PIPELINE_HPP

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "congen/checkpoint.hpp"
#include "congen/config.hpp"
#include "congen/eval.hpp"
#include "congen/insertion.hpp"
#include "congen/planner.hpp"

namespace congen {

// CLI-facing training and decoding drivers, float instantiation.
using Real = float;

struct TrainStats {
  long steps_done = 0;
  double final_train_loss = 0.0;
  double min_train_loss = 0.0;
  double best_valid_loss = 0.0;
  std::string last_checkpoint;
  std::string best_checkpoint;
  int skipped_pairs = 0;  // gold concepts unreachable from their subgraphs
  bool diverged = false;
};

TrainStats train_planner(const RunConfig& cfg, const std::vector<DialogueSession>& train_sessions,
                         const std::vector<DialogueSession>& valid_sessions,
                         const ConceptGraph& graph, const std::string& out_dir,
                         std::ostream& log, const std::string& resume_from = "");

TrainStats train_generator(const RunConfig& cfg,
                           const std::vector<DialogueSession>& train_sessions,
                           const std::vector<DialogueSession>& valid_sessions,
                           const ConceptGraph& graph, const std::string& out_dir,
                           std::ostream& log, const std::string& resume_from = "");

struct LoadedPlanner {
  std::unique_ptr<PlannerModel<Real>> model;
  Vocabulary vocab;
};

struct LoadedGenerator {
  std::unique_ptr<InsertionModel<Real>> model;
  Vocabulary vocab;
};

LoadedPlanner load_planner(const std::string& checkpoint_path, const ConceptGraph& graph);
LoadedGenerator load_generator(const std::string& checkpoint_path);

// ordered concept tokens for a pair, greedy-planned
PlannedConcepts plan_pair(const PlannerModel<Real>& model, const Vocabulary& vocab,
                          const ConceptGraph& graph, const std::vector<Utterance>& context);

struct GeneratedResponse {
  std::vector<std::string> tokens;
  long passes = 0;
  std::vector<IterationTrace> iterations;
};

GeneratedResponse generate_response(const InsertionModel<Real>& model, const Vocabulary& vocab,
                                    const std::vector<Utterance>& context,
                                    const std::vector<std::string>& concepts, int max_len,
                                    int max_iters);

}  // namespace congen

#endif  // CONGEN_PIPELINE_HPP
