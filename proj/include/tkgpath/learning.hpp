#pragma once

// Scoring, the training objective and the optimizer loop.
//   p(o | s, r) = sigmoid(F(h_o || r))
//   L_TKG = -log p_pos - (1/n) sum_j log(1 - p_neg_j)
//   L_REG = || R^T R - alpha I ||_F
//   L     = L_TKG + L_REG

#include "tkgpath/evaluation.hpp"
#include "tkgpath/history_graph.hpp"
#include "tkgpath/model.hpp"
#include "tkgpath/path_engine.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

namespace tkgpath {

inline constexpr double kProbClamp = 1e-12;

struct TrainConfig {
  int n_negatives = 64;
  double alpha = 1.0;
  double learning_rate = 5e-4;
  int max_epochs = 20;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global-norm clipping threshold; 0 disables.
  double grad_clip = 0.0;
  /// Query groups (one propagation each) per optimizer step.
  int batch_size = 8;
  int history_length = 25;
  int threads = 0;
  bool use_reg = true;
  /// Evaluate on the validation split after every epoch.
  bool validate = true;
  TieRule tie_rule = TieRule::kMean;

  void validate_config() const;
};

/// sigmoid(F([h || r])) for each row of h (rows x 1); r is 1 x d.
Var score(ParamBinder& bind, const Model& model, Var h, Var query_rel_vec);
Var score_logits(ParamBinder& bind, const Model& model, Var h, Var query_rel_vec);

/// Forward-only probability of every entity as the object of `query`.
std::vector<double> score_all(const Model& model, const HistoryTemporalGraph& g,
                              const PathQuery& query);

/// n corrupted quadruples replacing the object by a uniformly drawn different
/// entity (same subject, relation, timestamp).
std::vector<Quadruple> sample_negatives(const Quadruple& positive, std::int32_t num_entities,
                                        int n, std::mt19937_64& rng);
std::vector<Quadruple> sample_negatives(const Quadruple& positive, std::int32_t num_entities,
                                        int n, std::uint64_t seed);

Var loss_tkg(Var p_pos, Var p_negs);
double loss_tkg(double p_pos, std::span<const double> p_negs);

Var loss_reg(ParamBinder& bind, const Model& model, double alpha);
double loss_reg(const Matrix& R, double alpha);

/// Sum over answers of L_TKG for one query group, recorded on bind's tape.
/// negatives[i] lists the corrupted objects for answers[i].
Var group_loss(ParamBinder& bind, const Model& model, const HistoryTemporalGraph& g,
               const QueryGroup& group, const std::vector<std::vector<EntityId>>& negatives);

class Adam {
 public:
  Adam(const Model& model, double lr, double beta1, double beta2, double eps);
  void step(Model& model, const Gradients& grads);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct EpochStats {
  int epoch = 0;
  double loss_tkg = 0.0;  // mean over positives
  double loss_reg = 0.0;  // mean over steps
  double loss_total = 0.0;
  double valid_mrr = 0.0;
  std::size_t steps = 0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_valid_mrr = -1.0;
  std::size_t skipped_queries = 0;  // empty history
};

/// One training step's ingredients, exposed for audits and gradient checks.
struct PreparedBatch {
  const HistoryTemporalGraph* graph = nullptr;
  std::vector<QueryGroup> groups;
};

/// Total loss (sum of per-positive L_TKG divided by positives, plus L_REG) of
/// one batch with fixed negatives; fills grads when non-null.
double batch_loss(const Model& model, const PreparedBatch& batch,
                  const std::vector<std::vector<std::vector<EntityId>>>& negatives,
                  const TrainConfig& cfg, Gradients* grads, double* tkg_part = nullptr,
                  double* reg_part = nullptr);

/// Trains `model` in place and leaves it at the best-validation checkpoint.
/// Writes one line per epoch to `log` when given.
TrainResult train(const DatasetSplit& split, Model& model, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

}  // namespace tkgpath
