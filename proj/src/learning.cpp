#include "tkgpath/learning.hpp"

#include <Eigen/Dense>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace tkgpath {

void TrainConfig::validate_config() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (n_negatives < 1) fail("n_negatives must be >= 1");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
  if (max_epochs < 0) fail("max_epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (history_length < 1) fail("history_length must be >= 1");
  if (!(alpha >= 0)) fail("alpha must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) fail("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) fail("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be > 0");
  if (!(grad_clip >= 0)) fail("grad_clip must be >= 0");
  if (threads < 0) fail("threads must be >= 0");
}

Var score_logits(ParamBinder& bind, const Model& model, Var h, Var query_rel_vec) {
  Tape& tape = bind.tape();
  const ScoreHead& head = model.head;
  Var rb = grad::matmul(tape.constant(Matrix(h.rows(), 1, 1.0)), query_rel_vec);
  const Var parts[2] = {h, rb};
  Var x = grad::concat_cols(parts);
  Var y = grad::add(grad::matmul(x, bind(head.W1)), bind(head.b1));
  if (model.config().score_hidden <= 0) return y;
  return grad::add(grad::matmul(grad::relu(y), bind(head.W2)), bind(head.b2));
}

Var score(ParamBinder& bind, const Model& model, Var h, Var query_rel_vec) {
  return grad::sigmoid(score_logits(bind, model, h, query_rel_vec));
}

std::vector<double> score_all(const Model& model, const HistoryTemporalGraph& g,
                              const PathQuery& query) {
  Tape tape;
  ParamBinder bind(tape, false);
  const PropagationResult res = propagate(bind, model, g, query);
  const std::span<const double> p = score(bind, model, res.state, res.query_rel_vec).value().values();
  return {p.begin(), p.end()};
}

std::vector<Quadruple> sample_negatives(const Quadruple& positive, std::int32_t num_entities,
                                        int n, std::mt19937_64& rng) {
  if (num_entities < 2) throw DataError("negative sampling needs at least 2 entities");
  if (n < 0) throw std::invalid_argument("sample_negatives: n < 0");
  std::uniform_int_distribution<std::int32_t> pick(0, num_entities - 2);
  std::vector<Quadruple> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    EntityId o = pick(rng);
    if (o >= positive.object) ++o;
    out.push_back({positive.subject, positive.relation, o, positive.timestamp});
  }
  return out;
}

std::vector<Quadruple> sample_negatives(const Quadruple& positive, std::int32_t num_entities,
                                        int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_negatives(positive, num_entities, n, rng);
}

Var loss_tkg(Var p_pos, Var p_negs) {
  Var lp = grad::log(grad::clamp(p_pos, kProbClamp, 1.0));
  Var ln = grad::log(grad::clamp(grad::add_scalar(grad::scale(p_negs, -1.0), 1.0), kProbClamp, 1.0));
  return grad::sub(grad::scale(grad::sum(lp), -1.0), grad::mean(ln));
}

double loss_tkg(double p_pos, std::span<const double> p_negs) {
  double neg = 0.0;
  for (double p : p_negs) neg += std::log(std::clamp(1.0 - p, kProbClamp, 1.0));
  if (!p_negs.empty()) neg /= static_cast<double>(p_negs.size());
  return -std::log(std::clamp(p_pos, kProbClamp, 1.0)) - neg;
}

namespace {

using EMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CEMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

Matrix reg_residual(const Matrix& R, double alpha) {
  CEMap r(R.data(), static_cast<long>(R.rows()), static_cast<long>(R.cols()));
  Matrix M(R.cols(), R.cols());
  EMap m(M.data(), static_cast<long>(M.rows()), static_cast<long>(M.cols()));
  m.noalias() = r.transpose() * r;
  m.diagonal().array() -= alpha;
  return M;
}

double frobenius(const Matrix& M) {
  double s = 0.0;
  for (double v : M.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

double loss_reg(const Matrix& R, double alpha) { return frobenius(reg_residual(R, alpha)); }

// d||M||/dR = 2 R M / ||M||, taken as zero at M = 0.
Var loss_reg(ParamBinder& bind, const Model& model, double alpha) {
  Var r = bind(model.R);
  Tape& tape = bind.tape();
  const Matrix M = reg_residual(r.value(), alpha);
  const double f = frobenius(M);
  const bool rg = tape.requires_grad(r);
  return tape.record(Matrix(1, 1, f), rg, [r, M, f](Tape& t, const Matrix& g) {
    if (!(f > 0)) return;
    const Matrix& Rv = t.value(r);
    Matrix dR(Rv.rows(), Rv.cols());
    CEMap rm(Rv.data(), static_cast<long>(Rv.rows()), static_cast<long>(Rv.cols()));
    CEMap mm(M.data(), static_cast<long>(M.rows()), static_cast<long>(M.cols()));
    EMap dm(dR.data(), static_cast<long>(dR.rows()), static_cast<long>(dR.cols()));
    dm.noalias() = (2.0 * g(0, 0) / f) * (rm * mm);
    t.accumulate(r, dR);
  });
}

Var group_loss(ParamBinder& bind, const Model& model, const HistoryTemporalGraph& g,
               const QueryGroup& group, const std::vector<std::vector<EntityId>>& negatives) {
  if (negatives.size() != group.answers.size())
    throw std::invalid_argument("group_loss: one negative list per answer required");
  const PropagationResult res =
      propagate(bind, model, g, {group.subject, group.relation, group.time});
  Var probs = score(bind, model, res.state, res.query_rel_vec);
  std::vector<int> pos(group.answers.begin(), group.answers.end());
  std::vector<int> neg;
  std::size_t n = 0;
  for (const auto& list : negatives) {
    if (n != 0 && list.size() != n)
      throw std::invalid_argument("group_loss: negative lists differ in length");
    n = list.size();
    neg.insert(neg.end(), list.begin(), list.end());
  }
  Var lp = grad::log(grad::clamp(grad::gather_rows(probs, pos), kProbClamp, 1.0));
  Var total = grad::scale(grad::sum(lp), -1.0);
  if (n == 0) return total;
  Var pn = grad::gather_rows(probs, neg);
  Var ln = grad::log(grad::clamp(grad::add_scalar(grad::scale(pn, -1.0), 1.0), kProbClamp, 1.0));
  return grad::sub(total, grad::scale(grad::sum(ln), 1.0 / static_cast<double>(n)));
}

Adam::Adam(const Model& model, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Matrix* p : model.parameter_values()) {
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

void Adam::step(Model& model, const Gradients& grads) {
  auto params = model.parameters();
  if (params.size() != m_.size() || grads.blocks().size() != m_.size())
    throw std::invalid_argument("Adam::step: parameter layout mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> p = params[i].value->values();
    std::span<const double> g = grads.blocks()[i].values();
    std::span<double> m = m_[i].values();
    std::span<double> v = v_[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double batch_loss(const Model& model, const PreparedBatch& batch,
                  const std::vector<std::vector<std::vector<EntityId>>>& negatives,
                  const TrainConfig& cfg, Gradients* grads, double* tkg_part,
                  double* reg_part) {
  if (batch.graph == nullptr) throw std::invalid_argument("batch_loss: batch has no graph");
  if (negatives.size() != batch.groups.size())
    throw std::invalid_argument("batch_loss: one negative set per group required");
  std::size_t positives = 0;
  for (const QueryGroup& g : batch.groups) positives += g.answers.size();
  const double inv = positives > 0 ? 1.0 / static_cast<double>(positives) : 0.0;
  const long num_groups = static_cast<long>(batch.groups.size());
  const bool want_grad = grads != nullptr;

  auto run_group = [&](long i, Gradients* acc) {
    Tape tape;
    ParamBinder bind(tape, want_grad);
    const auto k = static_cast<std::size_t>(i);
    Var loss = group_loss(bind, model, *batch.graph, batch.groups[k], negatives[k]);
    if (acc != nullptr) {
      tape.backward(loss);
      acc->add_from(model, bind, inv);
    }
    return loss.value()(0, 0);
  };

  double tkg_sum = 0.0;
  if (cfg.threads == 1 || num_groups <= 1) {
    for (long i = 0; i < num_groups; ++i) tkg_sum += run_group(i, grads);
  } else {
    const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
    std::vector<Gradients> local(static_cast<std::size_t>(threads));
    std::vector<double> sums(static_cast<std::size_t>(threads), 0.0);
    std::exception_ptr error;
#pragma omp parallel num_threads(threads)
    {
      const auto tid = static_cast<std::size_t>(omp_get_thread_num());
      if (want_grad) local[tid] = Gradients(model);
#pragma omp for schedule(static)
      for (long i = 0; i < num_groups; ++i) {
        try {
          sums[tid] += run_group(i, want_grad ? &local[tid] : nullptr);
        } catch (...) {
#pragma omp critical
          if (!error) error = std::current_exception();
        }
      }
    }
    if (error) std::rethrow_exception(error);
    for (std::size_t t = 0; t < local.size(); ++t) {
      tkg_sum += sums[t];
      if (want_grad) grads->add(local[t]);
    }
  }
  const double tkg = tkg_sum * inv;

  double reg = 0.0;
  if (cfg.use_reg) {
    Tape tape;
    ParamBinder bind(tape, want_grad);
    Var l = loss_reg(bind, model, cfg.alpha);
    reg = l.value()(0, 0);
    if (want_grad) {
      tape.backward(l);
      grads->add_from(model, bind, 1.0);
    }
  }
  if (tkg_part != nullptr) *tkg_part = tkg;
  if (reg_part != nullptr) *reg_part = reg;
  return tkg + reg;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix(splitmix(splitmix(splitmix(seed) ^ a) ^ b) ^ c);
}

struct TrainBatch {
  std::size_t graph = 0;
  std::vector<QueryGroup> groups;
};

}  // namespace

TrainResult train(const DatasetSplit& split, Model& model, const TrainConfig& cfg,
                  std::ostream* log) {
  cfg.validate_config();
  const SnapshotSequence& train_seq = split.train;
  if (train_seq.num_relations() != model.config().num_relations)
    throw ConfigError("model has " + std::to_string(model.config().num_relations) +
                      " relations, data has " + std::to_string(train_seq.num_relations()));
  const std::int32_t num_entities = train_seq.num_entities();

  TrainResult result;
  std::vector<HistoryTemporalGraph> graphs;
  std::vector<TrainBatch> batches;
  for (const Snapshot& snap : train_seq.snapshots()) {
    std::vector<QueryGroup> groups = group_queries(snap);
    const auto window = history_window(train_seq, snap.timestamp, cfg.history_length);
    if (window.empty()) {
      for (const QueryGroup& g : groups) result.skipped_queries += g.answers.size();
      continue;
    }
    graphs.push_back(HistoryTemporalGraph::build(window, num_entities, snap.timestamp));
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t i = 0; i < groups.size(); i += bs) {
      TrainBatch b;
      b.graph = graphs.size() - 1;
      for (std::size_t j = i; j < std::min(groups.size(), i + bs); ++j)
        b.groups.push_back(std::move(groups[j]));
      batches.push_back(std::move(b));
    }
  }
  if (log != nullptr && result.skipped_queries > 0)
    *log << "warning: skipped " << result.skipped_queries
         << " training queries with empty history\n";

  const SnapshotSequence history = split.merged();
  const EvalConfig eval_cfg{cfg.history_length, cfg.threads, cfg.tie_rule};
  Adam opt(model, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Model best = model;
  std::vector<std::size_t> order(batches.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(stream_seed(cfg.seed, 1, static_cast<std::uint64_t>(epoch), 0));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochStats stats;
    stats.epoch = epoch;
    double tkg_weighted = 0.0;
    double reg_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const TrainBatch& tb = batches[order[step]];
      PreparedBatch pb{&graphs[tb.graph], tb.groups};
      std::vector<std::vector<std::vector<EntityId>>> negatives(tb.groups.size());
      std::size_t batch_pos = 0;
      for (std::size_t gi = 0; gi < tb.groups.size(); ++gi) {
        const QueryGroup& g = tb.groups[gi];
        std::mt19937_64 rng(stream_seed(cfg.seed, 2 + static_cast<std::uint64_t>(epoch),
                                        order[step], gi));
        for (EntityId o : g.answers) {
          std::vector<EntityId> objs;
          for (const Quadruple& q :
               sample_negatives({g.subject, g.relation, o, g.time}, num_entities,
                                cfg.n_negatives, rng))
            objs.push_back(q.object);
          negatives[gi].push_back(std::move(objs));
        }
        batch_pos += g.answers.size();
      }
      Gradients grads(model);
      double tkg = 0.0;
      double reg = 0.0;
      batch_loss(model, pb, negatives, cfg, &grads, &tkg, &reg);
      if (cfg.grad_clip > 0) {
        const double norm = grads.global_norm();
        if (norm > cfg.grad_clip) grads.scale(cfg.grad_clip / norm);
      }
      opt.step(model, grads);
      tkg_weighted += tkg * static_cast<double>(batch_pos);
      positives += batch_pos;
      reg_sum += reg;
      ++stats.steps;
    }
    stats.loss_tkg = positives > 0 ? tkg_weighted / static_cast<double>(positives) : 0.0;
    stats.loss_reg = stats.steps > 0 ? reg_sum / static_cast<double>(stats.steps) : 0.0;
    stats.loss_total = stats.loss_tkg + stats.loss_reg;
    if (cfg.validate && !split.valid.empty()) {
      const auto ranks = evaluate(model, history, split.valid, eval_cfg);
      stats.valid_mrr = ranks.empty() ? 0.0 : metrics(ranks).mrr;
    }
    if (!cfg.validate || split.valid.empty() || stats.valid_mrr > result.best_valid_mrr) {
      result.best_valid_mrr = stats.valid_mrr;
      result.best_epoch = epoch;
      best = model;
    }
    result.epochs.push_back(stats);
    if (log != nullptr) {
      *log << std::setprecision(10) << "epoch " << epoch << " L_TKG " << stats.loss_tkg
           << " L_REG " << stats.loss_reg << " L " << stats.loss_total << " valid_mrr "
           << stats.valid_mrr << "\n";
      log->flush();
    }
  }
  if (cfg.max_epochs > 0) model = std::move(best);
  return result;
}

}  // namespace tkgpath
