#include "doctest.h"
#include "support.hpp"

#include "tkgpath/learning.hpp"
#include "tkgpath/relation_encoding.hpp"

#include <cmath>

using namespace tkgpath;
using namespace tkgpath::encoding;

namespace {

ModelConfig small_config(int dim = 4, std::int32_t relations = 4) {
  ModelConfig mc;
  mc.num_relations = relations;
  mc.dim = dim;
  mc.score_hidden = dim;
  mc.prop.omega = 2;
  return mc;
}

Matrix eval(const std::function<Var(ParamBinder&)>& f) {
  Tape tape;
  ParamBinder bind(tape, false);
  return f(bind).value();
}

}  // namespace

TEST_CASE("identity W_p and zero bias return the query vector") {
  Model m = Model::create(small_config(), 1);
  const std::size_t d = 4;
  Matrix& W = m.edge_layers[0].W;
  W.fill(0.0);
  for (std::size_t i = 0; i < d; ++i) W(2 * d + i, i) = 1.0;
  const Matrix qv = Matrix::row({0.3, -1.0, 2.0, 0.5});
  const Matrix out = eval([&](ParamBinder& b) {
    return static_component(b, m, 0, 2, b.tape().constant(qv));
  });
  CHECK(out == qv);
}

TEST_CASE("zero W_p returns the bias whatever the query") {
  Model m = Model::create(small_config(), 2);
  m.edge_layers[1].W.fill(0.0);
  for (std::size_t i = 0; i < 4; ++i) m.edge_layers[1].b(3, i) = 0.25 * static_cast<double>(i);
  for (const Matrix& qv : {Matrix::row({1, 2, 3, 4}), Matrix::row({-5, 0, 0, 9})}) {
    const Matrix out = eval([&](ParamBinder& b) {
      return static_component(b, m, 1, 3, b.tape().constant(qv));
    });
    CHECK(out == Matrix::row({0.0, 0.25, 0.5, 0.75}));
  }
}

TEST_CASE("gradient of the static component sum is the column sums of W_p") {
  const Model m = Model::create(small_config(), 3);
  const auto f = [&](Tape& t, Var qv) {
    ParamBinder b(t, false);
    return grad::sum(static_component(b, m, 0, 1, qv));
  };
  CHECK(grad::finite_diff_check(f, Matrix::row({0.1, 0.2, -0.3, 0.4})).passed);
  Tape tape;
  ParamBinder bind(tape, false);
  Var qv = tape.variable(Matrix::row({0.1, 0.2, -0.3, 0.4}));
  tape.backward(grad::sum(static_component(bind, m, 0, 1, qv)));
  const Matrix g = tape.grad(qv);
  for (std::size_t j = 0; j < 4; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < 4; ++i) col += m.edge_layers[0].W(4 + i, j);
    CHECK(g(0, j) == doctest::Approx(col).epsilon(1e-14));
  }
}

TEST_CASE("unknown relation ids are rejected") {
  const Model m = Model::create(small_config(), 4);
  CHECK_THROWS_AS(eval([&](ParamBinder& b) {
                    return static_component(b, m, 0, 4, b.tape().constant(Matrix(1, 4)));
                  }),
                  std::out_of_range);
  CHECK_THROWS_AS(eval([&](ParamBinder& b) { return relation_vector(b, m, -1); }),
                  std::out_of_range);
  CHECK_THROWS_AS(eval([&](ParamBinder& b) { return time_component(b, m, 0, 0, -1.0); }),
                  std::invalid_argument);
}

TEST_CASE("time component at zero distance with zero phase is sqrt(1/d)") {
  const Model m = Model::create(small_config(64, 4), 5);
  const Matrix out = eval([&](ParamBinder& b) { return time_component(b, m, 0, 1, 0.0); });
  REQUIRE(out.cols() == 64);
  for (double v : out.values()) CHECK(v == doctest::Approx(std::sqrt(1.0 / 64.0)));
}

TEST_CASE("time components are bounded by sqrt(1/d)") {
  Model m = Model::create(small_config(8, 4), 6);
  testing::jitter(m, 1.0, 6);
  for (double dt : {0.0, 1.0, 3.5, 17.0, 250.0}) {
    const Matrix out = eval([&](ParamBinder& b) { return time_component(b, m, 1, 2, dt); });
    for (double v : out.values()) CHECK(std::abs(v) <= std::sqrt(1.0 / 8.0) + 1e-15);
  }
}

TEST_CASE("projection onto the first half of g returns Psi") {
  ModelConfig mc = small_config();
  mc.enc.edge_activation = Activation::kNone;
  Model m = Model::create(mc, 7);
  EdgeLayerParams& p = m.edge_layers[0];
  p.g_W.fill(0.0);
  for (std::size_t i = 0; i < 4; ++i) p.g_W(i, i) = 1.0;
  const TemporalEdge e{0, 2, 1, 3};
  const Matrix qv = Matrix::row({0.5, -0.2, 0.1, 0.9});
  const Matrix w = eval([&](ParamBinder& b) {
    return edge_repr(b, m, 0, e, b.tape().constant(qv), 5);
  });
  const Matrix psi = eval([&](ParamBinder& b) {
    return static_component(b, m, 0, 2, b.tape().constant(qv));
  });
  CHECK(w == psi);
}

TEST_CASE("edges differing only in time get different vectors") {
  ModelConfig mc = small_config();
  mc.enc.edge_activation = Activation::kNone;
  Model m = Model::create(mc, 8);
  // Distinct irrational-ish frequencies rule out cosine collisions at dt 1 vs 2.
  for (std::size_t i = 0; i < 4; ++i) m.edge_layers[0].time_w(0, i) = 0.37 + 0.21 * static_cast<double>(i);
  const Matrix qv = Matrix::row({0.5, -0.2, 0.1, 0.9});
  auto rep = [&](TimeId tau) {
    return eval([&](ParamBinder& b) {
      return edge_repr(b, m, 0, {0, 1, 2, tau}, b.tape().constant(qv), 5);
    });
  };
  CHECK(testing::max_abs_diff(rep(4), rep(3)) > 1e-6);
}

TEST_CASE("without the temporal encoder edge vectors depend only on Psi") {
  ModelConfig mc = small_config();
  mc.enc.use_time_encoding = false;
  Model m = Model::create(mc, 9);
  const Matrix qv = Matrix::row({0.5, -0.2, 0.1, 0.9});
  auto rep = [&](TimeId tau) {
    return eval([&](ParamBinder& b) {
      return edge_repr(b, m, 1, {0, 1, 2, tau}, b.tape().constant(qv), 9);
    });
  };
  CHECK(rep(0) == rep(8));
}

TEST_CASE("edge vectors are query-aware") {
  Model m = Model::create(small_config(), 10);
  testing::jitter(m, 0.1, 10);
  const TemporalEdge e{0, 1, 2, 3};
  auto rep = [&](RelationId qr) {
    return eval([&](ParamBinder& b) {
      return edge_repr(b, m, 0, e, relation_vector(b, m, qr), 4);
    });
  };
  CHECK(testing::max_abs_diff(rep(0), rep(3)) > 1e-9);
}

TEST_CASE("per-relation time parameters initialized alike equal the shared mode") {
  ModelConfig shared = small_config();
  ModelConfig per = shared;
  per.enc.time_sharing = TimeSharing::kPerRelation;
  Model a = Model::create(shared, 11);
  Model b = Model::create(per, 11);
  b.R = a.R;
  for (std::size_t l = 0; l < a.edge_layers.size(); ++l) {
    EdgeLayerParams& pa = a.edge_layers[l];
    EdgeLayerParams& pb = b.edge_layers[l];
    pb.W = pa.W;
    pb.b = pa.b;
    pb.g_W = pa.g_W;
    pb.g_b = pa.g_b;
    REQUIRE(pb.time_w.rows() == 4);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        pb.time_w(r, c) = pa.time_w(0, c);
        pb.time_phi(r, c) = pa.time_phi(0, c);
      }
  }
  b.agg_layers = a.agg_layers;
  b.head = a.head;
  const HistoryTemporalGraph g = testing::random_graph(6, 4, 20, 5, 11);
  for (EntityId s = 0; s < 6; ++s) {
    const PathQuery q{s, static_cast<RelationId>(s % 4), 5};
    CHECK(score_all(a, g, q) == score_all(b, g, q));
  }
}

TEST_CASE("rows of r and inv(r) are independent parameters") {
  ModelConfig mc = small_config();
  mc.prop.omega = 1;
  Model m = Model::create(mc, 12);
  const HistoryTemporalGraph g =
      HistoryTemporalGraph::from_edges({{0, 0, 1, 0}, {1, 0, 2, 1}}, 3, 2);
  QueryGroup grp{0, 0, 2, {2}};
  Tape tape;
  ParamBinder bind(tape, true);
  Var loss = group_loss(bind, m, g, grp, {{1}});
  tape.backward(loss);
  Gradients grads(m);
  grads.add_from(m, bind);
  const Matrix& gR = grads.blocks()[0];
  double row0 = 0.0, row2 = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    row0 += std::abs(gR(0, c));
    row2 += std::abs(gR(2, c));
  }
  CHECK(row0 > 0.0);
  CHECK(row2 == 0.0);
}

TEST_CASE("type-batched edge vectors equal per-edge evaluation") {
  Model m = Model::create(small_config(), 13);
  testing::jitter(m, 0.1, 13);
  const HistoryTemporalGraph g = testing::random_graph(6, 4, 30, 7, 13);
  const EdgeTypeTable types = edge_types(g);
  Tape tape;
  ParamBinder bind(tape, false);
  Var qv = relation_vector(bind, m, 1);
  const Matrix all = edge_reprs(bind, m, 1, types, qv).value();
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    const Matrix one = edge_repr(bind, m, 1, g.edges()[i], qv, g.query_time()).value();
    for (std::size_t c = 0; c < 4; ++c) CHECK(all(i, c) == doctest::Approx(one(0, c)).epsilon(1e-14));
  }
}

TEST_CASE("initialization follows the documented ranges") {
  ModelConfig mc = small_config(8, 6);
  const Model m = Model::create(mc, 14);
  const double a = std::sqrt(6.0 / (6 + 8));
  for (double v : m.R.values()) CHECK(std::abs(v) <= a);
  for (const EdgeLayerParams& p : m.edge_layers) {
    for (double v : p.time_w.values()) CHECK((v >= 0.0 && v <= 1.0));
    for (double v : p.time_phi.values()) CHECK(v == 0.0);
  }
  CHECK(m.edge_layers.size() == 2);
}

TEST_CASE("checkpoints round-trip every parameter") {
  testing::TempDir dir("enc");
  ModelConfig mc = small_config();
  mc.prop.aggregator = Aggregator::kMax;
  mc.enc.time_sharing = TimeSharing::kPerRelation;
  Model m = Model::create(mc, 15);
  testing::jitter(m, 0.3, 15);
  m.save(dir / "m.ckpt");
  Model back = Model::load(dir / "m.ckpt");
  auto a = m.parameters();
  auto b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(*a[i].value == *b[i].value);
  }
  CHECK(back.config().prop.aggregator == Aggregator::kMax);
  CHECK(back.config().enc.time_sharing == TimeSharing::kPerRelation);
  testing::write_text(dir / "bad.ckpt", "not a checkpoint\n");
  CHECK_THROWS(Model::load(dir / "bad.ckpt"));
}
