// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "geomm/bootstrap.hpp"
#include "geomm/error.hpp"
#include "geomm/log.hpp"
#include "geomm/manifolds.hpp"
#include "geomm/model.hpp"
#include "geomm/optimizer.hpp"
#include "geomm/pipelines.hpp"
#include "geomm/retrieval.hpp"
#include "support.hpp"

using namespace geomm;
using namespace geomm::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void run(int id, const std::string& name, double time_limit, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto t0 = Clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail << "exception: " << e.what() << "; ";
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (time_limit > 0 && secs > time_limit) {
    out.pass = false;
    out.detail << "runtime " << secs << " s exceeds " << time_limit << " s; ";
  }
  if (!out.pass) ++failures;
  std::printf("%s  %2d  %-34s %8.2fs  %s\n", out.pass ? "PASS" : "FAIL", id, name.c_str(), secs,
              out.detail.str().c_str());
  std::fflush(stdout);
}

double min_eig(const Matrix& b) { return Eigen::SelfAdjointEigenSolver<Matrix>(b).eigenvalues().minCoeff(); }

GeommParams random_params(const std::vector<std::string>& langs, Index d, Rng& rng) {
  std::vector<OrthPoint> u;
  for (std::size_t i = 0; i < langs.size(); ++i) u.emplace_back(random_orthogonal(d, rng));
  return GeommParams(langs, std::move(u), SpdPoint(random_spd(d, rng, 0.1, 10.0)));
}

void gradient_correctness(Outcome& o) {
  Rng rng(101);
  std::uniform_int_distribution<Index> n(5, 60);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const Index d = inst % 2 ? 5 : 10;
    const DictionaryData data = random_dictionary(d, n(rng), n(rng), static_cast<std::size_t>(n(rng)), rng);
    const double lambda = pick_lambda(rng);
    for (ModelVariant v : kAllVariants) {
      const ProductPoint x = random_variant_point(v, d, rng);
      const TangentVector g = variant_egrad(v, x, data, lambda);
      const RawPoint fd = fd_variant_gradient(v, raw(x), data, lambda);
      for (std::size_t i = 0; i < fd.orth.size(); ++i) worst = std::max(worst, rel_error(g.orth[i], fd.orth[i]));
      if (fd.spd.size() > 0) worst = std::max(worst, rel_error(g.spd, fd.spd));
      for (std::size_t i = 0; i < fd.euclid.size(); ++i) worst = std::max(worst, rel_error(g.euclid[i], fd.euclid[i]));
    }
    // Multilingual objective on a three-language path.
    const std::vector<std::string> langs{"a", "b", "c"};
    std::vector<MultilingualEdge> edges{
        {"a", "b", random_dictionary(d, n(rng), n(rng), static_cast<std::size_t>(n(rng)), rng)},
        {"c", "b", random_dictionary(d, n(rng), n(rng), static_cast<std::size_t>(n(rng)), rng)}};
    const GeommParams p = random_params(langs, d, rng);
    std::vector<Matrix> u;
    for (std::size_t i = 0; i < 3; ++i) u.push_back(p.u(i).matrix());
    const Matrix b = p.b().matrix();
    const MultilingualGradient g = multilingual_egrad(p, edges, lambda);
    for (std::size_t i = 0; i < 3; ++i) {
      const Matrix fd = fd_gradient(
          [&](const Matrix& m) {
            auto v = u;
            v[i] = m;
            return dense_multilingual(langs, v, b, edges, 0.0);  // regularizer is constant in U
          },
          u[i]);
      worst = std::max(worst, rel_error(g.u[i], fd));
    }
    const Matrix fb =
        fd_gradient([&](const Matrix& m) { return dense_multilingual(langs, u, m, edges, lambda); }, b, 1e-6, true);
    worst = std::max(worst, rel_error(g.b, fb));
  }
  o.check(worst <= 1e-5, "gradient relative error above 1e-5");
  o.detail << "max rel err " << worst;
}

void factored_cost(Outcome& o) {
  Rng rng(202);
  std::uniform_int_distribution<Index> dd(1, 20), nn(1, 200);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const Index d = dd(rng);
    const DictionaryData data = random_dictionary(d, nn(rng), nn(rng), static_cast<std::size_t>(nn(rng)), rng);
    const Matrix us = random_orthogonal(d, rng), ut = random_orthogonal(d, rng), b = random_spd(d, rng);
    const double lambda = pick_lambda(rng);
    const double ref = dense_bilingual(us, ut, b, data, lambda);
    worst = std::max(worst, std::abs(bilingual_cost(us, ut, b, data, lambda) - ref) / std::abs(ref));
  }
  o.check(worst <= 1e-8, "factored cost differs from dense evaluation");
  o.detail << "max rel diff " << worst;
}

void feasibility_and_descent(Outcome& o) {
  Rng rng(303);
  double worst_orth = 0.0, worst_eig = 1e300;
  int increases = 0;
  for (int run = 0; run < 20; ++run) {
    const Index d = 4 + run % 7;
    const double lambda = pick_lambda(rng);
    Problem problem;
    ProductPoint init;
    std::vector<MultilingualEdge> edges;
    DictionaryData data = random_dictionary(d, 60, 70, 50, rng);
    if (run % 4 == 3) {
      edges.push_back({"a", "b", random_dictionary(d, 40, 50, 30, rng)});
      edges.push_back({"b", "c", random_dictionary(d, 50, 45, 30, rng)});
      problem = make_multilingual_problem({"a", "b", "c"}, edges, lambda);
      init = GeommParams::identity({"a", "b", "c"}, d).to_point();
    } else {
      const ModelVariant v = run % 2 ? ModelVariant::full : ModelVariant::regression_loss;
      problem = make_bilingual_problem(v, data, lambda);
      init = variant_initial_point(v, d);
    }
    SolverOptions opts;
    opts.max_iters = 300;
    double last = std::numeric_limits<double>::infinity();
    opts.on_iterate = [&](int, const ProductPoint& x, double c) {
      for (const auto& u : x.orth) worst_orth = std::max(worst_orth, orthogonality_error(u.matrix()));
      worst_eig = std::min(worst_eig, min_eig(x.spd->matrix()));
      if (c > last) ++increases;
      last = c;
    };
    const SolverReport r = rcg_minimize(problem, init, opts);
    for (std::size_t i = 1; i < r.cost_history.size(); ++i)
      if (r.cost_history[i] > r.cost_history[i - 1]) ++increases;
  }
  o.check(worst_orth <= 1e-10, "orthogonality drift above 1e-10");
  o.check(worst_eig > 0.0, "metric lost positive definiteness");
  o.check(increases == 0, "cost increased");
  o.detail << "max ||U^T U - I|| " << worst_orth << ", min eig(B) " << worst_eig << ", increases " << increases;
}

void planted_bilingual(Outcome& o) {
  // One planted rotation of each orientation.
  Rng rng(404);
  for (const bool reflected : {false, true}) {
    PlantedPair p = planted_pair(50, 500, 400, rng);
    while ((p.q.determinant() < 0) != reflected) p = planted_pair(50, 500, 400, rng);
    const BuiltDictionary built = build_dictionary_data(p.src, p.tgt, p.train);
    const FitResult fit = fit_bilingual(built.data, 10.0, ModelVariant::full, SolverOptions{}, "s", "t");
    const Translator tr = latent_translator(fit.params, "s", "t", p.src, p.tgt);
    const double nn = evaluate_bli(tr, p.test, RetrievalMode::nn).p_at_1;
    const double csls = evaluate_bli(tr, p.test, RetrievalMode::csls).p_at_1;
    o.check(nn == 100.0, "nn P@1 below 100");
    o.check(csls == 100.0, "csls P@1 below 100");
    o.detail << (reflected ? "det(Q)<0" : "det(Q)>0") << ": P@1 nn " << nn << ", csls " << csls << ", iterations "
             << fit.solver.iterations << "; ";
  }
}

void planted_multilingual(Outcome& o) {
  Rng rng(505);
  const Index n = 400;
  const PlantedMulti m = planted_multi(40, n, 3, rng);
  // Overlapping pivot ranges; the disjoint-pivot filter removes the overlap.
  const auto d12 = aligned_pairs(m.emb[0], m.emb[1], 0, 250);
  const auto d23 = aligned_pairs(m.emb[1], m.emb[2], 150, n);
  const auto test = aligned_pairs(m.emb[0], m.emb[2], 0, n);
  const OneHopSetup s{"l1", "l2", "l3", m.emb[0], m.emb[1], m.emb[2], d12, d23, test, true, RetrievalMode::csls};
  TrainConfig c;
  c.lambdas = {10.0};
  const JointResult joint = one_hop_joint(s, c);
  const double cmp = one_hop_composition(BilingualMethod::geomm, s, c).report.p_at_1;
  const double pip = one_hop_pipeline(BilingualMethod::geomm, s, c).report.p_at_1;
  const double cmp_p = one_hop_composition(BilingualMethod::procrustes, s, c).report.p_at_1;
  const double pip_p = one_hop_pipeline(BilingualMethod::procrustes, s, c).report.p_at_1;
  o.check(joint.result.report.p_at_1 == 100.0, "joint P@1 below 100");
  o.detail << "joint P@1 " << joint.result.report.p_at_1 << "; composition geomm " << cmp << " procrustes " << cmp_p
           << "; pipeline geomm " << pip << " procrustes " << pip_p;
}

void csls_oracle(Outcome& o) {
  Rng rng(606);
  double worst_pen = 0.0, worst_score = 0.0;
  for (auto [ns, nt, k] : {std::tuple<Index, Index, int>{500, 450, 10}, {300, 500, 1}, {120, 80, 80}}) {
    const Matrix a = gaussian(30, ns, rng), b = gaussian(30, nt, rng);
    const Translator tr(RetrievalIndex(a, make_vocab("a", ns)), RetrievalIndex(b, make_vocab("b", nt)), k);
    const auto ra = brute_penalties(a, b, k), rb = brute_penalties(b, a, k);
    for (std::size_t i = 0; i < ra.size(); ++i)
      worst_pen = std::max(worst_pen, std::abs(tr.query_index().csls_penalty()[i] - ra[i]));
    for (std::size_t j = 0; j < rb.size(); ++j)
      worst_pen = std::max(worst_pen, std::abs(tr.target_index().csls_penalty()[j] - rb[j]));
    const Matrix na = normalize_columns(a), nb = normalize_columns(b);
    for (Index i = 0; i < ns; ++i)
      for (Index j = 0; j < nt; ++j) {
        const double ref = 2 * na.col(i).dot(nb.col(j)) - ra[static_cast<std::size_t>(i)] -
                           rb[static_cast<std::size_t>(j)];
        worst_score = std::max(worst_score, std::abs(tr.score(i, j, RetrievalMode::csls) - ref));
      }
  }
  o.check(worst_pen <= 1e-12, "penalty mismatch");
  o.check(worst_score <= 1e-12, "score mismatch");
  o.detail << "max |penalty diff| " << worst_pen << ", max |score diff| " << worst_score;
}

void latent_identity(Outcome& o) {
  Rng rng(707);
  double worst_sim = 0.0, worst_sqrt = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index d = 2 + t % 30;
    const GeommParams p = random_params({"s", "t"}, d, rng);
    const Vector x = gaussian(d, 1, rng).col(0), z = gaussian(d, 1, rng).col(0);
    const double lhs = to_latent(p, "t", z).col(0).dot(to_latent(p, "s", x).col(0));
    const double rhs = z.dot(p.u("t").matrix() * p.b().matrix() * p.u("s").matrix().transpose() * x);
    worst_sim = std::max(worst_sim, std::abs(lhs - rhs));
    const SpdPoint b(random_spd(d, rng, 1e-3, 1e3));
    const Matrix r = spd_sqrt(b);
    worst_sqrt = std::max(worst_sqrt, (r * r - b.matrix()).norm() / b.matrix().norm());
  }
  o.check(worst_sim <= 1e-10, "latent inner product differs from bilinear form");
  o.check(worst_sqrt <= 1e-8, "square root error");
  o.detail << "max |latent - bilinear| " << worst_sim << ", max rel ||S^2 - B|| " << worst_sqrt;
}

void bidirectionality(Outcome& o) {
  Rng rng(808);
  double worst_t = 0.0, worst_g = 0.0;
  const std::vector<std::string> langs{"de", "en", "it"};
  for (int t = 0; t < 50; ++t) {
    const Index d = 2 + t % 20;
    const GeommParams p = random_params(langs, d, rng);
    const Matrix r = random_orthogonal(d, rng);
    std::vector<OrthPoint> u;
    for (std::size_t i = 0; i < 3; ++i) u.emplace_back(p.u(i).matrix() * r);
    const GeommParams g(langs, u, SpdPoint(r.transpose() * p.b().matrix() * r));
    for (const auto& a : langs)
      for (const auto& b : langs) {
        if (a == b) continue;
        const Matrix w = compose_transform(p, a, b);
        worst_t = std::max(worst_t, (w - compose_transform(p, b, a).transpose()).cwiseAbs().maxCoeff());
        worst_g = std::max(worst_g, (w - compose_transform(g, a, b)).cwiseAbs().maxCoeff());
      }
  }
  o.check(worst_t <= 1e-12, "transpose identity");
  o.check(worst_g <= 1e-10, "gauge invariance");
  o.detail << "max transpose diff " << worst_t << ", max gauge diff " << worst_g;
}

void procrustes_baseline(Outcome& o) {
  Rng rng(909);
  const Matrix xs = random_unit_columns(30, 200, rng);
  const Matrix q = random_orthogonal(30, rng);
  const double rec = (procrustes_fit(xs, q * xs).w - q).norm();
  o.check(rec <= 1e-6, "planted rotation not recovered");

  const PlantedPair p = planted_pair(50, 500, 400, rng, 0.05);
  const BuiltDictionary built = build_dictionary_data(p.src, p.tgt, p.train);
  const FitResult fit = fit_bilingual(built.data, 10.0, ModelVariant::full, SolverOptions{}, "s", "t");
  const double geomm = evaluate_bli(latent_translator(fit.params, "s", "t", p.src, p.tgt), p.test, RetrievalMode::csls).p_at_1;
  Matrix ps(50, 400), pt(50, 400);
  for (Index i = 0; i < 400; ++i) {
    ps.col(i) = p.src.vectors().col(i);
    pt.col(i) = p.tgt.vectors().col(i);
  }
  const Matrix w = procrustes_fit(ps, pt).w;
  const double proc = evaluate_bli(target_space_translator(w, p.src, p.tgt), p.test, RetrievalMode::csls).p_at_1;
  o.check(geomm >= proc, "GeoMM below Procrustes on the noisy fixture");
  o.detail << "||W - Q|| " << rec << "; noisy held-out P@1 geomm " << geomm << ", procrustes " << proc;
}

void bootstrap_property(Outcome& o) {
  Rng rng(1010);
  const PlantedPair p = planted_pair(20, 400, 20, rng, 1.0, 0.1);
  BootstrapConfig c;
  c.train.lambdas = {10.0};
  c.vocab_cutoff = 400;
  c.max_rounds = 10;
  c.patience = 2;
  const BootstrapResult r = bootstrap_train(p.src, p.tgt, p.train, c, "s", "t");
  const double seed_only = r.report.rounds.front().val_p1;
  double best = -1;
  for (const auto& round : r.report.rounds) best = std::max(best, round.val_p1);
  const PairSplit split = split_pairs(p.train, c.validation_fraction, c.train.seed);
  const double returned = validation_p1(r.params, "s", "t", p.src, p.tgt, split.validation, c.train);
  o.check(r.report.best_val_p1 >= seed_only, "final below seed-only");
  o.check(returned == best, "returned params are not the validation-best round");
  const double test_p1 =
      evaluate_bli(latent_translator(r.params, "s", "t", p.src, p.tgt), p.test, RetrievalMode::csls).p_at_1;
  o.detail << "seed-only val P@1 " << seed_only << ", final " << r.report.best_val_p1 << " (round "
           << r.report.best_round << " of " << r.report.rounds.size() - 1 << "), held-out P@1 " << test_p1;
}

}  // namespace

int main() {
  ScopedWarningSink quiet([](std::string_view) {});
  std::printf("status id  criterion                          runtime   detail\n");
  run(1, "gradient correctness", 30, gradient_correctness);
  run(2, "factored cost equivalence", 10, factored_cost);
  run(3, "manifold feasibility and descent", 0, feasibility_and_descent);
  run(4, "planted rotation recovery", 60, planted_bilingual);
  run(5, "planted multilingual one-hop", 120, planted_multilingual);
  run(6, "CSLS oracle", 0, csls_oracle);
  run(7, "latent identity", 0, latent_identity);
  run(8, "bidirectionality and gauge", 0, bidirectionality);
  run(9, "Procrustes baseline", 0, procrustes_baseline);
  run(10, "bootstrap property", 0, bootstrap_property);
  std::printf("SKIP  11  full-scale VecMap reproduction      manual: tools/reproduce_vecmap.sh\n");
  std::printf("%s: %d of 10 automated criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
