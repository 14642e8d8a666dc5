// Acceptance suite: prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to run
// a subset, e.g. `cgir_acceptance 1 4`.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "cgir/experiment.hpp"
#include "cgir/trainer.hpp"
#include "support/model_gradcheck.hpp"
#include "support/oracles.hpp"

using namespace cgir;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::kPass : Status::kFail, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr double kTol = 1e-4;
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, double err) { worst[name] = std::max(worst[name], err); };

  // Central differences are only meaningful where the objective is smooth
  // over the stencil. Candidate instances whose ReLU pre-activations (encoder
  // hidden layer, discriminator hidden layer) lie within kKinkMargin of zero
  // are skipped and reported; the first five smooth instances are checked.
  constexpr double kKinkMargin = 1e-2;
  std::vector<std::uint64_t> skipped, used;
  for (std::uint64_t seed = 0; used.size() < 5 && seed < 200; ++seed) {
    // n=12, d=5, d_hat=3, m=3, c=2, L=2; hidden widths 8.
    SbmParams sp;
    sp.nodes = 12;
    sp.classes = 2;
    sp.p_in = 0.5;
    sp.p_out = 0.1;
    sp.attr_dim = 5;
    sp.separation = 3.0;
    sp.seed = seed;
    const AttributeGraph g = generate_sbm(sp);
    const MissingMask mask = make_missing_mask(12, 0.25, seed);
    TrainConfig cfg;
    cfg.embed_dim = 3;
    cfg.subclusters = 3;
    cfg.ean_layers = 2;
    cfg.gcn_hidden = {8};
    cfg.disc_hidden = 8;
    cfg.seed = seed;
    const TrainingProblem problem = TrainingProblem::build(g, mask, cfg);
    ModelShape shape;
    shape.input_dim = 5;
    shape.gcn_hidden = cfg.gcn_hidden;
    shape.embed_dim = 3;
    shape.disc_hidden = cfg.disc_hidden;
    shape.disc_classes = 4;
    shape.ean_layers = 2;
    const ModelParams params = init_params(shape, seed);
    GcnCache cache;
    const Matrix z0 = embed(problem, params, &cache);
    const EpochContext ctx = make_context(problem, z0, cfg, 0);
    const ForwardState base = forward_pass(problem, params, ctx, cfg);
    double kink = base.disc->hidden.cwiseAbs().minCoeff();
    for (std::size_t l = 0; l + 1 < cache.preact.size(); ++l) kink = std::min(kink, cache.preact[l].cwiseAbs().minCoeff());
    if (kink < kKinkMargin) {
      skipped.push_back(seed);
      continue;
    }
    used.push_back(seed);

    // L_sub w.r.t. Z (centroids fixed for the epoch).
    Objective l_sub = [&](std::span<const Matrix> x, std::vector<Matrix>* grads) {
      const SubclusterModel m = build_subcluster_model(x[0], ctx.centroids);
      if (grads) {
        const GaussianGrads gg = estimate_gaussians_backward(x[0], m.assignment, m.fit, Matrix::Zero(3, 3),
                                                             subcluster_loss_grad(m.fit));
        *grads = {gg.embedding + soft_assignment_backward(x[0], ctx.centroids, m.assignment, gg.assignment)};
      }
      return subcluster_loss(m.fit);
    };
    record("L_sub", check_gradients(l_sub, std::vector<Matrix>{z0}).worst());

    // L_ad1 w.r.t. F (target P_hat and discriminator fixed).
    Objective l_ad1 = [&](std::span<const Matrix> x, std::vector<Matrix>* grads) {
      const DiscriminatorOutput out = discriminate(x[0], params.disc);
      Matrix gp;
      const double l = generator_alignment_loss(base.extended, out, grads ? &gp : nullptr);
      if (grads) *grads = {discriminator_backward(x[0], params.disc, out, gp).input};
      return l;
    };
    record("L_ad1", check_gradients(l_ad1, std::vector<Matrix>{base.fused}).worst());

    // L_ad2 w.r.t. the discriminator weights.
    Objective l_ad2 = [&](std::span<const Matrix> x, std::vector<Matrix>* grads) {
      const std::vector<Matrix> w(x.begin(), x.end());
      const DiscriminatorOutput out = discriminate(base.fused, w);
      Matrix gp;
      const double l = discriminator_loss(base.extended, out, mask, grads ? &gp : nullptr);
      if (grads) *grads = discriminator_backward(base.fused, w, out, gp).weights;
      return l;
    };
    record("L_ad2", check_gradients(l_ad2, params.disc).worst());

    // Omega / L_con w.r.t. the EAN input and both layers' weights.
    Objective l_con = [&](std::span<const Matrix> x, std::vector<Matrix>* grads) {
      const EanWeights w0{x[1], x[2], x[3]}, w1{x[4], x[5], x[6]};
      const EanLayerState s0 = ean_layer(x[0], problem.neighbor_mean, w0, 0);
      const EanLayerState s1 = ean_layer(s0.output, problem.neighbor_mean, w1, 1);
      std::vector<Matrix> ga;
      const double l = contrastive_loss({s0.attention, s1.attention}, ctx.pseudo_labels, cfg.tau, grads ? &ga : nullptr);
      if (grads) {
        const Matrix zero = Matrix::Zero(s1.output.rows(), s1.output.cols());
        const EanLayerGrads b1 = ean_layer_backward(s1, problem.neighbor_mean, w1, zero, &ga[1]);
        const EanLayerGrads b0 = ean_layer_backward(s0, problem.neighbor_mean, w0, b1.input, &ga[0]);
        *grads = {b0.input, b0.weights.query, b0.weights.key, b0.weights.value,
                  b1.weights.query, b1.weights.key, b1.weights.value};
      }
      return l;
    };
    const std::vector<Matrix> con_point = {base.fused,           params.ean[0].query, params.ean[0].key,
                                           params.ean[0].value,  params.ean[1].query, params.ean[1].key,
                                           params.ean[1].value};
    record("L_con", check_gradients(l_con, con_point).worst());

    // L_gra w.r.t. U.
    Objective l_gra = [&](std::span<const Matrix> x, std::vector<Matrix>* grads) {
      Matrix gu;
      const double l = reconstruct_and_score(x[0], problem.recon_target, grads ? &gu : nullptr).loss;
      if (grads) *grads = {gu};
      return l;
    };
    record("L_gra", check_gradients(l_gra, std::vector<Matrix>{base.refined}).worst());

    // Composed objective w.r.t. every generator parameter (and L_ad2 w.r.t. D).
    const testing::ModelGradCheck full = testing::check_model_gradients(problem, params, ctx, cfg);
    record("L", full.generator);
    record("L_ad2(D)", full.discriminator);
  }

  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 60.0;
  std::string detail;
  for (const auto& [name, err] : worst) {
    ok = ok && err <= kTol;
    detail += fmt("%s %.1e, ", name.c_str(), err);
  }
  auto join = [](const std::vector<std::uint64_t>& v) {
    std::string out;
    for (std::uint64_t x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
    return out.empty() ? std::string("none") : out;
  };
  ok = ok && used.size() == 5;
  detail += fmt("seeds %s (skipped near ReLU kinks: %s), %.1fs (tol 1e-4, < 60s)", join(used).c_str(),
                join(skipped).c_str(), elapsed);
  return verdict(ok, detail);
}

// ---------------------------------------------------------------------------
// 2. Estimator oracles

Outcome criterion_estimators() {
  std::mt19937_64 rng(2);
  double mean_err = 0.0, cov_err = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Index n = 30, d = 4, m = 3;
    const Matrix z = testing::random_matrix(n, d, rng);
    Labels group(n);
    Matrix p = Matrix::Zero(n, m);
    for (Index i = 0; i < n; ++i) {
      group[i] = static_cast<int>(i % m);
      p(i, group[i]) = 1.0;
    }
    const GaussianFit fit = estimate_gaussians(z, p);
    for (Index j = 0; j < m; ++j) {
      RowVector mu = RowVector::Zero(d);
      Index count = 0;
      for (Index i = 0; i < n; ++i)
        if (group[i] == j) {
          mu += z.row(i);
          ++count;
        }
      mu /= static_cast<double>(count);
      Matrix cov = Matrix::Zero(d, d);
      for (Index i = 0; i < n; ++i)
        if (group[i] == j) cov += (z.row(i) - mu).transpose() * (z.row(i) - mu);
      cov /= static_cast<double>(count);
      mean_err = std::max(mean_err, (fit.mean.row(j) - mu).cwiseAbs().maxCoeff());
      cov_err = std::max(cov_err, (fit.cov[j] - cov).cwiseAbs().maxCoeff());
    }
  }

  double det_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Matrix c = testing::random_psd(6, rng);
    Eigen::LLT<Matrix> llt(c);
    det_err = std::max(det_err, std::abs(cholesky_determinant(llt.matrixL()) - testing::eigen_determinant(c)));
  }

  // Direct scalar evaluation of the Student-t kernel on the 1-D worked cases.
  double soft_err = 0.0;
  const std::vector<std::pair<double, std::vector<double>>> cases = {{0.0, {0.0, 1.0}}, {0.0, {0.0, 10.0}},
                                                                     {0.5, {-1.0, 1.0, 3.0}}};
  for (const auto& [zi, centers] : cases) {
    Matrix z(1, 1);
    z << zi;
    Matrix u(static_cast<Index>(centers.size()), 1);
    double total = 0.0;
    std::vector<double> kernel;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      u(static_cast<Index>(j), 0) = centers[j];
      kernel.push_back(1.0 / (1.0 + (zi - centers[j]) * (zi - centers[j])));
      total += kernel.back();
    }
    const Matrix p = soft_assignment(z, u);
    for (std::size_t j = 0; j < centers.size(); ++j) {
      soft_err = std::max(soft_err, std::abs(p(0, static_cast<Index>(j)) - kernel[j] / total));
    }
  }
  const bool ok = mean_err <= 1e-10 && cov_err <= 1e-10 && det_err <= 1e-8 && soft_err <= 1e-12;
  return verdict(ok, fmt("one-hot fit mean %.1e / cov %.1e (<=1e-10), det %.1e (<=1e-8, 100 PSD), "
                         "soft assignment %.1e (<=1e-12)",
                         mean_err, cov_err, det_err, soft_err));
}

// ---------------------------------------------------------------------------
// 3. Metric oracles

Outcome criterion_metrics() {
  std::mt19937_64 rng(3);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const int c = 1 + static_cast<int>(rng() % 5);
    const std::size_t n = 1 + rng() % 30;
    std::uniform_int_distribution<int> u(0, c - 1);
    Labels pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = u(rng);
      truth[i] = u(rng);
    }
    if (clustering_accuracy(pred, truth) != testing::brute_force_accuracy(pred, truth)) ++mismatches;
  }

  double worst_gap = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int c = 1 + static_cast<int>(rng() % 6);
    const std::size_t n = 1 + rng() % 50;
    std::uniform_int_distribution<int> u(0, c - 1);
    Labels truth(n);
    for (auto& v : truth) v = u(rng);
    std::vector<int> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Labels pred(n);
    for (std::size_t i = 0; i < n; ++i) pred[i] = 7 * perm[static_cast<std::size_t>(truth[i])] + 3;
    const Metrics m = cluster_metrics(pred, truth);
    for (double v : {m.acc, m.nmi, m.ari, m.f1}) worst_gap = std::max(worst_gap, std::abs(v - 1.0));
  }
  return verdict(mismatches == 0 && worst_gap <= 1e-12,
                 fmt("Hungarian vs brute force: %d/200 mismatches (exact); relabelled identical "
                     "partitions: max |metric - 1| = %.1e",
                     mismatches, worst_gap));
}

// ---------------------------------------------------------------------------
// Shared synthetic instance for criteria 4 and 5.

SbmParams acceptance_sbm() {
  SbmParams p;
  p.nodes = 300;
  p.classes = 3;
  p.p_in = 0.1;
  p.p_out = 0.01;
  p.attr_dim = 32;
  p.separation = 10.0;
  p.seed = 0;
  return p;
}

double row_sum_error(const Matrix& m) { return (m.rowwise().sum().array() - 1.0).abs().maxCoeff(); }

// 4. Exactness invariants

Outcome criterion_invariants() {
  const AttributeGraph g = generate_sbm(acceptance_sbm());
  const MissingMask mask = make_missing_mask(g.num_nodes(), 0.4, 0);
  TrainConfig cfg;
  cfg.seed = 0;
  long copy_violations = 0;
  long partition_violations = 0;
  double row_err = 0.0, sym_err = 0.0;
  int epochs = 0;
  auto check_state = [&](const ForwardState& s) {
    for (Index i = 0; i < g.num_nodes(); ++i) {
      if (mask.is_available(i) && !(s.fused.row(i) == s.embedding.row(i))) ++copy_violations;
    }
    row_err = std::max(row_err, row_sum_error(s.sub.assignment));
    if (s.disc) row_err = std::max(row_err, row_sum_error(s.disc->probs));
    for (const auto& layer : s.ean) row_err = std::max(row_err, row_sum_error(layer.attention));
    sym_err = std::max(sym_err, (s.links - s.links.transpose()).cwiseAbs().maxCoeff());
  };
  const RunReport report = train(g, mask, cfg, [&](const EpochObservation& o) {
    ++epochs;
    check_state(o.d_state);
    check_state(o.g_state);
    for (const auto& [name, before] : o.before.named()) {
      const bool disc = o.before.is_discriminator(name);
      const bool d_changed = !(o.after_d.get(name) == *before);
      const bool g_changed = !(o.after_g.get(name) == o.after_d.get(name));
      // D-step may touch only the discriminator; the G-step never touches it.
      if ((!disc && d_changed) || (disc && g_changed)) ++partition_violations;
    }
  });
  for (Index i = 0; i < g.num_nodes(); ++i) {
    if (mask.is_available(i) && !(report.final_fused.row(i) == report.final_embedding.row(i))) ++copy_violations;
  }
  const bool ok = copy_violations == 0 && partition_violations == 0 && row_err <= 1e-9 && sym_err <= 1e-9 &&
                  epochs == cfg.epochs;
  return verdict(ok, fmt("%d epochs: F_i!=Z_i on available rows %ld, partition violations %ld, "
                         "max row-sum error of P/R/A %.1e, max |S-S^T| %.1e",
                         epochs, copy_violations, partition_violations, row_err, sym_err));
}

// 5. Synthetic end-to-end

Outcome criterion_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const AttributeGraph g = generate_sbm(acceptance_sbm());
  const double raw_acc = clustering_accuracy(kmeans_cluster(g.features, 3, 10, 0), *g.labels);
  if (raw_acc != 1.0) return verdict(false, fmt("raw-attribute k-means ACC %.4f != 1.0 at separation 10", raw_acc));

  std::vector<double> full_acc, wogi_acc;
  int gra_decreased = 0;
  std::string gra_trace;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MissingMask mask = make_missing_mask(g.num_nodes(), 0.4, seed);
    TrainConfig cfg;
    cfg.seed = seed;
    const RunReport full = train(g, mask, cfg);
    full_acc.push_back(clustering_accuracy(kmeans_cluster(full.final_fused, 3, 10, seed), *g.labels));
    const double first = full.history.front().l_gra, last = full.history.back().l_gra;
    if (last < first) ++gra_decreased;
    gra_trace += fmt("%s%.6f->%.6f", seed ? " " : "", first, last);

    cfg.wo_gi = true;
    const RunReport ablated = train(g, mask, cfg);
    wogi_acc.push_back(clustering_accuracy(kmeans_cluster(ablated.final_fused, 3, 10, seed), *g.labels));
  }
  const double full_mean = std::accumulate(full_acc.begin(), full_acc.end(), 0.0) / 5.0;
  const double wogi_mean = std::accumulate(wogi_acc.begin(), wogi_acc.end(), 0.0) / 5.0;
  const double elapsed = seconds_since(t0);
  const bool a = gra_decreased == 5;
  const bool b = full_mean >= wogi_mean;
  const bool c = wogi_mean > 0.7 && full_mean >= 0.80;
  return verdict(a && b && c && elapsed < 600.0,
                 fmt("(a) L_gra first->last decreased on %d/5 seeds [%s]; (b) ACC full %.4f vs wo/GI %.4f; "
                     "(c) full >= 0.80, wo/GI > 0.7; %.0fs (< 600s)",
                     gra_decreased, gra_trace.c_str(), full_mean, wogi_mean, elapsed));
}

// 6. Cora (optional, needs user-supplied data)

Outcome criterion_cora() {
  const char* dir_env = std::getenv("CGIR_CORA_DIR");
  if (!dir_env) return {Status::kSkip, "set CGIR_CORA_DIR to a directory with edges.txt, features.{csv,bin}, labels.txt"};
  const std::filesystem::path dir = dir_env;
  DataSource src;
  src.edges = dir / "edges.txt";
  src.features = std::filesystem::exists(dir / "features.bin") ? dir / "features.bin" : dir / "features.csv";
  src.labels = dir / "labels.txt";
  src.name = "cora";
  if (!std::filesystem::exists(src.edges) || !std::filesystem::exists(src.features) ||
      !std::filesystem::exists(src.labels)) {
    return {Status::kSkip, "Cora files not found under " + dir.string()};
  }
  const auto t0 = std::chrono::steady_clock::now();
  const AttributeGraph g = load_source(src);
  ExperimentSpec spec;
  spec.data = src;
  spec.ratios = {0.2};
  spec.repeats = 10;
  spec.out = std::filesystem::temp_directory_path() / "cgir_acceptance_cora";
  const ExperimentResult r = run_experiment(spec, g);
  const Metrics& mean = r.cells.front().metrics.mean;
  const double elapsed = seconds_since(t0);
  const bool ok = std::abs(100.0 * mean.acc - 68.58) <= 5.0 && std::abs(100.0 * mean.nmi - 49.38) <= 5.0 &&
                  elapsed < 1800.0;
  return verdict(ok, fmt("ACC %.2f (target 68.58 +-5), NMI %.2f (target 49.38 +-5), %.0fs (< 1800s)",
                         100.0 * mean.acc, 100.0 * mean.nmi, elapsed));
}

// 7. Scaling sanity

Outcome criterion_scaling() {
  std::vector<double> per_epoch;
  for (Index n : {250, 500, 1000}) {
    SbmParams p = acceptance_sbm();
    p.nodes = n;
    const AttributeGraph g = generate_sbm(p);
    TrainConfig cfg;
    cfg.epochs = 7;
    const RunReport r = train(g, make_missing_mask(n, 0.4, 0), cfg);
    std::vector<double> secs;
    for (std::size_t e = 1; e < r.history.size(); ++e) secs.push_back(r.history[e].seconds);  // skip warm-up
    per_epoch.push_back(median(secs));
  }
  const double r1 = per_epoch[1] / per_epoch[0];
  const double r2 = per_epoch[2] / per_epoch[1];
  return verdict(r1 <= 4.5 && r2 <= 4.5,
                 fmt("median epoch %.3fs / %.3fs / %.3fs at n=250/500/1000; ratios %.2fx, %.2fx (<= 4.5x)",
                     per_epoch[0], per_epoch[1], per_epoch[2], r1, r2));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", criterion_gradients},
      {"estimator oracles", criterion_estimators},
      {"metric oracles", criterion_metrics},
      {"exactness invariants", criterion_invariants},
      {"synthetic end-to-end", criterion_end_to_end},
      {"Cora reproduction (optional)", criterion_cora},
      {"scaling sanity", criterion_scaling},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    if (o.status == Status::kFail) ++failures;
    std::printf("[%s] criterion %d: %s -- %s\n", tag, id, criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
