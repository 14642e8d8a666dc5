#include "cgir/trainer.hpp"

#include <chrono>
#include <cmath>

namespace cgir {

void TrainConfig::validate(Index nodes, int class_count) const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0)) throw ConfigError("lambdas must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (m_factor < 1) throw ConfigError("m_factor must be >= 1");
  if (class_count < 1) throw ConfigError("class count unknown: provide labels or set classes");
  if (subclusters < 0) throw ConfigError("subclusters must be >= 0");
  if (subclusters > 0 && subclusters < class_count) {
    throw ConfigError("subclusters must be >= class count");
  }
  const Index m = subclusters > 0 ? subclusters : static_cast<Index>(m_factor) * class_count;
  if (m > nodes) {
    throw ConfigError("subcluster count " + std::to_string(m) + " exceeds node count " +
                      std::to_string(nodes));
  }
  if (embed_dim < 1 || disc_hidden < 1) throw ConfigError("layer widths must be positive");
  for (Index h : gcn_hidden) {
    if (h < 1) throw ConfigError("layer widths must be positive");
  }
  if (ean_layers < 0) throw ConfigError("ean_layers must be >= 0");
}

double total_loss(const LossParts& parts, const TrainConfig& config) {
  const double sub_weight = config.wo_sl ? 0.0 : 1.0;
  return sub_weight * parts.sub + config.lambda1 * parts.ad1 + config.lambda2 * parts.con +
         config.lambda3 * parts.gra;
}

TrainingProblem TrainingProblem::build(const AttributeGraph& graph, const MissingMask& mask,
                                       const TrainConfig& config) {
  graph.validate();
  if (mask.size() != graph.num_nodes()) throw ConsistencyError("mask length does not match graph");
  TrainingProblem p;
  p.classes = config.classes > 0 ? config.classes : graph.num_classes;
  config.validate(graph.num_nodes(), p.classes);
  p.subclusters = config.subclusters > 0 ? config.subclusters
                                         : static_cast<Index>(config.m_factor) * p.classes;
  p.norm_adj = normalize_adjacency(graph.adjacency);
  p.aggregated = p.norm_adj * mask_rows(graph.features, mask);
  p.neighbor_mean = neighbor_mean_operator(graph.adjacency);
  p.adjacency = graph.adjacency;
  if (!config.sampled_bce) p.recon_target = sigmoid_preprocess(graph.adjacency);
  p.mask = mask;
  return p;
}

std::uint64_t epoch_noise_seed(std::uint64_t seed, int epoch) {
  return mix_seed(seed, static_cast<std::uint64_t>(epoch));
}

Matrix embed(const TrainingProblem& problem, const ModelParams& params, GcnCache* cache) {
  return gcn_forward(problem.aggregated, problem.norm_adj, params.gcn, cache);
}

EpochContext make_context(const TrainingProblem& problem, const Matrix& embedding,
                          const TrainConfig& config, int epoch) {
  EpochContext ctx;
  ctx.centroids = find_subclusters(embedding, problem.subclusters).centroids;
  ctx.pseudo_labels =
      merge_pseudo_labels(ctx.centroids, soft_assignment(embedding, ctx.centroids), problem.classes);
  const std::uint64_t seed = epoch_noise_seed(config.seed, epoch);
  ctx.noise = config.wo_gi ? Matrix::Zero(embedding.rows(), embedding.cols())
                           : draw_imputation_noise(problem.mask, embedding.cols(), seed);
  ctx.bce_seed = seed;
  return ctx;
}

ForwardState forward_pass(const TrainingProblem& problem, const ModelParams& params,
                          const EpochContext& context, const TrainConfig& config) {
  ForwardState s;
  s.embedding = embed(problem, params, &s.gcn);
  s.sub = build_subcluster_model(s.embedding, context.centroids);
  s.losses.sub = subcluster_loss(s.sub.fit);

  if (config.wo_gi) {
    s.fused = s.embedding;
  } else {
    s.fused = sample_and_fuse(s.embedding, s.sub, problem.mask, context.noise);
    s.extended = extend_assignment(s.sub.assignment);
    s.disc = discriminate(s.fused, params.disc);
    s.losses.ad1 = generator_alignment_loss(s.extended, *s.disc);
  }

  if (config.wo_ea) {
    s.refined = s.fused;
  } else {
    const Matrix* input = &s.fused;
    std::vector<Matrix> attention;
    for (std::size_t l = 0; l < params.ean.size(); ++l) {
      s.ean.push_back(ean_layer(*input, problem.neighbor_mean, params.ean[l], static_cast<int>(l)));
      input = &s.ean.back().output;
      attention.push_back(s.ean.back().attention);
    }
    s.refined = *input;
    s.losses.con = contrastive_loss(attention, context.pseudo_labels, config.tau);
  }

  if (config.sampled_bce) {
    s.losses.gra = sampled_reconstruction_loss(s.refined, problem.adjacency, context.bce_seed);
  } else {
    ReconstructionResult r = reconstruct_and_score(s.refined, problem.recon_target);
    s.links = std::move(r.links);
    s.losses.gra = r.loss;
  }
  s.total = total_loss(s.losses, config);
  return s;
}

GradMap generator_gradients(const TrainingProblem& problem, const ModelParams& params,
                            const ForwardState& s, const EpochContext& context,
                            const TrainConfig& config) {
  GradMap grads;
  const Index n = s.embedding.rows();
  const Index k = s.embedding.cols();

  // Reconstruction -> refined embedding.
  Matrix grad_refined;
  if (config.sampled_bce) {
    sampled_reconstruction_loss(s.refined, problem.adjacency, context.bce_seed, &grad_refined);
  } else {
    reconstruct_and_score(s.refined, problem.recon_target, &grad_refined);
  }
  grad_refined *= config.lambda3;

  // Edge attention stack -> fused embedding.
  Matrix grad_fused;
  if (config.wo_ea) {
    grad_fused = std::move(grad_refined);
  } else {
    std::vector<Matrix> attention;
    for (const auto& layer : s.ean) attention.push_back(layer.attention);
    std::vector<Matrix> grad_attention;
    contrastive_loss(attention, context.pseudo_labels, config.tau, &grad_attention);
    Matrix grad_out = std::move(grad_refined);
    for (std::size_t l = s.ean.size(); l-- > 0;) {
      const Matrix grad_attn = config.lambda2 * grad_attention[l];
      EanLayerGrads g = ean_layer_backward(s.ean[l], problem.neighbor_mean, params.ean[l], grad_out, &grad_attn);
      const std::string prefix = "ean." + std::to_string(l);
      grads[prefix + ".query"] = std::move(g.weights.query);
      grads[prefix + ".key"] = std::move(g.weights.key);
      grads[prefix + ".value"] = std::move(g.weights.value);
      grad_out = std::move(g.input);
    }
    grad_fused = std::move(grad_out);
  }

  // Adversarial alignment through the frozen discriminator.
  Matrix grad_embedding;
  Matrix grad_assignment = Matrix::Zero(n, s.sub.size());
  Matrix grad_mean = Matrix::Zero(s.sub.size(), k);
  std::vector<Matrix> grad_cov(static_cast<std::size_t>(s.sub.size()), Matrix::Zero(k, k));
  if (config.wo_gi) {
    grad_embedding = std::move(grad_fused);
  } else {
    Matrix grad_probs;
    generator_alignment_loss(s.extended, *s.disc, &grad_probs);
    grad_probs *= config.lambda1;
    grad_fused += discriminator_backward(s.fused, params.disc, *s.disc, grad_probs).input;
    FuseGrads fg = sample_and_fuse_backward(s.sub, problem.mask, context.noise, grad_fused);
    grad_embedding = std::move(fg.embedding);
    grad_assignment = std::move(fg.assignment);
    grad_mean = std::move(fg.mean);
    for (Index j = 0; j < s.sub.size(); ++j) {
      const auto ju = static_cast<std::size_t>(j);
      grad_cov[ju] = cholesky_backward(s.sub.fit.chol[ju], fg.chol[ju]);
    }
  }

  if (!config.wo_sl) {
    const std::vector<Matrix> g_sub = subcluster_loss_grad(s.sub.fit);
    for (std::size_t j = 0; j < g_sub.size(); ++j) grad_cov[j] += g_sub[j];
  }

  GaussianGrads gg = estimate_gaussians_backward(s.embedding, s.sub.assignment, s.sub.fit, grad_mean, grad_cov);
  grad_embedding += gg.embedding;
  grad_assignment += gg.assignment;
  grad_embedding += soft_assignment_backward(s.embedding, s.sub.centroids, s.sub.assignment, grad_assignment);

  std::vector<Matrix> g_gcn = gcn_backward(problem.norm_adj, params.gcn, s.gcn, grad_embedding);
  for (std::size_t l = 0; l < g_gcn.size(); ++l) grads["gcn." + std::to_string(l)] = std::move(g_gcn[l]);
  return grads;
}

double discriminator_gradients(const TrainingProblem& problem, const ModelParams& params,
                               const ForwardState& s, GradMap* grads) {
  if (!s.disc) throw ConfigError("discriminator was not evaluated in this forward pass");
  Matrix grad_probs;
  const double loss = discriminator_loss(s.extended, *s.disc, problem.mask, grads ? &grad_probs : nullptr);
  if (grads) {
    DiscriminatorGrads g = discriminator_backward(s.fused, params.disc, *s.disc, grad_probs);
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      (*grads)["disc." + std::to_string(l)] = std::move(g.weights[l]);
    }
  }
  return loss;
}

namespace {

void require_finite(int epoch, const char* name, double value) {
  if (!std::isfinite(value)) {
    throw TrainingDiverged(epoch, std::string(name) + " is non-finite (" + std::to_string(value) + ")");
  }
}

}  // namespace

RunReport train(const AttributeGraph& graph, const MissingMask& mask, const TrainConfig& config,
                const EpochObserver& observer) {
  using Clock = std::chrono::steady_clock;
  const auto run_start = Clock::now();
  const TrainingProblem problem = TrainingProblem::build(graph, mask, config);

  ModelShape shape;
  shape.input_dim = graph.num_attributes();
  shape.gcn_hidden = config.gcn_hidden;
  shape.embed_dim = config.embed_dim;
  shape.disc_hidden = config.disc_hidden;
  shape.disc_classes = problem.subclusters + 1;
  shape.ean_layers = config.ean_layers;
  ModelParams params = init_params(shape, config.seed);
  Adam optimizer(AdamOptions{.lr = config.lr});

  RunReport report;
  report.history.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    std::optional<ModelParams> before;
    if (observer) before = params;

    try {
      const Matrix z = embed(problem, params);
      if (!z.allFinite()) throw TrainingDiverged(epoch, "embedding is non-finite");
      const EpochContext ctx = make_context(problem, z, config, epoch);
      ForwardState d_state = forward_pass(problem, params, ctx, config);

      EpochRecord rec;
      rec.epoch = epoch;
      if (!config.wo_gi) {
        GradMap d_grads;
        rec.l_ad2 = discriminator_gradients(problem, params, d_state, &d_grads);
        require_finite(epoch, "L_ad2", rec.l_ad2);
        optimizer.step(params, d_grads);
      }
      std::optional<ModelParams> after_d;
      if (observer) after_d = params;

      ForwardState g_state = config.wo_gi ? d_state : forward_pass(problem, params, ctx, config);
      require_finite(epoch, "L_sub", g_state.losses.sub);
      require_finite(epoch, "L_ad1", g_state.losses.ad1);
      require_finite(epoch, "L_con", g_state.losses.con);
      require_finite(epoch, "L_gra", g_state.losses.gra);
      require_finite(epoch, "L", g_state.total);
      const GradMap g_grads = generator_gradients(problem, params, g_state, ctx, config);
      optimizer.step(params, g_grads);

      rec.l_sub = g_state.losses.sub;
      rec.l_ad1 = g_state.losses.ad1;
      rec.l_con = g_state.losses.con;
      rec.l_gra = g_state.losses.gra;
      rec.l_total = g_state.total;
      rec.seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
      report.history.push_back(rec);

      if (observer) {
        observer(EpochObservation{epoch, ctx, d_state, g_state, *before, *after_d, params});
      }
    } catch (const TrainingDiverged&) {
      throw;
    } catch (const NumericError& e) {
      throw TrainingDiverged(epoch, e.what());
    }
  }

  const Matrix z = embed(problem, params);
  if (!z.allFinite()) throw TrainingDiverged(config.epochs, "embedding is non-finite");
  const EpochContext ctx = make_context(problem, z, config, config.epochs);
  ForwardState final_state = forward_pass(problem, params, ctx, config);
  report.final_embedding = std::move(final_state.embedding);
  report.final_fused = std::move(final_state.fused);
  report.params = std::move(params);
  report.seconds = std::chrono::duration<double>(Clock::now() - run_start).count();
  return report;
}

}  // namespace cgir
