#include "cgir/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cgir/matrix_io.hpp"

namespace cgir {

std::vector<std::pair<std::string, Matrix*>> ModelParams::named() {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (std::size_t l = 0; l < gcn.size(); ++l) out.emplace_back("gcn." + std::to_string(l), &gcn[l]);
  for (std::size_t l = 0; l < disc.size(); ++l) out.emplace_back("disc." + std::to_string(l), &disc[l]);
  for (std::size_t l = 0; l < ean.size(); ++l) {
    const std::string p = "ean." + std::to_string(l);
    out.emplace_back(p + ".query", &ean[l].query);
    out.emplace_back(p + ".key", &ean[l].key);
    out.emplace_back(p + ".value", &ean[l].value);
  }
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, ptr] : const_cast<ModelParams*>(this)->named()) out.emplace_back(name, ptr);
  return out;
}

Matrix& ModelParams::get(const std::string& name) {
  for (auto& [n, ptr] : named()) {
    if (n == name) return *ptr;
  }
  throw ArgumentError("unknown parameter '" + name + "'");
}

const Matrix& ModelParams::get(const std::string& name) const {
  return const_cast<ModelParams*>(this)->get(name);
}

void ModelParams::validate() const {
  auto chain = [](const std::vector<Matrix>& layers, const char* what) {
    for (std::size_t l = 1; l < layers.size(); ++l) {
      if (layers[l - 1].cols() != layers[l].rows()) {
        throw ConfigError(std::string(what) + " layer " + std::to_string(l) + " expects input width " +
                          std::to_string(layers[l].rows()) + " but previous layer emits " +
                          std::to_string(layers[l - 1].cols()));
      }
    }
  };
  chain(gcn, "gcn");
  chain(disc, "discriminator");
  for (std::size_t l = 0; l < ean.size(); ++l) {
    const auto& w = ean[l];
    if (w.query.rows() != w.key.rows() || w.query.rows() != w.value.rows() ||
        w.query.cols() != w.key.cols() || w.query.cols() != w.value.cols()) {
      throw ConfigError("ean layer " + std::to_string(l) + ": W1, W2, W3 must share a shape");
    }
    if (l > 0 && ean[l - 1].value.cols() != w.query.rows()) {
      throw ConfigError("ean layer " + std::to_string(l) + " input width mismatch");
    }
  }
  if (!gcn.empty() && !disc.empty() && gcn.back().cols() != disc.front().rows()) {
    throw ConfigError("discriminator input width must equal the embedding width");
  }
  if (!gcn.empty() && !ean.empty() && gcn.back().cols() != ean.front().query.rows()) {
    throw ConfigError("edge attention input width must equal the embedding width");
  }
}

Matrix glorot_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Index j = 0; j < w.cols(); ++j) {
    for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  }
  return w;
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 1 || shape.embed_dim < 1) throw ConfigError("model widths must be positive");
  Rng rng = make_rng(seed, Stream::kInit);
  ModelParams params;
  Index in = shape.input_dim;
  for (Index h : shape.gcn_hidden) {
    params.gcn.push_back(glorot_uniform(in, h, rng));
    in = h;
  }
  params.gcn.push_back(glorot_uniform(in, shape.embed_dim, rng));
  if (shape.disc_classes > 0) {
    params.disc.push_back(glorot_uniform(shape.embed_dim, shape.disc_hidden, rng));
    params.disc.push_back(glorot_uniform(shape.disc_hidden, shape.disc_classes, rng));
  }
  for (int l = 0; l < shape.ean_layers; ++l) {
    EanWeights w;
    w.query = glorot_uniform(shape.embed_dim, shape.embed_dim, rng);
    w.key = glorot_uniform(shape.embed_dim, shape.embed_dim, rng);
    w.value = glorot_uniform(shape.embed_dim, shape.embed_dim, rng);
    params.ean.push_back(std::move(w));
  }
  return params;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double shift = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - shift).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& probs, const Matrix& grad_probs) {
  const Vector inner = probs.cwiseProduct(grad_probs).rowwise().sum();
  return probs.cwiseProduct(grad_probs - inner.replicate(1, probs.cols()));
}

Matrix gcn_forward(const Matrix& aggregated_input, const SparseMatrix& norm_adj,
                   const std::vector<Matrix>& weights, GcnCache* cache) {
  if (weights.empty()) throw ConfigError("gcn has no layers");
  if (aggregated_input.cols() != weights.front().rows()) {
    throw ConfigError("gcn input width " + std::to_string(aggregated_input.cols()) +
                      " does not match first layer " + std::to_string(weights.front().rows()));
  }
  if (norm_adj.rows() != aggregated_input.rows()) throw ConfigError("adjacency/node count mismatch");
  if (cache) {
    cache->aggregated.clear();
    cache->preact.clear();
  }
  Matrix agg = aggregated_input;
  Matrix out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (l > 0) {
      if (weights[l].rows() != out.cols()) throw ConfigError("gcn layer widths do not chain");
      agg = norm_adj * relu(out);
    }
    out = agg * weights[l];
    if (cache) {
      cache->aggregated.push_back(agg);
      cache->preact.push_back(out);
    }
  }
  return out;
}

Matrix gcn_embed(const Matrix& features, const SparseMatrix& norm_adj,
                 const std::vector<Matrix>& weights) {
  return gcn_forward(norm_adj * features, norm_adj, weights);
}

std::vector<Matrix> gcn_backward(const SparseMatrix& norm_adj, const std::vector<Matrix>& weights,
                                 const GcnCache& cache, const Matrix& grad_out) {
  const std::size_t layers = weights.size();
  std::vector<Matrix> grads(layers);
  Matrix grad = grad_out;
  for (std::size_t l = layers; l-- > 0;) {
    grads[l] = cache.aggregated[l].transpose() * grad;
    if (l == 0) break;
    Matrix grad_hidden = norm_adj * (grad * weights[l].transpose());
    grad = grad_hidden.cwiseProduct((cache.preact[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

void Adam::step(const std::string& name, Matrix& param, const Matrix& grad) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw ConfigError("gradient shape mismatch for '" + name + "'");
  }
  if (!grad.allFinite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
  Slot& slot = slots_[name];
  if (slot.steps == 0) {
    slot.first = Matrix::Zero(param.rows(), param.cols());
    slot.second = Matrix::Zero(param.rows(), param.cols());
  }
  ++slot.steps;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  slot.first = b1 * slot.first + (1.0 - b1) * grad;
  slot.second = b2 * slot.second + (1.0 - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.steps));
  param.array() -= options_.lr * (slot.first.array() / c1) /
                   ((slot.second.array() / c2).sqrt() + options_.eps);
}

void Adam::step(ModelParams& params, const GradMap& grads) {
  // Validate everything before touching any parameter so a bad gradient
  // leaves the model unchanged.
  for (const auto& [name, g] : grads) {
    const Matrix& p = params.get(name);
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ConfigError("gradient shape mismatch for '" + name + "'");
    }
    if (!g.allFinite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
  }
  for (const auto& [name, g] : grads) step(name, params.get(name), g);
}

std::int64_t Adam::step_count(const std::string& name) const {
  const auto it = slots_.find(name);
  return it == slots_.end() ? 0 : it->second.steps;
}

void adam_step(ModelParams& params, const GradMap& grads, Adam& optimizer) {
  optimizer.step(params, grads);
}

double GradCheckReport::worst() const {
  return max_relative_error.empty()
             ? 0.0
             : *std::max_element(max_relative_error.begin(), max_relative_error.end());
}

GradCheckReport check_gradients(const Objective& objective, std::span<const Matrix> point,
                                double step) {
  std::vector<Matrix> analytic;
  objective(point, &analytic);
  if (analytic.size() != point.size()) {
    throw ArgumentError("objective returned " + std::to_string(analytic.size()) +
                        " gradients for " + std::to_string(point.size()) + " tensors");
  }
  std::vector<Matrix> probe(point.begin(), point.end());
  GradCheckReport report;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    double worst = 0.0;
    for (Index j = 0; j < probe[t].cols(); ++j) {
      for (Index i = 0; i < probe[t].rows(); ++i) {
        const double saved = probe[t](i, j);
        probe[t](i, j) = saved + step;
        const double up = objective(probe, nullptr);
        probe[t](i, j) = saved - step;
        const double down = objective(probe, nullptr);
        probe[t](i, j) = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
          throw NumericError("objective is non-finite at a perturbed point (tensor " +
                             std::to_string(t) + ")");
        }
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[t](i, j);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
    report.max_relative_error.push_back(worst);
  }
  return report;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoError("cannot write checkpoint manifest in " + dir.string());
  for (const auto& [name, m] : params.named()) {
    const std::string file = name + ".bin";
    write_matrix_binary(dir / file, *m);
    manifest << name << ' ' << m->rows() << ' ' << m->cols() << ' ' << file << '\n';
  }
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot read checkpoint manifest in " + dir.string());
  ModelParams params;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, file;
    Index rows = 0, cols = 0;
    if (!(fields >> name >> rows >> cols >> file)) throw ParseError("bad manifest line: " + line);
    Matrix m = read_matrix_binary(dir / file);
    if (m.rows() != rows || m.cols() != cols) throw ConsistencyError("shape mismatch for " + name);
    const auto dot = name.find('.');
    const std::string group = name.substr(0, dot);
    const std::string rest = name.substr(dot + 1);
    const auto index = static_cast<std::size_t>(std::stoul(rest));
    if (group == "gcn" || group == "disc") {
      auto& layers = group == "gcn" ? params.gcn : params.disc;
      if (layers.size() <= index) layers.resize(index + 1);
      layers[index] = std::move(m);
    } else if (group == "ean") {
      if (params.ean.size() <= index) params.ean.resize(index + 1);
      const std::string role = rest.substr(rest.find('.') + 1);
      if (role == "query") params.ean[index].query = std::move(m);
      else if (role == "key") params.ean[index].key = std::move(m);
      else if (role == "value") params.ean[index].value = std::move(m);
      else throw ParseError("unknown ean tensor " + name);
    } else {
      throw ParseError("unknown parameter group in " + name);
    }
  }
  params.validate();
  return params;
}

}  // namespace cgir
