#include "cgir/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "cgir/evaluation.hpp"
#include "cgir/matrix_io.hpp"

namespace cgir {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string ratio_tag(double ratio) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", ratio);
  return buf;
}

ordered_json metrics_json(const Metrics& m) {
  return ordered_json{{"acc", m.acc}, {"nmi", m.nmi}, {"ari", m.ari}, {"f1", m.f1}};
}

void write_history(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,L_sub,L_ad1,L_ad2,L_con,L_gra,L_total\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << format_double(r.l_sub) << ',' << format_double(r.l_ad1) << ','
        << format_double(r.l_ad2) << ',' << format_double(r.l_con) << ',' << format_double(r.l_gra)
        << ',' << format_double(r.l_total) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const ordered_json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

struct RunJob {
  std::size_t ratio_index = 0;
  int repeat = 0;
  std::uint64_t seed = 0;
};

struct RunOutput {
  Metrics metrics;
  std::vector<fs::path> artifacts;
};

/// Runs `count` jobs on up to `jobs` threads; results land at their own index
/// so the output is independent of scheduling. The first failing job (in job
/// order) is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void ExperimentSpec::validate() const {
  if (ratios.empty()) throw ArgumentError("at least one missing ratio is required");
  for (double r : ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw ArgumentError("missing ratio " + format_double(r) + " outside [0, 1)");
  }
  if (repeats < 1) throw ArgumentError("repeats must be >= 1");
  if (jobs < 1) throw ArgumentError("jobs must be >= 1");
  if (kmeans_restarts < 1) throw ArgumentError("k-means restarts must be >= 1");
  if (data.edges.empty() && !data.synthetic) throw ArgumentError("no input graph: give --edges/--features or synthetic parameters");
  if (!data.edges.empty() && data.features.empty()) throw ArgumentError("--features is required with --edges");
  if (!data.edges.empty() && data.labels.empty()) throw ArgumentError("--labels is required for evaluation");
}

std::vector<std::uint64_t> ExperimentSpec::seed_list() const {
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < repeats; ++r) seeds.push_back(seed + static_cast<std::uint64_t>(r));
  return seeds;
}

std::string dataset_name(const DataSource& source) {
  if (!source.name.empty()) return source.name;
  if (!source.edges.empty()) return source.features.stem().string();
  const SbmParams& p = *source.synthetic;
  return "sbm-n" + std::to_string(p.nodes) + "-c" + std::to_string(p.classes);
}

AttributeGraph load_source(const DataSource& source) {
  AttributeGraph g;
  if (!source.edges.empty()) {
    for (const fs::path& p : {source.edges, source.features, source.labels}) {
      if (!fs::is_regular_file(p)) throw IoError("cannot read " + p.string());
    }
    g = load_graph(source.edges, source.features, source.labels);
  } else {
    g = generate_sbm(*source.synthetic);
  }
  g.name = dataset_name(source);
  if (!g.labels) throw ArgumentError("graph has no labels; evaluation needs ground truth");
  return g;
}

std::string variant_name(const TrainConfig& config) {
  std::string name;
  auto add = [&](bool on, const char* tag) {
    if (!on) return;
    if (!name.empty()) name += '+';
    name += tag;
  };
  add(config.wo_gi, "wo_gi");
  add(config.wo_ea, "wo_ea");
  add(config.wo_sl, "wo_sl");
  return name.empty() ? "full" : name;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const AttributeGraph& graph,
                                const fs::path& subdir) {
  spec.validate();
  const int classes = spec.config.classes > 0 ? spec.config.classes : graph.num_classes;
  // Fail on configuration problems before any file is written.
  spec.config.validate(graph.num_nodes(), classes);
  const fs::path dir = spec.out / subdir;
  fs::create_directories(dir);
  const std::string variant = variant_name(spec.config);
  const std::vector<std::uint64_t> seeds = spec.seed_list();

  std::vector<RunJob> jobs;
  for (std::size_t k = 0; k < spec.ratios.size(); ++k) {
    for (int r = 0; r < spec.repeats; ++r) jobs.push_back({k, r, seeds[static_cast<std::size_t>(r)]});
  }
  std::vector<RunOutput> outputs(jobs.size());

  parallel_for(jobs.size(), spec.jobs, [&](std::size_t i) {
    const RunJob& job = jobs[i];
    const double ratio = spec.ratios[job.ratio_index];
    const std::string tag = "r" + ratio_tag(ratio) + "_s" + std::to_string(job.seed);
    const MissingMask mask = make_missing_mask(graph.num_nodes(), ratio, job.seed);
    TrainConfig cfg = spec.config;
    cfg.seed = job.seed;
    RunReport report;
    try {
      report = train(graph, mask, cfg);
    } catch (const TrainingDiverged& e) {
      throw RunDiverged("run " + variant + " ratio=" + ratio_tag(ratio) + " seed=" + std::to_string(job.seed) +
                        ": " + e.what());
    }
    const Labels pred = kmeans_cluster(report.final_fused, classes, spec.kmeans_restarts, job.seed);
    RunOutput& out = outputs[i];
    out.metrics = cluster_metrics(pred, *graph.labels);
    const fs::path history = subdir / ("history_" + tag + ".csv");
    const fs::path embedding = subdir / ("embedding_" + tag + ".bin");
    write_history(spec.out / history, report.history);
    write_matrix_binary(spec.out / embedding, report.final_fused);
    out.artifacts = {history, embedding};
  });

  ExperimentResult result;
  for (std::size_t k = 0; k < spec.ratios.size(); ++k) {
    const double ratio = spec.ratios[k];
    std::vector<Metrics> runs;
    ordered_json per_run = ordered_json::array();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].ratio_index != k) continue;
      runs.push_back(outputs[i].metrics);
      ordered_json entry = {{"seed", jobs[i].seed}};
      entry.update(metrics_json(outputs[i].metrics));
      per_run.push_back(entry);
      result.artifacts.insert(result.artifacts.end(), outputs[i].artifacts.begin(), outputs[i].artifacts.end());
    }
    const MetricsReport report = summarize(runs);
    ordered_json doc = {{"dataset", graph.name},
                        {"variant", variant},
                        {"missing_ratio", ratio},
                        {"seed_list", seeds},
                        {"per_run", per_run},
                        {"mean", metrics_json(report.mean)},
                        {"std", metrics_json(report.std)}};
    const fs::path metrics_path = subdir / ("metrics_r" + ratio_tag(ratio) + ".json");
    write_json(spec.out / metrics_path, doc);
    result.artifacts.push_back(metrics_path);
    result.cells.push_back({variant, ratio, report});
  }
  return result;
}

ExperimentResult sweep(const ExperimentSpec& spec, const AttributeGraph& graph) {
  spec.validate();
  std::vector<double> ratios = spec.ratios;
  std::sort(ratios.begin(), ratios.end());
  ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());

  ExperimentSpec base = spec;
  base.ratios = ratios;
  base.config.wo_gi = base.config.wo_ea = base.config.wo_sl = false;
  std::vector<TrainConfig> variants = {base.config};
  for (int flag = 0; flag < 3; ++flag) {
    const bool on = flag == 0 ? spec.config.wo_gi : flag == 1 ? spec.config.wo_ea : spec.config.wo_sl;
    if (!on) continue;
    TrainConfig v = base.config;
    (flag == 0 ? v.wo_gi : flag == 1 ? v.wo_ea : v.wo_sl) = true;
    variants.push_back(v);
  }
  // Validate every variant up front so no artifacts are written on bad input.
  const int classes = spec.config.classes > 0 ? spec.config.classes : graph.num_classes;
  for (const TrainConfig& v : variants) v.validate(graph.num_nodes(), classes);

  ExperimentResult all;
  std::vector<std::vector<RatioResult>> per_variant;
  for (const TrainConfig& v : variants) {
    ExperimentSpec s = base;
    s.config = v;
    ExperimentResult r = run_experiment(s, graph, variant_name(v));
    per_variant.push_back(r.cells);
    all.artifacts.insert(all.artifacts.end(), r.artifacts.begin(), r.artifacts.end());
    all.cells.insert(all.cells.end(), r.cells.begin(), r.cells.end());
  }

  const fs::path csv = "sweep.csv";
  std::ofstream out(spec.out / csv, std::ios::trunc);
  if (!out) throw IoError("cannot write " + (spec.out / csv).string());
  out << "ratio,metric,mean,std";
  for (std::size_t v = 1; v < variants.size(); ++v) {
    const std::string name = variant_name(variants[v]);
    out << ',' << name << "_mean," << name << "_std";
  }
  out << '\n';
  const char* metric_names[] = {"acc", "nmi", "ari", "f1"};
  auto pick = [](const Metrics& m, int k) { return k == 0 ? m.acc : k == 1 ? m.nmi : k == 2 ? m.ari : m.f1; };
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    for (int metric = 0; metric < 4; ++metric) {
      out << ratio_tag(ratios[k]) << ',' << metric_names[metric];
      for (const auto& cells : per_variant) {
        out << ',' << format_double(pick(cells[k].metrics.mean, metric)) << ','
            << format_double(pick(cells[k].metrics.std, metric));
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + (spec.out / csv).string());
  all.artifacts.push_back(csv);
  return all;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return hex;
}

fs::path write_manifest(const fs::path& out, const std::vector<fs::path>& artifacts) {
  std::vector<fs::path> sorted = artifacts;
  std::sort(sorted.begin(), sorted.end());
  const fs::path path = out / "manifest.txt";
  std::ofstream m(path, std::ios::trunc);
  if (!m) throw IoError("cannot write " + path.string());
  for (const fs::path& a : sorted) m << sha256_file(out / a) << "  " << a.generic_string() << '\n';
  if (!m) throw IoError("write failed: " + path.string());
  return path;
}

}  // namespace cgir
