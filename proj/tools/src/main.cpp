#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "cgir/experiment.hpp"

namespace {

constexpr int kExitInvalidInput = 2;
constexpr int kExitDiverged = 3;

struct Options {
  cgir::ExperimentSpec spec;
  cgir::SbmParams sbm;
  std::vector<double> ratios;
};

void add_data_options(CLI::App& app, Options& o) {
  auto& d = o.spec.data;
  app.add_option("--edges", d.edges, "Edge list: 'u v [w]' per line, '#' comments")->group("Data");
  app.add_option("--features", d.features, "Node attributes (CGIRMAT1 or CSV)")->group("Data");
  app.add_option("--labels", d.labels, "One integer class per line")->group("Data");
  app.add_option("--dataset", d.name, "Dataset name used in reports")->group("Data");
  app.add_option("--synth-nodes", o.sbm.nodes, "SBM node count (used without --edges)")->group("Synthetic");
  app.add_option("--synth-classes", o.sbm.classes, "SBM class count")->group("Synthetic");
  app.add_option("--synth-p-in,--synth_p_in", o.sbm.p_in, "SBM intra-class edge probability")->group("Synthetic");
  app.add_option("--synth-p-out,--synth_p_out", o.sbm.p_out, "SBM inter-class edge probability")->group("Synthetic");
  app.add_option("--synth-attr-dim,--synth_attr_dim", o.sbm.attr_dim, "SBM attribute dimension")->group("Synthetic");
  app.add_option("--synth-separation,--synth_separation", o.sbm.separation, "Distance of class means")->group("Synthetic");
  app.add_option("--synth-seed,--synth_seed", o.sbm.seed, "SBM generator seed")->group("Synthetic");
}

void add_train_options(CLI::App& app, Options& o) {
  auto& c = o.spec.config;
  const char* g = "Training";
  app.add_option("--epochs", c.epochs, "Training epochs")->group(g)->capture_default_str();
  app.add_option("--lr", c.lr, "Adam learning rate")->group(g)->capture_default_str();
  app.add_option("--lambda1", c.lambda1, "Weight of L_ad1")->group(g)->capture_default_str();
  app.add_option("--lambda2", c.lambda2, "Weight of L_con")->group(g)->capture_default_str();
  app.add_option("--lambda3", c.lambda3, "Weight of L_gra")->group(g)->capture_default_str();
  app.add_option("--tau", c.tau, "Contrastive temperature")->group(g)->capture_default_str();
  app.add_option("--m_factor,--m-factor", c.m_factor, "Subclusters per class")->group(g)->capture_default_str();
  app.add_option("--subclusters", c.subclusters, "Explicit subcluster count (0: m_factor * classes)")->group(g);
  app.add_option("--classes", c.classes, "Cluster count (0: from labels)")->group(g);
  app.add_option("--embed_dim,--embed-dim", c.embed_dim, "Encoder output width")->group(g)->capture_default_str();
  app.add_option("--gcn_hidden,--gcn-hidden", c.gcn_hidden, "Encoder hidden widths")->group(g)->capture_default_str();
  app.add_option("--disc_hidden,--disc-hidden", c.disc_hidden, "Discriminator hidden width")->group(g)->capture_default_str();
  app.add_option("--ean_layers,--ean-layers", c.ean_layers, "Edge attention layers")->group(g)->capture_default_str();
  app.add_flag("--wo-gi,--wo_gi", c.wo_gi, "Ablation: no generative imputation")->group(g);
  app.add_flag("--wo-ea,--wo_ea", c.wo_ea, "Ablation: no edge attention network")->group(g);
  app.add_flag("--wo-sl,--wo_sl", c.wo_sl, "Ablation: no subcluster-aware loss")->group(g);
  app.add_flag("--sampled_bce,--sampled-bce", c.sampled_bce, "Approximate L_gra with sampled non-edges")->group(g);
}

void add_experiment_options(CLI::App& app, Options& o) {
  auto& s = o.spec;
  const char* g = "Experiment";
  app.add_option("--ratio", o.ratios, "Missing ratio(s) in [0, 1)")->group(g);
  app.add_option("--repeats", s.repeats, "Repeats per ratio (seeds seed..seed+repeats-1)")->group(g)->capture_default_str();
  app.add_option("--seed", s.seed, "Base seed")->group(g)->capture_default_str();
  app.add_option("--jobs", s.jobs, "Concurrent runs")->group(g)->capture_default_str();
  app.add_option("--restarts", s.kmeans_restarts, "k-means restarts")->group(g)->capture_default_str();
}

int fail(const std::string& what, int code) {
  std::cerr << "cgir: " << what << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustering of attribute-missing graphs with generative imputation and edge refinement"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Flat key = value file; keys are option names (flags override it)");
  Options o;
  o.spec.out = "cgir_out";
  app.add_option("--out", o.spec.out, "Output directory")->capture_default_str();
  add_data_options(app, o);
  add_train_options(app, o);
  add_experiment_options(app, o);

  CLI::App* run = app.add_subcommand("run", "Train and evaluate for the given ratio(s)");
  CLI::App* sweep = app.add_subcommand("sweep", "Missing-ratio sweep (default 0.0 ... 0.9) with ablation columns");
  CLI::App* gen = app.add_subcommand("gen-synth", "Write an SBM graph as edges.txt, features.csv, labels.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidInput;
  }

  try {
    if (!o.spec.data.edges.empty() || !o.spec.data.features.empty()) {
      o.spec.data.synthetic.reset();
    } else {
      o.spec.data.synthetic = o.sbm;
    }

    if (*gen) {
      const cgir::AttributeGraph g = cgir::generate_sbm(o.sbm);
      std::filesystem::create_directories(o.spec.out);
      const std::vector<std::filesystem::path> files = {"edges.txt", "features.csv", "labels.txt"};
      cgir::save_graph(g, o.spec.out / files[0], o.spec.out / files[1], o.spec.out / files[2]);
      cgir::write_manifest(o.spec.out, files);
      std::cout << "wrote " << g.num_nodes() << "-node graph to " << o.spec.out.string() << '\n';
      return EXIT_SUCCESS;
    }

    if (*sweep) {
      o.spec.ratios = o.ratios.empty() ? std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}
                                       : o.ratios;
    } else {
      o.spec.ratios = o.ratios.empty() ? std::vector<double>{0.0} : o.ratios;
    }
    o.spec.validate();
    const cgir::AttributeGraph graph = cgir::load_source(o.spec.data);

    cgir::ExperimentResult result = *sweep ? cgir::sweep(o.spec, graph) : cgir::run_experiment(o.spec, graph);
    cgir::write_manifest(o.spec.out, result.artifacts);
    for (const cgir::RatioResult& cell : result.cells) {
      const auto& m = cell.metrics;
      std::printf("%-12s ratio=%.2f  ACC %.4f±%.4f  NMI %.4f±%.4f  ARI %.4f±%.4f  F1 %.4f±%.4f\n",
                  cell.variant.c_str(), cell.ratio, m.mean.acc, m.std.acc, m.mean.nmi, m.std.nmi,
                  m.mean.ari, m.std.ari, m.mean.f1, m.std.f1);
    }
    (void)run;
    return EXIT_SUCCESS;
  } catch (const cgir::RunDiverged& e) {
    return fail(e.what(), kExitDiverged);
  } catch (const cgir::TrainingDiverged& e) {
    return fail(e.what(), kExitDiverged);
  } catch (const cgir::ArgumentError& e) {
    return fail(e.what(), kExitInvalidInput);
  } catch (const cgir::ConfigError& e) {
    return fail(e.what(), kExitInvalidInput);
  } catch (const cgir::ParseError& e) {
    return fail(e.what(), kExitInvalidInput);
  } catch (const cgir::BoundsError& e) {
    return fail(e.what(), kExitInvalidInput);
  } catch (const cgir::ConsistencyError& e) {
    return fail(e.what(), kExitInvalidInput);
  } catch (const cgir::IoError& e) {
    return fail(e.what(), kExitInvalidInput);
  } catch (const std::exception& e) {
    return fail(e.what(), EXIT_FAILURE);
  }
}
