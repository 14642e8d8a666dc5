#include <benchmark/benchmark.h>

#include "cgir/evaluation.hpp"
#include "cgir/graph_data.hpp"
#include "cgir/subcluster.hpp"
#include "cgir/trainer.hpp"

using namespace cgir;

namespace {

AttributeGraph bench_graph(Index nodes) {
  SbmParams p;
  p.nodes = nodes;
  p.classes = 3;
  p.p_in = 20.0 / static_cast<double>(nodes);
  p.p_out = 2.0 / static_cast<double>(nodes);
  p.attr_dim = 32;
  return generate_sbm(p);
}

// Time per training epoch (one D-step plus one G-step) as n grows.
void BM_TrainEpoch(benchmark::State& state) {
  const AttributeGraph g = bench_graph(state.range(0));
  const MissingMask mask = make_missing_mask(g.num_nodes(), 0.4, 0);
  TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(g, mask, cfg));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TrainEpoch)->Arg(250)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_WardCluster(benchmark::State& state) {
  const AttributeGraph g = bench_graph(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ward_cluster(g.features, 9));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_WardCluster)->Arg(250)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_KMeans(benchmark::State& state) {
  const AttributeGraph g = bench_graph(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kmeans_cluster(g.features, 3, 10, 0));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KMeans)->Arg(250)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_ClusterMetrics(benchmark::State& state) {
  const AttributeGraph g = bench_graph(state.range(0));
  const Labels& truth = *g.labels;
  Labels pred = truth;
  for (std::size_t i = 0; i < pred.size(); i += 7) pred[i] = (pred[i] + 1) % 3;
  for (auto _ : state) benchmark::DoNotOptimize(cluster_metrics(pred, truth));
}
BENCHMARK(BM_ClusterMetrics)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
