// Serial reference vs OpenMP paths for batch processing and stream parsing.
#include <benchmark/benchmark.h>

#include <sstream>
#include <string>
#include <vector>

#include "qtune/pipeline.hpp"
#include "qtune/record_io.hpp"
#include "qtune/sim.hpp"

namespace {

using namespace qtune;

const Population& population() {
  static const Population pop = [] {
    PopulationSpec s;
    s.n_samples = 4096;
    s.tokens_min = 64;
    s.tokens_max = 192;
    s.seed = 1;
    return generate_population(s);
  }();
  return pop;
}

const std::string& stream_text() {
  static const std::string text = [] {
    std::ostringstream ss;
    write_population(population(), ss);
    return ss.str();
  }();
  return text;
}

std::vector<std::vector<SampleStat>> batches(std::size_t size) {
  const auto& s = population().samples;
  std::vector<std::vector<SampleStat>> out;
  for (std::size_t i = 0; i < s.size(); i += size) {
    out.emplace_back(s.begin() + i, s.begin() + std::min(s.size(), i + size));
  }
  return out;
}

void BM_ProcessBatches(benchmark::State& state) {
  const auto exec = state.range(0) ? Execution::kParallel : Execution::kSerial;
  EngineConfig cfg;
  cfg.batch_size = static_cast<std::size_t>(state.range(1));
  const auto bs = batches(cfg.batch_size);
  for (auto _ : state) {
    auto out = process_batches(bs, cfg, 0, exec);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * population().samples.size());
}
BENCHMARK(BM_ProcessBatches)
    ->ArgNames({"parallel", "batch"})
    ->ArgsProduct({{0, 1}, {8, 64, 256}})
    ->Unit(benchmark::kMillisecond);

void BM_RunStream(benchmark::State& state) {
  StreamOptions opts;
  opts.exec = state.range(0) ? Execution::kParallel : Execution::kSerial;
  EngineConfig cfg;
  for (auto _ : state) {
    std::istringstream in(stream_text());
    std::ostringstream dec;
    auto sum = run_stream(in, cfg, &dec, nullptr, opts);
    benchmark::DoNotOptimize(sum.kept);
  }
  state.SetBytesProcessed(state.iterations() * stream_text().size());
}
BENCHMARK(BM_RunStream)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ParseRecord(benchmark::State& state) {
  const auto line = format_record(population().samples.front());
  for (auto _ : state) {
    auto s = parse_record(line);
    benchmark::DoNotOptimize(s.ppl);
  }
}
BENCHMARK(BM_ParseRecord);

}  // namespace

BENCHMARK_MAIN();
