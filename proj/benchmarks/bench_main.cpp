#include <benchmark/benchmark.h>

#include "rateaudit/featurize.hpp"
#include "rateaudit/mixedmodel.hpp"
#include "rateaudit/simulate.hpp"

using namespace rateaudit;

namespace {

std::vector<FeatureRow> sim_rows(std::size_t J, std::size_t n) {
  GeneratorConfig c = reference_config();
  c.J = J;
  c.n_per_question = {n};
  return generate(c).rows;
}

Corpus text_corpus(std::size_t n_rows) {
  const std::vector<std::string> words = {"The", "slope", "is", "rise", "over", "run.", "the", "to",
                                          "fast", "more", "then", "graph", "line", "x", "=", "2"};
  std::vector<ResponseRecord> recs;
  std::uint64_t state = 1;
  auto next = [&] {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<std::size_t>(state >> 33);
  };
  for (std::size_t i = 0; i < n_rows; ++i) {
    std::string text;
    const std::size_t len = 5 + next() % 40;
    for (std::size_t k = 0; k < len; ++k) text += (k ? " " : "") + words[next() % words.size()];
    const std::size_t q = next() % 31;
    recs.push_back({"r" + std::to_string(i), "s" + std::to_string(i % 558), "q" + std::to_string(q),
                    kAllConstructs[q % 4], text, static_cast<int>(next() % 5), 4});
  }
  return Corpus::from_records(std::move(recs));
}

void BM_RemlDeviance(benchmark::State& state) {
  const auto rows = sim_rows(static_cast<std::size_t>(state.range(0)), 50);
  const Design d = build_design(rows, ModelSpec::model3());
  const std::vector<double> theta = {-0.5, -0.3, -1.3};
  for (auto _ : state) benchmark::DoNotOptimize(reml_deviance(d, theta));
}
BENCHMARK(BM_RemlDeviance)->Arg(31)->Arg(200)->Arg(1000);

void BM_FitModel(benchmark::State& state) {
  const auto rows = sim_rows(31, 179);
  const ModelSpec spec = ModelSpec::from_id(static_cast<ModelId>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_reml(rows, spec).deviance);
}
BENCHMARK(BM_FitModel)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  GeneratorConfig c = reference_config();
  for (auto _ : state) benchmark::DoNotOptimize(generate(c).rows.size());
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

void BM_Featurize(benchmark::State& state) {
  const Corpus corpus = text_corpus(5549);
  FeatureOptions opt;
  opt.threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_feature_table(corpus, opt).size());
}
BENCHMARK(BM_Featurize)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
