#include <benchmark/benchmark.h>

#include "regionqa/model.hpp"
#include "regionqa/rng.hpp"
#include "regionqa/synth.hpp"
#include "regionqa/training.hpp"
#include "regionqa/vision.hpp"

using namespace regionqa;

namespace {

struct Problem {
  ModelConfig config;
  SyntheticData data;
  std::vector<McExample> examples;
  ModelParameters params;
  std::vector<const McExample*> batch;
};

Problem make_problem(Variant variant, std::size_t batch_size) {
  Problem p;
  p.config = ModelConfig::desk();
  p.config.variant = variant;
  SyntheticSpec spec;
  spec.num_questions = batch_size;
  p.data = synth_generate(spec);
  p.examples = encode_records(p.data.records, p.data.embeddings, p.config.language_scheme);
  Rng rng(1);
  p.params = init_model(p.config, rng);
  for (const auto& e : p.examples) p.batch.push_back(&e);
  return p;
}

void BM_Loss(benchmark::State& state, Variant variant, bool grads) {
  const Problem p = make_problem(variant, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    BatchLoss bl = minibatch_loss(p.params, p.config, p.batch, p.data.features, BnMode::train, grads);
    benchmark::DoNotOptimize(bl.loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ScoreQuestion(benchmark::State& state) {
  const Problem p = make_problem(Variant::region_sel, 1);
  for (auto _ : state) {
    auto scores = score_question(p.params, p.config, p.examples[0], p.data.features);
    benchmark::DoNotOptimize(scores.data());
  }
}

void BM_Nms(benchmark::State& state) {
  Rng rng(2);
  std::vector<Box> boxes;
  std::vector<double> scores;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    const double x = rng.uniform(0.0, 400.0), y = rng.uniform(0.0, 400.0);
    boxes.push_back(Box{x, y, x + rng.uniform(10.0, 100.0), y + rng.uniform(10.0, 100.0)});
    scores.push_back(rng.uniform());
  }
  for (auto _ : state) {
    auto kept = nms(boxes, scores, 0.3);
    benchmark::DoNotOptimize(kept.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Loss, region_sel_forward, Variant::region_sel, false)->Arg(32);
BENCHMARK_CAPTURE(BM_Loss, region_sel_backward, Variant::region_sel, true)->Arg(32);
BENCHMARK_CAPTURE(BM_Loss, uniform_regions_backward, Variant::uniform_regions, true)->Arg(32);
BENCHMARK_CAPTURE(BM_Loss, whole_image_backward, Variant::whole_image, true)->Arg(32);
BENCHMARK_CAPTURE(BM_Loss, language_only_backward, Variant::language_only, true)->Arg(32);
BENCHMARK(BM_ScoreQuestion);
BENCHMARK(BM_Nms)->Arg(20)->Arg(100)->Arg(1000);
BENCHMARK_MAIN();
