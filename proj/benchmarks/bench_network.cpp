#include <benchmark/benchmark.h>

#include "seqseg/network.hpp"
#include "seqseg/rowsim.hpp"
#include "seqseg/trainer.hpp"

using namespace seqseg;

namespace {

SequenceSample make_sample(const CameraModel& camera, int frames) {
  Rng rng(7);
  const FieldModel field = sample_field_model(rng);
  return render_sequence(field, camera, frames, rng).sample;
}

void BM_ForwardSequence(benchmark::State& state) {
  NetworkConfig cfg;
  cfg.sequential_module = state.range(0) != 0;
  Rng rng(1);
  Network net(cfg, rng);
  CameraModel camera;
  const SequenceSample sample = make_sample(camera, cfg.sequence_length);
  for (auto _ : state) {
    auto masks = net.forward_sequence(sample.frames, Mode::Eval, rng);
    benchmark::DoNotOptimize(masks.back().data().data());
  }
}
BENCHMARK(BM_ForwardSequence)->Arg(0)->Arg(1);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.network.sequential_module = state.range(0) != 0;
  cfg.epochs = 1;
  cfg.batch_sequences = 1;

  CameraModel camera;
  DatasetHeader header;
  header.height = camera.height_px;
  header.width = camera.width_px;
  header.sequence_length = cfg.network.sequence_length;
  header.resolution_mm_per_px = camera.resolution_mm_per_px;
  Dataset data;
  data.header = header;
  data.samples.push_back(make_sample(camera, cfg.network.sequence_length));

  for (auto _ : state) {
    Trainer trainer(cfg);
    trainer.train(data, "", nullptr);
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
