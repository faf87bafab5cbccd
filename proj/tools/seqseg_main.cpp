// Command-line front end: dataset simulation, training, evaluation, the
// ablation table and mask export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seqseg/checkpoint.hpp"
#include "seqseg/dataset.hpp"
#include "seqseg/network.hpp"
#include "seqseg/pgm.hpp"
#include "seqseg/preprocess.hpp"
#include "seqseg/rowsim.hpp"
#include "seqseg/trainer.hpp"

namespace {

using namespace seqseg;

struct SimulateArgs {
  int sequences = 100;
  std::uint64_t seed = 0;
  std::string out;
  int frames = 5;
  int width = 128;
  int height = 96;
  double resolution = 4.0;  // mm per pixel
  double brightness = 0.0;
};

int run_simulate(const SimulateArgs& args) {
  CameraModel camera;
  camera.width_px = args.width;
  camera.height_px = args.height;
  camera.resolution_mm_per_px = args.resolution;

  Rng rng(args.seed);
  std::vector<SequenceSample> samples;
  samples.reserve(static_cast<std::size_t>(args.sequences));
  for (int i = 0; i < args.sequences; ++i) {
    const FieldModel field = sample_field_model(rng);
    RenderedSequence seq = render_sequence(field, camera, args.frames, rng);
    if (args.brightness != 0.0) {
      for (Tensor& frame : seq.sample.frames) {
        for (double& v : frame.data()) v += args.brightness;
      }
    }
    samples.push_back(std::move(seq.sample));
  }

  DatasetHeader header;
  header.channels = 1;
  header.height = args.height;
  header.width = args.width;
  header.sequence_length = args.frames;
  header.resolution_mm_per_px = args.resolution;
  write_dataset(args.out, header, samples);
  std::cout << "wrote " << samples.size() << " sequences to " << args.out << '\n';
  return 0;
}

struct NetFlags {
  int depth = 2;
  int dense_layers = 2;
  int growth = 4;
  int stem_maps = 32;
  int fusion_maps = 16;
  int merge_maps = 12;
  double dropout = 1.0 / 3.0;
  bool no_preprocess = false;
  bool no_sequential = false;
  bool no_spatial_context = false;
};

void add_net_flags(CLI::App* cmd, NetFlags& flags) {
  cmd->add_option("--depth", flags.depth, "encoder depth (transition downs)");
  cmd->add_option("--dense-layers", flags.dense_layers, "layers per dense block (L)");
  cmd->add_option("--growth", flags.growth, "dense block growth rate (G)");
  cmd->add_option("--stem-maps", flags.stem_maps, "feature maps of the first layer");
  cmd->add_option("--fusion-maps", flags.fusion_maps, "3D kernels per fusion layer");
  cmd->add_option("--merge-maps", flags.merge_maps, "feature maps in the merge head");
  cmd->add_option("--dropout", flags.dropout, "dropout rate");
  cmd->add_flag("--no-preprocess", flags.no_preprocess, "skip input conditioning");
  cmd->add_flag("--no-sequential", flags.no_sequential, "single-frame baseline (no sequential module)");
  cmd->add_flag("--no-spatial-context", flags.no_spatial_context, "fixed 5x5/d=1 fusion kernels");
}

NetworkConfig make_network_config(const NetFlags& flags, const DatasetHeader& header) {
  NetworkConfig net;
  net.sequence_length = header.sequence_length;
  net.in_channels = header.channels;
  net.height = header.height;
  net.width = header.width;
  net.encoder_depth = flags.depth;
  net.dense_layers = flags.dense_layers;
  net.growth_rate = flags.growth;
  net.stem_maps = flags.stem_maps;
  net.fusion_maps = flags.fusion_maps;
  net.merge_maps = flags.merge_maps;
  net.dropout_rate = flags.dropout;
  net.preprocessing = !flags.no_preprocess;
  net.sequential_module = !flags.no_sequential;
  net.spatial_context = !flags.no_spatial_context;
  return net;
}

struct TrainArgs {
  std::string data;
  std::string out = "model.ckpt";
  std::string resume;
  std::string log_path;
  int epochs = 40;
  int batch = 2;
  double lr = 0.01;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;
  std::string loss_frames = "all";
  std::vector<double> class_weights{1.0, 10.0, 10.0};
  NetFlags net;
};

int run_train(const TrainArgs& args) {
  const Dataset data = load_dataset(args.data);

  TrainConfig cfg;
  cfg.network = make_network_config(args.net, data.header);
  cfg.epochs = args.epochs;
  cfg.batch_sequences = args.batch;
  cfg.base_learning_rate = args.lr;
  cfg.seed = args.seed;
  cfg.checkpoint_interval = args.checkpoint_interval;
  cfg.loss_frames = args.loss_frames == "current" ? TrainConfig::LossFrames::Current
                                                  : TrainConfig::LossFrames::All;
  if (args.class_weights.size() != 3) throw std::runtime_error("train: --class-weights needs 3 values");
  std::copy(args.class_weights.begin(), args.class_weights.end(), cfg.class_weights.begin());

  Trainer trainer = args.resume.empty() ? Trainer(cfg) : Trainer(cfg, args.resume);
  std::cout << "parameters: " << trainer.network().parameter_count() << '\n';

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!args.log_path.empty()) {
    log_file.open(args.log_path);
    if (!log_file) throw std::runtime_error("train: cannot open log " + args.log_path);
    log = &log_file;
  }
  const TrainResult result = trainer.train(data, args.out, log);
  if (!result.epoch_stats.empty()) {
    std::cout << "final mean loss: " << result.epoch_stats.back().mean_loss << '\n';
  }
  std::cout << "checkpoint: " << args.out << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string frame_scope = "current";
  std::string out;
  double min_area_cm2 = 0.5;
};

int run_eval(const EvalArgs& args) {
  Network net = load_checkpoint(args.checkpoint).build();
  const Dataset data = load_dataset(args.data);
  EvalOptions options;
  options.frame_scope = args.frame_scope == "all" ? EvalOptions::FrameScope::All
                                                  : EvalOptions::FrameScope::Current;
  options.min_area_cm2 = args.min_area_cm2;
  const ObjectWiseReport report = evaluate(net, data, options);
  std::cout << report.table();
  if (!args.out.empty()) {
    std::ofstream table(args.out + ".txt");
    table << report.table();
    std::ofstream kv(args.out + ".kv");
    kv << report.key_values();
    if (!table || !kv) throw std::runtime_error("eval: cannot write report to " + args.out);
    std::cout << "wrote " << args.out << ".txt and " << args.out << ".kv\n";
  }
  return 0;
}

struct AblateArgs {
  std::string train_path;
  std::string test_path;
  int epochs = 12;
  int batch = 2;
  double lr = 0.01;
  std::uint64_t seed = 0;
  std::string out;
  NetFlags net;
};

int run_ablate(const AblateArgs& args) {
  const Dataset train_data = load_dataset(args.train_path);
  const Dataset test_data = load_dataset(args.test_path);

  struct Row {
    const char* label;
    bool preprocess, sequential, spatial;
  };
  const Row rows[] = {
      {"vanilla", false, false, false},
      {"+preprocessing", true, false, false},
      {"+sequential", true, true, false},
      {"+spatial-context", true, true, true},
  };

  std::ostringstream table;
  table << "configuration      avg_f1\n";
  for (const Row& row : rows) {
    NetFlags flags = args.net;
    flags.no_preprocess = !row.preprocess;
    flags.no_sequential = !row.sequential;
    flags.no_spatial_context = !row.spatial;

    TrainConfig cfg;
    cfg.network = make_network_config(flags, train_data.header);
    cfg.epochs = args.epochs;
    cfg.batch_sequences = args.batch;
    cfg.base_learning_rate = args.lr;
    cfg.seed = args.seed;

    Trainer trainer(cfg);
    trainer.train(train_data, "", nullptr);
    const ObjectWiseReport report = evaluate(trainer.network(), test_data);
    char line[64];
    std::snprintf(line, sizeof(line), "%-18s %6.1f\n", row.label, 100.0 * report.average_f1);
    table << line;
    std::cout << line << std::flush;
  }
  std::cout << table.str();
  if (!args.out.empty()) {
    std::ofstream out(args.out);
    out << table.str();
    if (!out) throw std::runtime_error("ablate: cannot write " + args.out);
  }
  return 0;
}

struct ExportArgs {
  std::string data;
  std::string out_dir;
  std::string checkpoint;
  int limit = 8;
};

int run_export(const ExportArgs& args) {
  const Dataset data = load_dataset(args.data);
  std::filesystem::create_directories(args.out_dir);

  std::optional<Network> net;
  if (!args.checkpoint.empty()) net.emplace(load_checkpoint(args.checkpoint).build());

  Rng scratch(0);
  const std::size_t count = std::min<std::size_t>(data.size(), static_cast<std::size_t>(args.limit));
  for (std::size_t i = 0; i < count; ++i) {
    const SequenceSample& sample = data.samples[i];
    std::vector<Tensor> masks;
    if (net) {
      std::vector<Tensor> frames = sample.frames;
      if (net->config().preprocessing) {
        for (Tensor& f : frames) f = preprocess_image(f);
      }
      masks = net->forward_sequence(frames, Mode::Eval, scratch);
    }
    for (std::size_t f = 0; f < sample.frames.size(); ++f) {
      const std::string base = args.out_dir + "/seq" + std::to_string(i) + "_f" + std::to_string(f);
      const Tensor& frame = sample.frames[f];
      const int h = frame.dim(1), w = frame.dim(2);
      std::vector<double> ch(frame.data().begin(), frame.data().begin() + static_cast<std::size_t>(h) * w);
      write_pgm(base + ".pgm", h, w, gray_from_channel(Tensor::from_data({h, w}, std::move(ch)), 0.0, 1.0));
      write_pgm(base + "_gt.pgm", h, w, gray_from_mask(sample.labels[f]));
      if (net) write_pgm(base + "_pred.pgm", h, w, gray_from_mask(argmax_mask(masks[f])));
    }
  }
  std::cout << "exported " << count << " sequences to " << args.out_dir << '\n';
  return 0;
}

struct InfoArgs {
  NetFlags net;
  int frames = 5;
  int width = 128;
  int height = 96;
  int channels = 1;
};

int run_info(const InfoArgs& args) {
  DatasetHeader header;
  header.channels = args.channels;
  header.height = args.height;
  header.width = args.width;
  header.sequence_length = args.frames;
  const NetworkConfig cfg = make_network_config(args.net, header);
  cfg.validate();
  Rng rng(0);
  Network net(cfg, rng);
  std::cout << "parameters: " << net.parameter_count() << '\n';
  std::cout << "receptive fields (pixels):\n";
  for (const StageRf& stage : receptive_field_report(cfg)) {
    std::cout << "  " << stage.name << ": " << stage.rf_h << "x" << stage.rf_w << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential crop-weed segmentation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "generate a simulated crop-row dataset");
  simulate->add_option("--sequences", sim.sequences, "number of sequences");
  simulate->add_option("--seed", sim.seed, "generator seed");
  simulate->add_option("-o,--out", sim.out, "output RSEQ container")->required();
  simulate->add_option("--frames", sim.frames, "frames per sequence (S)");
  simulate->add_option("--width", sim.width, "frame width in pixels");
  simulate->add_option("--height", sim.height, "frame height in pixels");
  simulate->add_option("--resolution", sim.resolution, "ground resolution, mm per pixel");
  simulate->add_option("--brightness", sim.brightness, "additive offset baked into the frames");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "train a model on an RSEQ container");
  train->add_option("--data", tr.data, "training RSEQ container")->required();
  train->add_option("-o,--out", tr.out, "checkpoint path");
  train->add_option("--resume", tr.resume, "checkpoint to resume from");
  train->add_option("--log", tr.log_path, "metrics log file (default: stdout)");
  train->add_option("--epochs", tr.epochs, "training epochs");
  train->add_option("--batch", tr.batch, "sequences per mini-batch (B)");
  train->add_option("--lr", tr.lr, "initial learning rate");
  train->add_option("--seed", tr.seed, "training seed");
  train->add_option("--checkpoint-interval", tr.checkpoint_interval, "epochs between checkpoints");
  train->add_option("--loss-frames", tr.loss_frames, "frames in the loss: all|current")
      ->check(CLI::IsMember({"all", "current"}));
  train->add_option("--class-weights", tr.class_weights, "background, crop, weed loss weights")
      ->expected(3);
  add_net_flags(train, tr.net);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "object-wise evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "evaluation RSEQ container")->required();
  eval_cmd->add_option("--frame-scope", ev.frame_scope, "score current frame only, or all")
      ->check(CLI::IsMember({"current", "all"}));
  eval_cmd->add_option("-o,--out", ev.out, "report path prefix (.txt and .kv)");
  eval_cmd->add_option("--min-area", ev.min_area_cm2, "object area threshold in cm^2");

  AblateArgs ab;
  CLI::App* ablate = app.add_subcommand("ablate", "train and score the four ablation configurations");
  ablate->add_option("--train", ab.train_path, "training RSEQ container")->required();
  ablate->add_option("--test", ab.test_path, "held-out RSEQ container")->required();
  ablate->add_option("--epochs", ab.epochs, "epochs per configuration");
  ablate->add_option("--batch", ab.batch, "sequences per mini-batch");
  ablate->add_option("--lr", ab.lr, "initial learning rate");
  ablate->add_option("--seed", ab.seed, "training seed");
  ablate->add_option("-o,--out", ab.out, "write the table to a file");
  add_net_flags(ablate, ab.net);

  ExportArgs ex;
  CLI::App* export_cmd = app.add_subcommand("export-masks", "dump frames and masks as PGM images");
  export_cmd->add_option("--data", ex.data, "RSEQ container")->required();
  export_cmd->add_option("-o,--out", ex.out_dir, "output directory")->required();
  export_cmd->add_option("--checkpoint", ex.checkpoint, "also export predictions from this model");
  export_cmd->add_option("--limit", ex.limit, "sequences to export");

  InfoArgs in_args;
  CLI::App* info = app.add_subcommand("info", "parameter count and receptive fields for a configuration");
  info->add_option("--frames", in_args.frames, "sequence length (S)");
  info->add_option("--width", in_args.width, "frame width");
  info->add_option("--height", in_args.height, "frame height");
  info->add_option("--channels", in_args.channels, "input channels");
  add_net_flags(info, in_args.net);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (train->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (ablate->parsed()) return run_ablate(ab);
    if (export_cmd->parsed()) return run_export(ex);
    if (info->parsed()) return run_info(in_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
