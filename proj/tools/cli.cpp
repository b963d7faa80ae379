#include "cli.hpp"

#include "spseg/checkpoint.hpp"
#include "spseg/config.hpp"
#include "spseg/dataset.hpp"
#include "spseg/io.hpp"
#include "spseg/parallel.hpp"
#include "spseg/pipeline.hpp"
#include "spseg/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

namespace spseg {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::uint64_t seed = 0;
  int threads = 1;

  std::string spec, out, in, data, config, model, pred, gt, mode = "indoor", split = "test", report;
  double voxel = 0.05;
  double grid = 0.01;
  int classes = 0;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f || !(f << text)) throw std::runtime_error("cannot write " + path.string());
}

int cmd_synth(const Options& o, std::ostream& out) {
  SynthSpec spec = o.spec.empty() ? SynthSpec{} : synth_spec_from(read_key_values(o.spec));
  spec.seed = o.seed;
  ensure_dir(o.out);
  const auto scenes = gen_synthetic(spec);
  std::vector<SceneRecord> records(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    records[i] = save_scene(o.out, scenes[i].name, scenes[i].split, scenes[i].cloud);
  });
  write_manifest(o.out, records);
  out << "wrote " << scenes.size() << " scenes (" << spec.scenes << " train, " << spec.test_scenes << " test) to "
      << o.out << "\n";
  return 0;
}

int cmd_preprocess(const Options& o, std::ostream& out) {
  SuperpointParams params;
  params.mode = o.mode == "outdoor" ? SceneMode::Outdoor : SceneMode::Indoor;
  params.vccs.voxel_resolution = o.voxel;
  params.seed = o.seed;
  ensure_dir(o.out);
  const auto records = read_manifest(o.in);
  std::vector<SceneRecord> written(records.size());
  std::vector<int> counts(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const Scene scene = load_scene(records[i]);
    const PreprocessResult r = preprocess(scene.cloud, o.voxel, params, o.grid);
    written[i] = save_scene(o.out, records[i].name, records[i].split, r.cloud, &r.initial);
    counts[i] = r.initial.count;
  });
  write_manifest(o.out, written);
  for (std::size_t i = 0; i < records.size(); ++i)
    out << records[i].name << ": " << counts[i] << " initial superpoints\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig config = o.config.empty() ? TrainConfig{} : train_config_from(read_key_values(o.config));
  config.seed = o.seed;
  const auto scenes = load_dataset(o.data, "train");
  if (scenes.empty()) throw std::runtime_error("no training scenes in " + o.data);
  std::vector<TrainScene> train_scenes;
  std::size_t points = 0;
  for (const auto& s : scenes) {
    if (!s.partition) throw std::runtime_error("scene '" + s.record.name + "' has no superpoints; run preprocess first");
    train_scenes.push_back({s.cloud, *s.partition});
    points += s.cloud.size();
  }
  ensure_dir(o.out);
  write_text(fs::path(o.out) / "config.txt", to_text(config));

  out << "# training on " << train_scenes.size() << " scenes, " << points << " points\n"
      << to_text(config) << "seed = " << config.seed << "\n";
  out.flush();

  std::ofstream log(fs::path(o.out) / "train_log.jsonl", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write training log in " + o.out);
  const std::string ckpt = (fs::path(o.out) / "model.ckpt").string();

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    nlohmann::json j = {{"epoch", r.epoch}, {"round", r.round}, {"t", r.level}, {"mt", r.target},
                        {"loss", r.loss},   {"lr", r.lr}};
    log << j.dump() << "\n";
    log.flush();
    if (r.epoch % config.round_epochs == 0) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "epoch %d round %d t %d mt %d loss %.5f lr %.5f\n", r.epoch, r.round, r.level,
                    r.target, r.loss, r.lr);
      out << buf;
      out.flush();
    }
  };
  hooks.on_checkpoint = [&](int, const ExtractorParams& p, const PrimitiveModel& m) {
    write_checkpoint(ckpt, to_tensors(p, m, config));
  };
  const TrainResult result = train(train_scenes, config, hooks);
  write_checkpoint(ckpt, to_tensors(result.params, result.model, config));
  out << "saved " << ckpt << " (" << result.model.size() << " primitives)\n";
  return 0;
}

int cmd_segment(const Options& o, std::ostream& out) {
  const LoadedModel m = from_tensors(read_checkpoint((fs::path(o.model) / "model.ckpt").string()));
  const RowMatrix classifier = fit_test_classifier(m.model, o.classes, o.seed);
  auto scenes = load_dataset(o.data, o.split == "all" ? "" : o.split);
  if (scenes.empty()) throw std::runtime_error("no scenes to segment in " + o.data);
  ensure_dir(o.out);
  std::vector<SceneRecord> written(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    PointCloud cloud = scenes[i].cloud;
    cloud.labels = segment(cloud, m.params, classifier, m.voxel, m.radius);
    const fs::path dir(o.out);
    write_ply((dir / (scenes[i].record.name + ".ply")).string(), cloud);
    write_int_sidecar((dir / (scenes[i].record.name + ".labels.txt")).string(), cloud.labels);
    written[i] = scenes[i].record;
  });
  write_manifest(o.out, written);
  out << "segmented " << scenes.size() << " scenes into " << o.classes << " classes\n";
  return 0;
}

void emit_report(const Options& o, const std::string& report, std::ostream& out) {
  out << report;
  if (!o.report.empty()) write_text(o.report, report);
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto pred = read_manifest(o.pred);
  std::map<std::string, SceneRecord> gt;
  for (auto& r : read_manifest(o.gt)) gt.emplace(r.name, std::move(r));
  std::vector<std::vector<int>> p(pred.size()), g(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto it = gt.find(pred[i].name);
    if (it == gt.end()) throw std::runtime_error("scene '" + pred[i].name + "' missing from " + o.gt);
    const Scene ps = load_scene(pred[i]);
    const Scene gs = load_scene(it->second);
    if (!ps.cloud.has_labels() || !gs.cloud.has_labels())
      throw std::runtime_error("scene '" + pred[i].name + "' lacks labels");
    if (ps.cloud.size() != gs.cloud.size()) throw std::runtime_error("scene '" + pred[i].name + "' sizes differ");
    p[i] = ps.cloud.labels;
    g[i] = gs.cloud.labels;
  }
  emit_report(o, "scenes = " + std::to_string(pred.size()) + "\n" + format_report(evaluate_dataset(p, g, o.classes)),
              out);
  return 0;
}

int cmd_baseline(const Options& o, std::ostream& out) {
  const auto scenes = load_dataset(o.data, o.split == "all" ? "" : o.split);
  if (scenes.empty()) throw std::runtime_error("no scenes in " + o.data);
  std::vector<std::vector<int>> p(scenes.size()), g(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    if (!scenes[i].cloud.has_labels()) throw std::runtime_error("scene '" + scenes[i].record.name + "' lacks labels");
    p[i] = vanilla_kmeans_baseline(scenes[i].cloud, o.classes, derive_seed(o.seed, i));
    g[i] = scenes[i].cloud.labels;
  });
  emit_report(o, "scenes = " + std::to_string(scenes.size()) + "\n" + format_report(evaluate_per_scene(p, g, o.classes)),
              out);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised point cloud segmentation by growing superpoints"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--seed", o.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str()->check(CLI::NonNegativeNumber);

  auto* synth = app.add_subcommand("synth", "Generate synthetic labelled rooms");
  synth->add_option("--spec", o.spec, "Synthetic spec (key = value)")->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "Output dataset directory")->required();

  auto* pre = app.add_subcommand("preprocess", "Voxel downsampling and initial superpoints");
  pre->add_option("--in", o.in, "Input dataset directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--mode", o.mode, "Scene type")->check(CLI::IsMember({"indoor", "outdoor"}))->capture_default_str();
  pre->add_option("--voxel", o.voxel, "Voxel size in metres")->check(CLI::PositiveNumber)->capture_default_str();
  pre->add_option("--grid", o.grid, "Grid filter applied before voxelization (0 disables)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  pre->add_option("--out", o.out, "Output dataset directory")->required();

  auto* tr = app.add_subcommand("train", "Train the feature extractor and primitives");
  tr->add_option("--data", o.data, "Preprocessed dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--config", o.config, "Training config (key = value)")->check(CLI::ExistingFile);
  tr->add_option("--out", o.out, "Model directory")->required();

  auto* seg = app.add_subcommand("segment", "Label scenes with a trained model");
  seg->add_option("--data", o.data, "Preprocessed dataset directory")->required()->check(CLI::ExistingDirectory);
  seg->add_option("--model", o.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  seg->add_option("--classes", o.classes, "Number of semantic classes")->required()->check(CLI::PositiveNumber);
  seg->add_option("--split", o.split, "Scenes to label")->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();
  seg->add_option("--out", o.out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Hungarian-matched OA / mAcc / mIoU");
  ev->add_option("--pred", o.pred, "Predicted labels directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gt", o.gt, "Ground truth dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--classes", o.classes, "Number of semantic classes")->required()->check(CLI::PositiveNumber);
  ev->add_option("--report", o.report, "Also write the report to this file");

  auto* base = app.add_subcommand("baseline", "Per-scene K-means on xyzrgb");
  base->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  base->add_option("--classes", o.classes, "Number of semantic classes")->required()->check(CLI::PositiveNumber);
  base->add_option("--split", o.split, "Scenes to cluster")->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();
  base->add_option("--report", o.report, "Also write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    set_num_threads(o.threads);
    if (*synth) return cmd_synth(o, out);
    if (*pre) return cmd_preprocess(o, out);
    if (*tr) return cmd_train(o, out);
    if (*seg) return cmd_segment(o, out);
    if (*ev) return cmd_eval(o, out);
    if (*base) return cmd_baseline(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace spseg
