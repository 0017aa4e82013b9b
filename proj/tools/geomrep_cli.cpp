// geomrep command-line driver: data generation, both training stages,
// evaluation and latent interpolation strips.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "geomrep/config.hpp"
#include "geomrep/runtime.hpp"
#include "geomrep/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace geomrep;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitOrder = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kMissingInput:
    case ErrorKind::kIo:
    case ErrorKind::kBadMagic: return kExitMissing;
    case ErrorKind::kDependencyOrder: return kExitOrder;
    default: return kExitInternal;
  }
}

void emit(const Json& j) { std::cout << j.dump() << std::endl; }

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  bool verify = false;
};

fs::path dataset_dir(const RunConfig& rc) {
  if (const char* cache = std::getenv("GEOMREP_CACHE"); cache && *cache) {
    return fs::path(cache) / "datasets" / rc.data_hash();
  }
  return rc.output_dir / "dataset";
}

fs::path repr_dir(const RunConfig& rc) { return rc.output_dir / "repr"; }

std::string manifest_hash(const fs::path& dir) {
  const Json j = Json::parse(read_file(dir / "manifest.json"));
  return j.value("config_hash", std::string());
}

void verify_hash(const fs::path& dir, const std::string& expected, const char* what) {
  const std::string found = manifest_hash(dir);
  if (found != expected) {
    throw Error(ErrorKind::kConfig, std::string(what) + " at " + dir.string() + " carries config hash " + found +
                                        " but the current config hashes to " + expected);
  }
}

void require_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) {
    throw Error(ErrorKind::kMissingInput, "dataset not found at " + dir.string() + " (run gen-data first)");
  }
}

void require_repr(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) {
    throw Error(ErrorKind::kDependencyOrder,
                "representation checkpoint not found at " + dir.string() + " (run train-repr first)");
  }
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  return std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

int cmd_gen_data(const Common& c) {
  const RunConfig rc = load_run_config(c.config_path, c.overrides);
  const fs::path dir = dataset_dir(rc);
  const Dataset ds = generate_corpus(rc.corpus());
  fs::remove_all(dir);
  write_dataset(ds, dir);
  if (c.verify) verify_hash(dir, rc.data_hash(), "dataset");
  int n_virtual = 0;
  for (const auto& p : ds.pairs) n_virtual += p.meta.is_virtual ? 1 : 0;
  emit({{"event", "dataset"},
        {"path", dir.string()},
        {"pairs", ds.pairs.size()},
        {"virtual_pairs", n_virtual},
        {"viewpoints", ds.manifest.n_viewpoints},
        {"train_subjects", ds.manifest.train_subjects},
        {"test_subjects", ds.manifest.test_subjects},
        {"train_cameras", ds.manifest.train_cameras},
        {"config_hash", rc.data_hash()}});
  return kExitOk;
}

int cmd_train_repr(const Common& c, bool resume, const std::string& log_path) {
  const RunConfig rc = load_run_config(c.config_path, c.overrides);
  const fs::path data_dir = dataset_dir(rc);
  require_dataset(data_dir);
  if (c.verify) verify_hash(data_dir, rc.data_hash(), "dataset");
  const Dataset ds = read_dataset(data_dir);
  std::ofstream log_file;
  if (!log_path.empty()) log_file.open(log_path, resume ? std::ios::app : std::ios::trunc);
  RepresentationOptions opt;
  opt.output_dir = repr_dir(rc);
  opt.resume = resume;
  opt.log = log_path.empty() ? &std::cout : &log_file;
  opt.config_hash = rc.hash();
  if (resume && c.verify && fs::exists(repr_dir(rc) / "manifest.json")) {
    verify_hash(repr_dir(rc), rc.hash(), "checkpoint");
  }
  const auto r = train_representation(ds, rc.model, rc.train, opt);
  emit({{"event", "checkpoint"},
        {"path", repr_dir(rc).string()},
        {"step", r.checkpoint.step},
        {"checkpoint_id", checkpoint_id(repr_dir(rc))},
        {"config_hash", rc.hash()}});
  return kExitOk;
}

int cmd_train_regressor(const Common& c, const std::string& input) {
  const RunConfig rc = load_run_config(c.config_path, c.overrides);
  const bool baseline = !input.empty();
  const RegressorInput kind = baseline ? regressor_input_from_string(input) : RegressorInput::kLatent;
  const fs::path data_dir = dataset_dir(rc);
  require_dataset(data_dir);
  if (c.verify) verify_hash(data_dir, rc.data_hash(), "dataset");

  std::optional<RepresentationCheckpoint> repr;
  if (kind != RegressorInput::kKeypoints) {
    require_repr(repr_dir(rc));
    if (c.verify) verify_hash(repr_dir(rc), rc.hash(), "checkpoint");
    repr = load_representation(repr_dir(rc));
  }
  ReadOptions ro;
  ro.load_labels = true;
  const Dataset ds = read_dataset(data_dir, ro);
  TrainConfig tc = rc.train;
  const RegressorResult r = baseline ? train_baseline_regressor(ds, tc, kind, repr ? &repr->model.fwd : nullptr)
                                     : train_regressor(ds, repr->model.fwd, tc);
  RegressorCheckpoint ckpt = r.checkpoint;
  ckpt.config_hash = rc.hash();
  ckpt.encoder_id = repr ? checkpoint_id(repr_dir(rc)) : "";
  const fs::path out = rc.output_dir / (baseline ? "baseline_" + slug(input) : std::string("pose"));
  save_regressor(out, ckpt);
  for (std::size_t s = 0; s < r.curve.size(); ++s) {
    if (s % 100 == 0 || s + 1 == r.curve.size()) emit({{"event", "step"}, {"step", s}, {"regression_mse_m2", r.curve[s]}});
  }
  emit({{"event", "checkpoint"},
        {"path", out.string()},
        {"input", to_string(kind)},
        {"labels", ckpt.label_ids.size()},
        {"checkpoint_id", checkpoint_id(out)},
        {"config_hash", rc.hash()}});
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& protocol_name) {
  const RunConfig rc = load_run_config(c.config_path, c.overrides);
  const Protocol protocol = protocol_name.empty() ? rc.eval.protocol : protocol_from_string(protocol_name);
  const fs::path ckpt_dir = checkpoint.empty() ? rc.output_dir / "pose" : fs::path(checkpoint);
  if (!fs::exists(ckpt_dir / "manifest.json")) {
    throw Error(ErrorKind::kDependencyOrder, "regressor checkpoint not found at " + ckpt_dir.string());
  }
  const fs::path data_dir = dataset_dir(rc);
  require_dataset(data_dir);
  if (c.verify) {
    verify_hash(data_dir, rc.data_hash(), "dataset");
    verify_hash(ckpt_dir, rc.hash(), "checkpoint");
  }
  const RegressorCheckpoint reg = load_regressor(ckpt_dir);
  std::optional<RepresentationCheckpoint> repr;
  if (reg.input != RegressorInput::kKeypoints) {
    require_repr(repr_dir(rc));
    if (checkpoint_id(repr_dir(rc)) != reg.encoder_id) {
      throw Error(ErrorKind::kDependencyOrder, "regressor was trained on a different encoder checkpoint");
    }
    repr = load_representation(repr_dir(rc));
  }
  ReadOptions ro;
  ro.load_labels = true;
  const Dataset ds = read_dataset(data_dir, ro);
  EvalReport report = run_protocol(ds, reg, repr ? &repr->model.fwd : nullptr, protocol);
  report.config_hash = rc.hash();
  report.checkpoint_id = checkpoint_id(ckpt_dir);
  report.seeds = {rc.seeds.data, rc.seeds.train};
  Json j = to_json(report);
  j["pck_threshold_mm"] = rc.eval.pck_threshold_mm;
  j["timestamp"] = timestamp();
  const fs::path out = rc.output_dir / "reports" / (ckpt_dir.filename().string() + "_" + to_string(protocol) + ".json");
  fs::create_directories(out.parent_path());
  write_file(out, j.dump(1) + "\n");
  emit({{"event", "report"},
        {"path", out.string()},
        {"protocol", to_string(protocol)},
        {"mpjpe_mm", report.aggregate.mpjpe},
        {"pmpjpe_mm", report.aggregate.pmpjpe},
        {"samples", report.aggregate.count}});
  return kExitOk;
}

int cmd_interpolate(const Common& c, const std::string& checkpoint, std::int64_t a, std::int64_t b, int steps) {
  const RunConfig rc = load_run_config(c.config_path, c.overrides);
  const fs::path ckpt_dir = checkpoint.empty() ? repr_dir(rc) : fs::path(checkpoint);
  require_repr(ckpt_dir);
  const fs::path data_dir = dataset_dir(rc);
  require_dataset(data_dir);
  if (c.verify) {
    verify_hash(data_dir, rc.data_hash(), "dataset");
    verify_hash(ckpt_dir, rc.hash(), "checkpoint");
  }
  const RepresentationCheckpoint repr = load_representation(ckpt_dir);
  const Dataset ds = read_dataset(data_dir);
  auto find = [&](std::int64_t id) -> const StoredPair& {
    for (const auto& p : ds.pairs) {
      if (p.meta.id == id) return p;
    }
    throw Error(ErrorKind::kMissingInput, "sample " + std::to_string(id) + " is not in the dataset");
  };
  const LatentCode ga = encode(repr.model.fwd, find(a).source.unpack());
  const LatentCode gb = encode(repr.model.fwd, find(b).source.unpack());
  const auto seq = interpolate_latents(ga, gb, steps, repr.model.bwd);
  std::vector<SkeletonMap> maps;
  for (const auto& s : seq) maps.push_back(s.map);
  const fs::path out = rc.output_dir / ("interp_" + pair_file_stem(a) + "_" + pair_file_stem(b) + ".png");
  write_map_strip_png(out, maps);
  double min_iou = 1.0;
  for (std::size_t i = 1; i < maps.size(); ++i) min_iou = std::min(min_iou, skeleton_iou(maps[i - 1], maps[i]));
  emit({{"event", "interpolation"}, {"path", out.string()}, {"steps", steps}, {"min_consecutive_iou", min_iou}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  geomrep::tune_allocator();
  CLI::App app{"Geometry-aware pose representation toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "run configuration (JSON)")->required();
    sub->add_option("--set", common.overrides, "override a field, section.key=value");
    sub->add_flag("--verify", common.verify, "check config hashes of every input artifact");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic multi-view dataset");
  add_common(gen);

  bool resume = false;
  std::string log_path;
  auto* repr = app.add_subcommand("train-repr", "train the bidirectional view-synthesis model");
  add_common(repr);
  repr->add_flag("--resume", resume, "continue from the last checkpoint");
  repr->add_option("--log", log_path, "write per-step JSON records here instead of stdout");

  auto* pose = app.add_subcommand("train-pose", "train the latent-to-pose regressor on a frozen encoder");
  add_common(pose);

  std::string input = "keypoints2d";
  auto* base = app.add_subcommand("train-baseline", "train a capacity-matched baseline regressor");
  add_common(base);
  base->add_option("--input", input, "keypoints2d or keypoints2d+latent");

  std::string checkpoint, protocol;
  auto* ev = app.add_subcommand("eval", "evaluate a regressor under P1, P2 or P3");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "regressor checkpoint directory");
  ev->add_option("--protocol", protocol, "P1, P2 or P3 (default: eval.protocol)");

  std::int64_t sample_a = 0, sample_b = 1;
  int steps = 8;
  auto* interp = app.add_subcommand("interpolate", "decode a linear path between two samples' latents");
  add_common(interp);
  interp->add_option("--checkpoint", checkpoint, "representation checkpoint directory");
  interp->add_option("--a", sample_a, "first sample id");
  interp->add_option("--b", sample_b, "second sample id");
  interp->add_option("--steps", steps, "number of points on the path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*repr) return cmd_train_repr(common, resume, log_path);
    if (*pose) return cmd_train_regressor(common, "");
    if (*base) return cmd_train_regressor(common, input);
    if (*ev) return cmd_eval(common, checkpoint, protocol);
    if (*interp) return cmd_interpolate(common, checkpoint, sample_a, sample_b, steps);
  } catch (const Error& e) {
    std::cerr << Json{{"event", "error"}, {"kind", to_string(e.kind())}, {"message", e.what()}}.dump() << std::endl;
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << Json{{"event", "error"}, {"kind", "internal"}, {"message", e.what()}}.dump() << std::endl;
    return kExitInternal;
  }
  return kExitInternal;
}
