// Command-line front end: dataset synthesis, training, restoration,
// evaluation, visualization and the gradient verification suite.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "oapt/degrade.hpp"
#include "oapt/errors.hpp"
#include "oapt/gradsuite.hpp"
#include "oapt/model.hpp"
#include "oapt/predictor.hpp"
#include "oapt/train.hpp"

namespace fs = std::filesystem;
using namespace oapt;

namespace {

using ConfigMap = std::map<std::string, std::string>;

ConfigMap read_config(const std::string& path) {
  ConfigMap m;
  if (path.empty()) return m;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line without '=': " + line);
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

int get_int(const ConfigMap& m, const std::string& key, int fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ArgumentError("config key '" + key + "' is not an integer: " + it->second);
  }
}

ModelConfig model_config_from(const ConfigMap& m) {
  ModelConfig cfg = ModelConfig::toy();
  auto preset = m.count("preset") ? m.at("preset") : "toy";
  if (preset == "full")
    cfg = ModelConfig::full();
  else if (preset != "toy")
    throw ArgumentError("unknown preset '" + preset + "' (want toy|full)");
  cfg.hpab_count = get_int(m, "hpab_count", cfg.hpab_count);
  cfg.channels = get_int(m, "channels", cfg.channels);
  cfg.window_size = get_int(m, "window_size", cfg.window_size);
  cfg.mlp_expansion = get_int(m, "mlp_expansion", cfg.mlp_expansion);
  cfg.heads = get_int(m, "heads", cfg.heads);
  if (m.count("variant")) cfg.variant = variant_from_string(m.at("variant"));
  cfg.validate();
  return cfg;
}

PredictorConfig predictor_config_from(const ConfigMap& m) {
  PredictorConfig cfg = PredictorConfig::toy();
  auto preset = m.count("preset") ? m.at("preset") : "toy";
  if (preset == "full")
    cfg = PredictorConfig::full();
  else if (preset != "toy")
    throw ArgumentError("unknown preset '" + preset + "' (want toy|full)");
  cfg.d_resblocks = get_int(m, "d_resblocks", cfg.d_resblocks);
  cfg.base_channels = get_int(m, "base_channels", cfg.base_channels);
  cfg.max_channels = get_int(m, "max_channels", cfg.max_channels);
  cfg.stride2_stages = get_int(m, "stride2_stages", cfg.stride2_stages);
  return cfg;
}

// Every run drops its resolved settings next to its outputs so reruns are
// reproducible from the log alone.
void log_run(const fs::path& out_dir, const std::string& subcommand, const ConfigMap& resolved) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / ("run_" + subcommand + ".log"));
  out << "subcommand=" << subcommand << "\n";
  for (const auto& [k, v] : resolved) out << k << "=" << v << "\n";
}

std::vector<std::string> collect_sources(const std::string& src) {
  std::vector<std::string> files;
  if (fs::is_directory(src)) {
    for (const auto& e : fs::directory_iterator(src)) {
      const auto ext = e.path().extension().string();
      if (ext == ".pgm" || ext == ".png") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(src)) {
    files.push_back(src);
  }
  if (files.empty()) throw DataError("no source images under: " + src);
  return files;
}

std::pair<int, int> parse_pair(const std::string& s, const char* what) {
  const auto comma = s.find(',');
  if (comma == std::string::npos)
    throw ArgumentError(std::string(what) + " wants the form A,B, got: " + s);
  try {
    return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ArgumentError(std::string(what) + " wants two integers, got: " + s);
  }
}

std::pair<int, int> parse_offsets(const std::string& s, const char* what) {
  const auto [r, c] = parse_pair(s, what);
  if (r < 0 || r > 7 || c < 0 || c > 7)
    throw ArgumentError(std::string(what) + " must be in [0,7], got: " + s);
  return {r, c};
}

OffsetsMode offsets_mode_from(const std::string& s) {
  if (s == "predict") return OffsetsMode::Predict;
  if (s == "oracle") return OffsetsMode::Oracle;
  if (s == "none") return OffsetsMode::None;
  throw ArgumentError("unknown offsets mode '" + s + "' (want predict|oracle|none)");
}

struct CliArgs {
  std::string src, out, manifest, weights, config, in_path;
  std::string out_weights, qf_range = "5,95", offsets, predictor_weights, predictor_config;
  std::string offsets_mode = "oracle";
  std::string eval_manifest;
  std::uint64_t seed = 0;
  int patches_per_image = 4, patch_size = 64;
  int qf1 = -1, qf2 = -1;
  bool aligned_only = false, predict = false;
  int steps = -1, batch = -1, log_every = 0;
  double lr = -1;
  int r = 0, c = 0, count = 4, size = 160;
};

void apply_train_overrides(const CliArgs& a, int& steps, int& batch, real& lr) {
  if (a.steps >= 0) steps = a.steps;
  if (a.batch > 0) batch = a.batch;
  if (a.lr > 0) lr = static_cast<real>(a.lr);
}

int cmd_synth(const CliArgs& a) {
  SynthConfig cfg;
  cfg.seed = a.seed;
  cfg.patches_per_image = a.patches_per_image;
  cfg.patch_size = a.patch_size;
  std::tie(cfg.sampler.qf_min, cfg.sampler.qf_max) = parse_pair(a.qf_range, "--qf-range");
  cfg.sampler.aligned_only = a.aligned_only;
  if (a.qf1 >= 0 || a.qf2 >= 0) {
    if (a.qf1 < 0 || a.qf2 < 0) throw ArgumentError("--qf1 and --qf2 must be given together");
    cfg.use_fixed_spec = true;
    cfg.fixed_spec.qf1 = a.qf1;
    cfg.fixed_spec.qf2 = a.qf2;
    if (!a.offsets.empty()) {
      cfg.fixed_offsets = true;
      std::tie(cfg.fixed_spec.row_offset, cfg.fixed_spec.col_offset) =
          parse_offsets(a.offsets, "--offsets");
    } else if (a.aligned_only) {
      cfg.fixed_offsets = true;
    }
  }
  const auto sources = collect_sources(a.src);
  const auto records = synth_dataset(sources, a.out, cfg);
  write_manifest((fs::path(a.out) / "manifest.jsonl").string(), records);
  log_run(a.out, "synth",
          {{"seed", std::to_string(a.seed)},
           {"src", a.src},
           {"patches_per_image", std::to_string(cfg.patches_per_image)},
           {"patch_size", std::to_string(cfg.patch_size)},
           {"qf_range", a.qf_range},
           {"aligned_only", cfg.sampler.aligned_only ? "1" : "0"},
           {"fixed_qf", cfg.use_fixed_spec ? std::to_string(cfg.fixed_spec.qf1) + "," +
                                                 std::to_string(cfg.fixed_spec.qf2)
                                           : ""},
           {"fixed_offsets", cfg.fixed_offsets
                                 ? std::to_string(cfg.fixed_spec.row_offset) + "," +
                                       std::to_string(cfg.fixed_spec.col_offset)
                                 : ""},
           {"records", std::to_string(records.size())}});
  std::cout << "wrote " << records.size() << " samples to " << a.out << "\n";
  return 0;
}

int cmd_testimg(const CliArgs& a) {
  fs::create_directories(a.out);
  for (int k = 0; k < a.count; ++k) {
    const Plane img = make_test_image(a.size, a.size, a.seed * 1000 + static_cast<std::uint64_t>(k));
    write_image((fs::path(a.out) / ("img_" + std::to_string(k) + ".pgm")).string(), img);
  }
  log_run(a.out, "testimg",
          {{"seed", std::to_string(a.seed)},
           {"count", std::to_string(a.count)},
           {"size", std::to_string(a.size)}});
  std::cout << "wrote " << a.count << " images to " << a.out << "\n";
  return 0;
}

int cmd_train_predictor(const CliArgs& a) {
  const ConfigMap cm = read_config(a.config);
  const PredictorConfig pc = predictor_config_from(cm);
  const auto data = load_samples(a.manifest);
  Tape tape;
  OffsetPredictor net(pc, tape, a.seed);
  PredictorTrainOptions opts;
  opts.seed = a.seed;
  opts.log_every = a.log_every;
  apply_train_overrides(a, opts.steps, opts.batch, opts.lr);
  Adam opt(net.params(), {opts.lr, 0.9, 0.999, 1e-8});
  train_predictor(data, net, opt, tape, opts);
  save_weights(a.out_weights, net.params());
  if (!a.eval_manifest.empty()) {
    const auto test = load_samples(a.eval_manifest);
    const PredictorEval ev = eval_predictor(test, net);
    std::printf("exact_match %.4f  mean_l1 %.3f  mean_pred (%.2f, %.2f)\n", ev.exact_match,
                ev.mean_l1, ev.mean_pred_r, ev.mean_pred_c);
    for (const auto& [qf, cell] : ev.per_qf)
      std::printf("  (%d, %d): %d/%d exact\n", qf.first, qf.second, cell.first, cell.second);
  }
  log_run(fs::path(a.out_weights).parent_path(), "train-predictor",
          {{"seed", std::to_string(a.seed)},
           {"manifest", a.manifest},
           {"steps", std::to_string(opts.steps)},
           {"batch", std::to_string(opts.batch)},
           {"lr", std::to_string(opts.lr)},
           {"d_resblocks", std::to_string(pc.d_resblocks)},
           {"base_channels", std::to_string(pc.base_channels)},
           {"max_channels", std::to_string(pc.max_channels)}});
  std::cout << "saved predictor weights to " << a.out_weights << "\n";
  return 0;
}

int cmd_predict_offset(const CliArgs& a) {
  const PredictorConfig pc = predictor_config_from(read_config(a.config));
  Tape tape;
  OffsetPredictor net(pc, tape, 0);
  load_weights(a.weights, net.params());
  const OffsetPrediction p = net.predict(read_image(a.in_path));
  std::cout << p.r << " " << p.c << "\n";
  return 0;
}

int cmd_train_reconstructor(const CliArgs& a) {
  const ModelConfig mc = model_config_from(read_config(a.config));
  const auto data = load_samples(a.manifest);
  Tape tape;
  Reconstructor net(mc, tape, a.seed);
  ReconTrainOptions opts;
  opts.seed = a.seed;
  opts.log_every = a.log_every;
  opts.oracle_offsets = a.offsets_mode != "none";
  apply_train_overrides(a, opts.steps, opts.batch, opts.lr);
  Adam opt(net.params(), {opts.lr, 0.9, 0.999, 1e-8});
  const auto curve = train_reconstructor(data, net, opt, tape, opts);
  save_weights(a.out_weights, net.params());
  log_run(fs::path(a.out_weights).parent_path(), "train-reconstructor",
          {{"seed", std::to_string(a.seed)},
           {"manifest", a.manifest},
           {"steps", std::to_string(opts.steps)},
           {"batch", std::to_string(opts.batch)},
           {"lr", std::to_string(opts.lr)},
           {"oracle_offsets", opts.oracle_offsets ? "1" : "0"},
           {"variant", variant_to_string(mc.variant)},
           {"final_loss", std::to_string(curve.empty() ? 0 : curve.back())}});
  std::cout << "saved reconstructor weights to " << a.out_weights << "\n";
  return 0;
}

int cmd_restore(const CliArgs& a) {
  int r = 0, c = 0;
  // validate explicit offsets before any file IO
  if (!a.predict && !a.offsets.empty()) std::tie(r, c) = parse_offsets(a.offsets, "--offsets");
  const ModelConfig mc = model_config_from(read_config(a.config));
  Tape tape;
  Reconstructor net(mc, tape, 0);
  load_weights(a.weights, net.params());
  const Plane lq = read_image(a.in_path);
  if (a.predict) {
    const PredictorConfig pc = predictor_config_from(read_config(a.predictor_config));
    Tape ptape;
    OffsetPredictor pred(pc, ptape, 0);
    load_weights(a.predictor_weights, pred.params());
    const OffsetPrediction p = pred.predict(lq);
    r = p.r;
    c = p.c;
  }
  write_image(a.out, net.restore(lq, r, c));
  std::cout << "restored with offsets (" << r << ", " << c << ") -> " << a.out << "\n";
  return 0;
}

int cmd_eval(const CliArgs& a) {
  const ModelConfig mc = model_config_from(read_config(a.config));
  const auto data = load_samples(a.manifest);
  Tape tape;
  Reconstructor net(mc, tape, 0);
  load_weights(a.weights, net.params());
  const OffsetsMode mode = offsets_mode_from(a.offsets_mode);
  Tape ptape;
  std::unique_ptr<OffsetPredictor> pred;
  if (mode == OffsetsMode::Predict) {
    if (a.predictor_weights.empty())
      throw ArgumentError("--offsets-mode predict needs --predictor-weights");
    pred = std::make_unique<OffsetPredictor>(
        predictor_config_from(read_config(a.predictor_config)), ptape, 0);
    load_weights(a.predictor_weights, pred->params());
  }
  const auto rows = evaluate_model(data, net, mode, pred.get());
  for (const auto& row : rows)
    std::printf("(%d, %d, %d, %d) -> %.2f/%.4f/%.2f  [n=%d]\n", row.spec.qf1, row.spec.qf2,
                row.spec.row_offset, row.spec.col_offset, row.mean.psnr, row.mean.ssim,
                row.mean.psnr_b, row.count);
  return 0;
}

int cmd_cluster_viz(const CliArgs& a) {
  const Plane img = read_image(a.in_path);
  const ClusterLayout layout = layout_for(a.r, a.c, img.height, img.width);
  NoGradGuard ng;
  const ClusteredFeature cf = pc(img.to_tensor01(), layout);
  fs::create_directories(a.out);
  const char* names[4] = {"cluster_tl", "cluster_tr", "cluster_bl", "cluster_br"};
  for (int id = 0; id < 4; ++id) {
    if (layout.empty(id)) continue;
    write_image((fs::path(a.out) / (std::string(names[id]) + ".pgm")).string(),
                Plane::from_tensor01(cf.clusters[static_cast<std::size_t>(id)]));
  }
  write_image((fs::path(a.out) / "roundtrip.pgm").string(), Plane::from_tensor01(inv_pc(cf)));
  log_run(a.out, "cluster-viz",
          {{"in", a.in_path}, {"r", std::to_string(a.r)}, {"c", std::to_string(a.c)}});
  std::cout << "wrote cluster images to " << a.out << "\n";
  return 0;
}

int cmd_gradcheck() {
  const GradCheckReport report = run_gradcheck_suite();
  for (const auto& e : report.entries)
    std::printf("%-28s %-4s max rel err %.3e\n", e.name.c_str(), e.passed ? "ok" : "FAIL",
                e.max_rel_err);
  std::printf("worst %.3e over %zu checks\n", report.worst(), report.entries.size());
  if (!report.passed) throw NumericError("gradient check failed");
  return 0;
}

int cmd_motivation(const CliArgs& a) {
  MotivationOptions opts;
  opts.seed = a.seed == 0 ? 1 : a.seed;
  if (a.steps >= 0) opts.steps = a.steps;
  const MotivationResult res = run_motivation(opts);
  for (const auto& mc : res.cases)
    std::printf("(%d, %d, %d, %d): PSNR %.2f -> %.2f dB (gain %.3f)\n", mc.spec.qf1, mc.spec.qf2,
                mc.spec.row_offset, mc.spec.col_offset, mc.psnr_before, mc.psnr_after,
                mc.delta());
  const bool ok = res.direction_holds();
  std::printf("aligned specs gain more than non-aligned: %s\n", ok ? "yes" : "NO");
  if (!a.out.empty())
    log_run(a.out, "motivation",
            {{"seed", std::to_string(opts.seed)},
             {"steps", std::to_string(opts.steps)},
             {"direction_holds", ok ? "1" : "0"}});
  if (!ok) throw DataError("restoration gain direction not reproduced");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-JPEG artifact removal pipeline"};
  app.require_subcommand(1);
  CliArgs a;

  auto* synth = app.add_subcommand("synth", "Synthesize a double-compressed dataset");
  synth->add_option("--src", a.src, "source image file or directory")->required();
  synth->add_option("--out", a.out)->required();
  synth->add_option("--seed", a.seed);
  synth->add_option("--patches-per-image", a.patches_per_image);
  synth->add_option("--patch-size", a.patch_size);
  synth->add_option("--qf-range", a.qf_range, "qf_min,qf_max");
  synth->add_flag("--aligned-only", a.aligned_only);
  synth->add_option("--qf1", a.qf1, "fix the first quality factor");
  synth->add_option("--qf2", a.qf2, "fix the second quality factor");
  synth->add_option("--offsets", a.offsets, "fix the offsets, R,C");

  auto* testimg = app.add_subcommand("testimg", "Generate procedural grayscale test images");
  testimg->add_option("--out", a.out)->required();
  testimg->add_option("--count", a.count);
  testimg->add_option("--size", a.size);
  testimg->add_option("--seed", a.seed);

  auto* trainp = app.add_subcommand("train-predictor", "Train the offset predictor");
  trainp->add_option("--manifest", a.manifest)->required();
  trainp->add_option("--out-weights", a.out_weights)->required();
  trainp->add_option("--config", a.config);
  trainp->add_option("--seed", a.seed);
  trainp->add_option("--steps", a.steps);
  trainp->add_option("--batch", a.batch);
  trainp->add_option("--lr", a.lr);
  trainp->add_option("--eval-manifest", a.eval_manifest, "report accuracy on this split");
  trainp->add_option("--log-every", a.log_every, "print the batch loss every N steps");

  auto* predoff = app.add_subcommand("predict-offset", "Print predicted offsets for an image");
  predoff->add_option("--in", a.in_path)->required();
  predoff->add_option("--weights", a.weights)->required();
  predoff->add_option("--config", a.config);

  auto* trainr = app.add_subcommand("train-reconstructor", "Train the reconstructor");
  trainr->add_option("--manifest", a.manifest)->required();
  trainr->add_option("--out-weights", a.out_weights)->required();
  trainr->add_option("--config", a.config);
  trainr->add_option("--seed", a.seed);
  trainr->add_option("--steps", a.steps);
  trainr->add_option("--batch", a.batch);
  trainr->add_option("--lr", a.lr);
  trainr->add_option("--offsets-mode", a.offsets_mode, "oracle|none during training");
  trainr->add_option("--log-every", a.log_every, "print the batch loss every N steps");

  auto* restore = app.add_subcommand("restore", "Restore one image");
  restore->add_option("--in", a.in_path)->required();
  restore->add_option("--out", a.out)->required();
  restore->add_option("--weights", a.weights)->required();
  restore->add_option("--config", a.config);
  restore->add_option("--offsets", a.offsets, "ground-truth offsets R,C");
  restore->add_flag("--predict", a.predict, "predict offsets instead");
  restore->add_option("--predictor-weights", a.predictor_weights);
  restore->add_option("--predictor-config", a.predictor_config);

  auto* eval = app.add_subcommand("eval", "Evaluate on a manifest");
  eval->add_option("--manifest", a.manifest)->required();
  eval->add_option("--weights", a.weights)->required();
  eval->add_option("--config", a.config);
  eval->add_option("--offsets-mode", a.offsets_mode, "predict|oracle|none");
  eval->add_option("--predictor-weights", a.predictor_weights);
  eval->add_option("--predictor-config", a.predictor_config);

  auto* viz = app.add_subcommand("cluster-viz", "Write the pattern cluster images");
  viz->add_option("--in", a.in_path)->required();
  viz->add_option("--r", a.r)->check(CLI::Range(0, 7));
  viz->add_option("--c", a.c)->check(CLI::Range(0, 7));
  viz->add_option("--out", a.out)->required();

  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  (void)gc;

  auto* mot = app.add_subcommand("motivation",
                                 "Aligned vs non-aligned restoration difficulty probe");
  mot->add_option("--out", a.out);
  mot->add_option("--seed", a.seed);
  mot->add_option("--steps", a.steps);

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(a);
    if (testimg->parsed()) return cmd_testimg(a);
    if (trainp->parsed()) return cmd_train_predictor(a);
    if (predoff->parsed()) return cmd_predict_offset(a);
    if (trainr->parsed()) return cmd_train_reconstructor(a);
    if (restore->parsed()) return cmd_restore(a);
    if (eval->parsed()) return cmd_eval(a);
    if (viz->parsed()) return cmd_cluster_viz(a);
    if (gc->parsed()) return cmd_gradcheck();
    if (mot->parsed()) return cmd_motivation(a);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
