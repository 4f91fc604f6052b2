#include "nomae/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "nomae/error.hpp"
#include "nomae/gradcheck.hpp"
#include "nomae/sparsenn/checkpoint.hpp"

namespace nomae {

namespace fs = std::filesystem;

RunConfig effective_config(const CommandOptions& opts) {
  RunConfig cfg;
  if (opts.config) {
    std::ifstream is(*opts.config, std::ios::binary);
    if (!is) fail(ErrorKind::InvalidConfig, "cannot open config '" + opts.config->string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    cfg = parse_run_config(ss.str());
  }
  if (opts.seed) {
    require(*opts.seed <= static_cast<uint64_t>(INT64_MAX), ErrorKind::InvalidConfig, "--seed must be < 2^63");
    cfg.seed = *opts.seed;
  }
  if (opts.steps) {
    require(*opts.steps >= 1, ErrorKind::InvalidConfig, "--steps must be >= 1");
    cfg.train.steps = *opts.steps;
  }
  if (opts.overfit_one) {
    cfg.data.num_scenes = 1;
    cfg.data.eval_scenes = 0;
    if (cfg.data.source == "files") cfg.data.paths.resize(1);
    cfg.train.batch_size = 1;
    cfg.train.augment = false;
    cfg.train.resample_masks = false;
  }
  cfg.validate();
  return cfg;
}

fs::path resolve_out_dir(const CommandOptions& opts, const RunConfig& cfg) {
  if (opts.out) return *opts.out;
  if (const char* env = std::getenv("NOMAE_OUT"); env && *env) return fs::path(env);
  return fs::path(cfg.out_dir);
}

namespace {

PointCloud maybe_clip(PointCloud cloud, const RunConfig& cfg) {
  if (!cfg.clip) return cloud;
  const auto& r = cfg.clip_range;
  return clip_range(cloud, {r[0], r[1], r[2]}, {r[3], r[4], r[5]});
}

PointCloud synth_index(const RunConfig& cfg, int index) {
  SceneConfig sc = cfg.synth;
  sc.seed = cfg.synth.seed + static_cast<uint64_t>(index);
  return synth_scene(sc);
}

}  // namespace

std::vector<PointCloud> training_scenes(const RunConfig& cfg) {
  std::vector<PointCloud> out;
  if (cfg.data.source == "files") {
    for (const auto& p : cfg.data.paths) out.push_back(maybe_clip(load_points(p, cfg.data.format), cfg));
  } else {
    for (int i = 0; i < cfg.data.num_scenes; ++i) out.push_back(maybe_clip(synth_index(cfg, i), cfg));
  }
  return out;
}

std::vector<PointCloud> evaluation_scenes(const RunConfig& cfg) {
  std::vector<PointCloud> out;
  if (cfg.data.source == "synth")
    for (int i = 0; i < cfg.data.eval_scenes; ++i)
      out.push_back(maybe_clip(synth_index(cfg, cfg.data.num_scenes + i), cfg));
  return out;
}

uint64_t fnv1a64(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoError, "cannot read '" + path.string() + "'");
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize n = 0; n < is.gcount(); ++n) {
      h ^= static_cast<unsigned char>(buf[n]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void write_manifest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ofstream os(dir / "manifest.txt", std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot write manifest in '" + dir.string() + "'");
  os << "# name\tbytes\tfnv1a64\n";
  for (const auto& f : files)
    os << fs::relative(f, dir).generic_string() << '\t' << fs::file_size(f) << '\t' << std::hex << std::setw(16)
       << std::setfill('0') << fnv1a64(f) << std::dec << std::setfill(' ') << '\n';
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  return os;
}

std::vector<PreparedScene> prepare_eval(const RunConfig& cfg, const std::vector<PointCloud>& clouds) {
  // Same masks as a non-resampling trainer would use for scene i.
  std::vector<PreparedScene> out;
  const PipelineConfig base = cfg.pipeline();
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    PipelineConfig pc = base;
    pc.masking.seed = derive_seed(base.masking.seed, 0, i);
    out.push_back(prepare_scene(clouds[i], pc));
  }
  return out;
}

std::vector<PointCloud> eval_clouds(const RunConfig& cfg) {
  auto clouds = evaluation_scenes(cfg);
  return clouds.empty() ? training_scenes(cfg) : clouds;
}

void log_eval(std::ostream& log, const EvalReport& report) {
  for (const ScaleMetrics& m : report.metrics)
    log << "  scale " << m.scale << ": loss " << m.loss << "  precision " << m.precision << "  recall " << m.recall
        << "  iou " << m.iou << "  (" << m.targets << " targets, " << m.recovered << " recovered, " << m.lost
        << " lost)\n";
}

template <class Real>
void pretrain(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const std::vector<PointCloud> scenes = training_scenes(cfg);
  Model<Real> model(cfg.model_config(), cfg.neighborhood);
  Trainer<Real> trainer(model, cfg.pipeline(), cfg.train_config(), scenes);
  log << "pretrain: " << scenes.size() << " scene(s), " << trainer.total_steps() << " steps, "
      << model.params().numel() << " parameters\n";

  std::ofstream metrics = open_out(out / "metrics.tsv");
  metrics << "step\tlr\tloss";
  for (int s = 0; s < cfg.num_scales; ++s) metrics << "\tloss_s" << s;
  metrics << '\n';
  // Held-out baseline: initialized weights plus the prior head bias, before any update.
  trainer.initialize();
  const auto eval_scenes = prepare_eval(cfg, eval_clouds(cfg));
  const EvalReport baseline = evaluate(model, std::span<const PreparedScene>(eval_scenes));
  log << "step-0 eval loss " << baseline.loss << '\n';
  const int64_t report_every = std::max<int64_t>(1, trainer.total_steps() / 20);
  StepResult last;
  while (trainer.steps_done() < trainer.total_steps()) {
    last = trainer.step();
    write_metrics_line(metrics, last);
    if (last.step % report_every == 0 || last.step + 1 == trainer.total_steps())
      log << "  step " << last.step << "  lr " << last.lr << "  loss " << last.loss << '\n';
    if (cfg.checkpoint_every > 0 && trainer.steps_done() % cfg.checkpoint_every == 0) {
      std::ostringstream name;
      name << "ckpt_" << std::setw(6) << std::setfill('0') << trainer.steps_done() << ".bin";
      nn::save_checkpoint(out / name.str(), model.params(), &trainer.optimizer());
    }
  }
  metrics.close();
  nn::save_checkpoint(out / "checkpoint.bin", model.params(), &trainer.optimizer());

  const EvalReport report = evaluate(model, std::span<const PreparedScene>(eval_scenes));
  std::ofstream csv = open_out(out / "eval.csv");
  write_eval_csv(csv, report);
  log << "final train loss " << last.loss << "; eval loss " << report.loss << " (step-0 " << baseline.loss
      << ", " << (cfg.data.source == "synth" && cfg.data.eval_scenes > 0 ? "held-out" : "training") << " scenes)\n";
  log_eval(log, report);
}

template <class Real>
void eval_checkpoint(const RunConfig& cfg, const fs::path& ckpt, std::vector<PreparedScene>& scenes, EvalReport& out) {
  Model<Real> model(cfg.model_config(), cfg.neighborhood);
  nn::load_checkpoint(ckpt, model.params(), static_cast<nn::AdamState<Real>*>(nullptr));
  out = evaluate(model, std::span<const PreparedScene>(scenes));
}

void cmd_eval(const RunConfig& cfg, const CommandOptions& opts, const fs::path& out, std::ostream& log) {
  auto scenes = prepare_eval(cfg, eval_clouds(cfg));
  EvalReport report;
  if (opts.oracle_logits) {
    std::vector<std::vector<std::vector<double>>> logits;
    for (const PreparedScene& s : scenes) logits.push_back(oracle_logits(s.targets));
    report = evaluate_logits(scenes, logits);
  } else {
    const fs::path ckpt = opts.checkpoint.value_or(out / "checkpoint.bin");
    if (cfg.precision == "f64")
      eval_checkpoint<double>(cfg, ckpt, scenes, report);
    else
      eval_checkpoint<float>(cfg, ckpt, scenes, report);
  }
  std::ofstream csv = open_out(out / "eval.csv");
  write_eval_csv(csv, report);
  log << "eval: " << scenes.size() << " scene(s), loss " << report.loss << '\n';
  log_eval(log, report);
}

struct Running {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double stddev() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, (sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1)));
  }
};

void cmd_mask_stats(const RunConfig& cfg, const CommandOptions& opts, const fs::path& out, std::ostream& log) {
  std::vector<MaskStrategy> strategies;
  if (opts.strategy == "all")
    strategies = {MaskStrategy::Hmg, MaskStrategy::NaivePoolUp, MaskStrategy::CoarseUpsample};
  else
    strategies = {parse_mask_strategy(opts.strategy)};
  const int seeds = opts.seeds.value_or(cfg.stats_seeds);
  require(seeds >= 1, ErrorKind::InvalidConfig, "--seeds must be >= 1");
  const int S = cfg.num_scales;
  const int max_radius = (*std::max_element(cfg.sweep.begin(), cfg.sweep.end()) - 1) / 2;

  std::vector<VoxelPyramid> pyramids;
  for (const PointCloud& c : training_scenes(cfg))
    pyramids.push_back(build_pyramid(voxelize(c, cfg.base_size, cfg.origin).occupancy, S));

  std::ofstream csv = open_out(out / "mask_stats.csv");
  std::ofstream txt = open_out(out / "mask_stats.txt");
  csv << "strategy,scale,ratio_mean,ratio_std,recovered_frac,n\n";
  csv.precision(9);
  std::ostringstream report;
  report << std::fixed << std::setprecision(4);
  report << "finest-scale total ratio " << cfg.total_ratio << ", " << pyramids.size() << " scene(s) x " << seeds
         << " seed(s)\n";
  for (MaskStrategy strategy : strategies) {
    const MaskingConfig base = masking_for_total(strategy, cfg.total_ratio, S, 0);
    std::vector<Running> ratio(static_cast<std::size_t>(S));
    std::vector<std::vector<Running>> recovered(cfg.sweep.size(), std::vector<Running>(static_cast<std::size_t>(S)));
    bool monotone = true;
    for (std::size_t p = 0; p < pyramids.size(); ++p) {
      for (int k = 0; k < seeds; ++k) {
        MaskingConfig mc = base;
        mc.seed = derive_seed(cfg.seed, p, static_cast<uint64_t>(k));
        const MaskAssignment mask = generate_mask(pyramids[p], mc);
        for (int s = 0; s < S; ++s) {
          const ScaleMask& sm = mask.at(s);
          ratio[static_cast<std::size_t>(s)].add(static_cast<double>(sm.masked.size()) /
                                                 static_cast<double>(sm.masked_flag.size()));
          const std::vector<int> dist = sm.visible.empty() ? std::vector<int>(sm.masked.size(), max_radius + 1)
                                                           : masked_distance(sm, max_radius);
          double prev = -1.0;
          for (std::size_t q = 0; q < cfg.sweep.size(); ++q) {
            const int R = (cfg.sweep[q] - 1) / 2;
            const auto hit = std::count_if(dist.begin(), dist.end(), [R](int d) { return d <= R; });
            const double frac = dist.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(dist.size());
            recovered[q][static_cast<std::size_t>(s)].add(frac);
            if (q > 0 && cfg.sweep[q] > cfg.sweep[q - 1] && frac < prev) monotone = false;
            prev = frac;
          }
        }
      }
    }
    report << "\n[" << to_string(strategy) << "] per-round ratio " << base.ratio << '\n';
    report << "  scale  ratio_mean  ratio_std";
    if (strategy == MaskStrategy::Hmg) report << "  law(S-s)  extra(S-s+1)";
    report << '\n';
    for (int s = 0; s < S; ++s) {
      const auto& r = ratio[static_cast<std::size_t>(s)];
      report << "  " << std::setw(5) << s << "  " << std::setw(10) << r.mean() << "  " << std::setw(9) << r.stddev();
      if (strategy == MaskStrategy::Hmg)
        report << "  " << std::setw(8) << expected_total_ratio(base.ratio, S, s, RatioFormula::Simulated) << "  "
               << std::setw(14) << expected_total_ratio(base.ratio, S, s, RatioFormula::ExtraRound);
      report << '\n';
      for (std::size_t q = 0; q < cfg.sweep.size(); ++q)
        csv << to_string(strategy) << ',' << s << ',' << r.mean() << ',' << r.stddev() << ','
            << recovered[q][static_cast<std::size_t>(s)].mean() << ',' << cfg.sweep[q] << '\n';
    }
    report << "  recovered fraction by n:";
    for (std::size_t q = 0; q < cfg.sweep.size(); ++q) {
      report << "  n=" << cfg.sweep[q] << ':';
      for (int s = 0; s < S; ++s) report << ' ' << recovered[q][static_cast<std::size_t>(s)].mean();
    }
    report << "\n  recovered fraction monotone in n for every (scene, seed, scale): " << (monotone ? "yes" : "no")
           << '\n';
  }
  txt << report.str();
  log << report.str();
}

void cmd_targets_dump(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto clouds = training_scenes(cfg);
  const auto scenes = prepare_eval(cfg, {clouds.front()});
  const PreparedScene& scene = scenes.front();
  const auto recovery = recovered_lost_accounting(scene.mask, scene.targets);
  std::ofstream summary = open_out(out / "targets_summary.csv");
  summary << "scale,occupied,visible,masked,targets,positives,recovered,lost\n";
  for (int s = 0; s < scene.targets.num_scales(); ++s) {
    const ScaleTargets& t = scene.targets.scales[static_cast<std::size_t>(s)];
    std::ofstream os = open_out(out / ("targets_s" + std::to_string(s) + ".csv"));
    os << "i,j,k,label\n";
    std::size_t positives = 0;
    for (std::size_t n = 0; n < t.coords.size(); ++n) {
      os << t.coords[n].i << ',' << t.coords[n].j << ',' << t.coords[n].k << ',' << static_cast<int>(t.labels[n])
         << '\n';
      positives += t.labels[n];
    }
    const ScaleMask& m = scene.mask.at(s);
    const auto& r = recovery[static_cast<std::size_t>(s)];
    summary << s << ',' << m.masked_flag.size() << ',' << m.visible.size() << ',' << m.masked.size() << ','
            << t.coords.size() << ',' << positives << ',' << r.recovered << ',' << r.lost << '\n';
    log << "scale " << s << ": " << t.coords.size() << " targets, " << positives << " occupied, " << r.recovered
        << " of " << r.masked << " masked recovered\n";
  }
}

int cmd_gradcheck(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  GradcheckOptions go;
  go.seed = cfg.seed;
  const auto results = run_gradchecks(go);
  std::ofstream csv = open_out(out / "gradcheck.csv");
  write_gradcheck_report(csv, results);
  write_gradcheck_report(log, results);
  const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  log << (ok ? "gradcheck: all ops within tolerance\n" : "gradcheck: FAILED\n");
  return ok ? kExitOk : kExitNumeric;
}

void cmd_synth(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  auto write = [&](const std::vector<PointCloud>& clouds, const std::string& prefix) {
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      std::ostringstream name;
      name << prefix << std::setw(3) << std::setfill('0') << i << ".bin";
      save_points(out / name.str(), clouds[i], PointFormat::BinXyzi);
      log << name.str() << ": " << clouds[i].size() << " points\n";
    }
  };
  write(training_scenes(cfg), "scene_");
  write(evaluation_scenes(cfg), "eval_");
}

int dispatch(const std::string& name, const CommandOptions& opts, std::ostream& log) {
  static const std::vector<std::string> known = {"pretrain", "mask-stats", "targets-dump",
                                                 "gradcheck", "synth",      "eval"};
  if (std::find(known.begin(), known.end(), name) == known.end())
    fail(ErrorKind::InvalidConfig, "unknown command '" + name + "'");
  const RunConfig cfg = effective_config(opts);
  const fs::path out = resolve_out_dir(opts, cfg);
  fs::create_directories(out);
  {
    std::ofstream os = open_out(out / "effective_config.toml");
    write_run_config(os, cfg);
  }
  int code = kExitOk;
  if (name == "pretrain") {
    if (cfg.precision == "f64")
      pretrain<double>(cfg, out, log);
    else
      pretrain<float>(cfg, out, log);
  } else if (name == "mask-stats") {
    cmd_mask_stats(cfg, opts, out, log);
  } else if (name == "targets-dump") {
    cmd_targets_dump(cfg, out, log);
  } else if (name == "gradcheck") {
    code = cmd_gradcheck(cfg, out, log);
  } else if (name == "synth") {
    cmd_synth(cfg, out, log);
  } else {
    cmd_eval(cfg, opts, out, log);
  }
  write_manifest(out);
  log << "outputs in " << out.string() << '\n';
  return code;
}

}  // namespace

int run_command(const std::string& name, const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  try {
    return dispatch(name, opts, log);
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::InvalidConfig:
      case ErrorKind::ParseError:
        return kExitConfig;
      case ErrorKind::NumericalError:
        return kExitNumeric;
      default:
        return kExitFailure;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace nomae
