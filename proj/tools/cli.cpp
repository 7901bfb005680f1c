#include "cli.hpp"

#include <Eigen/Core>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "smpcl/checkpoint.hpp"
#include "smpcl/config.hpp"
#include "smpcl/error.hpp"
#include "smpcl/gradcheck_suite.hpp"
#include "smpcl/io.hpp"
#include "smpcl/log.hpp"
#include "smpcl/scan_orders.hpp"
#include "smpcl/spobe.hpp"
#include "smpcl/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;

namespace smpcl {

namespace {

std::optional<std::uint64_t> env_u64(const char* name) {
  const char* raw = std::getenv(name);
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string text(raw);
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text[0] == '-') {
    throw ValidationError(std::string(name) + "='" + text + "' is not a non-negative integer");
  }
  return v;
}

void set_threads(int n) {
  if (n < 1) throw ValidationError("thread count must be >= 1");
  Eigen::setNbThreads(n);
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

std::vector<int> parse_int_list(const std::string& what, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError(what + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

std::string csv_number(double v) {
  std::ostringstream o;
  o << std::setprecision(10) << v;
  return o.str();
}

// ---- spobe ----------------------------------------------------------------------

struct SpobeArgs {
  std::string image, scribbles, out, overlay;
  int classes = 2;
  std::string schedule = "3,5,7,9,11";
  std::string thresholds;
  std::string edges = "canny";
  double sigma = 1.0, low = 0.1, high = 0.2, sobel = 0.5;
};

// Binary PPM: image in gray, original scribbles in full colour, added
// boundary pixels blended half-way.
void save_overlay(const fs::path& path, const GrayImage& image, const LabelMap& original,
                  const LabelMap& enriched) {
  static const unsigned char palette[][3] = {{0, 90, 255},  {255, 40, 40},  {40, 220, 40},
                                             {255, 200, 0}, {200, 0, 200},  {0, 220, 220}};
  std::string bytes = "P6\n" + std::to_string(image.width()) + " " +
                      std::to_string(image.height()) + "\n255\n";
  for (std::size_t i = 0; i < image.size(); ++i) {
    const auto g = static_cast<unsigned char>(std::clamp(image[i], 0.0f, 1.0f) * 255.0f + 0.5f);
    unsigned char px[3] = {g, g, g};
    const int cls = enriched[i];
    if (cls != kUnlabeled) {
      const auto* col = palette[cls % 6];
      const bool added = original[i] == kUnlabeled;
      for (int ch = 0; ch < 3; ++ch) {
        px[ch] = added ? static_cast<unsigned char>((px[ch] + col[ch]) / 2) : col[ch];
      }
    }
    bytes.append(reinterpret_cast<const char*>(px), 3);
  }
  atomic_write(path, bytes);
}

int cmd_spobe(const SpobeArgs& a, std::ostream& out) {
  SpobeConfig cfg;
  cfg.schedule = parse_int_list("--schedule", a.schedule);
  if (!a.thresholds.empty()) cfg.class_thresholds = parse_int_list("--thresholds", a.thresholds);
  if (a.edges == "canny") {
    cfg.edges.method = EdgeMethod::kCanny;
  } else if (a.edges == "sobel") {
    cfg.edges.method = EdgeMethod::kSobel;
  } else {
    throw ValidationError("--edges must be canny or sobel");
  }
  cfg.edges.sigma = a.sigma;
  cfg.edges.low = a.low;
  cfg.edges.high = a.high;
  cfg.edges.sobel_threshold = a.sobel;
  cfg.validate();

  const auto image = load_image(a.image);
  const auto scribbles = load_labels(a.scribbles);
  if (!image.same_size(scribbles)) {
    throw ValidationError(a.image + " is " + std::to_string(image.height()) + "x" +
                          std::to_string(image.width()) + " but " + a.scribbles + " is " +
                          std::to_string(scribbles.height()) + "x" +
                          std::to_string(scribbles.width()));
  }
  scribbles.validate(a.classes);
  const auto boundaries = spobe(image, scribbles, a.classes, cfg);
  const auto enriched = enrich_scribbles(scribbles, boundaries);
  save_labels(a.out, enriched);
  if (!a.overlay.empty()) save_overlay(a.overlay, image, scribbles, enriched);
  out << "class,scribble_pixels,enriched_pixels\n";
  for (int c = 0; c < a.classes; ++c) {
    std::size_t before = 0, after = 0;
    for (std::size_t i = 0; i < scribbles.size(); ++i) {
      before += scribbles[i] == c;
      after += enriched[i] == c;
    }
    out << c << ',' << before << ',' << after << '\n';
  }
  return 0;
}

// ---- train / eval ---------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string output;
  bool quiet = false;
};

void apply_sets(ExperimentConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string v) {
      v.erase(0, v.find_first_not_of(' '));
      v.erase(v.find_last_not_of(' ') + 1);
      return v;
    };
    try {
      apply_setting(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("--set: ") + e.what());
    }
  }
}

std::map<std::string, std::string> checkpoint_meta(const NetworkConfig& net,
                                                   const ExperimentConfig& cfg) {
  auto meta = net.to_meta();
  std::istringstream lines(cfg.to_text());
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    meta["cfg." + line.substr(0, eq)] = line.substr(eq + 3);
  }
  return meta;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  if (auto seed = env_u64("SMPCL_SEED")) cfg.train.seed = *seed;
  apply_sets(cfg, a.sets);
  if (!a.output.empty()) cfg.output = a.output;
  cfg.validate();
  auto [train_set, val_set] = experiment_data(cfg);

  const fs::path dir = cfg.output;
  fs::create_directories(dir);
  atomic_write(dir / "config.txt", cfg.to_text());

  const auto start = std::chrono::steady_clock::now();
  auto progress = [&](const LogRow& row) {
    if (a.quiet || row.val_dice < 0.0) return;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    err << "iter " << row.iter << "/" << cfg.train.max_iter << "  lr " << row.lr << "  L1 "
        << row.l1 << "  L2 " << row.l2 << "  val_dice " << row.val_dice << "  (" << std::fixed
        << std::setprecision(1) << secs << "s)" << std::defaultfloat << std::setprecision(6)
        << std::endl;
  };
  auto result = train(cfg.train, train_set, val_set, progress);

  save_checkpoint(dir / "model.ckpt", result.net->parameters(),
                  checkpoint_meta(result.net->config(), cfg));
  atomic_write(dir / "history.csv", history_csv(result.history));
  if (!val_set.cases.empty()) {
    const auto eval = evaluate(*result.net, val_set);
    atomic_write(dir / "val_metrics.csv", metrics_csv(eval));
    out << "val_dice " << csv_number(eval.mean_dice) << "\nval_hd95 "
        << csv_number(eval.mean_hd95) << '\n';
  }
  out << "checkpoint " << (dir / "model.ckpt").string() << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint, dataset, out, split = "val";
  int resize = 0;
  double spacing = 1.0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto ck = read_checkpoint(a.checkpoint);
  const auto nc = NetworkConfig::from_meta(ck.meta);
  SparseMambaNet<float> net(nc, 0);
  assign_parameters(ck, net.parameters());

  Dataset data;
  if (!a.dataset.empty()) {
    data = load_dataset(a.dataset, a.resize);
  } else {
    ExperimentConfig cfg;
    bool any = false;
    for (const auto& [k, v] : ck.meta) {
      if (k.rfind("cfg.", 0) != 0) continue;
      apply_setting(cfg, k.substr(4), v);
      any = true;
    }
    if (!any) throw ValidationError(a.checkpoint + " has no stored config; pass --dataset");
    auto [train_set, val_set] = experiment_data(cfg);
    if (a.split == "train") {
      data = std::move(train_set);
    } else if (a.split == "val") {
      data = std::move(val_set);
    } else {
      data = std::move(train_set);
      for (auto& c : val_set.cases) data.cases.push_back(std::move(c));
    }
  }
  if (data.num_classes != nc.num_classes) {
    throw ValidationError("dataset has " + std::to_string(data.num_classes) +
                          " classes, checkpoint has " + std::to_string(nc.num_classes));
  }
  for (const auto& c : data.cases) {
    if (!c.image.same_size(nc.height, nc.width)) {
      throw ValidationError("case " + c.id + " does not match the network input size " +
                            std::to_string(nc.height) + "x" + std::to_string(nc.width));
    }
  }
  const auto result = evaluate(net, data, a.spacing);
  const auto csv = metrics_csv(result);
  if (a.out.empty()) {
    out << csv;
  } else {
    atomic_write(a.out, csv);
  }
  err << "cases " << data.cases.size() << "  mean dice " << result.mean_dice << "  mean hd95 "
      << result.mean_hd95 << '\n';
  return 0;
}

// ---- gradcheck / scan-bench / synth --------------------------------------------

int cmd_gradcheck(const std::string& filter, std::ostream& out) {
  const auto outcomes = run_gradcheck_suite(filter);
  if (outcomes.empty()) throw ValidationError("no gradient check matches '" + filter + "'");
  std::size_t passed = 0;
  out << "check,max_rel_error,threshold,status\n";
  for (const auto& o : outcomes) {
    passed += o.passed;
    out << o.name << ',' << std::scientific << std::setprecision(3) << o.report.max_rel_error
        << ',' << o.threshold << std::defaultfloat << ',' << (o.passed ? "PASS" : "FAIL") << '\n';
  }
  out << "# " << passed << "/" << outcomes.size() << " checks passed\n";
  return passed == outcomes.size() ? 0 : 2;
}

struct BenchArgs {
  int height = 256, width = 256, step = 2, channels = 8, repeats = 3;
  std::string out;
};

int cmd_scan_bench(const BenchArgs& a, std::uint64_t seed, std::ostream& out) {
  if (a.height < 1 || a.width < 1) throw ValidationError("--height/--width must be >= 1");
  if (a.step < 1) throw ValidationError("--step must be >= 1");
  if (a.channels < 1 || a.repeats < 1) throw ValidationError("--channels/--repeats must be >= 1");
  const auto h = static_cast<std::size_t>(a.height), w = static_cast<std::size_t>(a.width);
  Rng rng(seed);
  std::vector<float> values(static_cast<std::size_t>(a.channels) * h * w);
  for (auto& v : values) v = static_cast<float>(rng.uniform(-1, 1));
  const Tensor<float> features({static_cast<std::size_t>(a.channels), h, w}, std::move(values));

  std::ostringstream csv;
  csv << "kind,height,width,indices_visited,throughput_elems_per_sec\n";
  bool counts_ok = true;
  for (const std::string kind : {"dense", "sparse"}) {
    std::vector<ScanOrder> orders;
    if (kind == "dense") {
      const auto d = ss2d_orders(a.height, a.width);
      orders.assign(d.begin(), d.end());
    } else {
      orders = sparse_orders(a.height, a.width, a.step);
    }
    std::size_t visited = 0;
    for (const auto& o : orders) visited += o.indices.size();
    counts_ok = counts_ok && visited == (kind == "dense" ? 4 : 1) * h * w;

    NoGradScope<float> no_grad;
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < a.repeats; ++r) {
      std::vector<Tensor<float>> seqs;
      seqs.reserve(orders.size());
      for (const auto& o : orders) seqs.push_back(gather_seq(features, o));
      auto back = scatter_seq(seqs, orders, h, w,
                              kind == "dense" ? Accumulate::kAdd : Accumulate::kOverwrite);
      if (back.numel() != features.numel()) throw std::runtime_error("scan-bench: bad scatter");
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double elems = static_cast<double>(visited) * a.channels * a.repeats;
    csv << kind << ',' << a.height << ',' << a.width << ',' << visited << ','
        << csv_number(secs > 0 ? elems / secs : 0.0) << '\n';
  }
  if (a.out.empty()) {
    out << csv.str();
  } else {
    atomic_write(a.out, csv.str());
    out << csv.str();
  }
  if (!counts_ok) throw std::runtime_error("scan-bench: visit counts differ from H*W / 4*H*W");
  return 0;
}

int cmd_synth(SynthSpec spec, const std::string& dir, std::ostream& out) {
  const auto data = synth_dataset(spec);
  save_dataset(dir, data);
  out << "wrote " << data.cases.size() << " cases to " << dir << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scribble-supervised segmentation with sparse scans and prompt-guided learning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand help for every subcommand");
  int threads = 0;
  app.add_option("--threads", threads,
                 "Worker threads for the numeric kernels (default: SMPCL_THREADS, else library "
                 "default)")
      ->check(CLI::PositiveNumber);
  app.footer(
      "Environment:\n  SMPCL_SEED     overrides the seed of train, synth and scan-bench\n"
      "                 (explicit --seed / --set seed=... still win)\n"
      "  SMPCL_THREADS  thread count when --threads is absent\n"
      "Exit codes: 0 success, 1 invalid input, 2 runtime failure");

  SpobeArgs spobe_args;
  auto* sp = app.add_subcommand("spobe", "Enrich scribbles with boundary pixels");
  sp->add_option("--image", spobe_args.image, "Grayscale PNG/PGM image")->required();
  sp->add_option("--scribbles", spobe_args.scribbles, "8-bit label map, 255 = unlabeled")->required();
  sp->add_option("--classes", spobe_args.classes, "Number of classes K")->required();
  sp->add_option("--out", spobe_args.out, "Output label map (PNG or PGM)")->required();
  sp->add_option("--overlay", spobe_args.overlay, "Optional colour overlay (binary PPM)");
  sp->add_option("--schedule", spobe_args.schedule, "Increasing odd dilation sizes")
      ->capture_default_str();
  sp->add_option("--thresholds", spobe_args.thresholds,
                 "Per-class gate thresholds, comma separated (default 2k per iteration)");
  sp->add_option("--edges", spobe_args.edges, "Edge detector: canny or sobel")->capture_default_str();
  sp->add_option("--sigma", spobe_args.sigma, "Canny pre-blur sigma")->capture_default_str();
  sp->add_option("--low", spobe_args.low, "Canny low threshold")->capture_default_str();
  sp->add_option("--high", spobe_args.high, "Canny high threshold")->capture_default_str();
  sp->add_option("--sobel-threshold", spobe_args.sobel, "Sobel magnitude threshold")
      ->capture_default_str();

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train a network; writes checkpoint, history and metrics");
  tr->add_option("--config", train_args.config, "key = value config file")->check(CLI::ExistingFile);
  tr->add_option("--set", train_args.sets, "Override one config key (key=value), repeatable");
  tr->add_option("--output", train_args.output, "Output directory (overrides config 'output')");
  tr->add_flag("--quiet", train_args.quiet, "No progress lines");
  tr->footer("Config keys:\n" + config_keys_help());

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Per-case, per-class Dice and HD95 as CSV");
  ev->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint written by train")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--dataset", eval_args.dataset,
                 "Dataset directory (default: rebuild the checkpoint's own data)");
  ev->add_option("--split", eval_args.split, "With the stored config: train, val or all")
      ->check(CLI::IsMember({"train", "val", "all"}))
      ->capture_default_str();
  ev->add_option("--resize", eval_args.resize, "Resample a --dataset to NxN")->capture_default_str();
  ev->add_option("--spacing", eval_args.spacing, "Pixel spacing in mm for HD95")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ev->add_option("--out", eval_args.out, "CSV path (default: stdout)");

  std::string filter;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every differentiable op");
  gc->add_option("--filter", filter, "Only checks whose name contains this text");

  BenchArgs bench;
  std::optional<std::uint64_t> bench_seed;
  auto* sb = app.add_subcommand("scan-bench", "Dense vs sparse scan visit counts and throughput");
  sb->add_option("--height", bench.height, "Grid height")->capture_default_str();
  sb->add_option("--width", bench.width, "Grid width")->capture_default_str();
  sb->add_option("--step", bench.step, "Sparse skip step p")->capture_default_str();
  sb->add_option("--channels", bench.channels, "Feature channels")->capture_default_str();
  sb->add_option("--repeats", bench.repeats, "Timed gather+scatter passes")->capture_default_str();
  sb->add_option("--seed", bench_seed, "Feature seed");
  sb->add_option("--out", bench.out, "Also write the CSV here");

  SynthSpec synth;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_dir;
  auto* sy = app.add_subcommand("synth", "Write a synthetic blob dataset to disk");
  sy->add_option("--out", synth_dir, "Output directory")->required();
  sy->add_option("--seed", synth_seed, "Dataset seed (default 0)");
  sy->add_option("--count", synth.count, "Number of cases")->capture_default_str();
  sy->add_option("--size", synth.size, "Image side")->capture_default_str();
  sy->add_option("--classes", synth.num_classes, "Classes K (2-4)")->capture_default_str();
  sy->add_option("--noise", synth.noise, "Intensity noise std")->capture_default_str();

  const auto previous_sink = set_warning_sink([&err](const std::string& m) {
    err << "warning: " << m << '\n';
  });
  struct Restore {
    WarningSink sink;
    ~Restore() { set_warning_sink(std::move(sink)); }
  } restore{previous_sink};

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (threads > 0) {
      set_threads(threads);
    } else if (auto env = env_u64("SMPCL_THREADS")) {
      set_threads(static_cast<int>(*env));
    }
    const auto env_seed = env_u64("SMPCL_SEED");
    if (*sp) return cmd_spobe(spobe_args, out);
    if (*tr) return cmd_train(train_args, out, err);
    if (*ev) return cmd_eval(eval_args, out, err);
    if (*gc) return cmd_gradcheck(filter, out);
    if (*sb) return cmd_scan_bench(bench, bench_seed.value_or(env_seed.value_or(0)), out);
    if (*sy) {
      synth.seed = synth_seed.value_or(env_seed.value_or(0));
      return cmd_synth(synth, synth_dir, out);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace smpcl
