// fuzzyseg command-line driver.
//
// Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 numerical
// abort, 4 acceptance check failure (verify).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fuzzyseg/checks.hpp"
#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/harness.hpp"
#include "fuzzyseg/kernels.hpp"
#include "fuzzyseg/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace fuzzyseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerify = 4;

fs::path output_root() {
  if (const char* env = std::getenv("FUZZYSEG_OUT"); env && *env) return env;
  return "runs";
}

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", file, "key=value config file");
    app->add_option("-s,--set", overrides, "override one key (key=value), repeatable");
  }

  TrainConfig load() const {
    TrainConfig cfg;
    if (!file.empty()) cfg = load_config(file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

void write_text(const fs::path& p, const std::string& s) { write_file(p.string(), s); }

void print_eval(const EvalResult& e) {
  std::cout << e.split << ": mIoU " << 100.0 * e.miou << "  pixel acc " << 100.0 * e.pixel_accuracy << "\n";
  for (std::size_t k = 0; k < e.iou.iou.size(); ++k) {
    std::cout << "  class " << k << ": "
              << (e.iou.present[k] ? std::to_string(100.0 * e.iou.iou[k]) : std::string("absent")) << "\n";
  }
}

int cmd_train(const ConfigArgs& ca, const std::string& name, bool panels) {
  const TrainConfig cfg = ca.load();
  const fs::path dir = output_root() / name;
  fs::create_directories(dir);
  write_text(dir / "config.txt", format_config(cfg));
  const Benchmark bench = make_benchmark(cfg);
  {
    std::ostringstream os;
    write_manifest(os, bench.train, bench.split);
    write_text(dir / "dataset_manifest.txt", os.str());
  }
  TrainOptions opts;
  opts.dump_dir = dir / "nan_dump";
  const std::size_t total = cfg.total_iterations(bench.split);
  opts.on_record = [total](const MetricsRecord& r) {
    if ((r.iteration + 1) % 50 == 0 || r.iteration + 1 == total) {
      std::cerr << "iter " << r.iteration + 1 << "/" << total << "  L_total " << r.loss.total << "  L_s "
                << r.loss.supervised << "  L_u " << r.loss.unsupervised << "  L_c " << r.loss.contrastive
                << "  (" << r.wall_seconds << " s)\n";
    }
  };
  const TrainResult tr = run_training(cfg, bench, opts);
  const EvalResult train_eval = evaluate(tr.student, cfg.net(), bench.train, "train");
  write_report(tr.records, {tr.final_eval, train_eval}, dir, cfg.verbose);
  save_checkpoint(dir / "checkpoint", cfg, tr);
  if (panels) write_panels(tr.student, cfg, bench.eval, dir / "panels");
  print_eval(tr.final_eval);
  std::cout << "outputs in " << dir.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const ConfigArgs& ca, const std::string& name, const std::string& variants_arg) {
  const TrainConfig cfg = ca.load();
  std::vector<AblationVariant> variants;
  if (variants_arg.empty()) {
    variants = standard_variants();
  } else {
    std::stringstream ss(variants_arg);
    std::string v;
    while (std::getline(ss, v, ',')) {
      auto found = find_variant(v);
      if (!found) throw ConfigError("unknown ablation variant '" + v + "'");
      variants.push_back(*found);
    }
  }
  const fs::path dir = output_root() / name;
  fs::create_directories(dir);
  write_text(dir / "config.txt", format_config(cfg));
  const AblationReport report = run_ablation(cfg, variants, cfg.seeds, [&](const AblationRun& r) {
    std::cerr << r.variant << " seed " << r.seed << ": mIoU " << 100.0 * r.eval.miou << "\n";
    write_text(dir / (r.variant + "_seed" + std::to_string(r.seed) + "_loss.csv"), r.loss_csv);
  });
  write_text(dir / "ablation.csv", ablation_csv(report, cfg.num_classes));
  const std::string table = ablation_table(report, cfg.num_classes);
  write_text(dir / "ablation.txt", table);
  std::cout << table;
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& split, bool teacher) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Benchmark bench = make_benchmark(ck.config);
  const ParameterStore& params = teacher ? ck.teacher : ck.student;
  const Dataset& data = split == "train" ? bench.train : bench.eval;
  const EvalResult e = evaluate(params, ck.config.net(), data, split);
  std::cout << eval_csv_header(ck.config.num_classes) << eval_csv_row(ck.iteration, e);
  return kExitOk;
}

int cmd_report(const std::string& csv_path, std::size_t window) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read '" + csv_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const LossSeries s = parse_loss_csv(buf.str());
  if (s.total.empty()) throw IoError("loss csv has no rows");
  const ConvergenceSummary c = summarize_convergence(s, window);
  std::cout << format_convergence(c);
  return kExitOk;
}

int cmd_probe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  const io::TensorHeader h = io::read_header(in);
  std::cout << "shape " << shape_to_string(h.shape) << "  dtype "
            << (h.dtype == io::DType::kFloat64 ? "float64" : "float32") << "\n";
  return kExitOk;
}

int cmd_verify(bool full, const std::vector<int>& only) {
  VerifyOptions opts;
  opts.include_long = full;
  opts.only = only;
  opts.out_dir = output_root() / "verify";
  const auto results = run_checks(opts, [](const CheckResult& r) { std::cout << format_check(r) << std::endl; });
  bool ok = true;
  for (const auto& r : results) ok = ok && (r.passed || r.skipped);
  return ok ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fuzzy pseudo-label semi-supervised segmentation at desk scale"};
  app.require_subcommand(1);

  ConfigArgs train_args, ablate_args;
  std::string run_name = "train", ablate_name = "ablate", variants;
  bool panels = true;
  auto* train = app.add_subcommand("train", "train one model and write its report");
  train_args.attach(train);
  train->add_option("-n,--name", run_name, "run directory under the output root");
  train->add_flag("!--no-panels", panels, "skip PPM/PGM panels");

  auto* ablate = app.add_subcommand("ablate", "run the ablation variants over the configured seeds");
  ablate_args.attach(ablate);
  ablate->add_option("-n,--name", ablate_name, "run directory under the output root");
  ablate->add_option("--variants", variants, "comma-separated subset of variants");

  std::string checkpoint, split = "eval";
  bool teacher = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", checkpoint, "checkpoint directory")->required();
  eval->add_option("--split", split, "eval or train")->check(CLI::IsMember({"eval", "train"}));
  eval->add_flag("--teacher", teacher, "evaluate the EMA teacher instead of the student");

  bool full = false;
  std::vector<int> only;
  auto* verify = app.add_subcommand("verify", "run the invariant and gradient suite");
  verify->add_flag("--full", full, "also run the training experiments");
  verify->add_option("--only", only, "criterion numbers to run");

  std::string csv;
  std::size_t window = 100;
  auto* report = app.add_subcommand("report", "summarize a loss CSV");
  report->add_option("csv", csv, "loss.csv")->required();
  report->add_option("-w,--window", window, "smoothing window");

  std::string tensor_file;
  auto* probe = app.add_subcommand("probe", "print a tensor file header");
  probe->add_option("file", tensor_file)->required();

  std::string kernels_name;
  app.add_option("--kernels", kernels_name, "force a kernel table (scalar, avx2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (!kernels_name.empty() && !kernels::select(kernels_name)) {
      throw ConfigError("kernel table '" + kernels_name + "' is not available");
    }
    if (*train) return cmd_train(train_args, run_name, panels);
    if (*ablate) return cmd_ablate(ablate_args, ablate_name, variants);
    if (*eval) return cmd_eval(checkpoint, split, teacher);
    if (*verify) return cmd_verify(full, only);
    if (*report) return cmd_report(csv, window);
    if (*probe) return cmd_probe(tensor_file);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
