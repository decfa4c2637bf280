#include <cstdio>
#include <sstream>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/harness.hpp"

namespace fuzzyseg {

std::vector<AblationVariant> standard_variants() {
  return {
      {"full", [](TrainConfig&) {}},
      {"no_fuzzy", [](TrainConfig& c) { c.use_fuzzy = false; }},
      {"no_pixel_weight", [](TrainConfig& c) { c.use_pixel_weight = false; }},
      {"no_class_weight", [](TrainConfig& c) { c.use_class_weight = false; }},
      {"no_contrastive", [](TrainConfig& c) { c.use_contrastive = false; }},
      {"baseline", [](TrainConfig& c) { c.use_unlabeled = false; }},
  };
}

std::optional<AblationVariant> find_variant(const std::string& name) {
  for (auto& v : standard_variants())
    if (v.name == name) return v;
  return std::nullopt;
}

double AblationReport::mean_miou(const std::string& variant) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs)
    if (r.variant == variant) {
      s += r.eval.miou;
      ++n;
    }
  if (n == 0) throw ArgumentError("ablation: no runs for variant '" + variant + "'");
  return s / static_cast<double>(n);
}

double AblationReport::mean_class_iou(const std::string& variant, std::size_t cls) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs)
    if (r.variant == variant) {
      s += r.eval.iou.iou.at(cls);
      ++n;
    }
  if (n == 0) throw ArgumentError("ablation: no runs for variant '" + variant + "'");
  return s / static_cast<double>(n);
}

AblationReport run_ablation(const TrainConfig& base, const std::vector<AblationVariant>& variants,
                            const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const AblationRun&)>& on_run) {
  if (variants.empty() || seeds.empty()) throw ConfigError("ablation: need at least one variant and seed");
  const Benchmark bench = make_benchmark(base);
  AblationReport report;
  for (const auto& v : variants) {
    report.variants.push_back(v.name);
    for (auto seed : seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      v.apply(cfg);
      const TrainResult tr = run_training(cfg, bench);
      AblationRun run{v.name, seed, tr.final_eval, loss_csv(tr.records, cfg.verbose)};
      if (on_run) on_run(run);
      report.runs.push_back(std::move(run));
    }
  }
  return report;
}

std::string ablation_csv(const AblationReport& report, std::size_t num_classes) {
  std::ostringstream os;
  os << "variant,seed";
  for (std::size_t k = 0; k < num_classes; ++k) os << ",iou_" << k;
  os << ",miou,pixel_acc\n";
  char buf[32];
  for (const auto& r : report.runs) {
    os << r.variant << ',' << r.seed;
    for (std::size_t k = 0; k < num_classes; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", r.eval.iou.iou.at(k));
      os << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", r.eval.miou);
    os << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.17g", r.eval.pixel_accuracy);
    os << ',' << buf << "\n";
  }
  return os.str();
}

std::string ablation_table(const AblationReport& report, std::size_t num_classes) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-18s", "variant");
  os << buf;
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::snprintf(buf, sizeof buf, " %8s", ("iou_" + std::to_string(k)).c_str());
    os << buf;
  }
  os << "     mIoU\n";
  for (const auto& v : report.variants) {
    std::snprintf(buf, sizeof buf, "%-18s", v.c_str());
    os << buf;
    for (std::size_t k = 0; k < num_classes; ++k) {
      std::snprintf(buf, sizeof buf, " %8.2f", 100.0 * report.mean_class_iou(v, k));
      os << buf;
    }
    std::snprintf(buf, sizeof buf, " %8.2f\n", 100.0 * report.mean_miou(v));
    os << buf;
  }
  return os.str();
}

}  // namespace fuzzyseg
