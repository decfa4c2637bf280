#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fuzzyseg/data.hpp"
#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/losses.hpp"
#include "fuzzyseg/metrics.hpp"
#include "fuzzyseg/model.hpp"
#include "fuzzyseg/params.hpp"

namespace fuzzyseg {

struct TrainConfig {
  // run
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};  // experiment-level (ablate)
  // data
  std::uint64_t data_seed = 7;
  std::size_t num_classes = 4;
  std::size_t image_size = 64;
  std::size_t train_scenes = 200;
  std::size_t eval_scenes = 50;
  double label_fraction = 0.125;
  std::vector<double> occurrence{1.0, 0.8, 0.8, 0.25};
  double color_jitter = 0.3;
  // network
  std::size_t base_width = 16;
  std::size_t depth = 3;
  std::size_t embed_dim = 16;
  // pseudo-labels and losses
  std::size_t k = 2;
  double tau = 0.7;
  double epsilon = 1e-6;
  double class_weight_cap = 20.0;  // 0 disables the cap
  double lambda_u = 0.5;
  double lambda_c = 0.1;
  double select_threshold = 0.5;
  KlForm kl_form = KlForm::kGeneralized;
  double ema_alpha = 0.99;
  // optimization
  double lr = 0.001;
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 80;
  std::size_t iterations = 0;  // overrides epochs when > 0
  std::size_t batch_labeled = 8;
  std::size_t batch_unlabeled = 8;
  // augmentation
  std::size_t strong_crop = 48;
  double mask_keep_prob = 0.5;
  // ablation switches
  bool use_unlabeled = true;
  bool use_fuzzy = true;
  bool use_pixel_weight = true;
  bool use_class_weight = true;
  bool use_contrastive = true;
  // logging
  std::size_t eval_every = 0;  // 0: only at the end
  bool verbose = false;

  SegNetConfig net() const;
  SceneConfig scenes() const;
  void validate() const;

  // Iterations per epoch: one pass over the unlabeled pool (the labeled pool
  // if the split has no unlabeled scenes), independent of use_unlabeled.
  std::size_t total_iterations(const DatasetSplit& split) const;
};

// key=value lines, '#' comments. Unknown keys and bad values raise ConfigError.
void apply_config_entry(TrainConfig& config, const std::string& key, const std::string& value);
TrainConfig parse_config(std::istream& in, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
std::string format_config(const TrainConfig& config);

// eta0 (1 - i/i_max)^power; 0 for i >= i_max.
double poly_lr(double eta0, std::size_t i, std::size_t i_max, double power = 0.9);

// Classical momentum SGD, weight decay folded into the gradient:
// g' = g + decay theta; v = m v + g'; theta -= lr v.
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), decay_(weight_decay) {}
  // Throws StateError for teacher stores.
  void step(ParameterStore& params, const ParameterStore& grads, double lr);

 private:
  double momentum_;
  double decay_;
  std::map<std::string, Tensor> velocity_;
};

struct EvalResult {
  std::string split;
  ClassIoU iou;
  double miou = 0.0;
  double pixel_accuracy = 0.0;
  ConfusionMatrix confusion{1};
};

struct MetricsRecord {
  std::size_t iteration = 0;
  double lr = 0.0;
  LossBreakdown loss;
  std::vector<double> class_weights;  // empty when rebalancing is not in use
  std::optional<EvalResult> eval;
  double wall_seconds = 0.0;
};

struct Benchmark {
  Dataset train;
  Dataset eval;
  DatasetSplit split;
};

Benchmark make_benchmark(const TrainConfig& config);

struct TrainResult {
  ParameterStore student;
  ParameterStore teacher{StoreRole::kTeacher};
  std::vector<MetricsRecord> records;
  EvalResult final_eval;
  std::size_t iterations = 0;
};

struct TrainOptions {
  // Where the offending batch is written on a NaN abort (skipped if empty).
  std::filesystem::path dump_dir;
  // Called after every iteration.
  std::function<void(const MetricsRecord&)> on_record;
};

// Thrown (a NumericalError) when a loss turns non-finite.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, std::size_t iteration)
      : NumericalError(what), iteration(iteration) {}
  std::size_t iteration;
};

TrainResult run_training(const TrainConfig& config, const Benchmark& bench,
                         const TrainOptions& options = {});

// Student-style prediction (argmax of logits) over a dataset, batched.
LabelMap predict(const ParameterStore& params, const SegNetConfig& net, const Dataset& data,
                 std::size_t first, std::size_t count);
EvalResult evaluate(const ParameterStore& params, const SegNetConfig& net, const Dataset& data,
                    const std::string& split = "eval");

// --- ablation -----------------------------------------------------------------

struct AblationVariant {
  std::string name;
  std::function<void(TrainConfig&)> apply;
};

// full, w/o fuzzy, w/o pixel weight, w/o class weight, w/o contrastive,
// supervised-only baseline.
std::vector<AblationVariant> standard_variants();
std::optional<AblationVariant> find_variant(const std::string& name);

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  EvalResult eval;
  std::string loss_csv;
};

struct AblationReport {
  std::vector<AblationRun> runs;
  std::vector<std::string> variants;  // in execution order

  double mean_miou(const std::string& variant) const;
  double mean_class_iou(const std::string& variant, std::size_t cls) const;
};

AblationReport run_ablation(const TrainConfig& base, const std::vector<AblationVariant>& variants,
                            const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const AblationRun&)>& on_run = {});

std::string ablation_csv(const AblationReport& report, std::size_t num_classes);
std::string ablation_table(const AblationReport& report, std::size_t num_classes);

// --- reports --------------------------------------------------------------------

// iter,L_s,L_u,L_c,L_total,N_valid[,w_0..w_{C-1} when verbose]; values %.17g.
std::string loss_csv(const std::vector<MetricsRecord>& records, bool verbose);
std::string eval_csv_header(std::size_t num_classes);
std::string eval_csv_row(std::size_t iteration, const EvalResult& e);

// Trailing moving average; the window is clamped to the series length.
std::vector<double> smooth(const std::vector<double>& series, std::size_t window);

struct LossSeries {
  std::vector<std::size_t> iteration;
  std::vector<double> supervised, unsupervised, contrastive, total;
};
LossSeries parse_loss_csv(const std::string& csv);

// loss.csv, eval.csv, smoothed.csv, timing.csv. Throws IoError when the
// directory cannot be written. `records` must be non-empty.
void write_report(const std::vector<MetricsRecord>& records, const std::vector<EvalResult>& final_evals,
                  const std::filesystem::path& out_dir, bool verbose, std::size_t window = 100);

// PPM panels (input, truth, prediction) and PGM entropy/weight maps of the
// first `count` eval scenes.
void write_panels(const ParameterStore& params, const TrainConfig& config, const Dataset& eval,
                  const std::filesystem::path& out_dir, std::size_t count = 4);

// --- checkpoints ----------------------------------------------------------------

// One tensor file per entry plus manifest.json (config text, iteration,
// entry list).
void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& config,
                     const TrainResult& result);

struct Checkpoint {
  TrainConfig config;
  std::size_t iteration = 0;
  ParameterStore student;
  ParameterStore teacher{StoreRole::kTeacher};
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace fuzzyseg
