#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fuzzyseg/checks.hpp"
#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/harness.hpp"

using namespace fuzzyseg;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.image_size = 32;
  c.train_scenes = 16;
  c.eval_scenes = 4;
  c.label_fraction = 0.25;
  c.base_width = 4;
  c.depth = 2;
  c.embed_dim = 4;
  c.iterations = 3;
  c.batch_labeled = 2;
  c.batch_unlabeled = 2;
  c.strong_crop = 24;
  c.lr = 0.05;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fuzzyseg_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Config, ParsesCommentsAndOverrides) {
  std::istringstream in("# comment\n\nlr = 0.01\nk=3\nuse_fuzzy=false\nlabel_fraction=1/4\nseeds=3,4\n");
  const TrainConfig c = parse_config(in);
  EXPECT_DOUBLE_EQ(c.lr, 0.01);
  EXPECT_EQ(c.k, 3u);
  EXPECT_FALSE(c.use_fuzzy);
  EXPECT_DOUBLE_EQ(c.label_fraction, 0.25);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 4}));
}

TEST(Config, RejectsUnknownAndMalformed) {
  std::istringstream unknown("learning_rate=0.1\n");
  EXPECT_THROW(parse_config(unknown), ConfigError);
  std::istringstream no_eq("lr 0.1\n");
  EXPECT_THROW(parse_config(no_eq), ConfigError);
  std::istringstream bad_num("lr=fast\n");
  EXPECT_THROW(parse_config(bad_num), ConfigError);
  std::istringstream k_too_big("k=9\n");
  EXPECT_THROW(parse_config(k_too_big), ConfigError);
  std::istringstream bad_form("kl_form=other\n");
  EXPECT_THROW(parse_config(bad_form), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/fuzzyseg.cfg"), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  TrainConfig c = small_config();
  c.kl_form = KlForm::kPlain;
  c.tau = 0.55;
  c.use_contrastive = false;
  std::istringstream in(format_config(c));
  const TrainConfig back = parse_config(in);
  EXPECT_EQ(format_config(back), format_config(c));
}

TEST(Config, IterationCount) {
  TrainConfig c;
  c.iterations = 0;
  c.epochs = 2;
  c.batch_unlabeled = 8;
  const DatasetSplit s = make_split(200, 0.125, 1);
  EXPECT_EQ(c.total_iterations(s), 2u * 22u);  // ceil(175 / 8) per epoch
  c.use_unlabeled = false;
  EXPECT_EQ(c.total_iterations(s), 2u * 22u);
  c.iterations = 5;
  EXPECT_EQ(c.total_iterations(s), 5u);
}

TEST(PolyLr, Schedule) {
  EXPECT_DOUBLE_EQ(poly_lr(0.1, 0, 100), 0.1);
  EXPECT_DOUBLE_EQ(poly_lr(0.1, 50, 100), 0.1 * std::pow(0.5, 0.9));
  EXPECT_EQ(poly_lr(0.1, 100, 100), 0.0);
  EXPECT_EQ(poly_lr(0.1, 150, 100), 0.0);
}

TEST(Sgd, MomentumAndDecayExact) {
  ParameterStore p;
  p.set("w", Tensor({2}, {1.0, -2.0}));
  ParameterStore g;
  g.set("w", Tensor({2}, {0.5, 0.25}));
  SgdMomentum opt(0.9, 0.1);
  opt.step(p, g, 0.1);
  // v1 = g + 0.1 w
  const double v1a = 0.5 + 0.1 * 1.0, v1b = 0.25 + 0.1 * -2.0;
  const double wa = 1.0 - 0.1 * v1a, wb = -2.0 - 0.1 * v1b;
  EXPECT_DOUBLE_EQ(p.at("w")[0], wa);
  EXPECT_DOUBLE_EQ(p.at("w")[1], wb);
  opt.step(p, g, 0.1);
  EXPECT_DOUBLE_EQ(p.at("w")[0], wa - 0.1 * (0.9 * v1a + 0.5 + 0.1 * wa));
  EXPECT_DOUBLE_EQ(p.at("w")[1], wb - 0.1 * (0.9 * v1b + 0.25 + 0.1 * wb));
}

TEST(Sgd, RefusesTeacher) {
  ParameterStore t(StoreRole::kTeacher);
  t.set("w", Tensor({1}, 1.0));
  ParameterStore g;
  g.set("w", Tensor({1}, 1.0));
  SgdMomentum opt(0.9, 0.0);
  EXPECT_THROW(opt.step(t, g, 0.1), StateError);
}

TEST(Smooth, TrailingWindow) {
  const std::vector<double> s{1, 2, 3, 4, 5};
  EXPECT_EQ(smooth(s, 2), (std::vector<double>{1, 1.5, 2.5, 3.5, 4.5}));
  EXPECT_EQ(smooth(s, 100), (std::vector<double>{1, 1.5, 2, 2.5, 3}));
  EXPECT_EQ(smooth(s, 1), s);
}

TEST(Training, DeterministicAndReported) {
  const TrainConfig c = small_config();
  const Benchmark bench = make_benchmark(c);
  const TrainResult a = run_training(c, bench);
  const TrainResult b = run_training(c, bench);
  ASSERT_EQ(a.records.size(), 3u);
  EXPECT_EQ(a.student.checksum(), b.student.checksum());
  EXPECT_EQ(a.teacher.checksum(), b.teacher.checksum());
  EXPECT_EQ(loss_csv(a.records, false), loss_csv(b.records, false));
  for (const auto& r : a.records) EXPECT_TRUE(std::isfinite(r.loss.total));

  const LossSeries series = parse_loss_csv(loss_csv(a.records, true));
  ASSERT_EQ(series.total.size(), 3u);
  EXPECT_EQ(series.total[1], a.records[1].loss.total);

  const fs::path dir = scratch("report");
  write_report(a.records, {a.final_eval}, dir, true, 2);
  for (const char* f : {"loss.csv", "eval.csv", "smoothed.csv", "timing.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  std::ifstream loss(dir / "loss.csv");
  std::string header;
  std::getline(loss, header);
  EXPECT_EQ(header.rfind("iter,L_s,L_u,L_c,L_total,N_valid,w_0", 0), 0u);

  write_panels(a.student, c, bench.eval, dir, 1);
  EXPECT_TRUE(fs::exists(dir / "scene0_pred.ppm"));
  EXPECT_TRUE(fs::exists(dir / "scene0_entropy.pgm"));
  fs::remove_all(dir);
}

TEST(Training, CheckpointRoundTrip) {
  const TrainConfig c = small_config();
  const Benchmark bench = make_benchmark(c);
  const TrainResult r = run_training(c, bench);
  const fs::path dir = scratch("ckpt");
  save_checkpoint(dir, c, r);
  const Checkpoint back = load_checkpoint(dir);
  EXPECT_EQ(back.iteration, r.iterations);
  EXPECT_EQ(back.student.checksum(), r.student.checksum());
  EXPECT_EQ(back.teacher.checksum(), r.teacher.checksum());
  EXPECT_EQ(back.teacher.role(), StoreRole::kTeacher);
  EXPECT_EQ(format_config(back.config), format_config(c));
  const EvalResult e = evaluate(back.student, back.config.net(), bench.eval);
  EXPECT_DOUBLE_EQ(e.miou, r.final_eval.miou);
  EXPECT_THROW(load_checkpoint(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST(Training, NonFiniteLossAborts) {
  TrainConfig c = small_config();
  c.lr = 1e200;
  c.iterations = 6;
  const fs::path dir = scratch("nan");
  TrainOptions opt;
  opt.dump_dir = dir;
  EXPECT_THROW(run_training(c, make_benchmark(c), opt), TrainingAborted);
  fs::remove_all(dir);
}

TEST(Ablation, VariantsAndBaselineEquivalence) {
  const auto variants = standard_variants();
  ASSERT_EQ(variants.size(), 6u);
  EXPECT_TRUE(find_variant("no_fuzzy").has_value());
  EXPECT_FALSE(find_variant("nope").has_value());
  TrainConfig c = small_config();
  c.iterations = 2;
  const AblationReport rep = run_ablation(c, {*find_variant("baseline")}, {0});
  TrainConfig sup = c;
  sup.use_unlabeled = false;
  const TrainResult direct = run_training(sup, make_benchmark(sup));
  EXPECT_EQ(rep.runs.at(0).loss_csv, loss_csv(direct.records, false));
  EXPECT_NE(ablation_table(rep, c.num_classes).find("baseline"), std::string::npos);
}

TEST(Convergence, SummaryOnSyntheticCurve) {
  LossSeries s;
  for (std::size_t i = 0; i < 600; ++i) {
    const double v = 0.05 + 2.0 * std::exp(-static_cast<double>(i) / 80.0);
    s.iteration.push_back(i);
    s.supervised.push_back(v);
    s.unsupervised.push_back(0.0);
    s.contrastive.push_back(0.0);
    s.total.push_back(v);
  }
  const ConvergenceSummary c = summarize_convergence(s);
  EXPECT_TRUE(c.descent_ok);
  EXPECT_TRUE(c.plateau_ok);
  for (double& v : s.total) v = 3.0;
  for (double& v : s.supervised) v = 3.0;
  EXPECT_FALSE(summarize_convergence(s).plateau_ok && summarize_convergence(s).descent_ok);
}
