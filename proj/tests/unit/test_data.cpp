#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fuzzyseg/data.hpp"
#include "fuzzyseg/errors.hpp"

using namespace fuzzyseg;

TEST(Scene, DeterministicAndInRange) {
  SceneConfig cfg;
  const SyntheticScene a = generate_scene(cfg, 11);
  const SyntheticScene b = generate_scene(cfg, 11);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(generate_scene(cfg, 12).image, a.image);
  EXPECT_EQ(a.image.shape(), (Shape{3, 64, 64}));
  for (double v : a.image.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (int v : a.labels.values) {
    EXPECT_GE(v, 0);
    EXPECT_LT(v, 4);
  }
}

TEST(Scene, ShapeCountsMatchLabels) {
  SceneConfig cfg;
  cfg.occurrence = {1.0, 1.0, 1.0, 1.0};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticScene s = generate_scene(cfg, seed);
    std::set<int> seen(s.labels.values.begin(), s.labels.values.end());
    for (std::size_t c = 1; c < 4; ++c) {
      EXPECT_GE(s.meta.shape_counts[c], 1);
      EXPECT_TRUE(seen.count(static_cast<int>(c))) << "class " << c << " seed " << seed;
    }
  }
}

TEST(Scene, NoiseFreeRegionsAreFlat) {
  SceneConfig cfg;
  cfg.num_classes = 2;
  cfg.occurrence = {1.0, 1.0};
  cfg.max_instances = 1;
  const SyntheticScene s = generate_scene(cfg, 3, true);
  double first = -1.0;
  for (std::size_t i = 0; i < 64 * 64; ++i) {
    if (s.labels.values[i] != 1) continue;
    if (first < 0.0) first = s.image[i];
    EXPECT_EQ(s.image[i], first);
  }
  EXPECT_GE(first, 0.0);
}

TEST(Scene, ConfigValidation) {
  SceneConfig cfg;
  cfg.num_classes = 8;
  cfg.occurrence.assign(8, 0.5);
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = SceneConfig{};
  cfg.occurrence = {1.0, 0.5};
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(Split, SizesAndDisjoint) {
  const DatasetSplit s = make_split(200, 0.125, 7);
  EXPECT_EQ(s.labeled.size(), 25u);
  EXPECT_EQ(s.unlabeled.size(), 175u);
  std::set<std::size_t> all(s.labeled.begin(), s.labeled.end());
  all.insert(s.unlabeled.begin(), s.unlabeled.end());
  EXPECT_EQ(all.size(), 200u);
  EXPECT_EQ(make_split(200, 0.125, 7).labeled, s.labeled);
  EXPECT_EQ(make_split(10, 0.01, 1).labeled.size(), 1u);
  EXPECT_TRUE(make_split(10, 1.0, 1).unlabeled.empty());
}

TEST(Split, ParseFraction) {
  EXPECT_DOUBLE_EQ(parse_fraction("1/8"), 0.125);
  EXPECT_DOUBLE_EQ(parse_fraction("0.25"), 0.25);
  EXPECT_DOUBLE_EQ(parse_fraction("1"), 1.0);
  EXPECT_THROW(parse_fraction("0"), ConfigError);
  EXPECT_THROW(parse_fraction("3/2"), ConfigError);
  EXPECT_THROW(parse_fraction("a/b"), ConfigError);
  EXPECT_THROW(parse_fraction("1/0"), ConfigError);
}

TEST(Dataset, ManifestLines) {
  SceneConfig cfg;
  const Dataset d = generate_dataset(cfg, 4, 9);
  const DatasetSplit s = make_split(4, 0.5, 1);
  std::ostringstream os;
  write_manifest(os, d, s);
  std::istringstream is(os.str());
  std::size_t id, labeled, lines = 0, labeled_count = 0;
  std::uint64_t seed;
  while (is >> id >> seed >> labeled) {
    EXPECT_EQ(id, lines);
    EXPECT_EQ(seed, d.scenes[id].meta.seed);
    labeled_count += labeled;
    ++lines;
  }
  EXPECT_EQ(lines, 4u);
  EXPECT_EQ(labeled_count, 2u);
}

TEST(ImageIo, PpmOfLabels) {
  LabelMap m(1, 2, 2);
  m.values = {0, 1, LabelMap::kIgnore, 3};
  const PnmImage img = parse_pnm(export_ppm(m));
  EXPECT_EQ(img.kind, 6);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  ASSERT_EQ(img.pixels.size(), 12u);
  const Rgb c1 = class_palette()[1];
  EXPECT_EQ(img.pixels[3], c1.r);
  EXPECT_EQ(img.pixels[4], c1.g);
  EXPECT_EQ(img.pixels[5], c1.b);
  EXPECT_EQ(img.pixels[6], 0);
  EXPECT_EQ(img.pixels[7], 0);
  EXPECT_EQ(img.pixels[8], 0);
}

TEST(ImageIo, UnknownClassIsMagenta) {
  LabelMap m(1, 1, 1);
  m.values = {42};
  const PnmImage img = parse_pnm(export_ppm(m));
  EXPECT_EQ(img.pixels[0], 255);
  EXPECT_EQ(img.pixels[1], 0);
  EXPECT_EQ(img.pixels[2], 255);
}

TEST(ImageIo, PgmRounding) {
  const PnmImage img = parse_pnm(export_pgm(Tensor({1, 3}, {0.0, 0.5, 1.0})));
  EXPECT_EQ(img.kind, 5);
  EXPECT_EQ(img.pixels, (std::vector<unsigned char>{0, 128, 255}));
  EXPECT_THROW(export_pgm(Tensor({2, 2, 2})), ArgumentError);
}

TEST(ImageIo, RgbImage) {
  Tensor t({3, 1, 2}, {1.0, 0.0, 0.0, 1.0, 0.2, 0.2});
  const PnmImage img = parse_pnm(export_ppm(t));
  EXPECT_EQ(img.pixels, (std::vector<unsigned char>{255, 0, 51, 0, 255, 51}));
}

TEST(Scene, PresenceFrequencyFollowsRarity) {
  SceneConfig cfg;
  cfg.occurrence = {1.0, 0.8, 0.8, 0.1};
  std::size_t present = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) present += generate_scene(cfg, seed).meta.shape_counts[3] > 0;
  EXPECT_NEAR(present / 1000.0, 0.1, 0.03);
}

TEST(Scene, DefaultProfileIsLongTailed) {
  const SceneConfig cfg;
  std::vector<double> pixels(cfg.num_classes, 0.0);
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    for (int v : generate_scene(cfg, seed).labels.values) pixels[v] += 1.0;
  const double total = 1000.0 * 64 * 64;
  EXPECT_GT(pixels[0] / total, 0.6);
  EXPECT_LT(pixels[3] / total, 0.03);
}

TEST(Split, SpecExamples) {
  EXPECT_EQ(make_split(16, 0.125, 3).labeled.size(), 2u);
  EXPECT_NE(make_split(16, 0.5, 1).labeled, make_split(16, 0.5, 2).labeled);
  EXPECT_THROW(make_split(0, 0.5, 1), ArgumentError);
}

TEST(ImageIo, CheckerboardBytes) {
  LabelMap m(1, 2, 2);
  m.values = {0, 1, 1, 0};
  const std::string bytes = export_ppm(m);
  const std::string header = "P6\n2 2\n255\n";
  ASSERT_EQ(bytes.substr(0, header.size()), header);
  const Rgb a = class_palette()[0], b = class_palette()[1];
  const std::string expect{static_cast<char>(a.r), static_cast<char>(a.g), static_cast<char>(a.b),
                           static_cast<char>(b.r), static_cast<char>(b.g), static_cast<char>(b.b),
                           static_cast<char>(b.r), static_cast<char>(b.g), static_cast<char>(b.b),
                           static_cast<char>(a.r), static_cast<char>(a.g), static_cast<char>(a.b)};
  EXPECT_EQ(bytes.substr(header.size()), expect);
}
