#include <gtest/gtest.h>

#include <cmath>

#include "fuzzyseg/augment.hpp"
#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/params.hpp"

using namespace fuzzyseg;

namespace {

ParameterStore store(double a, double b, StoreRole role = StoreRole::kStudent) {
  ParameterStore s(role);
  s.set("w", Tensor({2}, {a, b}));
  s.set("z", Tensor({1}, a - b));
  return s;
}

Tensor ramp_image(std::size_t h, std::size_t w) {
  Tensor img({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) img.at(c, y, x) = (c + y * w + x) / double(3 + h * w);
  return img;
}

}  // namespace

TEST(Ema, OneStepValues) {
  ParameterStore t = store(1.0, 2.0, StoreRole::kTeacher);
  const ParameterStore s = store(3.0, -2.0);
  ema_update(t, s, 0.99);
  EXPECT_DOUBLE_EQ(t.at("w")[0], 0.99 * 1.0 + 0.01 * 3.0);
  EXPECT_DOUBLE_EQ(t.at("w")[1], 0.99 * 2.0 + 0.01 * -2.0);
  EXPECT_DOUBLE_EQ(t.at("z")[0], 0.99 * -1.0 + 0.01 * 5.0);
}

TEST(Ema, FixedStudentContraction) {
  ParameterStore t = store(10.0, -4.0, StoreRole::kTeacher);
  const ParameterStore s = store(1.0, 2.0);
  const double d0 = std::abs(t.at("w")[0] - 1.0);
  for (int i = 0; i < 100; ++i) ema_update(t, s, 0.9);
  EXPECT_NEAR(std::abs(t.at("w")[0] - 1.0), d0 * std::pow(0.9, 100), 1e-12);
}

TEST(Ema, RejectsMismatchAndBadAlpha) {
  ParameterStore t = store(1.0, 1.0, StoreRole::kTeacher);
  ParameterStore other;
  other.set("w", Tensor({3}));
  EXPECT_THROW(ema_update(t, other), ConfigError);
  EXPECT_THROW(ema_update(t, store(0, 0), 1.0), ConfigError);
  EXPECT_THROW(ema_update(t, store(0, 0), 0.0), ConfigError);
}

TEST(ParameterStore, AccessChecksumAndRoles) {
  ParameterStore s = store(1.0, 2.0);
  EXPECT_EQ(s.total_values(), 3u);
  EXPECT_THROW(s.at("missing"), StateError);
  const std::uint64_t c = s.checksum();
  EXPECT_EQ(store(1.0, 2.0).checksum(), c);
  s.mutable_at("w")[0] = 1.5;
  EXPECT_NE(s.checksum(), c);
  const ParameterStore t = s.as_role(StoreRole::kTeacher);
  EXPECT_EQ(t.role(), StoreRole::kTeacher);
  EXPECT_EQ(t.checksum(), s.checksum());
  EXPECT_TRUE(t.matches(s));
}

TEST(Augment, IdentityKeepsEverything) {
  const Tensor img = ramp_image(8, 6);
  LabelMap lab(1, 8, 6);
  for (std::size_t i = 0; i < lab.numel(); ++i) lab.values[i] = static_cast<int>(i % 3);
  const AugmentedView v = apply_augmentation(img, &lab, AugmentationSpec::identity(), 1);
  EXPECT_EQ(v.image, img);
  EXPECT_EQ(v.labels, lab);
  for (double m : v.valid.values()) EXPECT_EQ(m, 1.0);
}

TEST(Augment, FlipMirrorsImageAndLabels) {
  AugmentationSpec spec;
  spec.flip_prob = 1.0;
  const Tensor img = ramp_image(4, 5);
  LabelMap lab(1, 4, 5);
  for (std::size_t i = 0; i < lab.numel(); ++i) lab.values[i] = static_cast<int>(i);
  const AugmentedView v = apply_augmentation(img, &lab, spec, 3);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      EXPECT_EQ(v.labels.at(0, y, x), lab.at(0, y, 4 - x));
      EXPECT_DOUBLE_EQ(v.image.at(1, y, x), img.at(1, y, 4 - x));
    }
}

TEST(Augment, DeterministicPerSeedAndLabelsStayInSet) {
  const Tensor img = ramp_image(16, 16);
  LabelMap lab(1, 16, 16);
  for (std::size_t i = 0; i < lab.numel(); ++i) lab.values[i] = static_cast<int>((i / 16) % 4);
  const AugmentationSpec strong = AugmentationSpec::strong_default();
  AugmentationSpec s = strong;
  s.crop_h = s.crop_w = 12;
  const AugmentedView a = apply_augmentation(img, &lab, s, 42);
  const AugmentedView b = apply_augmentation(img, &lab, s, 42);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t i = 0; i < a.labels.numel(); ++i) {
    const int v = a.labels.values[i];
    EXPECT_TRUE((v >= 0 && v < 4) || v == LabelMap::kIgnore);
    EXPECT_EQ(v == LabelMap::kIgnore, a.valid[i] == 0.0);
  }
  for (double v : a.image.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Augment, WarpMapFollowsLabelMapping) {
  const Tensor img = ramp_image(10, 10);
  LabelMap lab(1, 10, 10);
  Tensor map({1, 10, 10});
  for (std::size_t i = 0; i < lab.numel(); ++i) {
    lab.values[i] = static_cast<int>(i);
    map[i] = static_cast<double>(i);
  }
  AugmentationSpec spec = AugmentationSpec::weak_default();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const AugmentedView v = apply_augmentation(img, &lab, spec, seed);
    const Tensor warped = warp_map(map, v.warp, -1.0);
    for (std::size_t i = 0; i < v.labels.numel(); ++i) {
      if (v.labels.values[i] == LabelMap::kIgnore) {
        EXPECT_EQ(warped[i], -1.0);
      } else {
        EXPECT_EQ(warped[i], static_cast<double>(v.labels.values[i]));
      }
    }
    EXPECT_EQ(sample_warp(10, 10, spec, seed).flip, v.warp.flip);
  }
}

TEST(Augment, WeakSpecRejectsPhotometric) {
  AugmentationSpec s = AugmentationSpec::weak_default();
  s.noise_sigma = 0.1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = AugmentationSpec::weak_default();
  s.crop_h = s.crop_w = 8;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_NO_THROW(AugmentationSpec::strong_default().validate());
}

TEST(ChannelMasks, Complementary) {
  const auto [m, inv] = complementary_channel_masks(4, 16, 0.5, 9);
  ASSERT_EQ(m.shape(), (Shape{4, 16}));
  for (std::size_t i = 0; i < m.numel(); ++i) {
    EXPECT_TRUE(m[i] == 0.0 || m[i] == 1.0);
    EXPECT_EQ(m[i] + inv[i], 1.0);
  }
  EXPECT_THROW(complementary_channel_masks(0, 4, 0.5, 1), ArgumentError);
  EXPECT_THROW(complementary_channel_masks(1, 4, 0.0, 1), ArgumentError);
}
