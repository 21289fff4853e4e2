#include <doctest.h>

#include <cmath>
#include <set>

#include "empaste/paste.hpp"
#include "test_util.hpp"

using namespace empaste;

namespace {

ForegroundCutout disc_cutout(ClassId cls, int r, std::uint8_t value, int channels = 3) {
  const int s = 2 * r + 1;
  ForegroundCutout c;
  c.class_id = cls;
  c.mask = BinaryMask(s, s);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      if ((x - r) * (x - r) + (y - r) * (y - r) <= r * r) c.mask.set(x, y);
  c.pixels = RasterImage(s, s, channels, value);
  c.source_image_id = "src" + std::to_string(cls);
  c.source_segment_id = "seg" + std::to_string(cls);
  return c;
}

PastedLayer square_layer(int x0, int y0, int size, std::uint8_t value, int channels = 3) {
  PastedLayer l;
  l.mask = BinaryMask(size, size, true);
  l.pixels = RasterImage(size, size, channels, value);
  l.x0 = x0;
  l.y0 = y0;
  return l;
}

bool disjoint(const std::vector<SceneInstance>& inst) {
  if (inst.empty()) return true;
  std::vector<int> count(inst[0].mask.size(), 0);
  for (const auto& i : inst) {
    const auto b = i.mask.bits();
    for (std::size_t k = 0; k < b.size(); ++k) count[k] += b[k];
  }
  return std::all_of(count.begin(), count.end(), [](int c) { return c <= 1; });
}

}  // namespace

TEST_CASE("scene occlusion: later paste wins, tiny remnants are dropped") {
  CompositeScene scene(RasterImage(40, 40, 3, 10));
  scene.paste(1, square_layer(0, 0, 10, 100));
  scene.paste(2, square_layer(5, 5, 10, 200));
  REQUIRE(scene.instances().size() == 2);
  CHECK(scene.instances()[0].mask.area() == 100 - 25);
  CHECK(scene.instances()[0].original_area == 100);
  CHECK(scene.instances()[1].mask.area() == 100);
  CHECK(disjoint(scene.instances()));

  // Covers all but 4 of the first square's 100 pixels: 4% < 5%.
  CompositeScene s2(RasterImage(40, 40, 3, 10));
  s2.paste(1, square_layer(0, 0, 10, 100));
  PastedLayer cover = square_layer(0, 0, 10, 50);
  cover.mask.set(9, 9, false);
  cover.mask.set(8, 9, false);
  cover.mask.set(9, 8, false);
  cover.mask.set(8, 8, false);
  s2.paste(2, cover);
  REQUIRE(s2.instances().size() == 1);
  CHECK(s2.instances()[0].class_id == 2);

  // Exactly 5 visible pixels survive.
  CompositeScene s3(RasterImage(40, 40, 3, 10));
  s3.paste(1, square_layer(0, 0, 10, 100));
  PastedLayer most = square_layer(0, 0, 10, 50);
  for (int x = 0; x < 5; ++x) most.mask.set(x, 9, false);
  s3.paste(2, most);
  CHECK(s3.instances().size() == 2);

  CHECK(scene.free_mask().area() == 1600 - 175);
  CHECK(scene.pasted_count() == 2);
}

TEST_CASE("paste clips to the scene and ignores off-scene layers") {
  CompositeScene scene(RasterImage(20, 20, 1, 0));
  CHECK(scene.paste(1, square_layer(15, 15, 10, 5, 1)) == 25);
  CHECK(scene.paste(1, square_layer(30, 30, 4, 5, 1)) == 0);
  CHECK(scene.instances().size() == 1);
}

TEST_CASE("add_existing participates in occlusion") {
  CompositeScene scene(RasterImage(20, 20, 3, 0));
  BinaryMask m(20, 20);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) m.set(x, y);
  scene.add_existing(3, m, "orig", "g1");
  scene.paste(4, square_layer(5, 0, 10, 9));
  REQUIRE(scene.instances().size() == 2);
  CHECK(scene.instances()[0].paste_index == -1);
  CHECK(scene.instances()[0].mask.area() == 50);
  CHECK(scene.instances()[1].paste_index == 0);
  CHECK_THROWS_AS_CODE(scene.add_existing(1, BinaryMask(5, 5, true)), ErrorCode::DimensionMismatch);
}

TEST_CASE("selection distributions") {
  std::vector<ClassId> classes{1, 1, 1, 2};
  auto u = make_selection_distribution(classes, SelectionMode::Uniform);
  for (double p : u.probabilities()) CHECK(p == doctest::Approx(0.25));
  auto b = make_selection_distribution(classes, SelectionMode::Balanced);
  CHECK(b.probabilities()[0] == doctest::Approx(1.0 / 6));
  CHECK(b.probabilities()[3] == doctest::Approx(0.5));

  Rng rng(61);
  std::vector<int> hits(4, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++hits[b.sample(rng)];
  CHECK(std::abs(hits[3] / double(n) - 0.5) < 3 * std::sqrt(0.25 / n));
  CHECK_THROWS_AS_CODE(make_selection_distribution(std::vector<ClassId>{}, SelectionMode::Uniform),
                       ErrorCode::EmptyPool);
}

TEST_CASE("random scale stays inside its range") {
  Rng rng(62);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double s = sample_scale_random(rng);
    CHECK(s >= 0.3);
    CHECK(s < 1.0);
    sum += s;
  }
  CHECK(std::abs(sum / n - 0.65) < 0.01);
}

TEST_CASE("transform_cutout identity") {
  auto c = disc_cutout(1, 6, 77);
  PastedLayer l = transform_cutout(c, {1.0, 0.0});
  CHECK(l.mask == c.mask);
  CHECK(l.pixels.width() == c.mask.width());
}

TEST_CASE("random paste") {
  std::vector<ForegroundCutout> pool{disc_cutout(1, 8, 200), disc_cutout(2, 5, 90)};
  auto dist = make_selection_distribution(pool, SelectionMode::Uniform);
  PasteParams p;
  p.n_p = 4;
  Rng a(63), b(63);
  PasteLog log;
  CompositeScene s1 = random_paste_scene(CompositeScene(RasterImage(64, 64, 3, 0)), pool, dist, p, a, &log);
  CompositeScene s2 = random_paste_scene(CompositeScene(RasterImage(64, 64, 3, 0)), pool, dist, p, b);
  CHECK(log.scales.size() == 4);
  for (double s : log.scales) CHECK((s >= 0.3 && s < 1.0));
  REQUIRE(s1.instances().size() == s2.instances().size());
  for (std::size_t i = 0; i < s1.instances().size(); ++i) CHECK(s1.instances()[i].mask == s2.instances()[i].mask);
  CHECK(s1.pasted_count() == 4);
  CHECK(disjoint(s1.instances()));
  std::set<int> idx;
  for (const auto& i : s1.instances()) idx.insert(i.paste_index);
  CHECK(idx.size() == s1.instances().size());

  p.n_p = 0;
  CHECK(random_paste_scene(CompositeScene(RasterImage(8, 8, 3, 0)), pool, dist, p, a).instances().empty());
}

TEST_CASE("random paste rescales oversize cutouts or gives up") {
  std::vector<ForegroundCutout> pool{disc_cutout(1, 40, 200)};
  auto dist = make_selection_distribution(pool, SelectionMode::Uniform);
  PasteParams p;
  p.n_p = 1;
  p.scale_low = p.scale_high = 1.0;
  Rng rng(64);
  PasteLog log;
  CompositeScene s = random_paste_scene(CompositeScene(RasterImage(30, 30, 3, 0)), pool, dist, p, rng, &log);
  REQUIRE(log.scales.size() == 1);
  CHECK(log.scales[0] < 1.0);
  CHECK(s.instances().size() == 1);

  p.max_rescale_retries = 1;
  CHECK_THROWS_AS_CODE(random_paste_scene(CompositeScene(RasterImage(30, 30, 3, 0)), pool, dist, p, rng),
                       ErrorCode::PlacementImpossible);
  CHECK_THROWS_AS_CODE(random_paste_scene(CompositeScene(RasterImage(30, 30, 3, 0)), {}, dist, PasteParams{}, rng),
                       ErrorCode::EmptyPool);
}

TEST_CASE("space-maximize paste") {
  std::vector<ForegroundCutout> pool{disc_cutout(1, 12, 200), disc_cutout(2, 4, 90), disc_cutout(3, 9, 30)};
  auto dist = make_selection_distribution(pool, SelectionMode::Uniform);
  PasteParams p;
  p.n_p = 6;
  Rng rng(65);
  PasteLog log;
  CompositeScene s =
      space_maximize_paste_scene(CompositeScene(RasterImage(96, 96, 3, 0)), pool, dist, p, rng, &log);
  REQUIRE_FALSE(log.inscribed_radii.empty());
  for (std::size_t i = 1; i < log.inscribed_radii.size(); ++i)
    CHECK(log.inscribed_radii[i] <= log.inscribed_radii[i - 1] + 1e-9);
  for (double r : log.inscribed_radii) CHECK(r >= p.min_inscribed_radius);
  CHECK(disjoint(s.instances()));
  for (std::size_t i = 0; i < s.instances().size(); ++i)
    CHECK(min_enclosing_circle(s.instances()[i].mask).radius <= log.inscribed_radii[i] + 1.0);
  if (log.inscribed_radii.size() < 6) CHECK(log.stopped_early);

  // A scene without a disc of radius 8 left.
  CompositeScene full(RasterImage(12, 12, 3, 0));
  full.paste(1, square_layer(0, 0, 12, 1));
  CHECK_THROWS_AS_CODE(space_maximize_paste_scene(full, pool, dist, p, rng), ErrorCode::NoFreeSpace);
}

TEST_CASE("space-maximize respects existing instances") {
  std::vector<ForegroundCutout> pool{disc_cutout(1, 10, 200)};
  auto dist = make_selection_distribution(pool, SelectionMode::Uniform);
  CompositeScene scene(RasterImage(80, 80, 3, 0));
  BinaryMask left(80, 80);
  for (int y = 0; y < 80; ++y)
    for (int x = 0; x < 40; ++x) left.set(x, y);
  scene.add_existing(5, left);
  PasteParams p;
  p.n_p = 2;
  Rng rng(66);
  CompositeScene out = space_maximize_paste_scene(scene, pool, dist, p, rng);
  REQUIRE(out.instances().size() >= 2);
  CHECK(out.instances()[0].mask == left);
  for (std::size_t i = 1; i < out.instances().size(); ++i)
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x < 40; ++x) CHECK_FALSE(out.instances()[i].mask.at(x, y));
}

TEST_CASE("blending") {
  CompositeScene scene(RasterImage(40, 40, 3, 50));
  scene.paste(1, square_layer(10, 10, 16, 200));
  PasteParams p;
  const BinaryMask before = scene.instances()[0].mask;

  RasterImage hard = blend_composite(scene, BlendMode::None, p);
  CHECK(hard.at(15, 15, 0) == 200);
  CHECK(hard.at(10, 10, 2) == 200);
  CHECK(hard.at(5, 5, 1) == 50);

  RasterImage soft = blend_composite(scene, BlendMode::Gaussian, p);
  CHECK(soft.at(17, 17, 0) == 200);  // interior beyond the 2σ band
  CHECK(soft.at(10, 17, 0) < 200);   // edge pixel is mixed
  CHECK(soft.at(10, 17, 0) > 50);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      if (!before.at(x, y)) CHECK(soft.at(x, y, 0) == 50);

  // Constant cutout on a constant background: zero guidance reproduces the background.
  BlendStats stats;
  RasterImage pois = blend_composite(scene, BlendMode::Poisson, p, &stats);
  CHECK(stats.poisson_fallbacks == 0);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) CHECK(pois.at(x, y, 1) == 50);
  CHECK(scene.instances()[0].mask == before);
}

TEST_CASE("poisson blend keeps cutout gradients") {
  CompositeScene scene(RasterImage(30, 30, 1, 100));
  PastedLayer l = square_layer(8, 8, 12, 0, 1);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) l.pixels.at(x, y, 0) = static_cast<std::uint8_t>(20 + 4 * x);
  scene.paste(1, l);
  RasterImage out = blend_composite(scene, BlendMode::Poisson, PasteParams{});
  // Equal Dirichlet sides absorb part of the ramp; its direction survives.
  for (int x = 9; x < 19; ++x) CHECK(out.at(x + 1, 14, 0) >= out.at(x, 14, 0));
  CHECK(out.at(18, 14, 0) > out.at(9, 14, 0));
  CHECK(out.at(0, 0, 0) == 100);
}

TEST_CASE("paste params validation") {
  PasteParams p;
  p.max_rotation_deg = 360;
  CHECK_THROWS_AS_CODE(p.validate(), ErrorCode::InvalidArgument);
  p = PasteParams{};
  p.scale_low = 0;
  CHECK_THROWS_AS_CODE(p.validate(), ErrorCode::InvalidArgument);
  p = PasteParams{};
  p.n_p = -1;
  CHECK_THROWS_AS_CODE(p.validate(), ErrorCode::InvalidArgument);
}

TEST_CASE("space-maximize on an empty square fills its inscribed circle") {
  std::vector<ForegroundCutout> pool{disc_cutout(1, 15, 200)};
  auto dist = make_selection_distribution(pool, SelectionMode::Uniform);
  PasteParams p;
  p.n_p = 1;
  p.max_rotation_deg = 0.0;
  Rng rng(67);
  CompositeScene s = space_maximize_paste_scene(CompositeScene(RasterImage(200, 200, 3, 0)), pool, dist, p, rng);
  REQUIRE(s.instances().size() == 1);
  const Circle c = min_enclosing_circle(s.instances()[0].mask);
  CHECK(std::abs(c.radius - 100.0) <= 1.0);
  CHECK(std::abs(c.center.x - 99.5) <= 1.0);
  CHECK(std::abs(c.center.y - 99.5) <= 1.0);
}
