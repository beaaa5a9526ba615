#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "e2vts/image.hpp"
#include "e2vts/metrics.hpp"
#include "support/oracles.hpp"

using namespace e2vts;
using namespace e2vts::metrics;

namespace {

std::string random_word(std::mt19937_64& rng, int max_len) {
  static const std::vector<std::string> alphabet = {"a", "b", "c", "d", "é", "ß", "中", "😀"};
  std::uniform_int_distribution<int> len(0, max_len), pick(0, static_cast<int>(alphabet.size()) - 1);
  std::string s;
  for (int i = 0, n = len(rng); i < n; ++i) s += alphabet[static_cast<std::size_t>(pick(rng))];
  return s;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("overlap examples") {
  const Quad unit = rect_quad(0, 0, 1, 1);
  const Overlap same = polygon_overlap(unit, unit);
  CHECK(same.iou == doctest::Approx(1.0));
  CHECK(same.iop == doctest::Approx(1.0));
  CHECK(same.iog == doctest::Approx(1.0));
  const Overlap apart = polygon_overlap(unit, rect_quad(5, 5, 1, 1));
  CHECK(apart.iou == 0.0);
  CHECK(apart.iop == 0.0);
  CHECK(apart.iog == 0.0);
  const Overlap half = polygon_overlap(unit, rect_quad(0.5, 0, 1, 1));
  CHECK(half.iou == 1.0 / 3.0);
  CHECK(half.iop == 0.5);
  CHECK(half.iog == 0.5);
}

TEST_CASE("overlap rejects non-convex and degenerate quads") {
  const Quad unit = rect_quad(0, 0, 1, 1);
  CHECK_THROWS_AS(polygon_overlap(make_quad(0, 0, 1, 1, 1, 0, 0, 1), unit), InvalidArgument);
  CHECK_THROWS_AS(polygon_overlap(unit, make_quad(0, 0, 1, 0, 0.2, 0.2, 0, 1)), InvalidArgument);
  CHECK_THROWS_AS(polygon_overlap(unit, make_quad(0, 0, 1, 0, 2, 0, 3, 0)), InvalidArgument);
}

TEST_CASE("overlap agrees with rasterization and orders its measures") {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 50; ++trial) {
    const Quad p = oracle::random_convex_quad(rng), g = oracle::random_convex_quad(rng);
    const Overlap o = polygon_overlap(p, g);
    const Overlap r = oracle::raster_overlap(p, g, 400);
    CHECK(std::abs(o.iou - r.iou) < 5e-3);
    CHECK(std::abs(o.iop - r.iop) < 5e-3);
    CHECK(std::abs(o.iog - r.iog) < 5e-3);
    CHECK(o.iou <= o.iop + 1e-15);
    CHECK(o.iou <= o.iog + 1e-15);
    for (double v : {o.iou, o.iop, o.iog}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("edit distance examples") {
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("abc", "abc") == 0);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("café", "cafe") == 1);
  CHECK(edit_distance("😀", "") == 1);
  CHECK(decode_utf8("\xff" "a") == U"�a");
}

TEST_CASE("edit distance equals the table oracle and is a metric") {
  std::mt19937_64 rng(82);
  for (int trial = 0; trial < 300; ++trial) {
    const std::string a = random_word(rng, 12), b = random_word(rng, 12), c = random_word(rng, 12);
    const int ab = edit_distance(a, b);
    CHECK(ab == oracle::edit_distance(decode_utf8(a), decode_utf8(b)));
    CHECK(ab == edit_distance(b, a));
    CHECK(ab <= edit_distance(a, c) + edit_distance(c, b));
    CHECK((ab == 0) == (a == b));
  }
}

TEST_CASE("scoring examples") {
  const std::vector<GroundTruth> gts = {{rect_quad(0, 0, 10, 10), "EXIT"}, {rect_quad(50, 50, 10, 4), "NO"}};
  std::vector<Prediction> same;
  for (const auto& g : gts) same.push_back({g.quad, g.text});
  const EvalReport perfect = match_and_score(same, gts);
  CHECK(perfect.mean_iou == doctest::Approx(1.0));
  CHECK(perfect.mean_edit_distance == 0.0);

  const EvalReport none = match_and_score({}, gts);
  CHECK(none.mean_iou == 0.0);
  CHECK(none.mean_iop == 0.0);
  CHECK(none.mean_edit_distance == 3.0);
  CHECK_FALSE(none.per_gt[0].matched_prediction);

  const std::vector<Prediction> two = {{rect_quad(5, 0, 10, 10), "EX"}, {rect_quad(1, 1, 10, 10), "EXT"}};
  const EvalReport pick = match_and_score(two, {gts[0]});
  REQUIRE(pick.per_gt[0].matched_prediction);
  CHECK(*pick.per_gt[0].matched_prediction == 1);
  CHECK(pick.per_gt[0].edit_distance == 1);

  const std::vector<Prediction> tied = {{rect_quad(2, 0, 10, 10), "A"}, {rect_quad(-2, 0, 10, 10), "B"}};
  CHECK(*match_and_score(tied, {gts[0]}).per_gt[0].matched_prediction == 0);
}

TEST_CASE("a bad prediction is reported without stopping the evaluation") {
  const std::vector<Prediction> preds = {{make_quad(0, 0, 10, 10, 10, 0, 0, 10), "X"}, {rect_quad(0, 0, 10, 10), "X"}};
  const EvalReport r = match_and_score(preds, {{rect_quad(0, 0, 10, 10), "X"}});
  CHECK(*r.per_gt[0].matched_prediction == 1);
  CHECK_FALSE(r.per_gt[0].error.empty());
  CHECK(to_json(r)["per_gt"][0].contains("error"));
}

TEST_CASE("scores do not depend on prediction order") {
  std::mt19937_64 rng(83);
  std::uniform_real_distribution<double> pos(0, 100), size(5, 30);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Prediction> preds;
    std::vector<GroundTruth> gts;
    for (int i = 0; i < 6; ++i) preds.push_back({rect_quad(pos(rng), pos(rng), size(rng), size(rng)), random_word(rng, 5)});
    for (int i = 0; i < 4; ++i) gts.push_back({rect_quad(pos(rng), pos(rng), size(rng), size(rng)), random_word(rng, 5)});
    std::vector<int> perm(preds.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Prediction> shuffled;
    for (int k : perm) shuffled.push_back(preds[static_cast<std::size_t>(k)]);
    const EvalReport a = match_and_score(preds, gts);
    const EvalReport b = match_and_score(shuffled, gts);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      CHECK(a.per_gt[g].overlap.iou == b.per_gt[g].overlap.iou);
      CHECK(a.per_gt[g].edit_distance == b.per_gt[g].edit_distance);
      if (a.per_gt[g].matched_prediction)
        CHECK(perm[static_cast<std::size_t>(*b.per_gt[g].matched_prediction)] == *a.per_gt[g].matched_prediction);
    }
    CHECK(a.mean_iou == b.mean_iou);
  }
}

TEST_CASE("documents are scored frame by frame") {
  AnnotationDocument gt, pred;
  Annotation a;
  a.quad = rect_quad(0, 0, 20, 10);
  a.label = "STOP";
  gt.upsert(3).annotations.push_back(a);
  Annotation old = a;
  old.stale = true;
  gt.upsert(4).annotations.push_back(old);
  Annotation p = a;
  p.label.reset();
  p.transcription = "ST0P";
  pred.upsert(3).annotations.push_back(p);
  const EvalReport r = evaluate_documents(pred, gt);
  REQUIRE(r.per_gt.size() == 1);
  CHECK(r.per_gt[0].frame_index == 3);
  CHECK(r.mean_iou == doctest::Approx(1.0));
  CHECK(r.mean_edit_distance == 1.0);

  pred.frames[0].annotations[0].transcription.reset();
  pred.frames[0].annotations[0].label = "STOP";
  CHECK(evaluate_documents(pred, gt).mean_edit_distance == 0.0);
  CHECK(evaluate_documents(AnnotationDocument{}, gt).mean_edit_distance == 4.0);
  const auto j = to_json(r);
  CHECK(j["version"] == 1);
  CHECK(j["count"] == 1);
}

}  // TEST_SUITE
