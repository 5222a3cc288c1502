#include <gtest/gtest.h>

#include <fstream>

#include "mfd/mfd.hpp"
#include "support/paths.hpp"

namespace mfd {
namespace {

constexpr auto C = MaskClass::CorrectMask;
constexpr auto I = MaskClass::IncorrectMask;
constexpr auto W = MaskClass::WithoutMask;

ConfusionMatrix hand_matrix() { return confusion_matrix({C, C, I, W, W, W}, {C, I, I, W, W, C}); }

TEST(ConfusionMatrixTest, CountsTruthRowsAndPredictedColumns) {
  const auto cm = hand_matrix();
  EXPECT_EQ(cm.counts, (std::vector<std::vector<std::size_t>>{{1, 1, 0}, {0, 1, 0}, {1, 0, 2}}));
  EXPECT_EQ(cm.total(), 6u);
  EXPECT_EQ(cm.trace(), 4u);
  EXPECT_DOUBLE_EQ(cm.accuracy(), 4.0 / 6.0);
  EXPECT_THROW(confusion_matrix({}, {}), ValidationError);
  EXPECT_THROW(confusion_matrix({C}, {C, I}), ValidationError);
  EXPECT_THROW(ConfusionMatrix().accuracy(), ValidationError);
  EXPECT_THROW(ConfusionMatrix({"a", "b"}, {{1, 2}}), ShapeError);
}

TEST(ClassificationReport, HandComputedValues) {
  const auto r = classification_report(hand_matrix());
  const double p[3] = {0.5, 0.5, 1.0}, rc[3] = {0.5, 1.0, 2.0 / 3.0};
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(r.classes[k].precision, p[k]);
    EXPECT_DOUBLE_EQ(r.classes[k].recall, rc[k]);
    EXPECT_DOUBLE_EQ(r.classes[k].f1, 2 * p[k] * rc[k] / (p[k] + rc[k]));
  }
  EXPECT_EQ(r.classes[2].support, 3u);
  EXPECT_DOUBLE_EQ(r.macro.recall, (0.5 + 1.0 + 2.0 / 3.0) / 3);
  EXPECT_DOUBLE_EQ(r.weighted.precision, (2 * 0.5 + 1 * 0.5 + 3 * 1.0) / 6);
  EXPECT_FALSE(r.zero_division);
}

TEST(ClassificationReport, PerfectDiagonal) {
  const ConfusionMatrix cm(ConfusionMatrix::default_labels(), {{100, 0, 0}, {0, 96, 0}, {0, 0, 97}});
  const auto r = classification_report(cm);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.total_support, 293u);
  for (const auto& c : r.classes) {
    EXPECT_EQ(c.precision, 1.0);
    EXPECT_EQ(c.recall, 1.0);
    EXPECT_EQ(c.f1, 1.0);
  }
}

TEST(ClassificationReport, ZeroDivisionIsFlaggedAndReportedAsZero) {
  const ConfusionMatrix cm(ConfusionMatrix::default_labels(), {{3, 0, 0}, {1, 0, 0}, {0, 0, 0}});
  const auto r = classification_report(cm);
  EXPECT_TRUE(r.zero_division);
  EXPECT_TRUE(r.classes[1].precision_undefined);
  EXPECT_TRUE(r.classes[2].recall_undefined);
  EXPECT_EQ(r.classes[1].precision, 0.0);
  EXPECT_EQ(r.classes[2].f1, 0.0);
  EXPECT_THROW(classification_report(ConfusionMatrix()), ValidationError);
}

TEST(RenderReport, GoldenText) {
  const std::string expected =
      "                precision    recall  f1-score   support\n"
      "\n"
      "  correct_mask       0.50      0.50      0.50         2\n"
      "incorrect_mask       0.50      1.00      0.67         1\n"
      "  without_mask       1.00      0.67      0.80         3\n"
      "\n"
      "      accuracy                           0.67         6\n"
      "     macro avg       0.67      0.72      0.66         6\n"
      "  weighted avg       0.75      0.67      0.68         6\n";
  EXPECT_EQ(render_report(classification_report(hand_matrix())), expected);
}

TEST(ReportJson, CarriesMatrixAndScores) {
  const auto cm = hand_matrix();
  const auto j = report_json(cm, classification_report(cm));
  EXPECT_EQ(j["confusion_matrix"][2][0], 1);
  EXPECT_DOUBLE_EQ(j["classes"]["without_mask"]["recall"].get<double>(), 2.0 / 3.0);
  EXPECT_EQ(j["total_support"], 6);
}

ConfusionMatrix random_matrix(Rng& rng) {
  ConfusionMatrix cm;
  for (auto& row : cm.counts)
    for (auto& v : row) v = rng.below(20);
  cm.counts[0][0] += 1;
  return cm;
}

TEST(ReportProperties, WeightedRecallEqualsAccuracy) {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto r = classification_report(random_matrix(rng));
    EXPECT_NEAR(r.weighted.recall, r.accuracy, 1e-12);
  }
}

TEST(ReportProperties, RelabelingPermutesPerClassScores) {
  Rng rng(10);
  const std::vector<std::size_t> perm{2, 0, 1};
  for (int i = 0; i < 100; ++i) {
    const auto cm = random_matrix(rng);
    const auto a = classification_report(cm);
    const auto b = classification_report(cm.permuted(perm));
    EXPECT_DOUBLE_EQ(a.accuracy, b.accuracy);
    EXPECT_NEAR(a.macro.f1, b.macro.f1, 1e-12);
    EXPECT_NEAR(a.weighted.precision, b.weighted.precision, 1e-12);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(b.classes[k].label, a.classes[perm[k]].label);
      EXPECT_DOUBLE_EQ(b.classes[k].f1, a.classes[perm[k]].f1);
    }
  }
}

TEST(ReportProperties, ScoresStayInUnitInterval) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i)
    for (const auto& c : classification_report(random_matrix(rng)).classes) {
      EXPECT_GE(c.f1, 0.0);
      EXPECT_LE(c.f1, 1.0);
      EXPECT_LE(c.f1, std::max(c.precision, c.recall) + 1e-12);
      EXPECT_GE(c.f1, std::min(c.precision, c.recall) - 1e-12);
    }
}

DetectionBox box(int x, int y, int s, MaskClass c) { return {x, y, s, s, c, {}}; }

TEST(ScoreImage, GreedyOneToOneMatching) {
  const std::vector<DetectionBox> truth{box(0, 0, 10, C), box(50, 0, 10, W)};
  // A duplicate detection of the first face counts as a false positive.
  const auto o = score_image(truth, {box(1, 0, 10, C), box(0, 0, 10, C), box(50, 1, 10, I)});
  EXPECT_EQ(o.faces, 2u);
  EXPECT_EQ(o.correct, 1u);
  EXPECT_EQ(o.false_positives, 1u);
  EXPECT_FALSE(o.all_correct());
  // IoU of (0,0,10) and (5,0,10) is 1/3: no match.
  EXPECT_EQ(score_image({box(0, 0, 10, C)}, {box(5, 0, 10, C)}).correct, 0u);
  EXPECT_TRUE(score_image({}, {}).all_correct());
}

TEST(ReadAnnotations, ParsesAndValidates) {
  const auto dir = testing::scratch_dir("ann");
  std::ofstream(dir / "ok.csv") << "frame_id,x,y,w,h,label\r\nimg1.png,1,2,3,4,incorrect_mask\r\n\nimg2,5,6,7,8,without_mask\n";
  const auto a = read_annotations(dir / "ok.csv");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].frame_id, "img1.png");
  EXPECT_EQ(a[0].box, (DetectionBox{1, 2, 3, 4, I, {}}));
  EXPECT_EQ(a[1].box.label, W);
  std::ofstream(dir / "label.csv") << "a,1,2,3,4,hat\n";
  std::ofstream(dir / "cols.csv") << "a,1,2,3\n";
  std::ofstream(dir / "num.csv") << "a,1,x,3,4,hat\n";
  EXPECT_THROW(read_annotations(dir / "label.csv"), FormatError);
  EXPECT_THROW(read_annotations(dir / "cols.csv"), FormatError);
  EXPECT_THROW(read_annotations(dir / "num.csv"), FormatError);
  EXPECT_THROW(read_annotations(dir / "missing.csv"), IoError);
}

// Each image is a flat color whose red channel encodes the predicted label.
TEST(EvaluateConditions, AggregatesPerLightingAndGroup) {
  const auto root = testing::scratch_dir("conditions");
  auto write = [&](const fs::path& dir, const std::string& name, double red) {
    fs::create_directories(dir);
    write_image(dir / name, Image(20, 40, 3, PixelDomain::raw, red));
  };
  write(root / "dim" / "single", "a.png", 0);
  write(root / "dim" / "single", "b.png", 2);
  std::ofstream(root / "dim" / "single" / "annotations.csv")
      << "frame_id,x,y,w,h,label\na.png,0,0,10,10,correct_mask\nb,0,0,10,10,correct_mask\n";
  write(root / "dim" / "multiple", "m.png", 0);
  std::ofstream(root / "dim" / "multiple" / "annotations.csv")
      << "m.png,0,0,10,10,correct_mask\nm.png,20,0,10,10,without_mask\n";
  write(root / "bright" / "single", "c.png", 1);
  std::ofstream(root / "bright" / "single" / "annotations.csv") << "c.png,0,0,10,10,incorrect_mask\n";

  const FacePredictor predictor = [](const Image& img) {
    const auto c = class_from_ordinal(static_cast<std::size_t>(img.at(0, 0, 0)));
    return std::vector<DetectionBox>{box(0, 0, 10, c), box(20, 0, 10, c)};
  };
  const auto rep = evaluate_conditions(root, predictor);
  const auto& dim_single = rep.cells.at("dim").at("single");
  EXPECT_EQ(dim_single.images, 2u);
  EXPECT_EQ(dim_single.correct_faces, 1u);
  EXPECT_EQ(dim_single.false_positives, 2u);
  const auto& dim_multi = rep.cells.at("dim").at("multiple");
  EXPECT_EQ(dim_multi.faces, 2u);
  EXPECT_DOUBLE_EQ(dim_multi.face_accuracy(), 0.5);
  EXPECT_DOUBLE_EQ(dim_multi.image_accuracy(), 0.0);
  EXPECT_DOUBLE_EQ(rep.cells.at("bright").at("single").face_accuracy(), 1.0);
  EXPECT_FALSE(rep.cells.at("bright").contains("multiple"));

  const auto text = render_condition_report(rep);
  EXPECT_NE(text.find("Multiple/image"), std::string::npos);
  EXPECT_NE(text.find("50.0%"), std::string::npos);
  EXPECT_EQ(condition_report_json(rep)["dim"]["multiple"]["correct_faces"], 1);

  fs::remove(root / "bright" / "single" / "annotations.csv");
  EXPECT_THROW(evaluate_conditions(root, predictor), LayoutError);
  EXPECT_THROW(evaluate_conditions(root / "nope", predictor), LayoutError);
}

}  // namespace
}  // namespace mfd
