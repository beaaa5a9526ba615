#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "e2vts/textregion.hpp"

namespace e2vts::ood {

using FeatureVector = Eigen::VectorXd;

enum class OodLabel { Reject = -1, Accept = 1 };

/// Maps a frame to a fixed-length feature vector.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int dimension() const = 0;
  virtual FeatureVector extract(const Frame& frame) const = 0;
};

/// Per-cell edge density of the closed YUV edge map on a grid x grid layout.
class EdgeDensityGrid : public FeatureExtractor {
 public:
  explicit EdgeDensityGrid(textregion::ScreenConfig screen = {}, int grid = 8)
      : screen_(screen), grid_(grid) {}

  std::string id() const override { return "edge-density-grid-" + std::to_string(grid_) + "x" + std::to_string(grid_); }
  int dimension() const override { return grid_ * grid_; }
  FeatureVector extract(const Frame& frame) const override;
  /// Same features from an already computed closed edge map.
  FeatureVector from_edge_map(const BinaryImage& closed) const;

 private:
  textregion::ScreenConfig screen_;
  int grid_;
};

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id, const textregion::ScreenConfig& screen = {});

inline FeatureVector extract_features(const Frame& frame) { return EdgeDensityGrid{}.extract(frame); }

struct TrainOptions {
  double reg = 1e-4;
  int epochs = 100;
  std::uint64_t seed = 0;
};

struct SvmModel {
  std::string extractor_id;
  Eigen::VectorXd means;
  Eigen::VectorXd stds;
  Eigen::VectorXd weights;
  double bias = 0.0;
  std::uint64_t seed = 0;
  double reg = 1e-4;
  int epochs = 100;

  int dimension() const { return static_cast<int>(weights.size()); }
  /// w . z + b on standardized features.
  double decision_value(const FeatureVector& x) const;
};

/// Regularized hinge objective, (reg/2)|w|^2 + mean(max(0, 1 - y (w.z + b))), on raw samples.
double objective(const SvmModel& model, std::span<const FeatureVector> samples, std::span<const int> labels);

struct TrainReport {
  /// Objective of the kept iterate after each epoch.
  std::vector<double> epoch_objectives;
  double final_objective = 0.0;
  double zero_objective = 0.0;
};

/// Pegasos subgradient descent on z-scored features. Each epoch average is
/// kept only if it does not raise the objective. Labels are +1 / -1.
SvmModel svm_train(std::span<const FeatureVector> samples, std::span<const int> labels, const TrainOptions& opt,
                   TrainReport* report = nullptr);

/// Non-negative decision value counts as Accept.
OodLabel svm_predict(const SvmModel& model, const FeatureVector& features);

std::string model_to_json(const SvmModel& model);
SvmModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const SvmModel& model);
SvmModel load_model(const std::filesystem::path& path);

}  // namespace e2vts::ood
