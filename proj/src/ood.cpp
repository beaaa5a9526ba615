#include "e2vts/ood.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace e2vts::ood {

using json = nlohmann::json;

FeatureVector EdgeDensityGrid::from_edge_map(const BinaryImage& closed) const {
  const auto h = closed.rows();
  const auto w = closed.cols();
  FeatureVector f = FeatureVector::Zero(dimension());
  for (int gy = 0; gy < grid_; ++gy) {
    const Eigen::Index y0 = gy * h / grid_, y1 = (gy + 1) * h / grid_;
    for (int gx = 0; gx < grid_; ++gx) {
      const Eigen::Index x0 = gx * w / grid_, x1 = (gx + 1) * w / grid_;
      const Eigen::Index area = (y1 - y0) * (x1 - x0);
      if (area == 0) continue;
      const double ones = closed.block(y0, x0, y1 - y0, x1 - x0).cast<double>().sum();
      f[gy * grid_ + gx] = ones / static_cast<double>(area);
    }
  }
  return f;
}

FeatureVector EdgeDensityGrid::extract(const Frame& frame) const {
  BinaryImage edges = frame.channels == 3 ? textregion::edge_map_yuv(frame, screen_)
                                          : canny(to_grayscale(frame), screen_.canny_low, screen_.canny_high);
  return from_edge_map(morph_close(edges, screen_.close_w, screen_.close_h));
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id, const textregion::ScreenConfig& screen) {
  for (int g = 1; g <= 32; ++g) {
    auto e = std::make_unique<EdgeDensityGrid>(screen, g);
    if (e->id() == id) return e;
  }
  throw InvalidArgument("unknown feature extractor: " + id);
}

double SvmModel::decision_value(const FeatureVector& x) const {
  if (x.size() != weights.size()) throw InvalidArgument("svm: feature dimension does not match model");
  const Eigen::VectorXd z = (x - means).cwiseQuotient(stds);
  return weights.dot(z) + bias;
}

double objective(const SvmModel& model, std::span<const FeatureVector> samples, std::span<const int> labels) {
  double loss = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    loss += std::max(0.0, 1.0 - labels[i] * model.decision_value(samples[i]));
  const double wn = model.weights.squaredNorm() + model.bias * model.bias;
  return 0.5 * model.reg * wn + loss / static_cast<double>(samples.size());
}

namespace {

// Objective over standardized, bias-augmented samples for an augmented weight vector.
double augmented_objective(const Eigen::VectorXd& w, const std::vector<Eigen::VectorXd>& z, std::span<const int> y,
                           double reg) {
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) loss += std::max(0.0, 1.0 - y[i] * w.dot(z[i]));
  return 0.5 * reg * w.squaredNorm() + loss / static_cast<double>(z.size());
}

}  // namespace

SvmModel svm_train(std::span<const FeatureVector> samples, std::span<const int> labels, const TrainOptions& opt,
                   TrainReport* report) {
  if (samples.empty() || samples.size() != labels.size()) throw InvalidArgument("svm_train: samples and labels differ in length");
  if (opt.reg <= 0.0 || opt.epochs < 1) throw InvalidArgument("svm_train: reg must be > 0 and epochs >= 1");
  const Eigen::Index d = samples.front().size();
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != d) throw InvalidArgument("svm_train: inconsistent feature dimension");
    if (!samples[i].allFinite()) throw InvalidArgument("svm_train: non-finite feature");
    if (labels[i] == 1)
      has_pos = true;
    else if (labels[i] == -1)
      has_neg = true;
    else
      throw InvalidArgument("svm_train: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw InvalidArgument("svm_train: both classes are required");

  const auto n = static_cast<double>(samples.size());
  SvmModel model;
  model.reg = opt.reg;
  model.epochs = opt.epochs;
  model.seed = opt.seed;
  model.means = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) model.means += s;
  model.means /= n;
  model.stds = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) model.stds += (s - model.means).cwiseAbs2();
  model.stds = (model.stds / n).cwiseSqrt().cwiseMax(1e-8);

  // Standardized samples with a trailing constant 1 for the bias.
  std::vector<Eigen::VectorXd> z;
  z.reserve(samples.size());
  for (const auto& s : samples) {
    Eigen::VectorXd v(d + 1);
    v.head(d) = (s - model.means).cwiseQuotient(model.stds);
    v[d] = 1.0;
    z.push_back(std::move(v));
  }

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd epoch_sum(d + 1);
  Eigen::VectorXd averaged = w;
  double best_obj = 0.0;
  const double radius = 1.0 / std::sqrt(opt.reg);
  std::uint64_t t = 0;
  if (report) report->epoch_objectives.clear();

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    epoch_sum.setZero();
    for (std::size_t k : order) {
      ++t;
      const double eta = 1.0 / (opt.reg * static_cast<double>(t));
      const double margin = labels[k] * w.dot(z[k]);
      w *= (1.0 - eta * opt.reg);
      if (margin < 1.0) w += (eta * labels[k]) * z[k];
      const double norm = w.norm();
      if (norm > radius) w *= radius / norm;
      epoch_sum += w;
    }
    // Pocket rule: an epoch average replaces the kept iterate only if it does not raise the objective.
    const Eigen::VectorXd candidate = epoch_sum / static_cast<double>(order.size());
    const double obj = augmented_objective(candidate, z, labels, opt.reg);
    if (epoch == 0 || obj <= best_obj) {
      averaged = candidate;
      best_obj = obj;
    }
    if (report) report->epoch_objectives.push_back(best_obj);
  }

  const double zero_obj = 1.0;
  double final_obj = best_obj;
  if (final_obj > zero_obj) {
    averaged.setZero();
    final_obj = zero_obj;
  }
  model.weights = averaged.head(d);
  model.bias = averaged[d];
  if (report) {
    report->final_objective = final_obj;
    report->zero_objective = zero_obj;
  }
  return model;
}

OodLabel svm_predict(const SvmModel& model, const FeatureVector& features) {
  return model.decision_value(features) >= 0.0 ? OodLabel::Accept : OodLabel::Reject;
}

namespace {

json to_array(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd from_array(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

std::string model_to_json(const SvmModel& model) {
  json j;
  j["format"] = "e2vts-ood-svm";
  j["version"] = 1;
  j["extractor"] = model.extractor_id;
  j["dimension"] = model.dimension();
  j["means"] = to_array(model.means);
  j["stds"] = to_array(model.stds);
  j["weights"] = to_array(model.weights);
  j["bias"] = model.bias;
  j["seed"] = model.seed;
  j["reg"] = model.reg;
  j["epochs"] = model.epochs;
  return j.dump(2);
}

SvmModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("ood model: ") + e.what());
  }
  if (j.value("format", "") != "e2vts-ood-svm" || j.value("version", 0) != 1)
    throw InvalidArgument("ood model: unsupported format or version");
  SvmModel m;
  m.extractor_id = j.at("extractor").get<std::string>();
  m.means = from_array(j.at("means"));
  m.stds = from_array(j.at("stds"));
  m.weights = from_array(j.at("weights"));
  m.bias = j.at("bias").get<double>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.reg = j.value("reg", 1e-4);
  m.epochs = j.value("epochs", 100);
  const int d = j.at("dimension").get<int>();
  if (m.weights.size() != d || m.means.size() != d || m.stds.size() != d)
    throw InvalidArgument("ood model: dimension mismatch");
  if ((m.stds.array() <= 0.0).any()) throw InvalidArgument("ood model: standard deviations must be positive");
  return m;
}

void save_model(const std::filesystem::path& path, const SvmModel& model) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << model_to_json(model) << '\n';
}

SvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace e2vts::ood
