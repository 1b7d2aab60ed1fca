#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwl/demos/dataset.hpp"
#include "rwl/numerics/layers.hpp"
#include "rwl/render/render.hpp"

namespace rwl::clf {

enum class ArchKind { CNN, TCNN };
std::string to_string(ArchKind k);
ArchKind parse_arch(const std::string& s);

struct Architecture {
  ArchKind kind = ArchKind::TCNN;
  int resolution = render::kDefaultResolution;
  std::vector<std::size_t> block_channels = {8, 16, 32, 32, 64, 64};
  std::size_t final_channels = 64;
  std::size_t head_hidden = 32;
};

// Image symmetries under which the success label is invariant. Training
// draws one per sample.
enum class Symmetry { None, MirrorX, Dihedral };
std::string to_string(Symmetry s);
Symmetry parse_symmetry(const std::string& s);
// Exact symmetries of each task's rendering: the pendulum and the pusher
// table mirror left to right; the reacher arena is symmetric under all eight
// rotations and reflections of the square.
Symmetry default_symmetry(envs::TaskId task);
// g in [0, 8): bit 0 mirrors x, bit 1 mirrors y, bit 2 transposes (applied last).
render::Image apply_symmetry(const render::Image& img, int g);

struct TrainHyper {
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-3;
  double timing_weight = 1.0;  // lambda on the timing MSE
  bool balanced = true;        // half positives, half negatives per batch
  std::optional<Symmetry> symmetry;  // defaults to the task's
  std::uint64_t seed = 0;
};

struct TrainingMeta {
  int epochs = 0;
  std::uint64_t seed = 0;
  // [0] is the balanced full-set loss at initialisation; [e] is the mean
  // minibatch loss of epoch e.
  std::vector<double> loss_curve;
  std::string symmetry = "none";
};

struct Prediction {
  double p_success = 0.0;
  std::optional<double> timing;
};

class ClassifierError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ClassifierModel {
 public:
  struct Output {
    num::Var p;       // [N, 1]
    num::Var timing;  // [N, 1], empty for CNN
  };

  ClassifierModel() = default;
  // Uniform fan-in initialisation. Backbone, class head, then timing head
  // are drawn in that order, so a CNN and a T-CNN built from one seed share
  // every common parameter.
  static ClassifierModel build(const Architecture& arch, std::uint64_t seed);

  const Architecture& arch() const { return arch_; }
  const TrainingMeta& meta() const { return meta_; }
  TrainingMeta& meta() { return meta_; }
  std::uint64_t seed() const { return seed_; }

  // x: [N, 3, R, R] already normalised.
  Output forward(const num::Var& x) const;
  Prediction predict(const render::Image& img) const;
  std::vector<Prediction> predict_batch(std::span<const render::Image* const> images) const;

  std::vector<num::Var> parameters() const;
  std::vector<num::Var> backbone_parameters() const;
  std::vector<num::Var> class_head_parameters() const;
  std::vector<num::Var> timing_head_parameters() const;

 private:
  Architecture arch_;
  std::uint64_t seed_ = 0;
  std::vector<num::Conv2d> blocks_;
  std::vector<bool> pool_after_;
  num::Conv2d final_;
  num::Linear class_hidden_, class_out_;
  num::Linear timing_hidden_, timing_out_;
  TrainingMeta meta_;
};

// Pixel bytes to x / 255 - 0.5, channel-planar.
num::Tensor images_to_tensor(std::span<const render::Image* const> images);

// Optional per-step hooks, used by tests.
struct TrainObserver {
  virtual ~TrainObserver() = default;
  virtual void after_step(int /*epoch*/, int /*step*/, const ClassifierModel& /*model*/) {}
  // Gradients are populated, parameters not yet updated.
  virtual void after_backward(int /*epoch*/, int /*step*/, const ClassifierModel& /*model*/) {}
};

// BCE (class) for CNN; BCE + lambda * MSE (timing) for T-CNN. Refuses a
// training set without both classes.
ClassifierModel train(ClassifierModel model, const demos::DemoSet& trainset, const TrainHyper& hyper,
                      TrainObserver* observer = nullptr);

struct ClassifierMetrics {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, auc = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

class UndefinedMetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Probability that a random positive outranks a random negative, ties 1/2.
double auc(std::span<const double> scores, std::span<const int> labels);
// Threshold 0.5 (p >= 0.5 is positive) for the confusion-based metrics.
ClassifierMetrics metrics_from_scores(std::span<const double> scores, std::span<const int> labels);
ClassifierMetrics evaluate(const ClassifierModel& model, const demos::DemoSet& testset);

std::string metrics_csv_header();
std::string metrics_csv_row(envs::TaskId task, ArchKind arch, std::uint64_t seed, const ClassifierMetrics& m);

// Parameters go to `path` (RWLB container); architecture and training
// metadata to `path` + ".json".
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace rwl::clf
