#include "rwl/classifier/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "rwl/numerics/checkpoint.hpp"
#include "rwl/numerics/optim.hpp"

namespace rwl::clf {
namespace {

using nlohmann::json;
using num::Shape;
using num::Tensor;
using num::Var;

const double kReluGain = std::sqrt(6.0);
constexpr std::size_t kInferenceChunk = 64;

void append(std::vector<Var>& dst, const std::vector<Var>& src) { dst.insert(dst.end(), src.begin(), src.end()); }

struct FlatSet {
  std::vector<const render::Image*> images;
  std::vector<int> y;
  std::vector<double> timing;
  std::vector<std::size_t> positives, negatives;
};

FlatSet flatten(const demos::DemoSet& set, bool need_timing) {
  FlatSet f;
  for (std::size_t e = 0; e < set.episodes.size(); ++e) {
    for (const auto& fr : set.episodes[e].frames) {
      if (!fr.y) {
        throw ClassifierError("frame " + std::to_string(fr.t) + " of episode " + std::to_string(e) +
                              " has no success label");
      }
      if (need_timing && !fr.timing) {
        throw ClassifierError("frame " + std::to_string(fr.t) + " of episode " + std::to_string(e) +
                              " has no timing label (required by T-CNN)");
      }
      (*fr.y ? f.positives : f.negatives).push_back(f.images.size());
      f.images.push_back(&fr.image);
      f.y.push_back(*fr.y);
      f.timing.push_back(fr.timing.value_or(0.0));
    }
  }
  return f;
}

Tensor column(const std::vector<double>& v, std::span<const std::size_t> idx) {
  Tensor t(Shape{idx.size(), 1});
  for (std::size_t i = 0; i < idx.size(); ++i) t[i] = v[idx[i]];
  return t;
}

}  // namespace

std::string to_string(ArchKind k) { return k == ArchKind::CNN ? "cnn" : "tcnn"; }

ArchKind parse_arch(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "cnn") return ArchKind::CNN;
  if (l == "tcnn" || l == "t-cnn") return ArchKind::TCNN;
  throw std::invalid_argument("unknown architecture '" + s + "' (expected cnn or tcnn)");
}

ClassifierModel ClassifierModel::build(const Architecture& arch, std::uint64_t seed) {
  if (!render::is_supported_resolution(arch.resolution)) {
    throw ClassifierError("unsupported classifier resolution " + std::to_string(arch.resolution) +
                          " (expected 64, 96 or 160)");
  }
  if (arch.block_channels.size() != 6) {
    throw ClassifierError("architecture needs six conv blocks, got " + std::to_string(arch.block_channels.size()));
  }
  ClassifierModel m;
  m.arch_ = arch;
  m.seed_ = seed;
  num::Rng rng(num::mix_seed(seed, 0x636c66));
  std::size_t in = 3;
  std::size_t extent = static_cast<std::size_t>(arch.resolution);
  for (std::size_t i = 0; i < arch.block_channels.size(); ++i) {
    m.blocks_.emplace_back(in, arch.block_channels[i], 3, 1, rng, "block" + std::to_string(i), kReluGain);
    // Pool only while the extent halves exactly.
    const bool pool = extent % 2 == 0 && extent >= 2;
    m.pool_after_.push_back(pool);
    if (pool) extent /= 2;
    in = arch.block_channels[i];
  }
  m.final_ = num::Conv2d(in, arch.final_channels, 1, 0, rng, "final", kReluGain);
  m.class_hidden_ = num::Linear(arch.final_channels, arch.head_hidden, rng, "class.hidden", kReluGain);
  m.class_out_ = num::Linear(arch.head_hidden, 1, rng, "class.out");
  if (arch.kind == ArchKind::TCNN) {
    m.timing_hidden_ = num::Linear(arch.final_channels, arch.head_hidden, rng, "timing.hidden", kReluGain);
    m.timing_out_ = num::Linear(arch.head_hidden, 1, rng, "timing.out");
  }
  return m;
}

ClassifierModel::Output ClassifierModel::forward(const Var& x) const {
  const Shape& s = x.shape();
  const auto res = static_cast<std::size_t>(arch_.resolution);
  if (s.size() != 4 || s[1] != 3 || s[2] != res || s[3] != res) {
    throw num::ShapeError("classifier expects input [N, 3, " + std::to_string(res) + ", " + std::to_string(res) +
                          "], got " + num::shape_str(s));
  }
  Var h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = num::relu(blocks_[i](h));
    if (pool_after_[i]) h = num::pool2d(h, num::PoolMode::Max, 2);
  }
  h = num::relu(final_(h));
  h = num::pool2d(h, num::PoolMode::GlobalAvg, 0);
  const Var feat = num::reshape(h, {s[0], arch_.final_channels});
  Output out;
  out.p = num::sigmoid(class_out_(num::relu(class_hidden_(feat))));
  if (arch_.kind == ArchKind::TCNN) out.timing = num::sigmoid(timing_out_(num::relu(timing_hidden_(feat))));
  return out;
}

std::vector<Prediction> ClassifierModel::predict_batch(std::span<const render::Image* const> images) const {
  for (const auto* img : images) {
    if (img->width != arch_.resolution || img->height != arch_.resolution) {
      throw ClassifierError("image resolution " + std::to_string(img->width) + "x" + std::to_string(img->height) +
                            " does not match the model's " + std::to_string(arch_.resolution));
    }
  }
  num::NoGradGuard no_grad;
  std::vector<Prediction> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kInferenceChunk) {
    const auto chunk = images.subspan(start, std::min(kInferenceChunk, images.size() - start));
    const Output o = forward(num::constant(images_to_tensor(chunk)));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      Prediction p;
      p.p_success = o.p.value()[i];
      if (o.timing) p.timing = o.timing.value()[i];
      out.push_back(p);
    }
  }
  return out;
}

Prediction ClassifierModel::predict(const render::Image& img) const {
  const render::Image* one[] = {&img};
  return predict_batch(one).front();
}

std::vector<Var> ClassifierModel::backbone_parameters() const {
  std::vector<Var> p;
  for (const auto& b : blocks_) append(p, b.parameters());
  append(p, final_.parameters());
  return p;
}

std::vector<Var> ClassifierModel::class_head_parameters() const {
  std::vector<Var> p = class_hidden_.parameters();
  append(p, class_out_.parameters());
  return p;
}

std::vector<Var> ClassifierModel::timing_head_parameters() const {
  if (arch_.kind != ArchKind::TCNN) return {};
  std::vector<Var> p = timing_hidden_.parameters();
  append(p, timing_out_.parameters());
  return p;
}

std::vector<Var> ClassifierModel::parameters() const {
  std::vector<Var> p = backbone_parameters();
  append(p, class_head_parameters());
  append(p, timing_head_parameters());
  return p;
}

std::string to_string(Symmetry s) {
  switch (s) {
    case Symmetry::None: return "none";
    case Symmetry::MirrorX: return "mirror-x";
    case Symmetry::Dihedral: return "dihedral";
  }
  return "?";
}

Symmetry parse_symmetry(const std::string& s) {
  if (s == "none") return Symmetry::None;
  if (s == "mirror-x") return Symmetry::MirrorX;
  if (s == "dihedral") return Symmetry::Dihedral;
  throw std::invalid_argument("unknown symmetry '" + s + "' (expected none, mirror-x or dihedral)");
}

Symmetry default_symmetry(envs::TaskId task) {
  switch (task) {
    case envs::TaskId::Pendulum:
    case envs::TaskId::Pusher: return Symmetry::MirrorX;
    case envs::TaskId::Reacher: return Symmetry::Dihedral;
    case envs::TaskId::FetchReach: return Symmetry::None;
  }
  return Symmetry::None;
}

render::Image apply_symmetry(const render::Image& img, int g) {
  if (g < 0 || g >= 8) throw std::invalid_argument("apply_symmetry: element must be in [0, 8)");
  if (g == 0) return img;
  if ((g & 4) && img.width != img.height) throw std::invalid_argument("apply_symmetry: transpose needs a square image");
  render::Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int sx = (g & 1) ? img.width - 1 - x : x;
      int sy = (g & 2) ? img.height - 1 - y : y;
      if (g & 4) std::swap(sx, sy);
      out.set(x, y, img.at(sx, sy));
    }
  }
  return out;
}

Tensor images_to_tensor(std::span<const render::Image* const> images) {
  if (images.empty()) throw num::ShapeError("images_to_tensor: empty batch");
  const auto w = static_cast<std::size_t>(images.front()->width);
  const auto h = static_cast<std::size_t>(images.front()->height);
  Tensor t(Shape{images.size(), 3, h, w});
  auto data = t.data();
  const std::size_t plane = h * w;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& px = images[n]->pixels;
    if (static_cast<std::size_t>(images[n]->width) != w || static_cast<std::size_t>(images[n]->height) != h) {
      throw num::ShapeError("images_to_tensor: mixed image sizes in one batch");
    }
    double* base = data.data() + n * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      for (std::size_t c = 0; c < 3; ++c) base[c * plane + i] = px[3 * i + c] / 255.0 - 0.5;
    }
  }
  return t;
}

ClassifierModel train(ClassifierModel model, const demos::DemoSet& trainset, const TrainHyper& hyper,
                      TrainObserver* observer) {
  const bool tcnn = model.arch().kind == ArchKind::TCNN;
  const FlatSet data = flatten(trainset, tcnn);
  if (data.positives.empty() || data.negatives.empty()) {
    throw ClassifierError("training set must contain both classes (positives " + std::to_string(data.positives.size()) +
                          ", negatives " + std::to_string(data.negatives.size()) + ")");
  }
  if (hyper.epochs < 0 || hyper.batch_size < 2) throw ClassifierError("invalid training hyperparameters");
  for (const auto* img : data.images) {
    if (img->width != model.arch().resolution) {
      throw ClassifierError("training image resolution " + std::to_string(img->width) + " does not match model " +
                            std::to_string(model.arch().resolution));
    }
  }
  const double lambda = tcnn ? hyper.timing_weight : 0.0;
  const std::vector<double> y(data.y.begin(), data.y.end());

  const Symmetry sym = hyper.symmetry.value_or(default_symmetry(trainset.task));
  const std::size_t group = sym == Symmetry::Dihedral ? 8 : sym == Symmetry::MirrorX ? 2 : 1;

  // `elements` is empty or parallel to `idx`.
  auto objective = [&](std::span<const std::size_t> idx, std::span<const int> elements = {}) {
    std::vector<render::Image> transformed;
    transformed.reserve(elements.size());
    std::vector<const render::Image*> imgs;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (elements.empty() || elements[k] == 0) {
        imgs.push_back(data.images[idx[k]]);
      } else {
        transformed.push_back(apply_symmetry(*data.images[idx[k]], elements[k]));
        imgs.push_back(&transformed.back());
      }
    }
    const auto out = model.forward(num::constant(images_to_tensor(imgs)));
    Var l = num::loss(out.p, column(y, idx), num::LossKind::BinaryCrossEntropy);
    if (tcnn) l = num::add(l, num::scale(num::loss(out.timing, column(data.timing, idx), num::LossKind::MeanSquaredError), lambda));
    return l;
  };

  // Balanced full-set objective at initialisation.
  {
    num::NoGradGuard no_grad;
    auto mean_over = [&](const std::vector<std::size_t>& idx) {
      double total = 0.0;
      for (std::size_t s = 0; s < idx.size(); s += kInferenceChunk) {
        const std::span<const std::size_t> chunk(idx.data() + s, std::min(kInferenceChunk, idx.size() - s));
        total += objective(chunk).item() * static_cast<double>(chunk.size());
      }
      return total / static_cast<double>(idx.size());
    };
    const double l0 = hyper.balanced ? 0.5 * (mean_over(data.positives) + mean_over(data.negatives))
                                     : [&] {
                                         std::vector<std::size_t> all(data.images.size());
                                         std::iota(all.begin(), all.end(), 0);
                                         return mean_over(all);
                                       }();
    model.meta().loss_curve = {l0};
  }

  num::Adam opt(model.parameters(), num::AdamConfig{hyper.lr});
  num::Rng rng(num::mix_seed(hyper.seed, 0x747261696e));
  const std::size_t n = data.images.size();
  const auto bs = static_cast<std::size_t>(hyper.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  int step = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    double total = 0.0;
    if (!hyper.balanced) rng.shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<std::size_t> idx;
      if (hyper.balanced) {
        const std::size_t half = bs / 2;
        for (std::size_t i = 0; i < half; ++i) idx.push_back(data.positives[rng.below(data.positives.size())]);
        for (std::size_t i = half; i < bs; ++i) idx.push_back(data.negatives[rng.below(data.negatives.size())]);
      } else {
        idx.assign(order.begin() + b * bs, order.begin() + std::min(n, (b + 1) * bs));
      }
      std::vector<int> elements;
      if (group > 1) {
        for (std::size_t i = 0; i < idx.size(); ++i) elements.push_back(static_cast<int>(rng.below(group)));
      }
      opt.zero_grad();
      const Var l = objective(idx, elements);
      if (!std::isfinite(l.item())) {
        throw num::NumericError("classifier training produced a non-finite loss at epoch " + std::to_string(epoch));
      }
      num::backward(l);
      if (observer) observer->after_backward(epoch, step, model);
      opt.step();
      if (observer) observer->after_step(epoch, step, model);
      total += l.item();
      ++step;
    }
    model.meta().loss_curve.push_back(total / static_cast<double>(steps_per_epoch));
  }
  model.meta().epochs = hyper.epochs;
  model.meta().seed = hyper.seed;
  model.meta().symmetry = to_string(sym);
  return model;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
    pos += l;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("auc: needs at least one positive and one negative");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks over tie groups; rank sum of positives gives the Mann-Whitney U.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) rank_sum += mid;
    }
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

ClassifierMetrics metrics_from_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw std::invalid_argument("metrics: empty test set");
  if (scores.size() != labels.size()) throw std::invalid_argument("metrics: scores and labels differ in length");
  ClassifierMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= 0.5;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++m.tp;
    if (pred && !pos) ++m.fp;
    if (!pred && pos) ++m.fn;
    if (!pred && !pos) ++m.tn;
  }
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  m.accuracy = d(m.tp + m.tn) / d(scores.size());
  m.precision = m.tp + m.fp ? d(m.tp) / d(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? d(m.tp) / d(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.auc = auc(scores, labels);
  return m;
}

ClassifierMetrics evaluate(const ClassifierModel& model, const demos::DemoSet& testset) {
  const FlatSet data = flatten(testset, false);
  if (data.images.empty()) throw std::invalid_argument("evaluate: empty test set");
  const auto preds = model.predict_batch(data.images);
  std::vector<double> scores;
  scores.reserve(preds.size());
  for (const auto& p : preds) scores.push_back(p.p_success);
  return metrics_from_scores(scores, data.y);
}

std::string metrics_csv_header() { return "task,arch,seed,acc,precision,recall,f1,auc"; }

std::string metrics_csv_row(envs::TaskId task, ArchKind arch, std::uint64_t seed, const ClassifierMetrics& m) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << envs::task_name(task) << ',' << to_string(arch) << ',' << seed << ',' << m.accuracy << ','
     << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.auc;
  return os.str();
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  const auto params = model.parameters();
  num::save_checkpoint(path, num::snapshot(params));
  const auto& a = model.arch();
  const json meta = {{"format", "rwl-classifier"},
                     {"version", 1},
                     {"kind", to_string(a.kind)},
                     {"resolution", a.resolution},
                     {"block_channels", a.block_channels},
                     {"final_channels", a.final_channels},
                     {"head_hidden", a.head_hidden},
                     {"seed", model.seed()},
                     {"training", {{"epochs", model.meta().epochs},
                                   {"seed", model.meta().seed},
                                   {"symmetry", model.meta().symmetry},
                                   {"loss_curve", model.meta().loss_curve}}}};
  std::ofstream f(path.string() + ".json", std::ios::trunc);
  if (!f) throw ClassifierError("cannot write " + path.string() + ".json");
  f << meta.dump(1) << '\n';
}

ClassifierModel load_model(const std::filesystem::path& path) {
  const std::string side = path.string() + ".json";
  std::ifstream f(side);
  if (!f) throw ClassifierError("cannot open classifier metadata " + side);
  json meta;
  Architecture a;
  std::uint64_t seed = 0;
  TrainingMeta tm;
  try {
    meta = json::parse(f);
    if (meta.at("format").get<std::string>() != "rwl-classifier" || meta.at("version").get<int>() != 1) {
      throw ClassifierError("unsupported classifier metadata in " + side);
    }
    a.kind = parse_arch(meta.at("kind").get<std::string>());
    a.resolution = meta.at("resolution").get<int>();
    a.block_channels = meta.at("block_channels").get<std::vector<std::size_t>>();
    a.final_channels = meta.at("final_channels").get<std::size_t>();
    a.head_hidden = meta.at("head_hidden").get<std::size_t>();
    seed = meta.at("seed").get<std::uint64_t>();
    const auto& t = meta.at("training");
    tm.epochs = t.at("epochs").get<int>();
    tm.seed = t.at("seed").get<std::uint64_t>();
    tm.loss_curve = t.at("loss_curve").get<std::vector<double>>();
    tm.symmetry = t.value("symmetry", std::string("none"));
  } catch (const json::exception& e) {
    throw ClassifierError("corrupt classifier metadata " + side + ": " + e.what());
  }
  ClassifierModel m = ClassifierModel::build(a, seed);
  num::restore(m.parameters(), num::load_checkpoint(path));
  m.meta() = tm;
  return m;
}

}  // namespace rwl::clf
