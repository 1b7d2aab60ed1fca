#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwl/envs/envs.hpp"
#include "rwl/render/render.hpp"

namespace rwl::demos {

enum class Split { Train, Test };
enum class Provenance { Scripted, HumanLabeled };
enum class LabelSource { None, Auto, Human };

std::string to_string(Split s);
std::string to_string(Provenance p);
std::string to_string(LabelSource s);
Split parse_split(const std::string& s);

struct Frame {
  int t = 0;
  render::Image image;
  std::vector<double> state;  // envs::to_vector snapshot
  std::optional<int> y;       // success label, 0 or 1
  std::optional<double> timing;
  LabelSource source = LabelSource::None;
  std::string png_sha256;  // filled by save/load

  bool operator==(const Frame& o) const {
    return t == o.t && image == o.image && state == o.state && y == o.y && timing == o.timing && source == o.source;
  }
};

struct Episode {
  envs::TaskId task = envs::TaskId::Pendulum;
  std::uint64_t seed = 0;
  bool success_hold = false;
  std::vector<Frame> frames;

  int length() const { return static_cast<int>(frames.size()); }
  bool operator==(const Episode& o) const {
    return task == o.task && seed == o.seed && success_hold == o.success_hold && frames == o.frames;
  }
};

struct DemoSet {
  envs::TaskId task = envs::TaskId::Pendulum;
  Split split = Split::Train;
  Provenance provenance = Provenance::Scripted;
  render::RenderConfig render;
  std::vector<Episode> episodes;

  std::size_t frame_count() const;
  bool operator==(const DemoSet& o) const {
    return task == o.task && split == o.split && provenance == o.provenance &&
           render.resolution == o.render.resolution && render.occlude_target == o.render.occlude_target &&
           episodes == o.episodes;
  }
};

class TaskMisconfiguredError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateEpisodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Episode seed for attempt k: train and test draw from disjoint parity classes.
std::uint64_t episode_seed(std::uint64_t base_seed, Split split, std::uint64_t attempt);

// Rolls the scripted expert until n episodes end via success-hold. Failed
// rollouts are discarded. Frames hold o_0 .. o_T and are unlabeled.
DemoSet collect(envs::TaskId task, int n_episodes, std::uint64_t seed, Split split = Split::Train,
                const render::RenderConfig& cfg = {});

// y = is_success(state) for every frame; source becomes Auto.
DemoSet auto_label(DemoSet demos);

// y_t = t / (j - 1).
Episode timing_labels(Episode episode);

// collect + auto_label + timing_labels.
DemoSet collect_labeled(envs::TaskId task, int n_episodes, std::uint64_t seed, Split split = Split::Train,
                        const render::RenderConfig& cfg = {});

inline constexpr int kDatasetFormatVersion = 1;

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { MissingManifest, CorruptManifest, UnsupportedVersion, MissingFrame, ChecksumMismatch, Io };
  DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Layout: <dir>/manifest.json and <dir>/ep<k>/frame<t>.png. Sets png_sha256
// on every frame.
void save(DemoSet& demos, const std::filesystem::path& dir);
// Rewrites manifest.json only; frames must already carry their checksums.
void save_manifest(const DemoSet& demos, const std::filesystem::path& dir);
DemoSet load(const std::filesystem::path& dir);

std::filesystem::path frame_path(const std::filesystem::path& dir, int episode, int t);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

struct HumanLabel {
  int episode = 0;
  int frame = 0;
  int y = 0;
};

struct MergeReport {
  std::size_t applied = 0;
  std::size_t changed = 0;  // frames whose label value differs afterwards
  // Frames hit by more than one entry; the last entry wins.
  struct Duplicate {
    int episode = 0, frame = 0, count = 0, final_y = 0;
  };
  std::vector<Duplicate> duplicates;
};

class LabelRejection : public std::invalid_argument {
 public:
  LabelRejection(const std::string& what, std::vector<HumanLabel> offending)
      : std::invalid_argument(what), offending_(std::move(offending)) {}
  const std::vector<HumanLabel>& offending() const { return offending_; }

 private:
  std::vector<HumanLabel> offending_;
};

// Validates every entry first; nothing is applied if any is rejected.
DemoSet merge_human_labels(DemoSet demos, const std::vector<HumanLabel>& labels, MergeReport* report = nullptr);

struct LabelCounts {
  std::size_t positives = 0, negatives = 0, unlabeled = 0;
};
LabelCounts count_labels(const DemoSet& demos);

}  // namespace rwl::demos
