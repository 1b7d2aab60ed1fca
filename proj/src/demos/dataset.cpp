#include "rwl/demos/dataset.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <json.hpp>
#include <sstream>

#include "rwl/demos/expert.hpp"
#include "rwl/numerics/rng.hpp"

namespace rwl::demos {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DatasetError(DatasetError::Kind::MissingFrame, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& data) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DatasetError(DatasetError::Kind::Io, "cannot write " + p.string());
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw DatasetError(DatasetError::Kind::Io, "failed writing " + p.string());
}

LabelSource parse_source(const json& j) {
  if (j.is_null()) return LabelSource::None;
  const auto s = j.get<std::string>();
  if (s == "auto") return LabelSource::Auto;
  if (s == "human") return LabelSource::Human;
  if (s == "none") return LabelSource::None;
  throw DatasetError(DatasetError::Kind::CorruptManifest, "manifest: unknown label source '" + s + "'");
}

json manifest_json(const DemoSet& demos) {
  json eps = json::array();
  for (std::size_t k = 0; k < demos.episodes.size(); ++k) {
    const Episode& ep = demos.episodes[k];
    json frames = json::array();
    for (const Frame& f : ep.frames) {
      if (f.png_sha256.empty()) {
        throw DatasetError(DatasetError::Kind::Io, "frame " + std::to_string(f.t) + " of episode " +
                                                       std::to_string(k) + " has no checksum; save the dataset first");
      }
      frames.push_back({{"t", f.t},
                        {"file", "ep" + std::to_string(k) + "/frame" + std::to_string(f.t) + ".png"},
                        {"sha256", f.png_sha256},
                        {"state", f.state},
                        {"y", f.y ? json(*f.y) : json(nullptr)},
                        {"timing", f.timing ? json(*f.timing) : json(nullptr)},
                        {"source", to_string(f.source)}});
    }
    eps.push_back({{"id", k},
                   {"seed", ep.seed},
                   {"length", ep.length()},
                   {"success_hold", ep.success_hold},
                   {"frames", std::move(frames)}});
  }
  return {{"format_version", kDatasetFormatVersion},
          {"task", std::string(envs::task_name(demos.task))},
          {"split", to_string(demos.split)},
          {"provenance", to_string(demos.provenance)},
          {"resolution", demos.render.resolution},
          {"occlude_target", demos.render.occlude_target},
          {"episodes", std::move(eps)}};
}

}  // namespace

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }
std::string to_string(Provenance p) { return p == Provenance::Scripted ? "scripted" : "human-labeled"; }
std::string to_string(LabelSource s) {
  switch (s) {
    case LabelSource::None:
      return "none";
    case LabelSource::Auto:
      return "auto";
    case LabelSource::Human:
      return "human";
  }
  return "none";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "' (expected train or test)");
}

std::size_t DemoSet::frame_count() const {
  std::size_t n = 0;
  for (const auto& ep : episodes) n += ep.frames.size();
  return n;
}

std::uint64_t episode_seed(std::uint64_t base_seed, Split split, std::uint64_t attempt) {
  const std::uint64_t h = num::mix_seed(base_seed, attempt);
  return (h & ~std::uint64_t{1}) | (split == Split::Test ? 1u : 0u);
}

DemoSet collect(envs::TaskId task, int n_episodes, std::uint64_t seed, Split split, const render::RenderConfig& cfg) {
  if (n_episodes < 1) throw std::invalid_argument("collect: n_episodes must be >= 1");
  DemoSet out;
  out.task = task;
  out.split = split;
  out.render = cfg;
  int failures = 0;
  for (std::uint64_t attempt = 0; static_cast<int>(out.episodes.size()) < n_episodes; ++attempt) {
    Episode ep;
    ep.task = task;
    ep.seed = episode_seed(seed, split, attempt);
    envs::Environment env(task, ep.seed);
    auto push = [&](const envs::EnvState& s) {
      Frame f;
      f.t = ep.length();
      f.image = render::render(s, cfg);
      f.state = envs::to_vector(s);
      ep.frames.push_back(std::move(f));
    };
    push(env.state());
    envs::StepResult r;
    do {
      r = env.step(scripted_expert(env.state()));
      push(r.state);
    } while (!r.terminated);
    ep.success_hold = r.success_hold;
    if (ep.success_hold) {
      out.episodes.push_back(std::move(ep));
    } else {
      ++failures;
      const int attempts = static_cast<int>(attempt) + 1;
      if (attempts >= 4 && 2 * failures > attempts) {
        throw TaskMisconfiguredError("collect: scripted expert failed " + std::to_string(failures) + " of " +
                                     std::to_string(attempts) + " rollouts on " +
                                     std::string(envs::task_name(task)));
      }
    }
  }
  return out;
}

DemoSet auto_label(DemoSet demos) {
  for (auto& ep : demos.episodes) {
    for (auto& f : ep.frames) {
      f.y = envs::is_success(envs::from_vector(ep.task, f.state)) ? 1 : 0;
      f.source = LabelSource::Auto;
    }
  }
  return demos;
}

Episode timing_labels(Episode episode) {
  const int j = episode.length();
  if (j < 2) throw DegenerateEpisodeError("timing_labels: episode has " + std::to_string(j) + " frames, need >= 2");
  for (auto& f : episode.frames) f.timing = static_cast<double>(f.t) / static_cast<double>(j - 1);
  return episode;
}

DemoSet collect_labeled(envs::TaskId task, int n_episodes, std::uint64_t seed, Split split,
                        const render::RenderConfig& cfg) {
  DemoSet d = auto_label(collect(task, n_episodes, seed, split, cfg));
  for (auto& ep : d.episodes) ep = timing_labels(std::move(ep));
  return d;
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

fs::path frame_path(const fs::path& dir, int episode, int t) {
  return dir / ("ep" + std::to_string(episode)) / ("frame" + std::to_string(t) + ".png");
}

void save(DemoSet& demos, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DatasetError(DatasetError::Kind::Io, "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t k = 0; k < demos.episodes.size(); ++k) {
    fs::create_directories(dir / ("ep" + std::to_string(k)), ec);
    if (ec) throw DatasetError(DatasetError::Kind::Io, "cannot create episode directory: " + ec.message());
    for (auto& f : demos.episodes[k].frames) {
      const auto png = render::encode_png(f.image);
      f.png_sha256 = sha256_hex(png);
      write_file(frame_path(dir, static_cast<int>(k), f.t), std::string(png.begin(), png.end()));
    }
  }
  save_manifest(demos, dir);
}

void save_manifest(const DemoSet& demos, const fs::path& dir) {
  // Write-then-rename keeps the manifest whole if the process dies mid-write.
  const fs::path tmp = dir / "manifest.json.tmp";
  write_file(tmp, manifest_json(demos).dump(1));
  std::error_code ec;
  fs::rename(tmp, dir / "manifest.json", ec);
  if (ec) throw DatasetError(DatasetError::Kind::Io, "cannot replace manifest: " + ec.message());
}

DemoSet load(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw DatasetError(DatasetError::Kind::MissingManifest, "missing " + mpath.string());
  json m;
  try {
    std::ifstream f(mpath);
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::CorruptManifest, "corrupt manifest " + mpath.string() + ": " + e.what());
  }
  DemoSet d;
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw DatasetError(DatasetError::Kind::UnsupportedVersion,
                         "unsupported dataset format version " + std::to_string(version) + " (expected " +
                             std::to_string(kDatasetFormatVersion) + ")");
    }
    d.task = envs::parse_task(m.at("task").get<std::string>());
    d.split = parse_split(m.at("split").get<std::string>());
    const auto prov = m.at("provenance").get<std::string>();
    if (prov == "scripted") {
      d.provenance = Provenance::Scripted;
    } else if (prov == "human-labeled") {
      d.provenance = Provenance::HumanLabeled;
    } else {
      throw DatasetError(DatasetError::Kind::CorruptManifest, "manifest: unknown provenance '" + prov + "'");
    }
    d.render.resolution = m.at("resolution").get<int>();
    d.render.occlude_target = m.at("occlude_target").get<bool>();
    for (const auto& je : m.at("episodes")) {
      Episode ep;
      ep.task = d.task;
      ep.seed = je.at("seed").get<std::uint64_t>();
      ep.success_hold = je.at("success_hold").get<bool>();
      const int k = static_cast<int>(d.episodes.size());
      for (const auto& jf : je.at("frames")) {
        Frame f;
        f.t = jf.at("t").get<int>();
        if (f.t != ep.length()) {
          throw DatasetError(DatasetError::Kind::CorruptManifest,
                             "manifest: episode " + std::to_string(k) + " frame indices are not contiguous");
        }
        f.state = jf.at("state").get<std::vector<double>>();
        if (!jf.at("y").is_null()) f.y = jf.at("y").get<int>();
        if (!jf.at("timing").is_null()) f.timing = jf.at("timing").get<double>();
        f.source = parse_source(jf.at("source"));
        f.png_sha256 = jf.at("sha256").get<std::string>();
        const fs::path fp = dir / jf.at("file").get<std::string>();
        const std::string frame_name = "episode " + std::to_string(k) + " frame " + std::to_string(f.t);
        if (!fs::exists(fp)) throw DatasetError(DatasetError::Kind::MissingFrame, "missing " + frame_name + " (" + fp.string() + ")");
        const auto bytes = read_file(fp);
        if (sha256_hex(bytes) != f.png_sha256) {
          throw DatasetError(DatasetError::Kind::ChecksumMismatch,
                             "checksum mismatch for " + frame_name + " (" + fp.string() + ")");
        }
        try {
          f.image = render::decode_png(bytes);
        } catch (const render::PngError& e) {
          throw DatasetError(DatasetError::Kind::ChecksumMismatch, frame_name + ": " + e.what());
        }
        ep.frames.push_back(std::move(f));
      }
      d.episodes.push_back(std::move(ep));
    }
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::CorruptManifest, "corrupt manifest " + mpath.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError(DatasetError::Kind::CorruptManifest, "corrupt manifest " + mpath.string() + ": " + e.what());
  }
  return d;
}

DemoSet merge_human_labels(DemoSet demos, const std::vector<HumanLabel>& labels, MergeReport* report) {
  std::vector<HumanLabel> bad;
  for (const auto& l : labels) {
    const bool ep_ok = l.episode >= 0 && l.episode < static_cast<int>(demos.episodes.size());
    const bool fr_ok = ep_ok && l.frame >= 0 && l.frame < demos.episodes[l.episode].length();
    if (!fr_ok || (l.y != 0 && l.y != 1)) bad.push_back(l);
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "rejected " << bad.size() << " label(s):";
    for (const auto& l : bad) os << " (episode " << l.episode << ", frame " << l.frame << ", y " << l.y << ")";
    throw LabelRejection(os.str(), bad);
  }
  MergeReport rep;
  if (labels.empty()) {
    if (report) *report = rep;
    return demos;
  }
  std::map<std::pair<int, int>, int> hits;
  std::map<std::pair<int, int>, std::optional<int>> before;
  for (const auto& l : labels) {
    Frame& f = demos.episodes[l.episode].frames[l.frame];
    const auto key = std::make_pair(l.episode, l.frame);
    if (!before.count(key)) before[key] = f.y;
    ++hits[key];
    f.y = l.y;
    f.source = LabelSource::Human;
    ++rep.applied;
  }
  for (const auto& [key, count] : hits) {
    const Frame& f = demos.episodes[key.first].frames[key.second];
    if (before[key] != f.y) ++rep.changed;
    if (count > 1) rep.duplicates.push_back({key.first, key.second, count, *f.y});
  }
  demos.provenance = Provenance::HumanLabeled;
  if (report) *report = rep;
  return demos;
}

LabelCounts count_labels(const DemoSet& demos) {
  LabelCounts c;
  for (const auto& ep : demos.episodes) {
    for (const auto& f : ep.frames) {
      if (!f.y) {
        ++c.unlabeled;
      } else if (*f.y == 1) {
        ++c.positives;
      } else {
        ++c.negatives;
      }
    }
  }
  return c;
}

}  // namespace rwl::demos
