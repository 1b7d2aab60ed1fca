#include "label_server.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>

#include <httplib.h>

namespace rwl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json error_body(const std::string& message) { return {{"error", message}}; }

std::optional<int> parse_index(const std::string& s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

}  // namespace

fs::path LabelServer::lock_path(const fs::path& dir) { return dir / ".label-serve.lock"; }

LabelServer::LabelServer(const fs::path& dir, std::optional<fs::path> label_log)
    : dir_(dir), label_log_(std::move(label_log)), server_(std::make_unique<httplib::Server>()) {
  demos_ = demos::load(dir_);
  const int fd = ::open(lock_path(dir_).c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw DatasetLockedError("dataset " + dir_.string() + " is locked by another label server (" +
                             lock_path(dir_).string() + ")");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
  locked_ = true;

  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Get("/api/episodes", [this, send](const httplib::Request&, httplib::Response& res) { send(res, episodes()); });
  server_->Get("/api/progress", [this, send](const httplib::Request&, httplib::Response& res) { send(res, progress()); });
  server_->Get(R"(/api/episodes/([^/]+)/labels)", [this, send](const httplib::Request& req, httplib::Response& res) {
    const auto id = parse_index(req.matches[1]);
    send(res, id ? labels(*id) : Reply{404, error_body("unknown episode '" + std::string(req.matches[1]) + "'")});
  });
  server_->Get(R"(/api/episodes/([^/]+)/frames/([^/]+))", [this, send](const httplib::Request& req,
                                                                      httplib::Response& res) {
    const auto id = parse_index(req.matches[1]);
    const auto t = parse_index(req.matches[2]);
    std::vector<std::uint8_t> png;
    {
      std::lock_guard lock(mu_);
      if (!id || *id >= static_cast<int>(demos_.episodes.size())) {
        return send(res, {404, error_body("unknown episode '" + std::string(req.matches[1]) + "'")});
      }
      const auto& ep = demos_.episodes[static_cast<std::size_t>(*id)];
      if (!t || *t >= ep.length()) {
        return send(res, {404, error_body("episode " + std::to_string(*id) + " has no frame '" +
                                          std::string(req.matches[2]) + "'")});
      }
      png = render::encode_png(ep.frames[static_cast<std::size_t>(*t)].image);
    }
    res.status = 200;
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  });
  server_->Post("/api/labels", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, post_label(req.body));
  });
}

LabelServer::~LabelServer() {
  stop();
  try {
    flush();
  } catch (...) {
  }
  if (locked_) {
    std::error_code ec;
    fs::remove(lock_path(dir_), ec);
  }
}

int LabelServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  return bound;
}

void LabelServer::listen() { server_->listen_after_bind(); }

void LabelServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void LabelServer::flush() {
  std::lock_guard lock(mu_);
  flush_locked();
}

void LabelServer::flush_locked() {
  demos::save_manifest(demos_, dir_);
  if (label_log_) {
    json log = json::array();
    for (const auto& l : received_) log.push_back({{"episode", l.episode}, {"frame", l.frame}, {"y", l.y}});
    std::ofstream(*label_log_, std::ios::trunc) << log.dump(2) << '\n';
  }
}

LabelServer::Reply LabelServer::episodes() const {
  std::lock_guard lock(mu_);
  json out = json::array();
  for (std::size_t i = 0; i < demos_.episodes.size(); ++i) {
    const auto& ep = demos_.episodes[i];
    int labeled = 0;
    for (const auto& f : ep.frames) labeled += f.y ? 1 : 0;
    out.push_back({{"id", i},
                   {"task", std::string(envs::task_name(ep.task))},
                   {"length", ep.length()},
                   {"labeled_count", labeled}});
  }
  return {200, out};
}

LabelServer::Reply LabelServer::labels(int episode) const {
  std::lock_guard lock(mu_);
  if (episode >= static_cast<int>(demos_.episodes.size())) {
    return {404, error_body("unknown episode '" + std::to_string(episode) + "'")};
  }
  json out = json::array();
  for (const auto& f : demos_.episodes[static_cast<std::size_t>(episode)].frames) {
    if (f.y) out.push_back({{"frame", f.t}, {"y", *f.y}, {"source", demos::to_string(f.source)}});
  }
  return {200, out};
}

LabelServer::Reply LabelServer::progress() const {
  std::lock_guard lock(mu_);
  const auto c = demos::count_labels(demos_);
  return {200, {{"labeled", c.positives + c.negatives}, {"total", demos_.frame_count()}}};
}

LabelServer::Reply LabelServer::post_label(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return {422, error_body("body is not valid JSON")};
  }
  for (const char* key : {"episode", "frame", "y"}) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_number_integer()) {
      return {422, error_body(std::string("field '") + key + "' must be an integer")};
    }
  }
  const auto wide = [&](const char* key) { return j.at(key).get<long long>(); };
  std::lock_guard lock(mu_);
  if (wide("episode") < 0 || wide("episode") >= static_cast<long long>(demos_.episodes.size())) {
    return {404, error_body("unknown episode " + std::to_string(wide("episode")))};
  }
  const int ep = static_cast<int>(wide("episode"));
  const long long frame = wide("frame");
  const int length = demos_.episodes[static_cast<std::size_t>(ep)].length();
  if (frame < 0 || frame >= length) {
    return {422, {{"error", "frame index " + std::to_string(frame) + " outside [0, " + std::to_string(length) + ")"},
                  {"frame", frame}}};
  }
  if (wide("y") != 0 && wide("y") != 1) return {422, error_body("y must be 0 or 1")};
  const demos::HumanLabel label{ep, static_cast<int>(frame), static_cast<int>(wide("y"))};
  try {
    demos_ = demos::merge_human_labels(demos_, {label});
  } catch (const demos::LabelRejection& e) {
    return {422, error_body(e.what())};
  }
  received_.push_back(label);
  flush_locked();
  return {200, {{"ok", true}}};
}

}  // namespace rwl::cli
