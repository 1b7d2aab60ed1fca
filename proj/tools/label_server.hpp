#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwl/demos/dataset.hpp"

namespace httplib {
class Server;
}

namespace rwl::cli {

class DatasetLockedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// HTTP front end for human labelling of one dataset directory. Reads run
// concurrently; label writes are serialised and written through to
// manifest.json before the response is sent.
class LabelServer {
 public:
  // Takes <dir>/.label-serve.lock; throws DatasetLockedError if held.
  explicit LabelServer(const std::filesystem::path& dir, std::optional<std::filesystem::path> label_log = {});
  ~LabelServer();
  LabelServer(const LabelServer&) = delete;
  LabelServer& operator=(const LabelServer&) = delete;

  // Returns the bound port; port 0 picks a free one. Throws on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();
  // Persists the current labels (also done on every write).
  void flush();

  static std::filesystem::path lock_path(const std::filesystem::path& dir);

 private:
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };
  Reply episodes() const;
  Reply labels(int episode) const;
  Reply progress() const;
  Reply post_label(const std::string& body);
  void flush_locked();

  std::filesystem::path dir_;
  std::optional<std::filesystem::path> label_log_;
  demos::DemoSet demos_;
  std::vector<demos::HumanLabel> received_;
  mutable std::mutex mu_;
  std::unique_ptr<httplib::Server> server_;
  bool locked_ = false;
};

}  // namespace rwl::cli
