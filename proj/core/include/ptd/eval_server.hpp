#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "ptd/eval_service.hpp"

namespace ptd {

/// JSON API over an EvalService:
///   POST /api/sessions              {"n_participants", "images_per", "seed"} (admin)
///   GET  /api/sessions              session ids, participants and progress
///   GET  /api/session/{id}/next     {"complete", "image_id", "image_url", "descriptor", "progress"}
///   POST /api/session/{id}/rating   {"image_id", "quality", "representativeness", "comment"?}
///   GET  /api/report/stages         cumulative stage means and relative deltas
///   GET  /api/report/curve?q=a,b,.. representativeness vs clip-score quantile
///   GET  /images/<path>             files under the dataset root
/// Errors reply {"error": message} with 400, 403, 404 or 409.
class EvalServer {
 public:
  struct Options {
    std::filesystem::path image_root;
    /// When set, POST /api/sessions needs the header X-Admin-Token with this value.
    std::string admin_token;
    /// Directory with the rater web client, served at "/".
    std::filesystem::path static_dir;
  };

  EvalServer(EvalService& service, Options options);
  ~EvalServer();

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ptd
