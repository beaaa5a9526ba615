#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2vts/annotation.hpp"
#include "e2vts/autolabel.hpp"

namespace httplib {
class Server;
}

namespace e2vts::service {

/// Carries an HTTP status and a machine-readable reason.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string reason, const std::string& message)
      : std::runtime_error(message), status_(status), reason_(std::move(reason)) {}
  int status() const { return status_; }
  const std::string& reason() const { return reason_; }

 private:
  int status_;
  std::string reason_;
};

struct JobStatus {
  std::string id;
  int from = 0;
  int to = 0;
  std::string state;  ///< running | completed | halted | failed
  int frames_done = 0;
  std::optional<int> halted_at;
  std::string reason;
};

struct SessionView {
  std::string id;
  std::string source;
  std::uint64_t revision = 0;
  std::vector<int> frame_indices;
  AnnotationDocument document;  ///< includes stale annotations
  std::optional<JobStatus> running_job;
};

struct UploadedFile {
  std::string filename;
  std::string content;
};

/// Labeling sessions over frame sequences. Each session has one writer at a
/// time (a human edit or the propagation job); readers take an immutable
/// snapshot and never wait on a writer.
class AnnotationService {
 public:
  explicit AnnotationService(std::filesystem::path data_dir, autolabel::PropagationOptions opt = {});
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  std::string create_session(const std::filesystem::path& frames);
  /// Stores uploaded images named "<index>.png|ppm|pgm" and opens them as a session.
  std::string create_session(const std::vector<UploadedFile>& files);

  SessionView session(const std::string& id) const;
  std::vector<std::uint8_t> frame_png(const std::string& id, int index) const;

  /// Replaces the frame's annotations with human ones and marks propagated
  /// annotations derived through this frame as stale. Returns the new revision.
  std::uint64_t set_annotations(const std::string& id, int index, std::vector<Annotation> annotations,
                                std::optional<std::uint64_t> expected_revision = std::nullopt);

  /// Starts a background propagation over frame indices [from, to].
  JobStatus propagate(const std::string& id, int from, int to);
  JobStatus job(const std::string& id, const std::string& job_id) const;
  /// Blocks until the session has no running job.
  void wait_idle(const std::string& id);

  /// Current document without stale annotations.
  AnnotationDocument export_document(const std::string& id) const;

  /// Registers the /api routes.
  void bind(httplib::Server& server);

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::string open_session(const std::filesystem::path& source);
  void load_existing();

  std::filesystem::path data_dir_;
  autolabel::PropagationOptions opt_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

nlohmann::json to_json(const JobStatus& j);
nlohmann::json to_json(const SessionView& s);

}  // namespace e2vts::service
