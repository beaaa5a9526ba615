#include "e2vts/service.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "e2vts/io.hpp"

namespace e2vts::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Snapshot {
  AnnotationDocument doc;
  std::uint64_t revision = 0;
};

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out << text;
    if (!out) throw RuntimeFailure("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string new_session_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  std::ostringstream ss;
  ss << std::hex << rng();
  return ss.str();
}

struct JobCancelled {};

}  // namespace

struct AnnotationService::Session {
  std::string id;
  fs::path dir;
  fs::path source;
  std::unique_ptr<io::FrameSource> frames;
  std::vector<int> indices;

  std::mutex write_mu;  // one writer at a time
  mutable std::mutex snap_mu;
  std::shared_ptr<const Snapshot> snap = std::make_shared<Snapshot>();

  mutable std::mutex job_mu;
  std::condition_variable job_cv;
  std::map<std::string, JobStatus> jobs;
  std::optional<std::string> running;
  int job_counter = 0;
  std::thread worker;
  std::atomic<bool> stop{false};

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(snap_mu);
    return snap;
  }

  int position(int index) const {
    const auto it = std::find(indices.begin(), indices.end(), index);
    return it == indices.end() ? -1 : static_cast<int>(it - indices.begin());
  }

  void persist(const Snapshot& s) const {
    json manifest = {{"format", "e2vts-session"}, {"version", 1}, {"id", id},
                     {"source", source.string()}, {"revision", s.revision}, {"frames", indices}};
    write_atomic(dir / "document.json", to_json(s.doc, true).dump(2) + "\n");
    write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  }

  // Caller holds write_mu. Applies fn to a copy and publishes it as the next revision.
  template <typename Fn>
  std::uint64_t mutate(Fn&& fn) {
    auto next = std::make_shared<Snapshot>(*snapshot());
    fn(next->doc);
    next->doc.normalize();
    std::stable_sort(next->doc.diagnostics.begin(), next->doc.diagnostics.end(),
                     [](const StepDiagnostics& a, const StepDiagnostics& b) { return a.to_index < b.to_index; });
    ++next->revision;
    persist(*next);
    std::lock_guard lock(snap_mu);
    snap = next;
    return next->revision;
  }

  bool job_running() const {
    std::lock_guard lock(job_mu);
    return running.has_value();
  }
};

AnnotationService::AnnotationService(fs::path data_dir, autolabel::PropagationOptions opt)
    : data_dir_(std::move(data_dir)), opt_(std::move(opt)) {
  fs::create_directories(data_dir_ / "sessions");
  load_existing();
}

AnnotationService::~AnnotationService() {
  std::lock_guard lock(sessions_mu_);
  for (auto& [id, s] : sessions_) {
    s->stop = true;
    if (s->worker.joinable()) s->worker.join();
  }
}

void AnnotationService::load_existing() {
  for (const auto& entry : fs::directory_iterator(data_dir_ / "sessions")) {
    const fs::path manifest_path = entry.path() / "manifest.json";
    if (!fs::exists(manifest_path)) continue;
    try {
      std::ifstream in(manifest_path);
      const json m = json::parse(in);
      auto s = std::make_shared<Session>();
      s->id = m.at("id").get<std::string>();
      s->dir = entry.path();
      s->source = m.at("source").get<std::string>();
      s->frames = io::open_source(s->source);
      for (int p = 0; p < s->frames->size(); ++p) s->indices.push_back(s->frames->index_at(p));
      auto snap = std::make_shared<Snapshot>();
      snap->revision = m.at("revision").get<std::uint64_t>();
      if (fs::exists(s->dir / "document.json")) snap->doc = read_document(s->dir / "document.json");
      s->snap = snap;
      sessions_[s->id] = s;
    } catch (const std::exception& e) {
      std::cerr << "skipping session " << entry.path() << ": " << e.what() << "\n";
    }
  }
}

std::string AnnotationService::open_session(const fs::path& source) {
  auto s = std::make_shared<Session>();
  try {
    s->frames = io::open_source(source);
  } catch (const std::exception& e) {
    throw ServiceError(400, "unreadable-source", e.what());
  }
  if (s->frames->size() == 0) throw ServiceError(400, "empty-source", "no frames found in " + source.string());
  try {
    s->frames->load(0);
  } catch (const std::exception& e) {
    throw ServiceError(400, "unreadable-source", e.what());
  }
  for (int p = 0; p < s->frames->size(); ++p) s->indices.push_back(s->frames->index_at(p));
  s->source = source;
  s->id = new_session_id();
  {
    std::lock_guard lock(sessions_mu_);
    while (sessions_.count(s->id)) s->id = new_session_id();
    s->dir = data_dir_ / "sessions" / s->id;
    fs::create_directories(s->dir);
    s->persist(*s->snap);
    sessions_[s->id] = s;
  }
  return s->id;
}

std::string AnnotationService::create_session(const fs::path& frames) {
  if (!fs::exists(frames)) throw ServiceError(400, "unreadable-source", "no such path: " + frames.string());
  return open_session(fs::absolute(frames));
}

std::string AnnotationService::create_session(const std::vector<UploadedFile>& files) {
  if (files.empty()) throw ServiceError(400, "empty-source", "no files uploaded");
  const fs::path dir = data_dir_ / "uploads" / new_session_id();
  fs::create_directories(dir);
  for (const auto& f : files) {
    const fs::path name = fs::path(f.filename).filename();
    const std::string stem = name.stem().string();
    const std::string ext = name.extension().string();
    const bool numeric = !stem.empty() && std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); });
    if (!numeric || (ext != ".png" && ext != ".ppm" && ext != ".pgm"))
      throw ServiceError(400, "bad-upload", "upload names must be <index>.png|ppm|pgm: " + f.filename);
    std::ofstream out(dir / name, std::ios::binary);
    out.write(f.content.data(), static_cast<std::streamsize>(f.content.size()));
  }
  return open_session(fs::absolute(dir));
}

std::shared_ptr<AnnotationService::Session> AnnotationService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "session-not-found", "no session " + id);
  return it->second;
}

SessionView AnnotationService::session(const std::string& id) const {
  const auto s = find(id);
  const auto snap = s->snapshot();
  SessionView v{s->id, s->source.string(), snap->revision, s->indices, snap->doc, std::nullopt};
  std::lock_guard lock(s->job_mu);
  if (s->running) v.running_job = s->jobs.at(*s->running);
  return v;
}

std::vector<std::uint8_t> AnnotationService::frame_png(const std::string& id, int index) const {
  const auto s = find(id);
  const int pos = s->position(index);
  if (pos < 0) throw ServiceError(404, "frame-not-found", "no frame " + std::to_string(index));
  try {
    return io::encode_png(s->frames->load(pos));
  } catch (const std::exception& e) {
    throw ServiceError(500, "decode-error", e.what());
  }
}

std::uint64_t AnnotationService::set_annotations(const std::string& id, int index, std::vector<Annotation> annotations,
                                                 std::optional<std::uint64_t> expected_revision) {
  const auto s = find(id);
  if (s->position(index) < 0) throw ServiceError(404, "frame-not-found", "no frame " + std::to_string(index));
  for (std::size_t k = 0; k < annotations.size(); ++k) {
    Annotation& a = annotations[k];
    const std::string which = "annotation " + std::to_string(k) + ": ";
    if (!is_finite(a.quad)) throw ServiceError(400, "bad-quad", which + "non-finite coordinates");
    if (!is_simple(a.quad)) throw ServiceError(400, "bad-quad", which + "quad is self-intersecting or degenerate");
    a.quad = canonical_quad(a.quad);
    if (!is_convex(a.quad)) throw ServiceError(400, "bad-quad", which + "quad is not convex");
    a.source = Provenance::Human;
    a.stale = false;
    a.origin.reset();
  }

  std::lock_guard write(s->write_mu);
  if (s->job_running()) throw ServiceError(409, "job-running", "a propagation job is running");
  if (expected_revision && *expected_revision != s->snapshot()->revision)
    throw ServiceError(409, "revision-mismatch", "document is at revision " + std::to_string(s->snapshot()->revision));
  return s->mutate([&](AnnotationDocument& doc) {
    doc.upsert(index).annotations = annotations;
    for (auto& f : doc.frames) {
      if (f.index <= index) continue;
      for (auto& a : f.annotations)
        if (a.source == Provenance::Propagated && a.origin && *a.origin <= index) a.stale = true;
    }
  });
}

JobStatus AnnotationService::propagate(const std::string& id, int from, int to) {
  const auto s = find(id);
  if (from >= to) throw ServiceError(400, "bad-range", "propagate requires from < to");
  const int pf = s->position(from);
  const int pt = s->position(to);
  if (pf < 0 || pt < 0 || pf >= pt) throw ServiceError(400, "bad-range", "frames must exist and be in order");

  std::lock_guard write(s->write_mu);
  std::vector<Annotation> seeds;
  if (const FrameAnnotations* f = s->snapshot()->doc.find(from))
    for (const auto& a : f->annotations)
      if (!a.stale) seeds.push_back(a);
  if (seeds.empty()) throw ServiceError(400, "missing-seed", "no annotations at frame " + std::to_string(from));

  JobStatus status;
  {
    std::lock_guard lock(s->job_mu);
    if (s->running) throw ServiceError(409, "job-running", "a propagation job is running");
    status.id = "j" + std::to_string(++s->job_counter);
    status.from = from;
    status.to = to;
    status.state = "running";
    status.frames_done = 1;
    s->jobs[status.id] = status;
    s->running = status.id;
  }
  if (s->worker.joinable()) s->worker.join();

  const std::string job_id = status.id;
  s->worker = std::thread([s, job_id, pf, pt, seeds, opt = opt_] {
    JobStatus final_state;
    {
      std::lock_guard lock(s->job_mu);
      final_state = s->jobs.at(job_id);
    }
    try {
      const io::SliceSource slice(*s->frames, pf, pt + 1);
      const auto result = autolabel::propagate_annotations(
          slice, seeds, opt, [&](const FrameAnnotations& fa, const StepDiagnostics* d) {
            if (s->stop) throw JobCancelled{};
            if (!d) return;
            {
              std::lock_guard write(s->write_mu);
              s->mutate([&](AnnotationDocument& doc) {
                std::erase_if(doc.diagnostics, [&](const StepDiagnostics& x) { return x.to_index == d->to_index; });
                doc.diagnostics.push_back(*d);
                if (d->failed) return;
                auto& anns = doc.upsert(fa.index).annotations;
                std::erase_if(anns, [](const Annotation& a) { return a.source == Provenance::Propagated; });
                anns.insert(anns.end(), fa.annotations.begin(), fa.annotations.end());
              });
            }
            if (!d->failed) {
              std::lock_guard lock(s->job_mu);
              ++s->jobs.at(job_id).frames_done;
            }
          });
      if (result.halted_at) {
        final_state.state = "halted";
        final_state.halted_at = result.halted_at;
        final_state.reason = result.halt_reason;
      } else {
        final_state.state = "completed";
      }
    } catch (const JobCancelled&) {
      final_state.state = "failed";
      final_state.reason = "service shutting down";
    } catch (const std::exception& e) {
      final_state.state = "failed";
      final_state.reason = e.what();
    }
    std::lock_guard lock(s->job_mu);
    final_state.frames_done = s->jobs.at(job_id).frames_done;
    s->jobs[job_id] = final_state;
    s->running.reset();
    s->job_cv.notify_all();
  });
  return status;
}

JobStatus AnnotationService::job(const std::string& id, const std::string& job_id) const {
  const auto s = find(id);
  std::lock_guard lock(s->job_mu);
  const auto it = s->jobs.find(job_id);
  if (it == s->jobs.end()) throw ServiceError(404, "job-not-found", "no job " + job_id);
  return it->second;
}

void AnnotationService::wait_idle(const std::string& id) {
  const auto s = find(id);
  std::unique_lock lock(s->job_mu);
  s->job_cv.wait(lock, [&] { return !s->running; });
}

AnnotationDocument AnnotationService::export_document(const std::string& id) const {
  return find(id)->snapshot()->doc.without_stale();
}

json to_json(const JobStatus& j) {
  json out = {{"id", j.id}, {"from", j.from}, {"to", j.to}, {"state", j.state}, {"frames_done", j.frames_done}};
  if (j.halted_at) out["halted_at"] = *j.halted_at;
  if (!j.reason.empty()) out["reason"] = j.reason;
  return out;
}

json to_json(const SessionView& s) {
  return {{"id", s.id},
          {"source", s.source},
          {"revision", s.revision},
          {"frame_count", s.frame_indices.size()},
          {"frames", s.frame_indices},
          {"document", to_json(s.document, true)},
          {"job", s.running_job ? to_json(*s.running_job) : json(nullptr)}};
}

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason, const std::string& message) {
  send_json(res, {{"error", message}, {"reason", reason}}, status);
}

int parse_index(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ServiceError(400, "bad-index", "not a frame index: " + s);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ServiceError(400, "invalid-json", e.what());
  }
}

}  // namespace

void AnnotationService::bind(httplib::Server& srv) {
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.reason(), e.what());
    } catch (const InvalidArgument& e) {
      send_error(res, 400, "invalid-argument", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "invalid-json", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not-found" : "error", "request failed");
  });
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    std::string id;
    if (req.is_multipart_form_data()) {
      std::vector<UploadedFile> files;
      for (const auto& [name, f] : req.files) files.push_back({f.filename.empty() ? name : f.filename, f.content});
      id = create_session(files);
    } else {
      const json body = parse_body(req);
      if (!body.is_object() || !body.contains("frames") || !body["frames"].is_string())
        throw ServiceError(400, "invalid-request", "expected {\"frames\": \"<dir or .y4m>\"}");
      id = create_session(fs::path(body["frames"].get<std::string>()));
    }
    send_json(res, to_json(session(id)), 201);
  });

  srv.Get(R"(/api/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, to_json(session(req.matches[1])));
  });

  srv.Get(R"(/api/sessions/([^/]+)/frames/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto png = frame_png(req.matches[1], parse_index(req.matches[2]));
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  });

  srv.Put(R"(/api/sessions/([^/]+)/frames/([^/]+)/annotations)",
          [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const int index = parse_index(req.matches[2]);
            const json body = parse_body(req);
            const json* list = &body;
            std::optional<std::uint64_t> expected;
            if (body.is_object()) {
              if (!body.contains("annotations")) throw ServiceError(400, "invalid-request", "missing annotations");
              list = &body["annotations"];
              if (body.contains("revision") && !body["revision"].is_null()) expected = body["revision"].get<std::uint64_t>();
            }
            if (!list->is_array()) throw ServiceError(400, "invalid-request", "annotations must be an array");
            std::vector<Annotation> anns;
            for (std::size_t k = 0; k < list->size(); ++k) {
              try {
                Annotation a = annotation_from_json((*list)[k]);
                if (!(*list)[k].contains("track_id")) a.track_id = static_cast<int>(k);
                anns.push_back(std::move(a));
              } catch (const std::exception& e) {
                throw ServiceError(400, "bad-quad", "annotation " + std::to_string(k) + ": " + e.what());
              }
            }
            const std::uint64_t rev = set_annotations(id, index, std::move(anns), expected);
            send_json(res, {{"revision", rev}});
          });

  srv.Post(R"(/api/sessions/([^/]+)/propagate)", [this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.is_object() || !body.contains("from") || !body.contains("to"))
      throw ServiceError(400, "invalid-request", "expected {\"from\": i, \"to\": j}");
    const JobStatus j = propagate(req.matches[1], body["from"].get<int>(), body["to"].get<int>());
    send_json(res, to_json(j), 202);
  });

  srv.Get(R"(/api/sessions/([^/]+)/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, to_json(job(req.matches[1], req.matches[2])));
  });

  srv.Get(R"(/api/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
    res.set_content(dump_document(export_document(req.matches[1])), "application/json");
  });
}

}  // namespace e2vts::service
