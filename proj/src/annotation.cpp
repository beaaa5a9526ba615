#include "e2vts/annotation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "e2vts/image.hpp"

namespace e2vts {

using json = nlohmann::json;

const FrameAnnotations* AnnotationDocument::find(int index) const {
  for (const auto& f : frames)
    if (f.index == index) return &f;
  return nullptr;
}

FrameAnnotations& AnnotationDocument::upsert(int index) {
  for (auto& f : frames)
    if (f.index == index) return f;
  frames.push_back(FrameAnnotations{index, {}});
  normalize();
  for (auto& f : frames)
    if (f.index == index) return f;
  throw RuntimeFailure("upsert: frame vanished");
}

void AnnotationDocument::normalize() {
  std::stable_sort(frames.begin(), frames.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
}

AnnotationDocument AnnotationDocument::without_stale() const {
  AnnotationDocument out;
  out.version = version;
  out.diagnostics = diagnostics;
  for (const auto& f : frames) {
    FrameAnnotations g{f.index, {}};
    for (const auto& a : f.annotations)
      if (!a.stale) g.annotations.push_back(a);
    if (!g.annotations.empty() || f.annotations.empty()) out.frames.push_back(std::move(g));
  }
  return out;
}

std::string_view to_string(Provenance p) { return p == Provenance::Human ? "human" : "propagated"; }

json to_json(const Quad& q) {
  json a = json::array();
  for (const auto& c : q.corners) a.push_back(json::array({c.x(), c.y()}));
  return a;
}

Quad quad_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw InvalidArgument("quad must be an array of four [x, y] points");
  Quad q;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& p = j[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw InvalidArgument("quad corner must be [x, y]");
    q.corners[i] = Point2(p[0].get<double>(), p[1].get<double>());
  }
  if (!is_finite(q)) throw InvalidArgument("quad coordinates must be finite");
  return q;
}

json to_json(const Annotation& a, bool include_stale_flag) {
  json j;
  j["track_id"] = a.track_id;
  j["quad"] = to_json(a.quad);
  j["label"] = a.label ? json(*a.label) : json(nullptr);
  j["source"] = std::string(to_string(a.source));
  if (a.transcription) j["transcription"] = *a.transcription;
  if (a.origin) j["origin"] = *a.origin;
  if (include_stale_flag && a.stale) j["stale"] = true;
  return j;
}

Annotation annotation_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("annotation must be an object");
  Annotation a;
  a.track_id = j.value("track_id", 0);
  a.quad = quad_from_json(j.at("quad"));
  if (j.contains("label") && !j["label"].is_null()) a.label = j["label"].get<std::string>();
  const std::string src = j.value("source", "human");
  if (src == "human")
    a.source = Provenance::Human;
  else if (src == "propagated")
    a.source = Provenance::Propagated;
  else
    throw InvalidArgument("annotation source must be \"human\" or \"propagated\"");
  if (j.contains("transcription") && !j["transcription"].is_null()) a.transcription = j["transcription"].get<std::string>();
  a.stale = j.value("stale", false);
  if (j.contains("origin") && !j["origin"].is_null()) a.origin = j["origin"].get<int>();
  return a;
}

json to_json(const StepDiagnostics& d) {
  json j;
  j["from"] = d.from_index;
  j["to"] = d.to_index;
  j["matches"] = d.matches;
  j["inliers"] = d.inliers;
  j["mean_reprojection_error"] = d.mean_reprojection_error;
  j["status"] = d.failed ? "propagation-failed" : "ok";
  if (!d.reason.empty()) j["reason"] = d.reason;
  return j;
}

namespace {

StepDiagnostics diagnostics_from_json(const json& j) {
  StepDiagnostics d;
  d.from_index = j.value("from", 0);
  d.to_index = j.value("to", 0);
  d.matches = j.value("matches", 0);
  d.inliers = j.value("inliers", 0);
  d.mean_reprojection_error = j.value("mean_reprojection_error", 0.0);
  d.failed = j.value("status", "ok") != "ok";
  d.reason = j.value("reason", "");
  return d;
}

}  // namespace

json to_json(const AnnotationDocument& doc, bool include_stale_flag) {
  json j;
  j["version"] = doc.version;
  json frames = json::array();
  for (const auto& f : doc.frames) {
    json anns = json::array();
    for (const auto& a : f.annotations) anns.push_back(to_json(a, include_stale_flag));
    frames.push_back({{"index", f.index}, {"annotations", std::move(anns)}});
  }
  j["frames"] = std::move(frames);
  json diags = json::array();
  for (const auto& d : doc.diagnostics) diags.push_back(to_json(d));
  j["diagnostics"] = std::move(diags);
  return j;
}

AnnotationDocument document_from_json(const json& j) {
  try {
    if (!j.is_object()) throw InvalidArgument("annotation document must be an object");
    AnnotationDocument doc;
    doc.version = j.value("version", AnnotationDocument::kVersion);
    if (doc.version != AnnotationDocument::kVersion) throw InvalidArgument("unsupported annotation document version");
    for (const auto& f : j.value("frames", json::array())) {
      FrameAnnotations fa;
      fa.index = f.at("index").get<int>();
      for (const auto& a : f.value("annotations", json::array())) fa.annotations.push_back(annotation_from_json(a));
      doc.frames.push_back(std::move(fa));
    }
    for (const auto& d : j.value("diagnostics", json::array())) doc.diagnostics.push_back(diagnostics_from_json(d));
    doc.normalize();
    return doc;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("annotation document: ") + e.what());
  }
}

std::string dump_document(const AnnotationDocument& doc) { return to_json(doc).dump(2) + "\n"; }

AnnotationDocument read_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  try {
    return document_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_document(const std::filesystem::path& path, const AnnotationDocument& doc) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << dump_document(doc);
}

}  // namespace e2vts
