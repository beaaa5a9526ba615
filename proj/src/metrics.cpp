#include "e2vts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "e2vts/image.hpp"

namespace e2vts::metrics {

double polygon_area(const Polygon& p) { return std::abs(signed_area(p)); }

Overlap polygon_overlap(const Quad& pred, const Quad& gt) {
  const Polygon p = pred.polygon();
  const Polygon g = gt.polygon();
  if (!is_convex(p) || !is_convex(g)) throw InvalidArgument("polygon_overlap: quads must be convex with non-zero area");
  const double ap = polygon_area(p);
  const double ag = polygon_area(g);
  const Polygon inter = clip_convex(p, g);
  const double ai = inter.size() >= 3 ? polygon_area(inter) : 0.0;
  const double au = ap + ag - ai;
  Overlap o;
  o.iou = au > 0 ? ai / au : 0.0;
  o.iop = ap > 0 ? ai / ap : 0.0;
  o.iog = ag > 0 ? ai / ag : 0.0;
  return o;
}

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((cc & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (ok && (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
    } else {
      out.push_back(cp);
      i += static_cast<std::size_t>(len);
    }
  }
  return out;
}

int edit_distance(const std::u32string& a, const std::u32string& b) {
  const std::u32string& s = a.size() < b.size() ? b : a;
  const std::u32string& t = a.size() < b.size() ? a : b;
  std::vector<int> row(t.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= s.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= t.size(); ++j) {
      const int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (s[i - 1] == t[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[t.size()];
}

int edit_distance(std::string_view a, std::string_view b) { return edit_distance(decode_utf8(a), decode_utf8(b)); }

namespace {

void fill_means(EvalReport& r) {
  if (r.per_gt.empty()) return;
  const auto n = static_cast<double>(r.per_gt.size());
  for (const auto& g : r.per_gt) {
    r.mean_iou += g.overlap.iou;
    r.mean_iop += g.overlap.iop;
    r.mean_iog += g.overlap.iog;
    r.mean_edit_distance += g.edit_distance;
  }
  r.mean_iou /= n;
  r.mean_iop /= n;
  r.mean_iog /= n;
  r.mean_edit_distance /= n;
}

}  // namespace

EvalReport match_and_score(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts, int frame_index) {
  EvalReport r;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    GtResult res;
    res.frame_index = frame_index;
    res.gt_id = static_cast<int>(g);
    double best_iou = 0.0;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      try {
        const Overlap o = polygon_overlap(preds[p].quad, gts[g].quad);
        if (o.iou > best_iou) {
          best_iou = o.iou;
          res.matched_prediction = static_cast<int>(p);
          res.overlap = o;
        }
      } catch (const InvalidArgument& e) {
        if (res.error.empty()) res.error = "prediction " + std::to_string(p) + ": " + e.what();
      }
    }
    const std::u32string gt_text = decode_utf8(gts[g].text);
    res.edit_distance = res.matched_prediction
                            ? edit_distance(decode_utf8(preds[static_cast<std::size_t>(*res.matched_prediction)].text), gt_text)
                            : static_cast<int>(gt_text.size());
    r.per_gt.push_back(std::move(res));
  }
  fill_means(r);
  return r;
}

EvalReport evaluate_documents(const AnnotationDocument& pred, const AnnotationDocument& gt) {
  EvalReport total;
  for (const auto& gf : gt.frames) {
    std::vector<GroundTruth> gts;
    for (const auto& a : gf.annotations)
      if (!a.stale) gts.push_back({a.quad, a.label.value_or("")});
    if (gts.empty()) continue;
    std::vector<Prediction> preds;
    if (const FrameAnnotations* pf = pred.find(gf.index))
      for (const auto& a : pf->annotations)
        if (!a.stale) preds.push_back({a.quad, a.transcription ? *a.transcription : a.label.value_or("")});
    EvalReport part = match_and_score(preds, gts, gf.index);
    for (auto& g : part.per_gt) total.per_gt.push_back(std::move(g));
  }
  fill_means(total);
  return total;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& g : r.per_gt) {
    nlohmann::json j;
    j["frame"] = g.frame_index;
    j["gt"] = g.gt_id;
    j["prediction"] = g.matched_prediction ? nlohmann::json(*g.matched_prediction) : nlohmann::json(nullptr);
    j["iou"] = g.overlap.iou;
    j["iop"] = g.overlap.iop;
    j["iog"] = g.overlap.iog;
    j["edit_distance"] = g.edit_distance;
    if (!g.error.empty()) j["error"] = g.error;
    per.push_back(std::move(j));
  }
  return {{"version", 1},
          {"count", r.per_gt.size()},
          {"mean_iou", r.mean_iou},
          {"mean_iop", r.mean_iop},
          {"mean_iog", r.mean_iog},
          {"mean_edit_distance", r.mean_edit_distance},
          {"per_gt", std::move(per)}};
}

}  // namespace e2vts::metrics
