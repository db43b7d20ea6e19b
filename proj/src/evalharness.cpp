#include "mixer/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "mixer/kernels.hpp"
#include "mixer/rng.hpp"

namespace mixer {

const char* kind_name(GalleryKind k) {
  switch (k) {
    case GalleryKind::Mix: return "Mix";
    case GalleryKind::MixCam: return "MixCam";
    case GalleryKind::MixCamID: return "MixCamID";
    case GalleryKind::MixID: return "MixID";
    case GalleryKind::CrossModal: return "CrossModal";
    case GalleryKind::UniModal: return "UniModal";
  }
  return "?";
}

GalleryKind kind_from_name(const std::string& s) {
  for (GalleryKind k : {GalleryKind::Mix, GalleryKind::MixCam,
                        GalleryKind::MixCamID, GalleryKind::MixID,
                        GalleryKind::CrossModal, GalleryKind::UniModal})
    if (s == kind_name(k)) return k;
  throw ConfigError("unknown setting '" + s +
                    "'; valid: Mix, MixCam, MixCamID, MixID, CrossModal, "
                    "UniModal");
}

const char* embed_mode_name(EmbedMode m) {
  switch (m) {
    case EmbedMode::fused_rule: return "fused_rule";
    case EmbedMode::erased_only: return "erased_only";
    case EmbedMode::related_only: return "related_only";
  }
  return "?";
}

EmbedMode embed_mode_from_name(const std::string& s) {
  for (EmbedMode m : {EmbedMode::fused_rule, EmbedMode::erased_only,
                      EmbedMode::related_only})
    if (s == embed_mode_name(m)) return m;
  throw ConfigError("unknown embed mode '" + s +
                    "'; valid: fused_rule, erased_only, related_only");
}

std::vector<int> build_gallery(const EmbeddingRecord& q,
                               const std::vector<EmbeddingRecord>& all,
                               GalleryKind kind) {
  std::vector<int> out;
  out.reserve(all.size());
  for (size_t i = 0; i < all.size(); ++i) {
    const EmbeddingRecord& g = all[i];
    bool keep = true;
    switch (kind) {
      case GalleryKind::Mix:
        break;
      case GalleryKind::MixCam:
        keep = g.camera != q.camera;
        break;
      case GalleryKind::MixCamID:
        keep = !(g.camera == q.camera && g.id == q.id);
        break;
      case GalleryKind::MixID:
        keep = !(g.id == q.id && g.modality == q.modality);
        break;
      case GalleryKind::CrossModal:
        keep = g.modality != q.modality;
        break;
      case GalleryKind::UniModal:
        keep = g.modality == q.modality &&
               !(g.camera == q.camera && g.id == q.id);
        break;
    }
    if (keep) out.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

double cosine_raw(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size())
    throw DimensionError("pair_distance: embedding length mismatch");
  const double nu = std::sqrt(kernels::dot(u.data(), u.data(), u.size()));
  const double nv = std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
  if (nu <= 1e-12 || nv <= 1e-12)
    throw DegenerateVectorError("pair_distance: near-zero embedding norm");
  return kernels::dot(u.data(), v.data(), u.size()) / (nu * nv);
}

}  // namespace

double pair_distance(const EmbeddingRecord& q, const EmbeddingRecord& g,
                     EmbedMode mode) {
  switch (mode) {
    case EmbedMode::erased_only:
      return 1.0 - cosine_raw(q.z_e, g.z_e);
    case EmbedMode::related_only:
      return 1.0 - cosine_raw(q.z_r, g.z_r);
    case EmbedMode::fused_rule:
      return q.modality == g.modality ? 1.0 - cosine_raw(q.z_f, g.z_f)
                                      : 1.0 - cosine_raw(q.z_e, g.z_e);
  }
  throw ContractError("pair_distance: bad mode");
}

std::vector<int> rank(const EmbeddingRecord& q,
                      const std::vector<EmbeddingRecord>& all,
                      const std::vector<int>& gallery, EmbedMode mode) {
  std::vector<std::pair<double, int>> scored;
  scored.reserve(gallery.size());
  for (int gi : gallery) scored.emplace_back(pair_distance(q, all[gi], mode), gi);
  std::sort(scored.begin(), scored.end());
  std::vector<int> out;
  out.reserve(scored.size());
  for (const auto& [d, gi] : scored) out.push_back(gi);
  return out;
}

double average_precision(const std::vector<char>& positives) {
  int hits = 0;
  double ap = 0.0;
  for (size_t r = 0; r < positives.size(); ++r)
    if (positives[r]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  if (hits == 0) throw ContractError("average_precision: no positives");
  return ap / hits;
}

double inverse_precision(const std::vector<char>& positives) {
  int hits = 0;
  size_t last = 0;
  for (size_t r = 0; r < positives.size(); ++r)
    if (positives[r]) {
      ++hits;
      last = r + 1;
    }
  if (hits == 0) throw ContractError("inverse_precision: no positives");
  return static_cast<double>(hits) / static_cast<double>(last);
}

std::vector<std::vector<char>> single_shot_keep_sets(
    const std::vector<EmbeddingRecord>& records, int trials, uint64_t seed) {
  if (trials < 1) throw ConfigError("single_shot: trials must be >= 1");
  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (size_t i = 0; i < records.size(); ++i)
    groups[{records[i].id, records[i].camera}].push_back(static_cast<int>(i));

  constexpr uint64_t tag_shot = 201;
  std::vector<std::vector<char>> keeps;
  keeps.reserve(trials);
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, tag_shot, static_cast<uint64_t>(t)));
    std::vector<char> keep(records.size(), 0);
    for (const auto& [key, members] : groups)
      keep[members[rng.uniform_int(static_cast<int>(members.size()))]] = 1;
    keeps.push_back(std::move(keep));
  }
  return keeps;
}

namespace {

struct PerTrial {
  double r1 = 0, r5 = 0, r10 = 0, r20 = 0, ap = 0, inp = 0;
  int used = 0, skipped = 0;
};

// Normalized feature matrices so evaluate's inner loop is a dot product.
struct Prepared {
  int d_e = 0, d_r = 0, d_f = 0;
  std::vector<double> ne, nr, nf;

  static std::vector<double> normalize_block(
      const std::vector<EmbeddingRecord>& recs,
      const std::vector<double> EmbeddingRecord::*field) {
    if (recs.empty()) return {};
    const size_t d = (recs[0].*field).size();
    std::vector<double> out(recs.size() * d);
    for (size_t i = 0; i < recs.size(); ++i) {
      const std::vector<double>& v = recs[i].*field;
      if (v.size() != d)
        throw DimensionError("evaluate: inconsistent embedding dims");
      const double norm = std::sqrt(kernels::dot(v.data(), v.data(), d));
      if (norm <= 1e-12)
        throw DegenerateVectorError("evaluate: near-zero embedding norm");
      for (size_t k = 0; k < d; ++k) out[i * d + k] = v[k] / norm;
    }
    return out;
  }

  explicit Prepared(const std::vector<EmbeddingRecord>& recs) {
    if (recs.empty()) return;
    d_e = static_cast<int>(recs[0].z_e.size());
    d_r = static_cast<int>(recs[0].z_r.size());
    d_f = static_cast<int>(recs[0].z_f.size());
    ne = normalize_block(recs, &EmbeddingRecord::z_e);
    nr = normalize_block(recs, &EmbeddingRecord::z_r);
    nf = normalize_block(recs, &EmbeddingRecord::z_f);
  }

  double distance(const std::vector<EmbeddingRecord>& recs, int qi, int gi,
                  EmbedMode mode) const {
    switch (mode) {
      case EmbedMode::erased_only:
        return 1.0 - kernels::dot(&ne[static_cast<size_t>(qi) * d_e],
                                  &ne[static_cast<size_t>(gi) * d_e], d_e);
      case EmbedMode::related_only:
        return 1.0 - kernels::dot(&nr[static_cast<size_t>(qi) * d_r],
                                  &nr[static_cast<size_t>(gi) * d_r], d_r);
      case EmbedMode::fused_rule:
        if (recs[qi].modality == recs[gi].modality)
          return 1.0 - kernels::dot(&nf[static_cast<size_t>(qi) * d_f],
                                    &nf[static_cast<size_t>(gi) * d_f], d_f);
        return 1.0 - kernels::dot(&ne[static_cast<size_t>(qi) * d_e],
                                  &ne[static_cast<size_t>(gi) * d_e], d_e);
    }
    throw ContractError("evaluate: bad mode");
  }
};

PerTrial run_trial(const std::vector<EmbeddingRecord>& records,
                   const Prepared& prep, Modality query_mod,
                   const GallerySetting& setting,
                   const std::vector<char>* keep) {
  PerTrial out;
  std::vector<std::pair<double, int>> scored;
  for (size_t qi = 0; qi < records.size(); ++qi) {
    const EmbeddingRecord& q = records[qi];
    if (q.modality != query_mod) continue;
    const std::vector<int> gallery = build_gallery(q, records, setting.kind);

    scored.clear();
    for (int gi : gallery) {
      if (gi == static_cast<int>(qi)) continue;
      if (keep && !(*keep)[gi]) continue;
      scored.emplace_back(
          prep.distance(records, static_cast<int>(qi), gi, setting.embed_mode),
          gi);
    }
    std::sort(scored.begin(), scored.end());

    int P = 0;
    for (const auto& [d, gi] : scored) P += records[gi].id == q.id;
    if (P == 0) {
      ++out.skipped;
      continue;
    }
    ++out.used;

    int hits = 0;
    double ap = 0.0;
    size_t first = 0, last = 0;
    for (size_t r = 0; r < scored.size(); ++r) {
      if (records[scored[r].second].id != q.id) continue;
      ++hits;
      if (hits == 1) first = r + 1;
      last = r + 1;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    out.ap += ap / P;
    out.inp += static_cast<double>(P) / static_cast<double>(last);
    out.r1 += first <= 1;
    out.r5 += first <= 5;
    out.r10 += first <= 10;
    out.r20 += first <= 20;
  }
  return out;
}

EvalReport reduce_trials(const std::vector<PerTrial>& trials) {
  EvalReport rep;
  int counted = 0;
  for (const PerTrial& t : trials) {
    rep.num_queries_used += t.used;
    rep.num_queries_skipped += t.skipped;
    if (t.used == 0) continue;  // a fully-skipped trial contributes no means
    ++counted;
    rep.r1 += t.r1 / t.used;
    rep.r5 += t.r5 / t.used;
    rep.r10 += t.r10 / t.used;
    rep.r20 += t.r20 / t.used;
    rep.mAP += t.ap / t.used;
    rep.mINP += t.inp / t.used;
  }
  if (counted == 0)
    throw ProtocolError("evaluate: no usable queries in any trial");
  rep.r1 /= counted;
  rep.r5 /= counted;
  rep.r10 /= counted;
  rep.r20 /= counted;
  rep.mAP /= counted;
  rep.mINP /= counted;
  return rep;
}

}  // namespace

EvalReport evaluate(const std::vector<EmbeddingRecord>& records,
                    Modality query_mod, const GallerySetting& setting) {
  const Prepared prep(records);
  std::vector<PerTrial> trials;
  if (setting.single_shot_trials > 0) {
    const auto keeps = single_shot_keep_sets(records, setting.single_shot_trials,
                                             setting.single_shot_seed);
    for (const auto& keep : keeps)
      trials.push_back(run_trial(records, prep, query_mod, setting, &keep));
  } else {
    trials.push_back(run_trial(records, prep, query_mod, setting, nullptr));
  }
  return reduce_trials(trials);
}

namespace {

// Everything below reimplements the pipeline naively and independently of
// the fast path: plain loops, stable_sort, definition-form metrics.

bool brute_included(const EmbeddingRecord& q, const EmbeddingRecord& g,
                    GalleryKind kind) {
  const bool same_cam = g.camera == q.camera;
  const bool same_id = g.id == q.id;
  const bool same_mod = g.modality == q.modality;
  switch (kind) {
    case GalleryKind::Mix: return true;
    case GalleryKind::MixCam: return !same_cam;
    case GalleryKind::MixCamID: return !(same_cam && same_id);
    case GalleryKind::MixID: return !(same_id && same_mod);
    case GalleryKind::CrossModal: return !same_mod;
    case GalleryKind::UniModal: return same_mod && !(same_cam && same_id);
  }
  return false;
}

double brute_cosine(const std::vector<double>& u,
                    const std::vector<double>& v) {
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

double brute_distance(const EmbeddingRecord& q, const EmbeddingRecord& g,
                      EmbedMode mode) {
  if (mode == EmbedMode::erased_only) return 1.0 - brute_cosine(q.z_e, g.z_e);
  if (mode == EmbedMode::related_only) return 1.0 - brute_cosine(q.z_r, g.z_r);
  return q.modality == g.modality ? 1.0 - brute_cosine(q.z_f, g.z_f)
                                  : 1.0 - brute_cosine(q.z_e, g.z_e);
}

PerTrial brute_trial(const std::vector<EmbeddingRecord>& records,
                     Modality query_mod, const GallerySetting& setting,
                     const std::vector<char>* keep) {
  PerTrial out;
  for (size_t qi = 0; qi < records.size(); ++qi) {
    const EmbeddingRecord& q = records[qi];
    if (q.modality != query_mod) continue;

    std::vector<int> pool;
    for (size_t gi = 0; gi < records.size(); ++gi) {
      if (gi == qi) continue;
      if (keep && !(*keep)[gi]) continue;
      if (brute_included(q, records[gi], setting.kind))
        pool.push_back(static_cast<int>(gi));
    }
    std::vector<double> dist(pool.size());
    for (size_t p = 0; p < pool.size(); ++p)
      dist[p] = brute_distance(q, records[pool[p]], setting.embed_mode);

    std::vector<int> order(pool.size());
    for (size_t p = 0; p < pool.size(); ++p) order[p] = static_cast<int>(p);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dist[a] < dist[b]; });

    std::vector<char> positive(order.size());
    int P = 0;
    for (size_t r = 0; r < order.size(); ++r) {
      positive[r] = records[pool[order[r]]].id == q.id;
      P += positive[r];
    }
    if (P == 0) {
      ++out.skipped;
      continue;
    }
    ++out.used;
    out.ap += average_precision(positive);
    out.inp += inverse_precision(positive);
    size_t first = 0;
    for (size_t r = 0; r < positive.size(); ++r)
      if (positive[r]) {
        first = r + 1;
        break;
      }
    out.r1 += first <= 1;
    out.r5 += first <= 5;
    out.r10 += first <= 10;
    out.r20 += first <= 20;
  }
  return out;
}

}  // namespace

EvalReport brute_force_metrics(const std::vector<EmbeddingRecord>& records,
                               Modality query_mod,
                               const GallerySetting& setting) {
  std::vector<PerTrial> trials;
  if (setting.single_shot_trials > 0) {
    const auto keeps = single_shot_keep_sets(records, setting.single_shot_trials,
                                             setting.single_shot_seed);
    for (const auto& keep : keeps)
      trials.push_back(brute_trial(records, query_mod, setting, &keep));
  } else {
    trials.push_back(brute_trial(records, query_mod, setting, nullptr));
  }
  return reduce_trials(trials);
}

DistanceDistribution distance_distribution(
    const std::vector<EmbeddingRecord>& records,
    const GallerySetting& setting) {
  const Prepared prep(records);
  DistanceDistribution d;
  double intra_sum = 0, intra_sq = 0, inter_sum = 0, inter_sq = 0;
  for (size_t qi = 0; qi < records.size(); ++qi) {
    const std::vector<int> gallery =
        build_gallery(records[qi], records, setting.kind);
    for (int gi : gallery) {
      if (gi == static_cast<int>(qi)) continue;
      const double dist = prep.distance(records, static_cast<int>(qi), gi,
                                        setting.embed_mode);
      int bin = static_cast<int>(dist / 2.0 * DistanceDistribution::kBins);
      bin = std::clamp(bin, 0, DistanceDistribution::kBins - 1);
      if (records[gi].id == records[qi].id) {
        ++d.intra_count;
        ++d.intra_bins[bin];
        intra_sum += dist;
        intra_sq += dist * dist;
      } else {
        ++d.inter_count;
        ++d.inter_bins[bin];
        inter_sum += dist;
        inter_sq += dist * dist;
      }
    }
  }
  if (d.intra_count) {
    d.intra_mean = intra_sum / d.intra_count;
    d.intra_var = intra_sq / d.intra_count - d.intra_mean * d.intra_mean;
  }
  if (d.inter_count) {
    d.inter_mean = inter_sum / d.inter_count;
    d.inter_var = inter_sq / d.inter_count - d.inter_mean * d.inter_mean;
  }
  return d;
}

void write_histogram(const DistanceDistribution& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("histogram: cannot open " + path + " for write");
  os << "bin_lo,bin_hi,intra_count,inter_count\n";
  char lo[32], hi[32];
  for (int b = 0; b < DistanceDistribution::kBins; ++b) {
    std::snprintf(lo, sizeof(lo), "%.17g",
                  2.0 * b / DistanceDistribution::kBins);
    std::snprintf(hi, sizeof(hi), "%.17g",
                  2.0 * (b + 1) / DistanceDistribution::kBins);
    os << lo << ',' << hi << ',' << d.intra_bins[b] << ',' << d.inter_bins[b]
       << "\n";
  }
}

void write_report(const std::vector<ReportRow>& rows,
                  const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("report: cannot open " + path + " for write");
  os << "setting,embed_mode,query_modality,R1,R5,R10,R20,mAP,mINP,used,"
        "skipped\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (const ReportRow& r : rows) {
    os << kind_name(r.setting.kind) << ','
       << embed_mode_name(r.setting.embed_mode) << ','
       << modality_char(r.query_modality);
    put(r.report.r1);
    put(r.report.r5);
    put(r.report.r10);
    put(r.report.r20);
    put(r.report.mAP);
    put(r.report.mINP);
    os << ',' << r.report.num_queries_used << ','
       << r.report.num_queries_skipped << "\n";
  }
}

}  // namespace mixer
