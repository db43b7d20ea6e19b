#ifndef MIXER_EVALHARNESS_HPP_
#define MIXER_EVALHARNESS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mixer/model.hpp"

namespace mixer {

enum class GalleryKind { Mix, MixCam, MixCamID, MixID, CrossModal, UniModal };
enum class EmbedMode { fused_rule, erased_only, related_only };

const char* kind_name(GalleryKind k);
GalleryKind kind_from_name(const std::string& s);  // error lists valid names
const char* embed_mode_name(EmbedMode m);
EmbedMode embed_mode_from_name(const std::string& s);

struct GallerySetting {
  GalleryKind kind = GalleryKind::Mix;
  EmbedMode embed_mode = EmbedMode::fused_rule;
  int single_shot_trials = 0;  // 0 = all-shot
  uint64_t single_shot_seed = 0;
};

struct EvalReport {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0, r20 = 0.0;
  double mAP = 0.0;
  double mINP = 0.0;
  int num_queries_used = 0;
  int num_queries_skipped = 0;
};

// Indices into `all` passing the protocol filter. The query's own record is
// not special-cased here; evaluate removes it before ranking.
std::vector<int> build_gallery(const EmbeddingRecord& query,
                               const std::vector<EmbeddingRecord>& all,
                               GalleryKind kind);

// fused_rule: fused features for same-modality pairs, erased for cross-modal;
// fixed modes use one feature for every pair. Always 1 - cosine.
double pair_distance(const EmbeddingRecord& q, const EmbeddingRecord& g,
                     EmbedMode mode);

// Ascending distance; ties broken by ascending gallery index.
std::vector<int> rank(const EmbeddingRecord& q,
                      const std::vector<EmbeddingRecord>& all,
                      const std::vector<int>& gallery, EmbedMode mode);

// positives are flags in rank order; both require at least one positive
double average_precision(const std::vector<char>& positives);
double inverse_precision(const std::vector<char>& positives);

// One gallery keep-set per trial: a uniformly chosen record per (id, camera).
std::vector<std::vector<char>> single_shot_keep_sets(
    const std::vector<EmbeddingRecord>& records, int trials, uint64_t seed);

// Queries are all records of query_mod; each is ranked against the filtered
// pool minus itself. Queries without a positive are skipped. In single-shot
// mode metrics are means over trials and used/skipped are summed.
EvalReport evaluate(const std::vector<EmbeddingRecord>& records,
                    Modality query_mod, const GallerySetting& setting);

// Independent oracle: naive per-pair distance loops, fully materialized
// rankings, definition-level metric formulas.
EvalReport brute_force_metrics(const std::vector<EmbeddingRecord>& records,
                               Modality query_mod,
                               const GallerySetting& setting);

struct DistanceDistribution {
  static constexpr int kBins = 64;  // over [0, 2]
  double intra_mean = 0.0, intra_var = 0.0;
  double inter_mean = 0.0, inter_var = 0.0;
  uint64_t intra_count = 0, inter_count = 0;
  uint64_t intra_bins[kBins] = {0};
  uint64_t inter_bins[kBins] = {0};
};

// Ordered (query, gallery) pairs under the setting's filter and distance
// rule; intra = same identity.
DistanceDistribution distance_distribution(
    const std::vector<EmbeddingRecord>& records, const GallerySetting& setting);

void write_histogram(const DistanceDistribution& d, const std::string& path);

struct ReportRow {
  GallerySetting setting;
  Modality query_modality = Modality::I;
  EvalReport report;
};

void write_report(const std::vector<ReportRow>& rows, const std::string& path);

}  // namespace mixer

#endif  // MIXER_EVALHARNESS_HPP_
