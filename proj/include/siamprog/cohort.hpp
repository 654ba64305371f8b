#ifndef SIAMPROG_COHORT_HPP_
#define SIAMPROG_COHORT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "siamprog/loss.hpp"

namespace siamprog {

enum class Diagnosis { NORMAL, MCI, AD };

std::string to_string(Diagnosis d);
Diagnosis diagnosis_from_string(const std::string& s);

struct Exam {
  std::string exam_date;  // ISO-8601 YYYY-MM-DD; lexicographic == chronological
  Diagnosis diagnosis = Diagnosis::MCI;
  std::string scan_ref;
};

struct ParticipantRecord {
  std::string participant_id;
  std::vector<Exam> exams;  // strictly ascending by date, one exam per date
};

enum class ParticipantClass { PROGRESSIVE_MCI, STABLE_MCI, AD_ONLY, OTHER };

struct LabeledScan {
  std::string participant_id;
  std::string scan_ref;
  ProgressionLevel rho = ProgressionLevel::from_tenths(10);
  std::string exam_date;
};

enum class Split { TRAIN, TEST };

std::string to_string(Split s);

struct TripletEntry {
  std::string anchor;    // conversion scan, rho = 1.0
  std::string positive;  // conversion scan from a different participant pool
  std::string negative;  // progressive-MCI scan, rho < 1.0
  ProgressionLevel rho = ProgressionLevel::from_tenths(9);
  Alpha alpha = alpha_of(ProgressionLevel::from_tenths(9));
};

struct TripletManifest {
  Split split = Split::TRAIN;
  uint64_t seed = 0;
  std::vector<TripletEntry> triplets;

  // Sorted distinct anchor scan refs; the anchor pool used at evaluation.
  std::vector<std::string> anchor_pool() const;
};

// PROGRESSIVE_MCI when an MCI exam precedes an AD exam; STABLE_MCI when MCI
// appears and AD never does; AD_ONLY when every exam is AD; OTHER otherwise.
ParticipantClass classify_participant(const ParticipantRecord& record);

// Ordinal labels for one progressive participant: the scans from the first
// MCI exam through the first AD exam get rho = 1.0 - 0.1*(k-1) ... 1.0;
// scans outside that window are excluded. Windows longer than 10 scans are
// rejected (not representable in 0.1 steps), as are trajectories that
// revert (NORMAL inside the window, or AD before the first MCI).
std::vector<LabeledScan> label_progression(const ParticipantRecord& record);

// label_progression over every PROGRESSIVE_MCI participant; other
// participants contribute nothing.
std::vector<LabeledScan> label_cohort(const std::vector<ParticipantRecord>& cohort);

// Exact histogram over tenths.
std::map<int, int64_t> distribution_table(const std::vector<LabeledScan>& labeled);

struct SplitOptions {
  double train_fraction = 0.8;
  uint64_t seed = 0;
  // Optional per-level sub-sampling cap on negatives (tenths -> max count),
  // applied before the participant partition. Empty = keep everything.
  std::map<int, int64_t> level_quotas;
};

// Partitions participants train/test by a seed-deterministic shuffle, then
// splits each side's conversion scans into participant-disjoint anchor and
// positive pools and pairs every negative with one sampled anchor and
// positive from its split.
std::pair<TripletManifest, TripletManifest> split_participants(
    const std::vector<LabeledScan>& negatives, const std::vector<LabeledScan>& ad_scans,
    const SplitOptions& options);

// Cohort CSV: header `participant_id,exam_date,diagnosis,scan_ref`, UTF-8,
// ISO-8601 dates, no quoting. Loading validates dates, diagnoses, exam
// ordering and per-date uniqueness.
std::vector<ParticipantRecord> load_cohort_csv(const std::filesystem::path& path);
void save_cohort_csv(const std::vector<ParticipantRecord>& cohort,
                     const std::filesystem::path& path);

// Manifest JSON: {split, seed, triplets[] {anchor, positive, negative, rho,
// alpha}}. Loading re-validates rho/alpha consistency.
void save_manifest(const TripletManifest& manifest, const std::filesystem::path& path);
TripletManifest load_manifest(const std::filesystem::path& path);

// Split-hygiene checks over manifests joined back to their cohort: refs
// resolve, no participant overlap between TRAIN and TEST, anchor/positive
// pools participant-disjoint, anchors and positives are AD scans, and
// alpha = 1.9 - rho holds exactly. Returns human-readable violations.
std::vector<std::string> verify_split(const std::vector<ParticipantRecord>& cohort,
                                      const TripletManifest& train, const TripletManifest& test);

}  // namespace siamprog

#endif  // SIAMPROG_COHORT_HPP_
