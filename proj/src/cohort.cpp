#include "siamprog/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "siamprog/rng.hpp"

namespace siamprog {

std::string to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::NORMAL: return "NORMAL";
    case Diagnosis::MCI: return "MCI";
    case Diagnosis::AD: return "AD";
  }
  throw Error("unreachable diagnosis value");
}

Diagnosis diagnosis_from_string(const std::string& s) {
  if (s == "NORMAL") return Diagnosis::NORMAL;
  if (s == "MCI") return Diagnosis::MCI;
  if (s == "AD") return Diagnosis::AD;
  throw ValidationError("unknown diagnosis \"" + s + "\" (expected NORMAL, MCI, or AD)");
}

std::string to_string(Split s) { return s == Split::TRAIN ? "TRAIN" : "TEST"; }

std::vector<std::string> TripletManifest::anchor_pool() const {
  std::set<std::string> pool;
  for (const TripletEntry& t : triplets) pool.insert(t.anchor);
  return {pool.begin(), pool.end()};
}

namespace {

bool valid_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  const int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

void validate_record(const ParticipantRecord& record) {
  if (record.exams.empty()) {
    throw ValidationError("participant " + record.participant_id + " has no exams");
  }
  for (size_t i = 0; i < record.exams.size(); ++i) {
    if (!valid_iso_date(record.exams[i].exam_date)) {
      throw ValidationError("participant " + record.participant_id + ": bad exam date \"" +
                            record.exams[i].exam_date + "\"");
    }
    if (i > 0 && record.exams[i - 1].exam_date >= record.exams[i].exam_date) {
      throw ValidationError("participant " + record.participant_id +
                            ": exams must be strictly ascending by date (at most one per date)");
    }
  }
}

}  // namespace

ParticipantClass classify_participant(const ParticipantRecord& record) {
  validate_record(record);
  bool saw_mci = false;
  bool mci_before_ad = false;
  bool any_mci = false, any_ad = false, all_ad = true;
  for (const Exam& exam : record.exams) {
    switch (exam.diagnosis) {
      case Diagnosis::MCI:
        saw_mci = true;
        any_mci = true;
        all_ad = false;
        break;
      case Diagnosis::AD:
        any_ad = true;
        if (saw_mci) mci_before_ad = true;
        break;
      case Diagnosis::NORMAL:
        all_ad = false;
        break;
    }
  }
  if (mci_before_ad) return ParticipantClass::PROGRESSIVE_MCI;
  if (any_mci && !any_ad) return ParticipantClass::STABLE_MCI;
  if (all_ad) return ParticipantClass::AD_ONLY;
  return ParticipantClass::OTHER;
}

std::vector<LabeledScan> label_progression(const ParticipantRecord& record) {
  if (classify_participant(record) != ParticipantClass::PROGRESSIVE_MCI) {
    throw ValidationError("participant " + record.participant_id + " is not progressive MCI");
  }

  size_t first_mci = record.exams.size(), first_ad = record.exams.size();
  for (size_t i = 0; i < record.exams.size(); ++i) {
    if (record.exams[i].diagnosis == Diagnosis::MCI && first_mci == record.exams.size()) {
      first_mci = i;
    }
    if (record.exams[i].diagnosis == Diagnosis::AD && first_ad == record.exams.size()) {
      first_ad = i;
    }
  }
  if (first_ad < first_mci) {
    throw ValidationError("participant " + record.participant_id +
                          ": AD precedes the first MCI exam (reverting trajectory)");
  }

  const size_t window = first_ad - first_mci + 1;
  if (window > 10) {
    throw ValidationError("participant " + record.participant_id + ": " +
                          std::to_string(window) +
                          " scans between first MCI and first AD cannot be represented in 10 "
                          "progression levels");
  }
  for (size_t i = first_mci; i < first_ad; ++i) {
    if (record.exams[i].diagnosis == Diagnosis::NORMAL) {
      throw ValidationError("participant " + record.participant_id +
                            ": reverts to NORMAL inside the MCI-to-AD window");
    }
  }

  // rho counts scans backwards from the conversion scan: the first AD exam
  // gets 1.0 and each earlier scan in the window steps down by 0.1.
  std::vector<LabeledScan> out;
  out.reserve(window);
  for (size_t i = first_mci; i <= first_ad; ++i) {
    const int tenths = 10 - static_cast<int>(first_ad - i);
    out.push_back({record.participant_id, record.exams[i].scan_ref,
                   ProgressionLevel::from_tenths(tenths), record.exams[i].exam_date});
  }
  return out;
}

std::vector<LabeledScan> label_cohort(const std::vector<ParticipantRecord>& cohort) {
  std::vector<LabeledScan> out;
  for (const ParticipantRecord& record : cohort) {
    if (classify_participant(record) == ParticipantClass::PROGRESSIVE_MCI) {
      std::vector<LabeledScan> scans = label_progression(record);
      out.insert(out.end(), scans.begin(), scans.end());
    }
  }
  return out;
}

std::map<int, int64_t> distribution_table(const std::vector<LabeledScan>& labeled) {
  std::map<int, int64_t> table;
  for (const LabeledScan& scan : labeled) table[scan.rho.tenths()] += 1;
  return table;
}

namespace {

// Deterministic base order before any shuffling.
void sort_scans(std::vector<LabeledScan>& scans) {
  std::sort(scans.begin(), scans.end(), [](const LabeledScan& a, const LabeledScan& b) {
    if (a.participant_id != b.participant_id) return a.participant_id < b.participant_id;
    if (a.exam_date != b.exam_date) return a.exam_date < b.exam_date;
    return a.scan_ref < b.scan_ref;
  });
}

TripletManifest build_split_manifest(Split split, const std::vector<LabeledScan>& negatives,
                                     const std::vector<LabeledScan>& ad_scans,
                                     const std::set<std::string>& members, uint64_t seed) {
  std::vector<LabeledScan> split_ads;
  for (const LabeledScan& scan : ad_scans) {
    if (members.count(scan.participant_id)) split_ads.push_back(scan);
  }
  sort_scans(split_ads);

  std::vector<std::string> ad_pids;
  for (const LabeledScan& scan : split_ads) {
    if (ad_pids.empty() || ad_pids.back() != scan.participant_id) {
      ad_pids.push_back(scan.participant_id);
    }
  }
  std::sort(ad_pids.begin(), ad_pids.end());
  ad_pids.erase(std::unique(ad_pids.begin(), ad_pids.end()), ad_pids.end());
  if (ad_pids.size() < 2) {
    throw ValidationError("split " + to_string(split) +
                          ": fewer than 2 AD participants; cannot form disjoint anchor and "
                          "positive pools");
  }

  const int split_tag = split == Split::TRAIN ? 0 : 1;
  Rng pool_rng(mix64(seed, 3, static_cast<uint64_t>(split_tag)));
  shuffle(ad_pids, pool_rng);
  const size_t n_anchor = (ad_pids.size() + 1) / 2;
  const std::set<std::string> anchor_pids(ad_pids.begin(), ad_pids.begin() + n_anchor);

  std::vector<std::string> anchor_pool, positive_pool;
  for (const LabeledScan& scan : split_ads) {
    (anchor_pids.count(scan.participant_id) ? anchor_pool : positive_pool)
        .push_back(scan.scan_ref);
  }
  if (anchor_pool.empty() || positive_pool.empty()) {
    throw ValidationError("split " + to_string(split) + ": empty anchor or positive pool");
  }

  std::vector<LabeledScan> split_negatives;
  for (const LabeledScan& scan : negatives) {
    if (members.count(scan.participant_id)) split_negatives.push_back(scan);
  }
  sort_scans(split_negatives);

  TripletManifest manifest;
  manifest.split = split;
  manifest.seed = seed;
  Rng pair_rng(mix64(seed, 4, static_cast<uint64_t>(split_tag)));
  for (const LabeledScan& neg : split_negatives) {
    TripletEntry entry;
    entry.anchor = anchor_pool[pair_rng.below(anchor_pool.size())];
    entry.positive = positive_pool[pair_rng.below(positive_pool.size())];
    entry.negative = neg.scan_ref;
    entry.rho = neg.rho;
    entry.alpha = alpha_of(neg.rho);
    manifest.triplets.push_back(std::move(entry));
  }
  return manifest;
}

}  // namespace

std::pair<TripletManifest, TripletManifest> split_participants(
    const std::vector<LabeledScan>& negatives, const std::vector<LabeledScan>& ad_scans,
    const SplitOptions& options) {
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw ValidationError("train_fraction must be in (0,1), got " +
                          std::to_string(options.train_fraction));
  }
  for (const LabeledScan& scan : negatives) {
    if (scan.rho.is_conversion()) {
      throw ValidationError("negative scan " + scan.scan_ref + " has rho = 1.0");
    }
  }
  for (const LabeledScan& scan : ad_scans) {
    if (!scan.rho.is_conversion()) {
      throw ValidationError("anchor/positive scan " + scan.scan_ref + " has rho < 1.0");
    }
  }

  // Optional per-level sub-sampling of negatives, before the participant
  // partition (mirrors selecting the working set first, then splitting).
  std::vector<LabeledScan> kept = negatives;
  sort_scans(kept);
  if (!options.level_quotas.empty()) {
    std::vector<LabeledScan> sampled;
    for (const auto& [tenths, quota] : options.level_quotas) {
      if (quota < 0) throw ValidationError("negative quota for level " + std::to_string(tenths));
    }
    std::map<int, std::vector<LabeledScan>> by_level;
    for (const LabeledScan& scan : kept) by_level[scan.rho.tenths()].push_back(scan);
    for (auto& [tenths, group] : by_level) {
      const auto it = options.level_quotas.find(tenths);
      if (it != options.level_quotas.end() && static_cast<int64_t>(group.size()) > it->second) {
        Rng rng(mix64(options.seed, 1, static_cast<uint64_t>(tenths)));
        shuffle(group, rng);
        group.resize(static_cast<size_t>(it->second));
        sort_scans(group);
      }
      sampled.insert(sampled.end(), group.begin(), group.end());
    }
    kept = std::move(sampled);
  }

  std::set<std::string> pid_set;
  for (const LabeledScan& scan : kept) pid_set.insert(scan.participant_id);
  for (const LabeledScan& scan : ad_scans) pid_set.insert(scan.participant_id);
  std::vector<std::string> pids(pid_set.begin(), pid_set.end());

  Rng part_rng(mix64(options.seed, 2));
  shuffle(pids, part_rng);
  const size_t n_train = static_cast<size_t>(options.train_fraction * pids.size());
  if (n_train == 0 || n_train == pids.size()) {
    throw ValidationError("participant partition leaves an empty split (have " +
                          std::to_string(pids.size()) + " participants)");
  }
  const std::set<std::string> train_pids(pids.begin(), pids.begin() + n_train);
  const std::set<std::string> test_pids(pids.begin() + n_train, pids.end());

  TripletManifest train =
      build_split_manifest(Split::TRAIN, kept, ad_scans, train_pids, options.seed);
  TripletManifest test = build_split_manifest(Split::TEST, kept, ad_scans, test_pids, options.seed);

  // Internal consistency: the partition above makes overlap impossible;
  // anything else is a bug worth failing loudly on.
  for (const std::string& pid : train_pids) {
    if (test_pids.count(pid)) throw Error("internal: participant in both splits: " + pid);
  }
  return {std::move(train), std::move(test)};
}

// --- CSV ---------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

std::vector<ParticipantRecord> load_cohort_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open cohort CSV: " + path.string());

  std::string line;
  if (!std::getline(is, line)) throw ValidationError("empty cohort CSV: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "participant_id,exam_date,diagnosis,scan_ref") {
    throw ValidationError("cohort CSV must start with header "
                          "participant_id,exam_date,diagnosis,scan_ref");
  }

  std::map<std::string, ParticipantRecord> by_pid;
  std::vector<std::string> order;
  size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 4) {
      throw ValidationError("cohort CSV line " + std::to_string(line_no) + ": expected 4 fields");
    }
    if (f[0].empty() || f[3].empty()) {
      throw ValidationError("cohort CSV line " + std::to_string(line_no) +
                            ": empty participant_id or scan_ref");
    }
    auto [it, inserted] = by_pid.try_emplace(f[0]);
    if (inserted) {
      it->second.participant_id = f[0];
      order.push_back(f[0]);
    }
    it->second.exams.push_back({f[1], diagnosis_from_string(f[2]), f[3]});
  }

  std::vector<ParticipantRecord> cohort;
  cohort.reserve(order.size());
  std::set<std::string> seen_refs;
  for (const std::string& pid : order) {
    ParticipantRecord& record = by_pid[pid];
    std::sort(record.exams.begin(), record.exams.end(),
              [](const Exam& a, const Exam& b) { return a.exam_date < b.exam_date; });
    validate_record(record);
    for (const Exam& exam : record.exams) {
      if (!seen_refs.insert(exam.scan_ref).second) {
        throw ValidationError("duplicate scan_ref in cohort: " + exam.scan_ref);
      }
    }
    cohort.push_back(std::move(record));
  }
  if (cohort.empty()) throw ValidationError("cohort CSV has no records: " + path.string());
  return cohort;
}

void save_cohort_csv(const std::vector<ParticipantRecord>& cohort,
                     const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open cohort CSV for writing: " + path.string());
  os << "participant_id,exam_date,diagnosis,scan_ref\n";
  for (const ParticipantRecord& record : cohort) {
    for (const Exam& exam : record.exams) {
      os << record.participant_id << ',' << exam.exam_date << ',' << to_string(exam.diagnosis)
         << ',' << exam.scan_ref << '\n';
    }
  }
  if (!os) throw IoError("failed writing cohort CSV: " + path.string());
}

// --- manifest JSON --------------------------------------------------------------

void save_manifest(const TripletManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json triplets = nlohmann::json::array();
  for (const TripletEntry& t : manifest.triplets) {
    triplets.push_back({{"anchor", t.anchor},
                        {"positive", t.positive},
                        {"negative", t.negative},
                        {"rho", t.rho.value()},
                        {"alpha", t.alpha.value()}});
  }
  const nlohmann::json doc = {
      {"split", to_string(manifest.split)}, {"seed", manifest.seed}, {"triplets", triplets}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot open manifest for writing: " + path.string());
  os << doc.dump(2) << '\n';
  if (!os) throw IoError("failed writing manifest: " + path.string());
}

TripletManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad manifest JSON in " + path.string() + ": " + e.what());
  }
  const std::string context = "manifest " + path.string();
  jsonu::reject_unknown_keys(doc, {"split", "seed", "triplets"}, context);

  TripletManifest manifest;
  const auto split = jsonu::require<std::string>(doc, "split", context);
  if (split == "TRAIN") {
    manifest.split = Split::TRAIN;
  } else if (split == "TEST") {
    manifest.split = Split::TEST;
  } else {
    throw ValidationError(context + ": split must be TRAIN or TEST");
  }
  manifest.seed = jsonu::require<uint64_t>(doc, "seed", context);
  if (!doc.contains("triplets") || !doc.at("triplets").is_array()) {
    throw ValidationError(context + ": missing triplets array");
  }
  for (const auto& t : doc.at("triplets")) {
    jsonu::reject_unknown_keys(t, {"anchor", "positive", "negative", "rho", "alpha"}, context);
    TripletEntry entry;
    entry.anchor = jsonu::require<std::string>(t, "anchor", context);
    entry.positive = jsonu::require<std::string>(t, "positive", context);
    entry.negative = jsonu::require<std::string>(t, "negative", context);
    entry.rho = ProgressionLevel::from_value(jsonu::require<double>(t, "rho", context));
    entry.alpha = alpha_of(entry.rho);
    const double alpha = jsonu::require<double>(t, "alpha", context);
    if (std::fabs(alpha - entry.alpha.value()) > 1e-9) {
      throw ValidationError(context + ": alpha " + std::to_string(alpha) +
                            " does not equal 1.9 - rho for rho " + std::to_string(entry.rho.value()));
    }
    manifest.triplets.push_back(std::move(entry));
  }
  return manifest;
}

// --- verify ----------------------------------------------------------------------

namespace {

void collect_pids(const TripletManifest& manifest,
                  const std::map<std::string, const ParticipantRecord*>& by_ref,
                  const std::string& label, std::set<std::string>& all,
                  std::set<std::string>& anchor_pids, std::set<std::string>& positive_pids,
                  std::vector<std::string>& violations) {
  for (const TripletEntry& t : manifest.triplets) {
    for (const auto& [role, ref] :
         {std::pair<const char*, const std::string*>{"anchor", &t.anchor},
          {"positive", &t.positive},
          {"negative", &t.negative}}) {
      const auto it = by_ref.find(*ref);
      if (it == by_ref.end()) {
        violations.push_back(label + ": " + role + " scan_ref not in cohort: " + *ref);
        continue;
      }
      all.insert(it->second->participant_id);
      if (std::string(role) == "anchor") anchor_pids.insert(it->second->participant_id);
      if (std::string(role) == "positive") positive_pids.insert(it->second->participant_id);
    }
  }
}

}  // namespace

std::vector<std::string> verify_split(const std::vector<ParticipantRecord>& cohort,
                                      const TripletManifest& train, const TripletManifest& test) {
  std::vector<std::string> violations;
  if (train.split != Split::TRAIN) violations.push_back("train manifest is not marked TRAIN");
  if (test.split != Split::TEST) violations.push_back("test manifest is not marked TEST");

  std::map<std::string, const ParticipantRecord*> by_ref;
  std::map<std::string, Diagnosis> diagnosis_by_ref;
  for (const ParticipantRecord& record : cohort) {
    for (const Exam& exam : record.exams) {
      by_ref[exam.scan_ref] = &record;
      diagnosis_by_ref[exam.scan_ref] = exam.diagnosis;
    }
  }

  std::set<std::string> train_pids, test_pids;
  std::set<std::string> train_anchor, train_positive, test_anchor, test_positive;
  collect_pids(train, by_ref, "TRAIN", train_pids, train_anchor, train_positive, violations);
  collect_pids(test, by_ref, "TEST", test_pids, test_anchor, test_positive, violations);

  for (const std::string& pid : train_pids) {
    if (test_pids.count(pid)) {
      violations.push_back("participant appears in both TRAIN and TEST: " + pid);
    }
  }
  for (const std::string& pid : train_anchor) {
    if (train_positive.count(pid)) {
      violations.push_back("TRAIN anchor/positive pools share participant: " + pid);
    }
  }
  for (const std::string& pid : test_anchor) {
    if (test_positive.count(pid)) {
      violations.push_back("TEST anchor/positive pools share participant: " + pid);
    }
  }

  for (const auto& [label, manifest] :
       {std::pair<const char*, const TripletManifest*>{"TRAIN", &train}, {"TEST", &test}}) {
    for (const TripletEntry& t : manifest->triplets) {
      if (t.rho.is_conversion()) {
        violations.push_back(std::string(label) + ": negative with rho = 1.0: " + t.negative);
      }
      for (const std::string* ref : {&t.anchor, &t.positive}) {
        const auto it = diagnosis_by_ref.find(*ref);
        if (it != diagnosis_by_ref.end() && it->second != Diagnosis::AD) {
          violations.push_back(std::string(label) + ": non-AD scan used as anchor/positive: " + *ref);
        }
      }
    }
  }
  return violations;
}

}  // namespace siamprog
