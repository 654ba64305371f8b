#include "siamprog/synth.hpp"

#include <cmath>
#include <cstdio>

#include "siamprog/rng.hpp"
#include "siamprog/volume.hpp"

namespace siamprog {

namespace {

// Scaled-down shape of the real image distribution across levels
// (monotone toward conversion, heavy right tail), at 80 participants.
const std::map<int, int64_t> kDefaultQuotas = {{2, 1},  {3, 1},  {4, 2},  {5, 3},  {6, 7},
                                               {7, 16}, {8, 38}, {9, 80}, {10, 80}};
constexpr int kDefaultParticipants = 80;

}  // namespace

std::map<int, int64_t> resolve_quotas(const SynthConfig& config) {
  std::map<int, int64_t> quotas = config.level_quotas;
  if (quotas.empty()) {
    const int participants = config.participants > 0 ? config.participants : kDefaultParticipants;
    const double r = static_cast<double>(participants) / kDefaultParticipants;
    int64_t prev = 0;
    for (const auto& [tenths, count] : kDefaultQuotas) {
      int64_t scaled = static_cast<int64_t>(std::llround(count * r));
      if (scaled < prev && tenths < 10) scaled = prev;  // keep realizable under rounding
      if (tenths == 10) scaled = prev;
      if (scaled > 0) quotas[tenths] = scaled;
      prev = scaled;
    }
  }

  for (const auto& [tenths, count] : quotas) {
    if (tenths < 1 || tenths > 10) {
      throw ConfigError("synth: quota level must be in [0.1, 1.0]");
    }
    if (count < 0) throw ConfigError("synth: quota counts must be non-negative");
  }
  // A trajectory starting at level t contributes one scan to t and to every
  // later level, so counts must be non-decreasing through 0.9 (absent = 0)
  // and quota(1.0) must equal quota(0.9).
  int64_t prev = 0;
  for (int t = 1; t <= 9; ++t) {
    const int64_t count = quotas.count(t) ? quotas.at(t) : 0;
    if (count < prev) {
      throw ConfigError("synth: unrealizable quotas; count at level " + std::to_string(t / 10.0) +
                        " is below the count at the previous level");
    }
    prev = count;
  }
  const int64_t c10 = quotas.count(10) ? quotas.at(10) : 0;
  if (c10 != prev) {
    throw ConfigError(
        "synth: quota(1.0) and quota(0.9) must both equal the participant count (every "
        "participant contributes one 0.9 scan and one conversion scan)");
  }
  if (c10 < 1) throw ConfigError("synth: need at least one participant");
  if (config.participants > 0 && config.participants != c10) {
    throw ConfigError("synth: participants " + std::to_string(config.participants) +
                      " disagrees with quota(1.0) " + std::to_string(c10));
  }
  return quotas;
}

std::vector<double> signal_template(const Shape& volume_shape) {
  const int c = volume_shape[0], d = volume_shape[1], h = volume_shape[2], w = volume_shape[3];
  std::vector<double> tmpl(static_cast<size_t>(c) * d * h * w);
  size_t idx = 0;
  double sq_sum = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    for (int z = 0; z < d; ++z) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x, ++idx) {
          // Central blob shrinking against an off-center one; loosely an
          // atrophy-like pattern, exact form immaterial but fixed.
          const double zn = d > 1 ? (2.0 * z / (d - 1) - 1.0) : 0.0;
          const double yn = h > 1 ? (2.0 * y / (h - 1) - 1.0) : 0.0;
          const double xn = w > 1 ? (2.0 * x / (w - 1) - 1.0) : 0.0;
          const double r2_center = zn * zn + yn * yn + xn * xn;
          const double r2_off = (zn - 0.4) * (zn - 0.4) + (yn + 0.3) * (yn + 0.3) + xn * xn;
          const double v = std::exp(-4.0 * r2_center) - 0.7 * std::exp(-6.0 * r2_off);
          tmpl[idx] = v * (1.0 + 0.1 * ch);
          sq_sum += tmpl[idx] * tmpl[idx];
        }
      }
    }
  }
  const double rms = std::sqrt(sq_sum / static_cast<double>(tmpl.size()));
  for (double& v : tmpl) v /= rms;
  return tmpl;
}

namespace {

std::vector<double> baseline_pattern(const Shape& volume_shape) {
  const int c = volume_shape[0], d = volume_shape[1], h = volume_shape[2], w = volume_shape[3];
  std::vector<double> base(static_cast<size_t>(c) * d * h * w);
  size_t idx = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int z = 0; z < d; ++z) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x, ++idx) {
          base[idx] = 0.5 * std::sin(2.0 * M_PI * (x + 1) / (w + 1)) *
                          std::cos(2.0 * M_PI * (y + 1) / (h + 1)) +
                      0.3 * std::cos(2.0 * M_PI * (z + 1) / (d + 1)) + 0.1 * ch;
        }
      }
    }
  }
  return base;
}

}  // namespace

GenerateResult generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
  if (config.volume_shape.size() != 4) {
    throw ConfigError("synth: volume_shape must be [C,D,H,W]");
  }
  for (int e : config.volume_shape) {
    if (e <= 0) throw ConfigError("synth: volume_shape extents must be positive");
  }
  if (!(config.signal_strength > 0.0)) throw ConfigError("synth: signal_strength must be > 0");
  if (config.noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be >= 0");
  const std::map<int, int64_t> quotas = resolve_quotas(config);

  // Participants starting at level t: quota(t) - quota(t-1) over 0.1..0.9.
  std::vector<int> starts;  // start tenths per participant, ascending
  int64_t prev = 0;
  for (int t = 1; t <= 9; ++t) {
    const int64_t count = quotas.count(t) ? quotas.at(t) : 0;
    for (int64_t i = prev; i < count; ++i) starts.push_back(t);
    prev = count;
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "volumes", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "volumes").string() + ": " + ec.message());

  const std::vector<double> base = baseline_pattern(config.volume_shape);
  const std::vector<double> tmpl = signal_template(config.volume_shape);

  const int id_width = std::max(3, static_cast<int>(std::to_string(starts.size()).size()));
  std::vector<ParticipantRecord> cohort;
  std::vector<LabeledScan> labeled;
  cohort.reserve(starts.size());

  for (size_t p = 0; p < starts.size(); ++p) {
    char pid_buf[32];
    std::snprintf(pid_buf, sizeof pid_buf, "P%0*d", id_width, static_cast<int>(p + 1));
    ParticipantRecord record;
    record.participant_id = pid_buf;

    const int start = starts[p];
    const int n_scans = 11 - start;
    for (int s = 0; s < n_scans; ++s) {
      const int tenths = start + s;
      const double rho = tenths / 10.0;

      char date_buf[16];
      std::snprintf(date_buf, sizeof date_buf, "%04d-06-15", (2010 - (n_scans - 1) + s) % 10000);
      char ref_buf[64];
      std::snprintf(ref_buf, sizeof ref_buf, "volumes/%s_%02d.vol", pid_buf, s);

      Tensor volume = Tensor::zeros(config.volume_shape);
      Rng noise(mix64(mix64(config.seed, 6, p), static_cast<uint64_t>(s)));
      for (size_t i = 0; i < volume.data.size(); ++i) {
        double v = base[i] + rho * config.signal_strength * tmpl[i];
        if (config.noise_sigma > 0.0) v += config.noise_sigma * noise.normal();
        volume.data[i] = v;
      }
      write_volume(volume, out_dir / ref_buf);

      record.exams.push_back(
          {date_buf, tenths == 10 ? Diagnosis::AD : Diagnosis::MCI, ref_buf});
      labeled.push_back({record.participant_id, ref_buf, ProgressionLevel::from_tenths(tenths),
                         date_buf});
    }
    cohort.push_back(std::move(record));
  }

  save_cohort_csv(cohort, out_dir / "cohort.csv");
  return {std::move(cohort), distribution_table(labeled)};
}

}  // namespace siamprog
