#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "stategate/errors.hpp"
#include "stategate/format.hpp"
#include "stategate/numerics.hpp"
#include "stategate/random.hpp"

namespace stategate {

struct Scene {
  Matrix region_codes;                     // R x C_obs, current ground truth
  std::vector<std::size_t> dynamic_regions;  // sorted ascending
  float drift_rate = 0.0f;
  std::uint64_t seed = 0;

  std::size_t regions() const noexcept { return region_codes.rows(); }
  std::size_t obs_channels() const noexcept { return region_codes.cols(); }
};

inline Scene generate_scene(std::size_t r, std::size_t c_obs, float dynamic_fraction, float drift_rate,
                            std::uint64_t seed) {
  if (r == 0) throw ConfigError("scene_regions: must be >= 1");
  if (c_obs == 0) throw ConfigError("obs_channels: must be >= 1");
  if (!(dynamic_fraction >= 0.0f && dynamic_fraction <= 1.0f)) throw ConfigError("dynamic_fraction: must be in [0, 1]");
  if (!(drift_rate >= 0.0f)) throw ConfigError("drift_rate: must be >= 0");

  Rng rng(derive_seed(seed, {0x5ce7e}));
  Scene s;
  s.seed = seed;
  s.drift_rate = drift_rate;
  s.region_codes = rng.gaussian_matrix(r, c_obs);

  // Fisher-Yates; the first floor(f * R) indices become dynamic.
  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = r - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const auto n_dyn = static_cast<std::size_t>(std::floor(static_cast<double>(dynamic_fraction) * r));
  s.dynamic_regions.assign(order.begin(), order.begin() + n_dyn);
  std::sort(s.dynamic_regions.begin(), s.dynamic_regions.end());
  return s;
}

enum class CoverageKind { full, sliding_window, revisit };

struct CoverageSchedule {
  CoverageKind kind = CoverageKind::sliding_window;
  std::size_t window = 4;
  std::size_t period = 16;

  void validate() const {
    if (window == 0) throw ConfigError("window: must be >= 1");
    if (period == 0) throw ConfigError("period: must be >= 1");
  }
};

inline std::string_view to_string(CoverageKind k) {
  switch (k) {
    case CoverageKind::full: return "full";
    case CoverageKind::sliding_window: return "sliding";
    case CoverageKind::revisit: return "revisit";
  }
  return "unknown";
}

inline CoverageKind parse_coverage(std::string_view s) {
  if (s == "full") return CoverageKind::full;
  if (s == "sliding" || s == "sliding_window") return CoverageKind::sliding_window;
  if (s == "revisit") return CoverageKind::revisit;
  throw ConfigError("schedule: unknown value '" + std::string(s) + "'");
}

// Sorted visible region indices at frame t (t >= 1). The sliding window
// starts at region (t-1) mod R and wraps. Under revisit, frames with
// (t-1) mod period == 0 see everything.
inline std::vector<std::size_t> visible_regions(const CoverageSchedule& sched, std::size_t r, std::size_t t) {
  if (t == 0) throw ConfigError("step_stream: t must be >= 1");
  std::vector<std::size_t> vis;
  const bool full = sched.kind == CoverageKind::full ||
                    (sched.kind == CoverageKind::revisit && (t - 1) % sched.period == 0) || sched.window >= r;
  if (full) {
    vis.resize(r);
    std::iota(vis.begin(), vis.end(), std::size_t{0});
    return vis;
  }
  for (std::size_t j = 0; j < sched.window; ++j) vis.push_back((t - 1 + j) % r);
  std::sort(vis.begin(), vis.end());
  return vis;
}

/// One frame. The observation has one row per region; rows of regions not
/// visible this frame are zero and flagged absent in `present`.
struct StreamStep {
  std::size_t t = 0;
  Matrix observation;                 // R x C_obs
  std::vector<std::size_t> visible_regions;
  std::vector<std::uint8_t> present;  // length R
  Matrix truth_snapshot;              // R x C_obs
};

// Advances the scene to frame t (drift on dynamic regions) and samples the
// observation. Noise and drift draws depend only on (seed, t).
inline StreamStep step_stream(Scene& scene, const CoverageSchedule& sched, std::size_t t, float noise_sigma,
                              std::uint64_t seed) {
  sched.validate();
  if (!(noise_sigma >= 0.0f)) throw ConfigError("noise_sigma: must be >= 0");
  const std::size_t r = scene.regions(), co = scene.obs_channels();

  if (scene.drift_rate > 0.0f && !scene.dynamic_regions.empty()) {
    Rng drift(derive_seed(seed, {0xd21f7, t}));
    for (std::size_t region : scene.dynamic_regions)
      for (auto& x : scene.region_codes.row(region)) x += static_cast<float>(drift.gaussian() * scene.drift_rate);
  }

  StreamStep step;
  step.t = t;
  step.visible_regions = visible_regions(sched, r, t);
  step.present.assign(r, 0);
  step.observation = Matrix(r, co);
  Rng noise(derive_seed(seed, {0x4015e, t}));
  for (std::size_t region : step.visible_regions) {
    step.present[region] = 1;
    auto src = scene.region_codes.row(region);
    auto dst = step.observation.row(region);
    for (std::size_t j = 0; j < co; ++j) {
      const float eps = noise_sigma > 0.0f ? static_cast<float>(noise.gaussian() * noise_sigma) : 0.0f;
      dst[j] = src[j] + eps;
    }
  }
  step.truth_snapshot = scene.region_codes;
  return step;
}

// One JSON object per line: t, visible, observation (visible rows only, in
// the order of `visible`) and truth.
inline void write_trace_line(std::ostream& os, const StreamStep& step) {
  auto write_row = [&](std::span<const float> row) {
    os << '[';
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << format_real(row[j]);
    os << ']';
  };
  os << "{\"t\":" << step.t << ",\"visible\":[";
  for (std::size_t i = 0; i < step.visible_regions.size(); ++i) os << (i ? "," : "") << step.visible_regions[i];
  os << "],\"observation\":[";
  for (std::size_t i = 0; i < step.visible_regions.size(); ++i) {
    if (i) os << ',';
    write_row(step.observation.row(step.visible_regions[i]));
  }
  os << "],\"truth\":[";
  for (std::size_t i = 0; i < step.truth_snapshot.rows(); ++i) {
    if (i) os << ',';
    write_row(step.truth_snapshot.row(i));
  }
  os << "]}\n";
}

/// Stateful wrapper: owns the evolving scene and hands out consecutive steps.
class ObservationStream {
 public:
  ObservationStream(Scene scene, CoverageSchedule sched, float noise_sigma, std::uint64_t seed)
      : scene_(std::move(scene)), sched_(sched), noise_sigma_(noise_sigma), seed_(seed) {
    sched_.validate();
  }

  StreamStep next() { return step_stream(scene_, sched_, ++t_, noise_sigma_, seed_); }
  const Scene& scene() const noexcept { return scene_; }

 private:
  Scene scene_;
  CoverageSchedule sched_;
  float noise_sigma_;
  std::uint64_t seed_;
  std::size_t t_ = 0;
};

}  // namespace stategate
