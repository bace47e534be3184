#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "stategate/errors.hpp"
#include "stategate/numerics.hpp"
#include "stategate/random.hpp"
#include "stategate/state_core.hpp"
#include "stategate/synthetic_world.hpp"
#include "stategate/toy_decoder.hpp"

namespace stategate {

struct MaskStats {
  float mean = 0.0f;
  float min = 0.0f;
  float max = 0.0f;
};

struct SessionResult {
  Strategy strategy = Strategy::uniform;
  std::vector<float> per_frame_error;
  float final_error = 0.0f;
  std::vector<MaskStats> mask_stats;
  std::size_t frames = 0;
  std::vector<Vector> region_error;  // per frame, per region
  Vector final_region_error;
  PersistentState final_state;

  float mean_mask() const {
    if (mask_stats.empty()) return 0.0f;
    double acc = 0.0;
    for (const auto& m : mask_stats) acc += m.mean;
    return static_cast<float>(acc / static_cast<double>(mask_stats.size()));
  }
};

struct SceneParams {
  std::size_t regions = 16;
  float dynamic_fraction = 0.0f;
  float drift_rate = 0.0f;
  float noise_sigma = 0.05f;
  CoverageSchedule schedule{};
};

/// Everything needed to run one session except the strategy, length and seed.
struct ExperimentSpec {
  SceneParams scene{};
  DecoderConfig decoder{};
  GateConfig gate{};

  void validate() const {
    decoder.validate();
    scene.schedule.validate();
    if (scene.regions == 0) throw ConfigError("scene_regions: must be >= 1");
    if (scene.regions != decoder.frame_tokens) {
      throw ConfigError("frame_tokens: must equal scene_regions (one frame slot per region)");
    }
    if (scene.regions != decoder.state_tokens) {
      throw ConfigError("state_tokens: must equal scene_regions (one state token per region)");
    }
    if (!(scene.noise_sigma >= 0.0f)) throw ConfigError("noise_sigma: must be >= 0");
    gate.validate();
  }
};

inline std::uint64_t scene_seed(std::uint64_t seed) { return derive_seed(seed, {0x5c}); }
inline std::uint64_t stream_seed(std::uint64_t seed) { return derive_seed(seed, {0x57}); }

// Least-squares scalar alpha minimizing ||alpha*E - T||, then per-row L2.
inline Vector aligned_row_errors(const Matrix& estimate, const Matrix& truth) {
  if (!estimate.same_shape(truth)) throw ConfigError("aligned error: shape mismatch");
  double et = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    et += double(estimate.data()[i]) * truth.data()[i];
    ee += double(estimate.data()[i]) * estimate.data()[i];
  }
  const double alpha = ee > 0.0 ? et / ee : 0.0;
  Vector out(estimate.rows());
  for (std::size_t i = 0; i < estimate.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < estimate.cols(); ++j) {
      const double d = alpha * estimate(i, j) - truth(i, j);
      acc += d * d;
    }
    out[i] = static_cast<float>(std::sqrt(acc));
  }
  return out;
}

inline MaskStats summarize_mask(const UpdateMask& m) {
  MaskStats s{0.0f, m.values.front(), m.values.front()};
  double acc = 0.0;
  for (float v : m.values) {
    acc += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = static_cast<float>(acc / static_cast<double>(m.values.size()));
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

inline SessionResult run_session(Scene scene, const CoverageSchedule& schedule, const DecoderWeights& weights,
                                 const GateConfig& cfg, Strategy strategy, std::size_t frames,
                                 float noise_sigma, std::uint64_t noise_seed) {
  if (frames == 0) throw ConfigError("frames: must be >= 1");
  weights.validate();
  if (scene.regions() != weights.state_tokens() || scene.regions() != weights.frame_tokens()) {
    throw ConfigError("scene_regions: must equal state_tokens and frame_tokens");
  }
  if (scene.obs_channels() != weights.obs_channels()) throw ConfigError("obs_channels: scene/encoder mismatch");

  SessionResult res;
  res.strategy = strategy;
  res.frames = frames;
  res.per_frame_error.reserve(frames);
  res.mask_stats.reserve(frames);

  ObservationStream stream(std::move(scene), schedule, noise_sigma, noise_seed);
  GateSession session(weights.initial_state(), cfg, strategy);
  Vector errors;
  for (std::size_t t = 1; t <= frames; ++t) {
    StreamStep step = stream.next();
    FrameTokens frame = encode_frame(step.observation, weights);
    DecodeOutput dec = decode_step(frame, session.state(), weights, step.present);
    const UpdateMask& mask = session.step(std::move(dec.candidate), std::move(frame), dec.trace);
    res.mask_stats.push_back(summarize_mask(mask));

    const Matrix truth = matmul(step.truth_snapshot, weights.encoder);
    errors = aligned_row_errors(readout(session.state(), weights), truth);
    res.region_error.push_back(errors);
    double acc = 0.0;
    for (float e : errors) acc += e;
    res.per_frame_error.push_back(static_cast<float>(acc / static_cast<double>(errors.size())));
  }
  res.final_error = res.per_frame_error.back();
  res.final_region_error = std::move(errors);
  res.final_state = session.state();
  return res;
}

inline SessionResult run_session(const ExperimentSpec& spec, const DecoderWeights& weights, Strategy strategy,
                                 std::size_t frames, std::uint64_t seed) {
  const auto& sp = spec.scene;
  Scene scene = generate_scene(sp.regions, weights.obs_channels(), sp.dynamic_fraction, sp.drift_rate, scene_seed(seed));
  return run_session(std::move(scene), sp.schedule, weights, spec.gate, strategy, frames, sp.noise_sigma,
                     stream_seed(seed));
}

// Linear-interpolation quantile of an unsorted sample.
inline float quantile(std::vector<float> v, double q) {
  if (v.empty()) throw ConfigError("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return static_cast<float>(double(v[lo]) + frac * (double(v[hi]) - double(v[lo])));
}

inline float median(std::vector<float> v) { return quantile(std::move(v), 0.5); }

struct AblationRow {
  Strategy strategy;
  std::uint64_t seed;
  std::size_t frames;
  float final_error;
  float mean_mask;
};

struct AblationSummary {
  Strategy strategy;
  float median_final_error;
  float q1_final_error;
  float q3_final_error;
};

struct AblationTable {
  std::vector<AblationRow> rows;          // strategy-major, seeds in the given order
  std::vector<AblationSummary> summary;   // one per strategy, in the given order

  const AblationSummary& at(Strategy s) const {
    for (const auto& row : summary)
      if (row.strategy == s) return row;
    throw ConfigError("ablation: strategy not present");
  }
};

inline void require_seeds(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
}

inline AblationTable run_ablation(const ExperimentSpec& spec, const std::vector<Strategy>& strategies,
                                  std::size_t frames, const std::vector<std::uint64_t>& seeds) {
  if (strategies.size() < 2) throw ConfigError("strategy: ablation needs at least two strategies");
  require_seeds(seeds);
  spec.validate();
  const DecoderWeights weights = make_decoder_weights(spec.decoder);
  AblationTable table;
  for (Strategy s : strategies) {
    std::vector<float> finals;
    for (std::uint64_t seed : seeds) {
      SessionResult r = run_session(spec, weights, s, frames, seed);
      table.rows.push_back({s, seed, frames, r.final_error, r.mean_mask()});
      finals.push_back(r.final_error);
    }
    table.summary.push_back({s, median(finals), quantile(finals, 0.25), quantile(finals, 0.75)});
  }
  return table;
}

struct DegradationReport {
  std::vector<std::size_t> lengths;
  std::map<Strategy, std::vector<float>> errors_by_strategy;  // median final error per length
  std::map<Strategy, float> growth_ratio;
};

inline float growth_ratio(float first, float last) {
  if (first == last) return 1.0f;
  if (!(first > 0.0f)) return std::numeric_limits<float>::infinity();
  return last / first;
}

// Sessions are causal, so the error at length L is read from the prefix of a
// single session run to the longest length.
inline DegradationReport degradation_curve(const ExperimentSpec& spec, const std::vector<std::size_t>& lengths,
                                           const std::vector<Strategy>& strategies,
                                           const std::vector<std::uint64_t>& seeds) {
  if (lengths.size() < 2) throw ConfigError("lengths: need at least two lengths");
  if (!std::is_sorted(lengths.begin(), lengths.end())) throw ConfigError("lengths: must be sorted ascending");
  if (lengths.front() == 0) throw ConfigError("lengths: must be >= 1");
  if (strategies.empty()) throw ConfigError("strategy: at least one strategy is required");
  require_seeds(seeds);
  spec.validate();
  const DecoderWeights weights = make_decoder_weights(spec.decoder);

  DegradationReport rep;
  rep.lengths = lengths;
  for (Strategy s : strategies) {
    std::vector<std::vector<float>> at_length(lengths.size());
    for (std::uint64_t seed : seeds) {
      SessionResult r = run_session(spec, weights, s, lengths.back(), seed);
      for (std::size_t i = 0; i < lengths.size(); ++i) at_length[i].push_back(r.per_frame_error[lengths[i] - 1]);
    }
    auto& med = rep.errors_by_strategy[s];
    for (auto& v : at_length) med.push_back(median(std::move(v)));
    rep.growth_ratio[s] = growth_ratio(med.front(), med.back());
  }
  return rep;
}

struct TauRow {
  float tau;
  std::uint64_t seed;
  std::size_t frames;
  float final_error;
};

struct TauSummary {
  float tau;
  float median_final_error;
};

struct TauSweep {
  std::vector<TauRow> rows;
  std::vector<TauSummary> summary;
};

inline TauSweep tau_sweep(const ExperimentSpec& spec, const std::vector<float>& taus, std::size_t frames,
                          const std::vector<std::uint64_t>& seeds) {
  if (taus.empty()) throw ConfigError("taus: at least one value is required");
  for (float t : taus)
    if (!(t > 0.0f)) throw ConfigError("tau: must be > 0");
  require_seeds(seeds);
  spec.validate();
  const DecoderWeights weights = make_decoder_weights(spec.decoder);
  TauSweep out;
  for (float tau : taus) {
    ExperimentSpec s = spec;
    s.gate.tau = tau;
    std::vector<float> finals;
    for (std::uint64_t seed : seeds) {
      SessionResult r = run_session(s, weights, Strategy::fused, frames, seed);
      out.rows.push_back({tau, seed, frames, r.final_error});
      finals.push_back(r.final_error);
    }
    out.summary.push_back({tau, median(finals)});
  }
  return out;
}

}  // namespace stategate
