#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pingpong/ball_dynamics.hpp"
#include "pingpong/world.hpp"

namespace pingpong {

// A motion-capture style track of ball positions before the first bounce.
struct SampledTrack {
  double rate_hz = 150.0;
  std::vector<TimedPosition> points;
  double noise_sigma = 0.0;  // metadata only

  void validate() const;
};

struct KinematicSample {
  double t = 0.0;
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
};

struct DragFit {
  double k_hat = 0.0;
  double k_raw = 0.0;  // before clamping at zero
  bool clamped = false;
  double residual_rms = 0.0;
  int n_samples_used = 0;
  std::vector<double> per_track_k;
};

struct DragFitOptions {
  int smoothing_window = 5;
  double min_speed = 0.5;
};

// Moving-average smoothing followed by central differences. Returns
// n - (window + 1) samples: the smoothing stencil and the difference stencil
// each drop points at both ends.
std::vector<KinematicSample> differentiate(const SampledTrack& track, int smoothing_window = 5);

// Single-parameter least squares of the along-track deceleration on |v|^2.
DragFit fit_drag(const std::vector<SampledTrack>& tracks, double gravity, const DragFitOptions& options = {});

// Free flight up to the first contact, sampled at `rate_hz` from a launcher
// above the opponent end, with optional Gaussian position noise.
std::vector<SampledTrack> synthetic_tracks(double k, int n_tracks, double duration, double rate_hz,
                                           double noise_sigma, std::uint64_t seed);

// Loads every *.csv under `dir` (sorted by name) as a track at `rate_hz`.
std::vector<SampledTrack> load_tracks(const std::filesystem::path& dir, double rate_hz);

}  // namespace pingpong
