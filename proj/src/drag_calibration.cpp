#include "pingpong/drag_calibration.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pingpong {

void SampledTrack::validate() const {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("track: rate_hz must be > 0");
  if (points.size() < 7) throw std::invalid_argument("track too short: need at least 7 points");
  const double h = 1.0 / rate_hz;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double gap = points[i].t - points[i - 1].t;
    if (!(gap > 0.0)) throw std::invalid_argument("track: timestamps must be strictly increasing");
    if (std::abs(gap - h) > 0.01 * h) {
      throw std::invalid_argument("track: sample spacing deviates more than 1% from 1/rate_hz");
    }
  }
}

std::vector<KinematicSample> differentiate(const SampledTrack& track, int smoothing_window) {
  track.validate();
  if (smoothing_window < 1 || smoothing_window % 2 == 0) {
    throw std::invalid_argument("differentiate: smoothing window must be a positive odd count");
  }
  const int n = static_cast<int>(track.points.size());
  const int half = smoothing_window / 2;
  if (n < smoothing_window + 2) throw std::invalid_argument("differentiate: track too short for the stencil");

  // smoothed[i] is centred on points[i + half]
  std::vector<Vec3> smoothed;
  smoothed.reserve(static_cast<std::size_t>(n - 2 * half));
  for (int i = half; i < n - half; ++i) {
    Vec3 acc = Vec3::Zero();
    for (int j = -half; j <= half; ++j) acc += track.points[static_cast<std::size_t>(i + j)].p;
    smoothed.push_back(acc / static_cast<double>(smoothing_window));
  }

  const double h = 1.0 / track.rate_hz;
  std::vector<KinematicSample> out;
  for (std::size_t i = 1; i + 1 < smoothed.size(); ++i) {
    KinematicSample k;
    k.t = track.points[i + static_cast<std::size_t>(half)].t;
    k.v = (smoothed[i + 1] - smoothed[i - 1]) / (2.0 * h);
    k.a = (smoothed[i + 1] - 2.0 * smoothed[i] + smoothed[i - 1]) / (h * h);
    out.push_back(k);
  }
  return out;
}

DragFit fit_drag(const std::vector<SampledTrack>& tracks, double gravity, const DragFitOptions& options) {
  if (tracks.empty()) throw std::invalid_argument("fit_drag: need at least one track");

  double sxy = 0.0;
  double sxx = 0.0;
  double perp_sq = 0.0;
  DragFit fit;
  for (const auto& track : tracks) {
    const auto samples = differentiate(track, options.smoothing_window);
    if (samples.size() < 3) throw std::invalid_argument("fit_drag: track yields fewer than 3 samples");
    double txy = 0.0;
    double txx = 0.0;
    for (const auto& s : samples) {
      const double speed = s.v.norm();
      if (speed < options.min_speed) continue;
      const Vec3 dir = s.v / speed;
      const Vec3 residual = s.a + Vec3(0.0, 0.0, gravity);
      const double y = -residual.dot(dir);
      const double x = speed * speed;
      txy += x * y;
      txx += x * x;
      perp_sq += (residual - residual.dot(dir) * dir).squaredNorm();
      ++fit.n_samples_used;
    }
    fit.per_track_k.push_back(txx > 0.0 ? txy / txx : 0.0);
    sxy += txy;
    sxx += txx;
  }
  if (fit.n_samples_used == 0) throw std::runtime_error("fit_drag: insufficient speed range");

  fit.k_raw = sxy / sxx;
  fit.clamped = fit.k_raw < 0.0;
  fit.k_hat = std::max(0.0, fit.k_raw);
  fit.residual_rms = std::sqrt(perp_sq / fit.n_samples_used);
  return fit;
}

std::vector<SampledTrack> load_tracks(const std::filesystem::path& dir, double rate_hz) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .csv tracks found in " + dir.string());
  std::vector<SampledTrack> tracks;
  for (const auto& f : files) {
    SampledTrack track;
    track.rate_hz = rate_hz;
    track.points = read_positions_csv(f);
    tracks.push_back(std::move(track));
  }
  return tracks;
}

std::vector<SampledTrack> synthetic_tracks(double k, int n_tracks, double duration, double rate_hz,
                                           double noise_sigma, std::uint64_t seed) {
  BallConstants c;
  c.drag_coeff_k = k;
  const TableGeometry table = make_standard_table();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> vx(4.0, 7.0), vy(-0.6, 0.6), vz(0.0, 1.5), y0(-0.3, 0.3);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  SimulateOptions opts;
  opts.sample_interval = 1.0 / rate_hz;

  std::vector<SampledTrack> tracks;
  for (int i = 0; i < n_tracks; ++i) {
    const BallState s{0.0, Vec3(-1.5, y0(rng), 1.2), Vec3(vx(rng), vy(rng), vz(rng))};
    const Trajectory traj = simulate(s, c, table, duration, StopRule::time_only(), opts);
    SampledTrack track;
    track.rate_hz = rate_hz;
    track.noise_sigma = noise_sigma;
    double t_cut = duration;
    for (const auto& ev : traj.events) {
      if (ev.kind != EventKind::NetPlaneCross) {
        t_cut = ev.state_at_event.t;
        break;
      }
    }
    for (const auto& sample : traj.samples) {
      if (sample.t >= t_cut) break;
      Vec3 p = sample.p;
      if (noise_sigma > 0.0) p += Vec3(noise(rng), noise(rng), noise(rng));
      track.points.push_back({sample.t, p});
    }
    // The final sample may be a partial interval; keep the grid uniform.
    if (track.points.size() >= 2) {
      const double gap = track.points.back().t - track.points[track.points.size() - 2].t;
      if (std::abs(gap - 1.0 / rate_hz) > 1e-3 / rate_hz) track.points.pop_back();
    }
    tracks.push_back(std::move(track));
  }
  return tracks;
}

}  // namespace pingpong
