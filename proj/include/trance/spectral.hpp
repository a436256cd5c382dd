#pragma once

// Welch-averaged auto/cross spectra and magnitude-squared coherence.

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "trance/error.hpp"

namespace trance {

struct WelchConfig {
  std::size_t segment_length = 16;
  double overlap = 0.5;
  bool exclude_dc = true;
  double sampling_rate = 1.0;

  std::size_t step() const {
    const auto shared = static_cast<std::size_t>(std::floor(static_cast<double>(segment_length) * overlap));
    return segment_length - shared;
  }

  void check() const {
    require(segment_length >= 2 && (segment_length & (segment_length - 1)) == 0, ErrorCode::InvalidArgument,
            "segment_length must be a power of two >= 2");
    require(overlap >= 0.0 && overlap < 1.0, ErrorCode::InvalidArgument, "overlap must lie in [0, 1)");
  }
};

namespace detail {
// FFTW planning is not thread-safe; execution on distinct buffers is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Real-to-complex FFT of a fixed length, owning its plan and buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::lock_guard lock(detail::fftw_planner_mutex());
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }

  std::size_t size() const { return n_; }

  /// Returns the n/2 + 1 non-negative-frequency coefficients.
  std::vector<std::complex<double>> operator()(std::span<const double> x) {
    require(x.size() == n_, ErrorCode::ShapeMismatch, "FFT input length mismatch");
    std::copy(x.begin(), x.end(), in_);
    fftw_execute(plan_);
    std::vector<std::complex<double>> out(n_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {out_[k][0], out_[k][1]};
    return out;
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// Mean-removed, windowed segment; the input to each Welch FFT.
inline std::vector<double> prepare_segment(std::span<const double> seg, std::span<const double> window) {
  double mean = 0.0;
  for (double v : seg) mean += v;
  mean /= static_cast<double>(seg.size());
  std::vector<double> out(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) out[i] = (seg[i] - mean) * window[i];
  return out;
}

struct WelchSpectra {
  std::vector<double> frequency;           // bin centre, in units of the sampling rate
  std::vector<double> pxx;                 // auto-spectrum of x (unnormalized, summed over segments)
  std::vector<double> pyy;                 // auto-spectrum of y
  std::vector<std::complex<double>> pxy;   // cross-spectrum conj(X) * Y
  std::size_t segments = 0;
};

inline WelchSpectra welch_spectra(std::span<const double> x, std::span<const double> y, const WelchConfig& cfg) {
  cfg.check();
  require(x.size() == y.size(), ErrorCode::ShapeMismatch, "series lengths differ");
  const std::size_t len = cfg.segment_length;
  require(x.size() >= 2 * len, ErrorCode::SeriesTooShort,
          "series of length " + std::to_string(x.size()) + " needs at least " + std::to_string(2 * len) + " samples");
  const std::size_t step = cfg.step();
  const auto window = hann_window(len);
  RealFft fft(len);

  WelchSpectra s;
  const std::size_t bins = len / 2 + 1;
  s.pxx.assign(bins, 0.0);
  s.pyy.assign(bins, 0.0);
  s.pxy.assign(bins, {0.0, 0.0});
  for (std::size_t k = 0; k < bins; ++k)
    s.frequency.push_back(cfg.sampling_rate * static_cast<double>(k) / static_cast<double>(len));

  for (std::size_t start = 0; start + len <= x.size(); start += step) {
    const auto fx = fft(prepare_segment(x.subspan(start, len), window));
    const auto fy = fft(prepare_segment(y.subspan(start, len), window));
    for (std::size_t k = 0; k < bins; ++k) {
      s.pxx[k] += std::norm(fx[k]);
      s.pyy[k] += std::norm(fy[k]);
      s.pxy[k] += std::conj(fx[k]) * fy[k];
    }
    ++s.segments;
  }
  return s;
}

struct CoherenceResult {
  double mean = 0.0;
  std::vector<double> gamma_sq;   // per retained bin
  std::vector<double> frequency;  // matching bin frequencies
};

/// gamma^2(s) = |Gxy|^2 / (Gxx Gyy) per retained bin and its mean. A bin where
/// either series has no power contributes 0; if a series has no power in any
/// retained bin the result is undefined and ZeroPower is raised.
inline CoherenceResult coherence_score(std::span<const double> f, std::span<const double> f_hat,
                                       const WelchConfig& cfg = {}) {
  const auto s = welch_spectra(f, f_hat, cfg);
  auto energy = [](std::span<const double> v) {
    double e = 0.0;
    for (double a : v) e += a * a;
    return e;
  };
  const double tol_x = 1e-20 * energy(f) + 1e-300;
  const double tol_y = 1e-20 * energy(f_hat) + 1e-300;

  CoherenceResult r;
  bool x_power = false, y_power = false;
  for (std::size_t k = cfg.exclude_dc ? 1 : 0; k < s.pxx.size(); ++k) {
    const bool px = s.pxx[k] > tol_x;
    const bool py = s.pyy[k] > tol_y;
    x_power = x_power || px;
    y_power = y_power || py;
    double g = 0.0;
    if (px && py) g = std::min(1.0, std::norm(s.pxy[k]) / (s.pxx[k] * s.pyy[k]));
    r.gamma_sq.push_back(g);
    r.frequency.push_back(s.frequency[k]);
  }
  require(x_power, ErrorCode::ZeroPower, "reference series has zero power in every bin");
  require(y_power, ErrorCode::ZeroPower, "compared series has zero power in every bin");
  double sum = 0.0;
  for (double g : r.gamma_sq) sum += g;
  r.mean = r.gamma_sq.empty() ? 0.0 : sum / static_cast<double>(r.gamma_sq.size());
  return r;
}

}  // namespace trance
