#include "fairvoice/spectro/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "fairvoice/common/error.hpp"
#include "fairvoice/kernels/kernels.hpp"

namespace fairvoice::spectro {
namespace {

// FFTW planning is not thread-safe; plans are created once per size under a
// lock and then executed through the thread-safe new-array interface.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }
  fftw_plan get(std::size_t n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    auto* in = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(n, p);
    return p;
  }
  ~PlanCache() {
    for (auto& [n, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  std::mutex mutex_;
  std::map<std::size_t, fftw_plan> plans_;
};

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(n));
  return w;
}

std::vector<double> fit_duration(const Waveform& wave, const MelParams& params) {
  const auto n = static_cast<std::size_t>(std::llround(params.duration * wave.sample_rate));
  std::vector<double> x(n, 0.0);
  std::copy_n(wave.samples.begin(), std::min(n, wave.samples.size()), x.begin());
  return x;
}

std::size_t frame_count(std::size_t n, const MelParams& params) {
  if (n < params.fft_window) {
    throw InvalidArgument("to_mel: " + std::to_string(n) + " samples cannot hold one " +
                          std::to_string(params.fft_window) + "-sample window");
  }
  return 1 + (n - params.fft_window) / params.hop();
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) throw InvalidArgument("waveform sample rate must be positive");
  if (samples.empty()) throw InvalidArgument("waveform is empty");
  for (double v : samples) {
    if (!std::isfinite(v)) throw InvalidArgument("waveform contains non-finite samples");
  }
}

std::size_t MelParams::hop() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(fft_window) * (1.0 - overlap)));
}

void MelParams::validate(int sample_rate) const {
  if (fft_window < 2) throw InvalidArgument("fft_window must be at least 2");
  if (!(overlap >= 0.0 && overlap < 1.0) || hop() == 0) throw InvalidArgument("overlap must lie in [0, 1)");
  if (mel_bins == 0) throw InvalidArgument("mel_bins must be positive");
  if (!(duration > 0.0)) throw InvalidArgument("duration must be positive");
  if (!(log_floor > 0.0)) throw InvalidArgument("log_floor must be positive");
  if (rows == 0 || cols == 0) throw InvalidArgument("output size must be positive");
  const double top = top_frequency(sample_rate);
  if (!(fmin >= 0.0 && fmin < top)) throw InvalidArgument("mel fmin must lie in [0, fmax)");
  if (static_cast<double>(sample_rate) < 2.0 * top) {
    throw InvalidArgument("sample rate " + std::to_string(sample_rate) + " Hz is below twice the top mel frequency " +
                          std::to_string(top) + " Hz");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Grid mel_filterbank(const MelParams& params, int sample_rate) {
  params.validate(sample_rate);
  const std::size_t bins = params.fft_window / 2 + 1;
  const double lo = hz_to_mel(params.fmin), hi = hz_to_mel(params.top_frequency(sample_rate));
  std::vector<double> edges(params.mel_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(params.mel_bins + 1));
  }
  Grid fb(params.mel_bins, bins);
  for (std::size_t m = 0; m < params.mel_bins; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(params.fft_window);
      const double up = (f - left) / (centre - left);
      const double down = (right - f) / (right - centre);
      fb(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

Grid stft_magnitude(const Waveform& wave, const MelParams& params) {
  wave.validate();
  params.validate(wave.sample_rate);
  const std::vector<double> x = fit_duration(wave, params);
  const std::size_t win = params.fft_window, hop = params.hop(), bins = win / 2 + 1;
  const std::size_t frames = frame_count(x.size(), params);
  const std::vector<double> window = hann(win);
  fftw_plan plan = PlanCache::instance().get(win);
  Grid mag(frames, bins);
#pragma omp parallel
  {
    auto* in = static_cast<double*>(fftw_malloc(sizeof(double) * win));
    auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
#pragma omp for schedule(static)
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t i = 0; i < win; ++i) in[i] = x[f * hop + i] * window[i];
      fftw_execute_dft_r2c(plan, in, out);
      for (std::size_t k = 0; k < bins; ++k) mag(f, k) = std::hypot(out[k][0], out[k][1]);
    }
    fftw_free(in);
    fftw_free(out);
  }
  return mag;
}

MelGrid to_mel(const Waveform& wave, const MelParams& params) {
  const Grid mag = stft_magnitude(wave, params);
  const Grid fb = mel_filterbank(params, wave.sample_rate);
  const std::size_t frames = mag.rows, bins = mag.cols, mels = fb.rows;

  // Support of each triangular filter, so the projection skips zero weights.
  std::vector<std::size_t> first(mels, bins), last(mels, 0);
  for (std::size_t m = 0; m < mels; ++m) {
    for (std::size_t k = 0; k < bins; ++k) {
      if (fb(m, k) > 0.0) {
        first[m] = std::min(first[m], k);
        last[m] = k + 1;
      }
    }
  }

  Grid power(mels, frames);
#pragma omp parallel for schedule(static)
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t m = 0; m < mels; ++m) {
      double s = 0.0;
      for (std::size_t k = first[m]; k < last[m]; ++k) s += fb(m, k) * mag(f, k);
      power(m, f) = s;
    }
  }
  // The floor is taken relative to the peak so a global gain only shifts the
  // log values and the min-max step removes it, padding included.
  const double peak = *std::max_element(power.values.begin(), power.values.end());
  if (!(peak > 0.0)) return Grid(params.rows, params.cols, 0.0);

  // Flipped so the lowest mel bin lands on the bottom row.
  Grid logmel(mels, frames);
  for (std::size_t m = 0; m < mels; ++m) {
    for (std::size_t f = 0; f < frames; ++f) {
      logmel(mels - 1 - m, f) = std::log(std::max(power(m, f) / peak, params.log_floor));
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(logmel.values.begin(), logmel.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return Grid(params.rows, params.cols, 0.0);
  const double inv = 1.0 / (hi - lo);
  for (double& v : logmel.values) v = std::clamp((v - lo) * inv, 0.0, 1.0);
  return kernels::bilinear_resize(logmel, params.rows, params.cols);
}

namespace reference {

Grid stft_magnitude(const Waveform& wave, const MelParams& params) {
  wave.validate();
  params.validate(wave.sample_rate);
  const std::vector<double> x = fit_duration(wave, params);
  const std::size_t win = params.fft_window, hop = params.hop(), bins = win / 2 + 1;
  const std::size_t frames = frame_count(x.size(), params);
  const std::vector<double> window = hann(win);
  Grid mag(frames, bins);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < win; ++i) {
        const double v = x[f * hop + i] * window[i];
        const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * i) % win) / static_cast<double>(win);
        re += v * std::cos(ang);
        im += v * std::sin(ang);
      }
      mag(f, k) = std::hypot(re, im);
    }
  }
  return mag;
}

}  // namespace reference
}  // namespace fairvoice::spectro
