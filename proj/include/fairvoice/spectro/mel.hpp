#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "fairvoice/common/grid.hpp"

namespace fairvoice::spectro {

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;

  // Throws InvalidArgument when empty, non-finite, or the rate is not positive.
  void validate() const;
};

struct MelParams {
  std::size_t fft_window = 2048;
  double overlap = 0.75;
  std::size_t mel_bins = 128;
  double fmin = 0.0;
  std::optional<double> fmax;  // defaults to sample_rate / 2
  double duration = 10.0;      // seconds; input is zero-padded or truncated to this
  double log_floor = 1e-10;    // relative to the spectrogram peak
  std::size_t rows = 224;
  std::size_t cols = 224;

  std::size_t hop() const;
  double top_frequency(int sample_rate) const { return fmax.value_or(sample_rate / 2.0); }
  // Throws InvalidArgument for inconsistent parameters or a sample rate below
  // twice the top mel frequency.
  void validate(int sample_rate) const;
};

// rows x cols in [0, 1]; time runs left to right and the lowest mel bin is
// the bottom row.
using MelGrid = Grid;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular HTK-style filters: mel_bins x (fft_window / 2 + 1).
Grid mel_filterbank(const MelParams& params, int sample_rate);

// Pads/truncates to params.duration and returns |STFT| as frames x bins
// (periodic Hann window, no centring). Frames are computed in parallel.
Grid stft_magnitude(const Waveform& wave, const MelParams& params);

MelGrid to_mel(const Waveform& wave, const MelParams& params = {});

namespace reference {
// Direct O(N^2) DFT, serial. Oracle for stft_magnitude.
Grid stft_magnitude(const Waveform& wave, const MelParams& params);
}  // namespace reference

}  // namespace fairvoice::spectro
