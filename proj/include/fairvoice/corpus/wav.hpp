#pragma once

#include <filesystem>
#include <vector>

namespace fairvoice::corpus {

struct PcmAudio {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 0;
};

// Writes mono 16-bit linear PCM. Samples are clamped to [-1, 1].
void write_wav(const std::filesystem::path& path, const PcmAudio& audio);

// Reads 16/24/32-bit PCM or 32-bit float wave files; multi-channel input is
// averaged down to mono.
PcmAudio read_wav(const std::filesystem::path& path);

// One 16-bit quantisation step, the tolerance of a write/read round trip.
inline constexpr double kPcm16Step = 1.0 / 32767.0;

}  // namespace fairvoice::corpus
