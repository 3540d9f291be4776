#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairvoice/corpus/types.hpp"
#include "fairvoice/corpus/wav.hpp"

namespace fairvoice::corpus {

struct StratumCounts {
  std::size_t young_pd = 0;
  std::size_t young_hc = 0;
  std::size_t elderly_pd = 0;
  std::size_t elderly_hc = 0;

  std::size_t total() const { return young_pd + young_hc + elderly_pd + elderly_hc; }
};

// Generator for a sustained-vowel corpus with PD dysphonia markers and an
// age confound. PD markers (jitter, shimmer, tremor, voicing breaks) scale
// with a per-subject severity in [0, 1]; healthy controls have severity 0.
// Age moves F0, spectral tilt and a breath-noise band.
struct SynthConfig {
  StratumCounts counts;
  int sample_rate = 16000;
  double duration = 10.0;  // seconds

  int young_age_min = 20;
  int young_age_max = kYoungMaxAge;
  int elderly_age_min = kYoungMaxAge + 1;
  int elderly_age_max = 85;

  double base_f0_young = 140.0;  // Hz at young_age_min
  double base_f0_elderly = 110.0;  // Hz at elderly_age_max (linear in age between)
  double f0_sd = 5.0;              // subject-level spread, Hz
  // Spread of the age a voice sounds (years) around the chronological age;
  // F0 slope, tilt and breath noise follow the vocal age.
  double vocal_age_sd = 0.0;

  double tilt_young = -9.0;  // dB/octave at young_age_min
  double tilt_elderly = -15.0;  // dB/octave at elderly_age_max (linear in age between)
  double breath_noise_young = 0.02;  // aspiration-noise band level relative to voice
  double breath_noise_elderly = 0.12;
  double breath_band_hz = 3000.0;

  double severity_mean_young = 0.3;
  double severity_mean_elderly = 0.7;
  double severity_sd = 0.15;

  double jitter_pct_min = 0.3;   // healthy level; PD interpolates towards max
  double jitter_pct_max = 1.5;
  double shimmer_pct_min = 2.0;
  double shimmer_pct_max = 8.0;
  double tremor_hz_min = 4.0;
  double tremor_hz_max = 7.0;
  double tremor_depth_max = 0.5;    // amplitude-modulation depth at severity 1
  double interruption_rate = 0.8;   // voicing breaks per second at severity 1

  std::uint64_t seed = 7;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

// Latent generator parameters of one recording, exported for diagnostics.
struct VoiceParams {
  int age = 0;
  double vocal_age = 0.0;
  AgeGroup age_group = AgeGroup::Young;
  Diagnosis diagnosis = Diagnosis::HC;
  double severity = 0.0;
  double f0 = 0.0;
  double tilt_db_per_octave = 0.0;
  double breath_noise = 0.0;
  double jitter_pct = 0.0;
  double shimmer_pct = 0.0;
  double tremor_hz = 0.0;
  double tremor_depth = 0.0;
  double interruption_rate = 0.0;
};

// Subject-level draw for one sample; a pure function of (config.seed, sample_id).
VoiceParams draw_voice_params(const SynthConfig& config, const std::string& sample_id, AgeGroup group,
                              Diagnosis diagnosis);

// Renders one recording; a pure function of (params, config, sample_id).
PcmAudio synthesize_voice(const SynthConfig& config, const VoiceParams& params, const std::string& sample_id);

struct SynthResult {
  DatasetManifest manifest;
  std::vector<VoiceParams> params;  // parallel to manifest.samples()
};

// Writes one wave file per sample under output_dir/audio/ and returns the
// manifest (audio paths relative to output_dir). Samples are rendered in
// parallel; each uses its own sub-seed so output is thread-count invariant.
SynthResult generate_synthetic(const SynthConfig& config, const std::filesystem::path& output_dir);

void save_voice_params(const SynthResult& result, const std::filesystem::path& path);

}  // namespace fairvoice::corpus
