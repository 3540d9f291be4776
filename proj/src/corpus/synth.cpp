#include "fairvoice/corpus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/common/hash.hpp"

namespace fairvoice::corpus {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kTableSize = 2048;
// Mean absolute consecutive difference of i.i.d. normals is sd * 2/sqrt(pi).
constexpr double kMeanAbsDiffPerSd = 1.1283791670955126;

struct Formant {
  double freq;
  double bandwidth;
};
constexpr Formant kVowelA[] = {{700.0, 110.0}, {1220.0, 120.0}, {2600.0, 160.0}, {3500.0, 250.0}};

double formant_gain(double f) {
  double g = 0.0;
  for (const Formant& fm : kVowelA) {
    const double r = f / fm.freq;
    const double d = (1.0 - r * r);
    g += 1.0 / std::sqrt(d * d + (f * fm.bandwidth / (fm.freq * fm.freq)) * (f * fm.bandwidth / (fm.freq * fm.freq)));
  }
  return g;
}

double lerp_by_age(const SynthConfig& c, double age, double at_min, double at_max) {
  const double t = (age - c.young_age_min) / static_cast<double>(c.elderly_age_max - c.young_age_min);
  return at_min + std::clamp(t, 0.0, 1.0) * (at_max - at_min);
}

std::string sample_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn%05zu", index);
  return buf;
}

std::string subject_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subj%05zu", index);
  return buf;
}

// RBJ band-pass biquad (constant 0 dB peak gain).
class BandPass {
 public:
  BandPass(double centre, double q, double sample_rate) {
    const double w0 = kTwoPi * centre / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

}  // namespace

void SynthConfig::validate() const {
  if (counts.total() == 0) throw InvalidArgument("synth: total sample count is zero");
  if (!(duration > 0.0)) throw InvalidArgument("synth: duration must be positive");
  if (sample_rate <= 0) throw InvalidArgument("synth: sample_rate must be positive");
  if (tremor_hz_min < 4.0 || tremor_hz_max > 7.0 || tremor_hz_min > tremor_hz_max) {
    throw InvalidArgument("synth: tremor_hz range must lie within [4, 7] Hz");
  }
  if (young_age_min < 0 || young_age_min > young_age_max || young_age_max > kYoungMaxAge) {
    throw InvalidArgument("synth: young age range must lie within [0, 55]");
  }
  if (elderly_age_min <= kYoungMaxAge || elderly_age_min > elderly_age_max) {
    throw InvalidArgument("synth: elderly age range must start above 55");
  }
  if (!(severity_mean_young < severity_mean_elderly)) {
    throw InvalidArgument("synth: severity_mean_young must be below severity_mean_elderly");
  }
  if (vocal_age_sd < 0.0) throw InvalidArgument("synth: vocal_age_sd must be non-negative");
  if (severity_sd < 0.0 || jitter_pct_min < 0.0 || jitter_pct_max < jitter_pct_min || shimmer_pct_min < 0.0 ||
      shimmer_pct_max < shimmer_pct_min || tremor_depth_max < 0.0 || tremor_depth_max > 1.0 || interruption_rate < 0.0) {
    throw InvalidArgument("synth: perturbation parameters out of range");
  }
  const double top_f0 = std::max(base_f0_young, base_f0_elderly) + 4.0 * f0_sd;
  if (base_f0_young <= 0.0 || base_f0_elderly <= 0.0 || top_f0 * 2.0 >= sample_rate / 2.0) {
    throw InvalidArgument("synth: base F0 must be positive and well below Nyquist");
  }
  if (breath_band_hz <= 0.0 || breath_band_hz >= sample_rate / 2.0) {
    throw InvalidArgument("synth: breath_band_hz must lie below Nyquist");
  }
}

VoiceParams draw_voice_params(const SynthConfig& c, const std::string& sample_id, AgeGroup group, Diagnosis diagnosis) {
  std::mt19937_64 rng(sub_seed(c.seed, sample_id + "/subject"));
  VoiceParams p;
  p.age_group = group;
  p.diagnosis = diagnosis;
  const int lo = group == AgeGroup::Young ? c.young_age_min : c.elderly_age_min;
  const int hi = group == AgeGroup::Young ? c.young_age_max : c.elderly_age_max;
  p.age = std::uniform_int_distribution<int>(lo, hi)(rng);

  std::normal_distribution<double> unit(0.0, 1.0);
  p.vocal_age = p.age + c.vocal_age_sd * unit(rng);
  p.f0 = std::max(40.0, lerp_by_age(c, p.vocal_age, c.base_f0_young, c.base_f0_elderly) + c.f0_sd * unit(rng));
  p.tilt_db_per_octave = lerp_by_age(c, p.vocal_age, c.tilt_young, c.tilt_elderly);
  p.breath_noise = lerp_by_age(c, p.vocal_age, c.breath_noise_young, c.breath_noise_elderly);

  const double sev_draw = unit(rng);
  if (diagnosis == Diagnosis::PD) {
    const double mean = group == AgeGroup::Young ? c.severity_mean_young : c.severity_mean_elderly;
    p.severity = std::clamp(mean + c.severity_sd * sev_draw, 0.02, 1.0);
  }
  p.jitter_pct = c.jitter_pct_min + p.severity * (c.jitter_pct_max - c.jitter_pct_min);
  p.shimmer_pct = c.shimmer_pct_min + p.severity * (c.shimmer_pct_max - c.shimmer_pct_min);
  p.tremor_hz = std::uniform_real_distribution<double>(c.tremor_hz_min, c.tremor_hz_max)(rng);
  p.tremor_depth = p.severity * c.tremor_depth_max;
  p.interruption_rate = p.severity * c.interruption_rate;
  return p;
}

PcmAudio synthesize_voice(const SynthConfig& c, const VoiceParams& p, const std::string& sample_id) {
  const double sr = c.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(c.duration * sr));
  std::mt19937_64 rng(sub_seed(c.seed, sample_id + "/render"));
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // One glottal period: harmonic series under the vowel envelope and tilt.
  const auto harmonics = static_cast<std::size_t>(std::floor(0.45 * sr / p.f0));
  std::vector<double> amp(harmonics + 1, 0.0);
  for (std::size_t h = 1; h <= harmonics; ++h) {
    amp[h] = std::pow(10.0, p.tilt_db_per_octave * std::log2(static_cast<double>(h)) / 20.0) *
             formant_gain(static_cast<double>(h) * p.f0);
  }
  std::vector<double> table(kTableSize + 1, 0.0);
  double peak = 0.0;
  for (std::size_t i = 0; i < kTableSize; ++i) {
    double v = 0.0;
    for (std::size_t h = 1; h <= harmonics; ++h) v += amp[h] * std::sin(kTwoPi * static_cast<double>(h * i) / kTableSize);
    table[i] = v;
    peak = std::max(peak, std::abs(v));
  }
  for (double& v : table) v /= (peak > 0.0 ? peak : 1.0);
  table[kTableSize] = table[0];

  // Voicing envelope: onset/offset ramps plus random voicing breaks.
  std::vector<double> voicing(n, 0.0);
  const double onset = 0.1 + 0.3 * uni(rng);
  const double offset = c.duration - (0.1 + 0.5 * uni(rng));
  const double ramp = 0.03;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double e = 0.0;
    if (t > onset && t < offset) e = std::min({1.0, (t - onset) / ramp, (offset - t) / ramp});
    voicing[i] = e;
  }
  if (p.interruption_rate > 0.0) {
    std::exponential_distribution<double> gap_after(p.interruption_rate);
    double t = onset + gap_after(rng);
    while (t < offset) {
      const double len = 0.06 + 0.19 * uni(rng);
      const double fade = 0.01;
      const auto b = static_cast<std::size_t>(std::max(0.0, (t - fade) * sr));
      const auto e = std::min(n, static_cast<std::size_t>((t + len + fade) * sr));
      for (std::size_t i = b; i < e; ++i) {
        const double s = static_cast<double>(i) / sr;
        const double to_edge = std::min(s - (t - fade), (t + len + fade) - s);
        const double g = to_edge >= fade ? 0.0 : 0.5 + 0.5 * std::cos(std::numbers::pi * to_edge / fade);
        voicing[i] = std::min(voicing[i], g);
      }
      t += len + gap_after(rng);
    }
  }

  const double jitter_sd = p.jitter_pct / 100.0 / kMeanAbsDiffPerSd;
  const double shimmer_sd = p.shimmer_pct / 100.0 / kMeanAbsDiffPerSd;
  const double tremor_phase = kTwoPi * uni(rng);

  PcmAudio audio;
  audio.sample_rate = c.sample_rate;
  audio.samples.assign(n, 0.0);
  double cycle_start = 0.0;
  double drift = 0.0;
  while (cycle_start < static_cast<double>(n)) {
    drift = 0.995 * drift + 0.002 * unit(rng);  // slow pitch wander
    const double f = p.f0 * (1.0 + drift) * (1.0 + jitter_sd * unit(rng));
    const double period = sr / std::max(f, 20.0);
    const double a = std::max(0.0, 1.0 + shimmer_sd * unit(rng));
    const auto first = static_cast<std::size_t>(std::ceil(cycle_start));
    const auto last = std::min(n, static_cast<std::size_t>(std::ceil(cycle_start + period)));
    for (std::size_t i = first; i < last; ++i) {
      const double pos = (static_cast<double>(i) - cycle_start) / period * kTableSize;
      const auto k = std::min(static_cast<std::size_t>(pos), kTableSize - 1);
      const double frac = pos - static_cast<double>(k);
      audio.samples[i] = a * (table[k] * (1.0 - frac) + table[k + 1] * frac);
    }
    cycle_start += period;
  }

  BandPass breath(c.breath_band_hz, 1.0, sr);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double tremor = 1.0 + p.tremor_depth * std::sin(kTwoPi * p.tremor_hz * t + tremor_phase);
    const double aspiration = p.breath_noise * 4.0 * breath(unit(rng));
    audio.samples[i] = voicing[i] * (tremor * audio.samples[i] + aspiration) + 1e-3 * unit(rng);
  }
  double m = 0.0;
  for (double v : audio.samples) m = std::max(m, std::abs(v));
  const double gain = m > 0.0 ? 0.7 / m : 1.0;
  for (double& v : audio.samples) v *= gain;
  return audio;
}

SynthResult generate_synthetic(const SynthConfig& config, const std::filesystem::path& output_dir) {
  config.validate();
  const std::filesystem::path audio_dir = output_dir / "audio";
  std::error_code ec;
  std::filesystem::create_directories(audio_dir, ec);
  if (ec) throw GenerationError("cannot create " + audio_dir.string() + ": " + ec.message());

  struct Plan {
    AgeGroup group;
    Diagnosis diagnosis;
  };
  std::vector<Plan> plan;
  const auto push = [&](std::size_t count, AgeGroup g, Diagnosis d) { plan.insert(plan.end(), count, Plan{g, d}); };
  push(config.counts.young_pd, AgeGroup::Young, Diagnosis::PD);
  push(config.counts.young_hc, AgeGroup::Young, Diagnosis::HC);
  push(config.counts.elderly_pd, AgeGroup::Elderly, Diagnosis::PD);
  push(config.counts.elderly_hc, AgeGroup::Elderly, Diagnosis::HC);

  SynthResult result;
  result.params.resize(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    result.params[i] = draw_voice_params(config, sample_name(i), plan[i].group, plan[i].diagnosis);
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < plan.size(); ++i) {
    try {
      const std::string id = sample_name(i);
      write_wav(audio_dir / (id + ".wav"), synthesize_voice(config, result.params[i], id));
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      throw GenerationError(std::string("synthetic generation failed: ") + e.what());
    }
  }

  for (std::size_t i = 0; i < plan.size(); ++i) {
    const VoiceParams& p = result.params[i];
    const std::string subj = subject_name(i);
    result.manifest.add_subject(SubjectRecord{subj, p.age, p.age_group, p.diagnosis});
    result.manifest.add_sample(SampleRecord{sample_name(i), subj, "audio/" + sample_name(i) + ".wav", Split::Unassigned});
  }
  return result;
}

void save_voice_params(const SynthResult& result, const std::filesystem::path& path) {
  std::ostringstream os;
  os.precision(17);
  os << "sample_id,age,vocal_age,age_group,diagnosis,severity,f0,tilt_db_per_octave,breath_noise,jitter_pct,shimmer_pct,"
        "tremor_hz,tremor_depth,interruption_rate\n";
  for (std::size_t i = 0; i < result.params.size(); ++i) {
    const VoiceParams& p = result.params[i];
    os << result.manifest.samples()[i].sample_id << ',' << p.age << ',' << p.vocal_age << ',' << to_string(p.age_group)
       << ','
       << to_string(p.diagnosis) << ',' << p.severity << ',' << p.f0 << ',' << p.tilt_db_per_octave << ','
       << p.breath_noise << ',' << p.jitter_pct << ',' << p.shimmer_pct << ',' << p.tremor_hz << ','
       << p.tremor_depth << ',' << p.interruption_rate << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace fairvoice::corpus
