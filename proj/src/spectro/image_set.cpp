#include "fairvoice/spectro/image_set.hpp"

#include <numeric>

#include "fairvoice/common/error.hpp"
#include "fairvoice/corpus/wav.hpp"

namespace fairvoice::spectro {

MelGrid mel_from_file(const std::filesystem::path& path, const MelParams& params) {
  corpus::PcmAudio audio = corpus::read_wav(path);
  Waveform wave{std::move(audio.samples), audio.sample_rate};
  return to_mel(wave, params);
}

SpectrogramImage spectrogram_from_file(const std::filesystem::path& path, const MelParams& params) {
  return jet_colorize(mel_from_file(path, params));
}

ImageSet::ImageSet(const std::vector<std::string>& audio_paths, const std::filesystem::path& root,
                   const MelParams& params)
    : rows_(params.rows), cols_(params.cols) {
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<std::filesystem::path> unique;
  index_.reserve(audio_paths.size());
  for (const auto& p : audio_paths) {
    auto [it, inserted] = seen.emplace(p, unique.size());
    if (inserted) {
      first_entry_.emplace(p, index_.size());
      const std::filesystem::path path(p);
      unique.push_back(path.is_absolute() ? path : root / path);
    }
    index_.push_back(it->second);
  }
  grids_.resize(unique.size());
  // to_mel parallelises internally; files are processed in order.
  for (std::size_t i = 0; i < unique.size(); ++i) {
    const MelGrid g = mel_from_file(unique[i], params);
    grids_[i].assign(g.values.begin(), g.values.end());
  }
}

std::optional<std::size_t> ImageSet::find(const std::string& audio_path) const {
  auto it = first_entry_.find(audio_path);
  if (it == first_entry_.end()) return std::nullopt;
  return it->second;
}

MelGrid ImageSet::grid(std::size_t i) const {
  const auto& src = grids_.at(index_.at(i));
  MelGrid g(rows_, cols_);
  std::copy(src.begin(), src.end(), g.values.begin());
  return g;
}

Tensor ImageSet::batch(const std::vector<std::size_t>& entries) const {
  const std::size_t plane = rows_ * cols_;
  Tensor out({entries.size(), 3, rows_, cols_});
  for (std::size_t b = 0; b < entries.size(); ++b) {
    jet_colorize_into(grid(entries[b]), out.data() + b * 3 * plane);
  }
  return out;
}

Tensor ImageSet::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  return batch(idx);
}

}  // namespace fairvoice::spectro
