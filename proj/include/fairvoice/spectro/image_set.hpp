#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairvoice/common/tensor.hpp"
#include "fairvoice/spectro/image.hpp"
#include "fairvoice/spectro/mel.hpp"

namespace fairvoice::spectro {

// Reads a wave file and runs to_mel on it.
MelGrid mel_from_file(const std::filesystem::path& path, const MelParams& params = {});

SpectrogramImage spectrogram_from_file(const std::filesystem::path& path, const MelParams& params = {});

// Mel grids for a list of audio files, computed once and kept as floats.
// Entries sharing an audio path (resampled duplicates) share one grid.
class ImageSet {
 public:
  ImageSet() = default;
  // Paths are resolved against root when relative.
  ImageSet(const std::vector<std::string>& audio_paths, const std::filesystem::path& root,
           const MelParams& params = {});

  std::size_t size() const { return index_.size(); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  // First entry loaded from audio_path, if any.
  std::optional<std::size_t> find(const std::string& audio_path) const;

  MelGrid grid(std::size_t i) const;
  // N x 3 x rows x cols jet images for the given entries.
  Tensor batch(const std::vector<std::size_t>& entries) const;
  Tensor all() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::vector<float>> grids_;
  std::vector<std::size_t> index_;  // entry -> grid
  std::unordered_map<std::string, std::size_t> first_entry_;
};

}  // namespace fairvoice::spectro
