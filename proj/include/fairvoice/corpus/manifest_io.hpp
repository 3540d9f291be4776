#pragma once

#include <filesystem>

#include "fairvoice/corpus/types.hpp"

namespace fairvoice::corpus {

inline constexpr const char* kManifestHeader = "sample_id,subject_id,age,diagnosis,audio_path,split";

// Rows missing an age (or any other column) are rejected with ManifestError.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace fairvoice::corpus
