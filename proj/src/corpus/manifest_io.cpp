#include "fairvoice/corpus/manifest_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"

namespace fairvoice::corpus {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ManifestError("manifest " + path.string() + " is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  if (trim(line) != kManifestHeader) {
    throw ManifestError("manifest header must be '" + std::string(kManifestHeader) + "', got '" + trim(line) + "'");
  }
  DatasetManifest manifest;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    for (auto& f : fields) f = trim(f);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 6) throw ManifestError(where + ": expected 6 columns, got " + std::to_string(fields.size()));
    if (fields[2].empty()) throw ManifestError(where + ": missing age for sample " + fields[0]);
    int age = 0;
    const auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), age);
    if (ec != std::errc() || ptr != fields[2].data() + fields[2].size()) {
      throw ManifestError(where + ": age '" + fields[2] + "' is not an integer");
    }
    if (age < 0) throw ManifestError(where + ": negative age");
    if (fields[0].empty() || fields[1].empty() || fields[4].empty()) {
      throw ManifestError(where + ": sample_id, subject_id and audio_path are required");
    }
    SubjectRecord subj{fields[1], age, assign_age_group(age), parse_diagnosis(fields[3])};
    manifest.add_subject(subj);
    manifest.add_sample(SampleRecord{fields[0], fields[1], fields[4], parse_split(fields[5])});
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const SampleRecord& s : manifest.samples()) {
    const SubjectRecord& subj = manifest.subject_of(s);
    os << s.sample_id << ',' << s.subject_id << ',' << subj.age << ',' << to_string(subj.diagnosis) << ','
       << s.audio_path << ',' << to_string(s.split) << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace fairvoice::corpus
