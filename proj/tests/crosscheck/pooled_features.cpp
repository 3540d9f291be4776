// pooled_features KIND CKPT INPUT OUTPUT
// INPUT: u32 rank, rank x u64 dims, f64 values (N x 3 x H x W), little-endian.
// OUTPUT: same layout, N x C pooled features of the backbone in eval mode.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <vector>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/nets/checkpoint.hpp"
#include "fairvoice/nets/model.hpp"

using namespace fairvoice;

namespace {

Tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint32_t rank = 0;
  in.read(reinterpret_cast<char*>(&rank), sizeof rank);
  Shape shape(rank);
  for (auto& d : shape) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    d = v;
  }
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw IoError("short read from " + path);
  return t;
}

void write_tensor(const Tensor& t, const std::string& path) {
  std::string bytes;
  const auto put = [&](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
  const auto rank = static_cast<std::uint32_t>(t.rank());
  put(&rank, sizeof rank);
  for (std::size_t d : t.shape()) {
    const auto v = static_cast<std::uint64_t>(d);
    put(&v, sizeof v);
  }
  put(t.data(), t.size() * sizeof(double));
  write_file_atomic(path, bytes);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 5) {
    std::cerr << "usage: pooled_features KIND CKPT INPUT OUTPUT\n";
    return 2;
  }
  try {
    nets::TrainConfig config;
    config.pretrained = false;
    nets::ModelState model = nets::init_model(nets::parse_backbone(argv[1]), config);
    nets::load_backbone_weights(model, argv[2]);
    write_tensor(nets::extract_final_features(model, read_tensor(argv[3])), argv[4]);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
