#include <gtest/gtest.h>

#include <fstream>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/common/hash.hpp"
#include "fairvoice/common/tensor.hpp"
#include "test_util.hpp"

using namespace fairvoice;

TEST(Tensor, ShapeAndFill) {
  Tensor t({2, 3, 4, 5}, 1.5);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.rank(), 4u);
  EXPECT_DOUBLE_EQ(t.at(1, 2, 3, 4), 1.5);
  EXPECT_EQ(shape_string(t.shape()), "[2x3x4x5]");
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), InvalidArgument);
}

TEST(Tensor, ConcatThenSplitRoundTrips) {
  const Tensor a = testutil::random_tensor({2, 3, 2, 2}, 1);
  const Tensor b = testutil::random_tensor({2, 5, 2, 2}, 2);
  const Tensor c = concat_channels(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 8, 2, 2}));
  EXPECT_DOUBLE_EQ(c.at(1, 3, 1, 0), b.at(1, 0, 1, 0));
  Tensor a2, b2;
  split_channels(c, 3, a2, b2);
  EXPECT_EQ(max_abs_diff(a, a2), 0.0);
  EXPECT_EQ(max_abs_diff(b, b2), 0.0);
}

TEST(Tensor, SliceAndStack) {
  const Tensor t = testutil::random_tensor({4, 2}, 3);
  const Tensor s = t.slice(1, 3);
  ASSERT_EQ(s.shape(), (Shape{2, 2}));
  EXPECT_DOUBLE_EQ(s.at(0, 1), t.at(1, 1));
  std::vector<Tensor> parts{testutil::random_tensor({2}, 4), testutil::random_tensor({2}, 5)};
  const Tensor st = stack(parts);
  EXPECT_EQ(st.shape(), (Shape{2, 2}));
  EXPECT_DOUBLE_EQ(st.at(1, 0), parts[1][0]);
}

TEST(Hash, Fnv1aKnownVectors) {
  Fnv1a empty;
  EXPECT_EQ(empty.digest(), 0xcbf29ce484222325ULL);
  Fnv1a a;
  a.update("a");
  EXPECT_EQ(a.digest(), 0xaf63dc4c8601ec8cULL);
  Fnv1a foobar;
  foobar.update("foobar");
  EXPECT_EQ(foobar.digest(), 0x85944171f73967e8ULL);
}

TEST(Hash, SubSeedsDifferByName) {
  EXPECT_EQ(sub_seed(7, "x"), sub_seed(7, "x"));
  EXPECT_NE(sub_seed(7, "x"), sub_seed(7, "y"));
  EXPECT_NE(sub_seed(7, "x"), sub_seed(8, "x"));
  EXPECT_EQ(to_hex(0xabcULL), "0000000000000abc");
}

TEST(Fs, AtomicWriteReplacesContent) {
  testutil::TempDir dir("fs");
  const auto p = dir / "f.txt";
  write_file_atomic(p, std::string_view("one"));
  write_file_atomic(p, std::string_view("two"));
  EXPECT_EQ(read_text_file(p), "two");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(Fs, UnwritableTargetRaisesIoError) {
  testutil::TempDir dir("fs");
  const auto p = dir / "missing" / "sub" / "f.txt";
  std::filesystem::create_directories(dir / "missing");
  std::ofstream(dir / "missing" / "sub") << "a file where a directory should be";
  EXPECT_THROW(write_file_atomic(p, std::string_view("x")), IoError);
  EXPECT_THROW(read_text_file(dir / "nope.txt"), IoError);
}
