#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/corpus/split.hpp"
#include "fairvoice/corpus/synth.hpp"
#include "fairvoice/ensemble/ensemble.hpp"
#include "fairvoice/nets/checkpoint.hpp"
#include "test_util.hpp"

using namespace fairvoice;
using namespace fairvoice::ensemble;

namespace {

// Half-second corpus rendered at 32 x 32 so training runs in milliseconds.
struct SmallCorpus {
  testutil::TempDir dir{"ensemble"};
  corpus::DatasetManifest manifest;
  spectro::ImageSet images;

  SmallCorpus() {
    corpus::SynthConfig c;
    c.counts = {2, 4, 4, 2};
    c.duration = 0.5;
    manifest = corpus::generate_synthetic(c, dir.path()).manifest;
    spectro::MelParams p;
    p.duration = 0.5;
    p.rows = p.cols = 32;
    std::vector<std::string> paths;
    for (const auto& s : manifest.samples()) paths.push_back(s.audio_path);
    images = spectro::ImageSet(paths, dir.path(), p);
  }
};

const SmallCorpus& corpus_fixture() {
  static const SmallCorpus c;
  return c;
}

nets::TrainConfig fast_config() {
  nets::TrainConfig c;
  c.epochs = 2;
  c.learning_rate = 1e-3;
  c.batch_size = 4;
  c.pretrained = false;
  return c;
}

std::vector<std::size_t> all_entries(const spectro::ImageSet& s) {
  std::vector<std::size_t> e(s.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = i;
  return e;
}

}  // namespace

TEST(Median, OrderStatistics) {
  const std::vector<double> five{0.2, 0.9, 0.4, 0.5, 0.1};
  EXPECT_EQ(median(five), 0.4);
  EXPECT_EQ(median(std::vector<double>(5, 0.7)), 0.7);
  EXPECT_EQ(median(std::vector<double>{0.3, 0.1, 0.4, 0.2}), 0.25);
  EXPECT_EQ(median(std::vector<double>{0.42}), 0.42);
  EXPECT_THROW(median(std::vector<double>{}), InvalidArgument);
}

TEST(Median, RandomBundleProperties) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> v(1 + rng() % 9);
    for (double& x : v) x = u(rng);
    const double m = median(v);
    EXPECT_GE(m, *std::min_element(v.begin(), v.end()));
    EXPECT_LE(m, *std::max_element(v.begin(), v.end()));
    std::shuffle(v.begin(), v.end(), rng);
    EXPECT_EQ(median(v), m);
  }
}

TEST(Median, OfMembersIsColumnwise) {
  const std::vector<std::vector<double>> scores{{0.2, 0.5}, {0.9, 0.5}, {0.4, 0.1}};
  EXPECT_EQ(median_of_members(scores), (std::vector<double>{0.4, 0.5}));
  EXPECT_THROW(median_of_members({}), InvalidArgument);
  EXPECT_THROW(median_of_members({{0.1}, {0.1, 0.2}}), InvalidArgument);
}

TEST(Variant, Names) {
  for (auto v : {Variant::Plain, Variant::GradCAMMask, Variant::Resample, Variant::Adversarial}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_EQ(to_string(Variant::GradCAMMask), "gradcam");
  EXPECT_THROW(parse_variant("other"), InvalidArgument);
}

TEST(TrainEnsemble, DeterministicDistinctMembers) {
  const auto& c = corpus_fixture();
  const auto a = train_ensemble(nets::BackboneKind::TinyTest, fast_config(), Variant::GradCAMMask, 5, 100,
                                c.manifest, c.images);
  const auto b = train_ensemble(nets::BackboneKind::TinyTest, fast_config(), Variant::GradCAMMask, 5, 100,
                                c.manifest, c.images);
  ASSERT_EQ(a.members.size(), 5u);
  std::set<std::uint64_t> sums;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.members[i].checksum(), b.members[i].checksum());
    EXPECT_EQ(a.seeds[i], 100 + i);
    sums.insert(a.members[i].checksum());
  }
  EXPECT_EQ(sums.size(), 5u);
  EXPECT_NO_THROW(a.validate());
}

TEST(TrainEnsemble, SingleMemberBehavesAsModel) {
  const auto& c = corpus_fixture();
  nets::TrainConfig cfg = fast_config();
  const auto bundle = train_ensemble(nets::BackboneKind::TinyTest, cfg, Variant::Plain, 1, 7, c.manifest, c.images);
  cfg.seed = 7;
  const nets::ModelState single = train_model(nets::BackboneKind::TinyTest, cfg, Variant::Plain, c.images,
                                              training_items(c.manifest, c.images));
  EXPECT_EQ(bundle.members.front().checksum(), single.checksum());
  const Tensor x = c.images.all();
  EXPECT_EQ(predict_median(bundle, x), debias::pd_scores(single, x));
}

TEST(TrainEnsemble, PlainTrainingLeavesAgeHeadAlone) {
  const auto& c = corpus_fixture();
  nets::TrainConfig cfg = fast_config();
  cfg.seed = 3;
  const nets::ModelState init = nets::init_model(nets::BackboneKind::TinyTest, cfg);
  const nets::ModelState trained =
      train_model(nets::BackboneKind::TinyTest, cfg, Variant::Plain, c.images, training_items(c.manifest, c.images));
  EXPECT_EQ(max_abs_diff(init.age_head().weight().value, trained.age_head().weight().value), 0.0);
  EXPECT_GT(max_abs_diff(init.pd_head().weight().value, trained.pd_head().weight().value), 0.0);
}

TEST(TrainEnsemble, ProgressAndResampling) {
  const auto& c = corpus_fixture();
  std::vector<EpochLog> logs;
  const auto bundle = train_ensemble(nets::BackboneKind::TinyTest, fast_config(), Variant::Resample, 2, 1, c.manifest,
                                     c.images, {}, [&](const EpochLog& e) { logs.push_back(e); });
  EXPECT_EQ(logs.size(), 4u);
  EXPECT_EQ(logs.back().member, 1u);
  EXPECT_EQ(logs.back().epoch, 2);
  for (const auto& e : logs) EXPECT_EQ(e.loss_age, 0.0);
  EXPECT_THROW(train_ensemble(nets::BackboneKind::TinyTest, fast_config(), Variant::Plain, 0, 1, c.manifest, c.images),
               InvalidArgument);
}

TEST(PredictMedian, MatchesMemberScores) {
  const auto& c = corpus_fixture();
  const auto bundle = train_ensemble(nets::BackboneKind::TinyTest, fast_config(), Variant::GradCAMMask, 3, 20,
                                     c.manifest, c.images);
  const auto entries = all_entries(c.images);
  const auto matrix = member_score_matrix(bundle, c.images, entries, 5);
  ASSERT_EQ(matrix.size(), 3u);
  const auto med = predict_median(bundle, c.images, entries, 5);
  for (std::size_t j = 0; j < entries.size(); ++j) {
    std::vector<double> col{matrix[0][j], matrix[1][j], matrix[2][j]};
    EXPECT_EQ(med[j], median(col));
    EXPECT_GE(med[j], 0.0);
    EXPECT_LE(med[j], 1.0);
  }
  EXPECT_EQ(predict_median(bundle, c.images.all()), med);
  EnsembleBundle empty;
  EXPECT_THROW(predict_median(empty, c.images.all()), InvalidArgument);
}

TEST(Bundle, SaveLoadAndTamper) {
  const auto& c = corpus_fixture();
  testutil::TempDir dir("bundle");
  VariantOptions opts;
  opts.mask.threshold = 0.5;
  const auto bundle = train_ensemble(nets::BackboneKind::TinyTest, fast_config(), Variant::GradCAMMask, 2, 4,
                                     c.manifest, c.images, opts);
  const auto vdir = save_bundle(bundle, dir.path(), "abc");
  EXPECT_EQ(vdir, dir.path() / "bundle" / "gradcam");
  EXPECT_TRUE(std::filesystem::exists(vdir / "bundle.json"));
  const auto back = load_bundle(vdir);
  ASSERT_EQ(back.members.size(), 2u);
  EXPECT_EQ(back.variant, Variant::GradCAMMask);
  EXPECT_EQ(back.seeds, bundle.seeds);
  EXPECT_EQ(back.options.mask.threshold, 0.5);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(back.members[i].checksum(), bundle.members[i].checksum());

  nets::ModelState other = bundle.members[0];
  other.pd_head().bias().value[0] += 1.0;
  nets::save_checkpoint(other, vdir / "member_1.ckpt");
  EXPECT_THROW(load_bundle(vdir), CheckpointError);
  write_file_atomic(vdir / "bundle.json", std::string_view("{ not json"));
  EXPECT_THROW(load_bundle(vdir), SchemaError);
}
