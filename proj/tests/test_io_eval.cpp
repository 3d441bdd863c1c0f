#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "osseg/eval.hpp"
#include "osseg/phantom.hpp"
#include "osseg/trainer.hpp"
#include "osseg/volume_io.hpp"
#include "support/oracles.hpp"

using namespace osseg;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("osseg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};
}  // namespace

TEST_CASE("volume file round-trips bit-exactly") {
  TempDir tmp;
  Rng rng(81);
  Volume v = oracle::random_volume({3, 3, 3}, rng);
  const std::string path = (tmp.path / "v.avl").string();
  write_volume(path, v);
  Volume back = read_volume(path);
  CHECK(back == v);

  std::vector<std::int32_t> lab(16);
  for (auto& l : lab) l = rng.uniform_int(5);
  LabelMap y({4, 4}, 5, lab);
  const std::string lpath = (tmp.path / "y.avl").string();
  write_labels(lpath, y);
  LabelMap yback = read_labels(lpath);
  CHECK(yback.shape() == y.shape());
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(yback[i] == y[i]);
}

TEST_CASE("format errors carry byte offsets") {
  TempDir tmp;
  const std::string path = (tmp.path / "bad.avl").string();

  {
    std::ofstream f(path, std::ios::binary);
    f << "XXXXrest";
  }
  try {
    read_volume_file(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  // dims (2,2,2) float file with a 7-value payload: truncation detected at
  // header size + payload bytes present
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "AVL1";
    f.put(0);  // dtype float
    f.put(3);  // rank
    const std::uint32_t dims[3] = {2, 2, 2};
    f.write(reinterpret_cast<const char*>(dims), 12);
    const float payload[7] = {0, 1, 2, 3, 4, 5, 6};
    f.write(reinterpret_cast<const char*>(payload), sizeof(payload));
  }
  try {
    read_volume_file(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 18);  // reader flags the short payload at its start
  }

  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "AVL1";
    f.put(7);  // unknown dtype
    f.put(2);
  }
  CHECK_THROWS_AS(read_volume_file(path), FormatError);

  // trailing garbage is rejected, not silently ignored
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "AVL1";
    f.put(0);
    f.put(2);
    const std::uint32_t dims[2] = {1, 1};
    f.write(reinterpret_cast<const char*>(dims), 8);
    const float value = 1.0f;
    f.write(reinterpret_cast<const char*>(&value), 4);
    f << "junk";
  }
  CHECK_THROWS_AS(read_volume_file(path), FormatError);
}

TEST_CASE("reading the wrong kind is a format error") {
  TempDir tmp;
  const std::string path = (tmp.path / "v.avl").string();
  write_volume(path, Volume({2, 2}, 1.0f));
  CHECK_THROWS_AS(read_labels(path), FormatError);
}

TEST_CASE("dice_score basics and symmetry") {
  Rng rng(82);
  std::vector<std::int32_t> a(16), b(16);
  for (std::size_t i = 0; i < 16; ++i) {
    a[i] = rng.uniform_int(3);
    b[i] = rng.uniform_int(3);
  }
  LabelMap la({4, 4}, 3, a), lb({4, 4}, 3, b);

  DiceResult self = dice_score(la, la);
  for (double d : self.per_class) CHECK(d == 1.0);
  CHECK(self.mean == 1.0);

  DiceResult ab = dice_score(la, lb);
  DiceResult ba = dice_score(lb, la);
  CHECK(ab.mean == ba.mean);
  for (std::size_t c = 0; c < ab.per_class.size(); ++c)
    CHECK(ab.per_class[c] == ba.per_class[c]);

  // disjoint single-class masks score 0
  LabelMap left({2, 2}, 2, {1, 0, 0, 0});
  LabelMap right({2, 2}, 2, {0, 0, 0, 1});
  CHECK(dice_score(left, right).per_class[0] == 0.0);

  // half overlap: |A n B| = 1, |A| = |B| = 2
  LabelMap ha({2, 2}, 2, {1, 1, 0, 0});
  LabelMap hb({2, 2}, 2, {1, 0, 1, 0});
  CHECK(dice_score(ha, hb).per_class[0] == doctest::Approx(0.5));

  // class absent from both scores 1 by convention
  LabelMap za({2, 2}, 3, {0, 0, 1, 1});
  LabelMap zb({2, 2}, 3, {0, 1, 1, 0});
  CHECK(dice_score(za, zb).per_class[1] == 1.0);
}

TEST_CASE("report statistics are recomputable from the rows") {
  std::vector<DiceResult> rows;
  for (double m : {0.5, 0.7, 0.9}) {
    DiceResult r;
    r.per_class = {m, m};
    r.mean = m;
    rows.push_back(r);
  }
  EvalReport rep = aggregate_dice(rows);
  CHECK(rep.mean == doctest::Approx(0.7));
  CHECK(rep.min == doctest::Approx(0.5));
  CHECK(rep.max == doctest::Approx(0.9));
  double mean = 0, var = 0;
  for (double r : rep.per_subject) mean += r;
  mean /= rep.per_subject.size();
  for (double r : rep.per_subject) var += (r - mean) * (r - mean);
  var /= rep.per_subject.size();
  CHECK(rep.mean == doctest::Approx(mean));
  CHECK(rep.stddev == doctest::Approx(std::sqrt(var)));

  EvalReport parsed = EvalReport::from_json(rep.to_json());
  CHECK(parsed.mean == doctest::Approx(rep.mean));
  CHECK(parsed.per_subject == rep.per_subject);
}

TEST_CASE("train config text round-trips") {
  TrainConfig cfg;
  cfg.n_iterations = 1234;
  cfg.lr_initial = 3e-3;
  cfg.weights.lambda_smooth = 0.25;
  cfg.variant = Variant::BetaLer;
  cfg.seed = 99;
  TrainConfig back = parse_train_config(train_config_text(cfg));
  CHECK(back.n_iterations == 1234);
  CHECK(back.lr_initial == doctest::Approx(3e-3));
  CHECK(back.weights.lambda_smooth == doctest::Approx(0.25));
  CHECK(back.variant == Variant::BetaLer);
  CHECK(back.seed == 99);

  CHECK_THROWS_AS(parse_train_config("bogus_key = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_train_config("n_iterations\n"), std::invalid_argument);
  TrainConfig commented = parse_train_config("# comment only\n\nn_iterations = 7\n");
  CHECK(commented.n_iterations == 7);
}

TEST_CASE("checkpoints restore bit-identical forward behaviour") {
  TempDir tmp;
  PhantomSpec spec;
  spec.spatial_rank = 2;
  spec.size = {32, 32};
  spec.num_structures = 4;
  spec.seed = 11;
  Cohort cohort = make_cohort(spec, 2, 1);

  TrainConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 8;
  cfg.n_iterations = 4;
  cfg.eval_every = 100;
  cfg.seed = 21;
  TrainState state = train(cfg, cohort.atlas, cohort.unlabeled, cohort.heldout);

  const std::string path = (tmp.path / "ck.ock").string();
  write_checkpoint(path, checkpoint_of(state));
  Checkpoint ck = read_checkpoint(path);
  CHECK(ck.num_classes == 4);

  SegmentationNet restored = segmenter_from_checkpoint(ck);
  CHECK(restored.params().checksum() == state.seg.params().checksum());

  const double before = validation_dice(state.seg, cohort.heldout);
  const double after = validation_dice(restored, cohort.heldout);
  CHECK(before == after);

  TrainState fresh(cfg, 2, 4);
  restore_train_state(fresh, ck);
  CHECK(fresh.reg.params().checksum() == state.reg.params().checksum());
  CHECK(fresh.adv.params().checksum() == state.adv.params().checksum());
}
