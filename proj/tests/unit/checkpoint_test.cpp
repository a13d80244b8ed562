#include <gtest/gtest.h>

#include <fstream>

#include "ierd/checkpoint.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace ierd;
using ierd::testing::TempDir;

namespace {

Checkpoint sample_checkpoint(bool with_optimizer) {
  Checkpoint c;
  auto cfg = NetworkConfig::make(2, 3, 5, 3);
  cfg.dilations = {1, 2, 4};
  c.params = init_params(cfg, 1);
  ierd::testing::randomize(c.params, 2);
  if (with_optimizer) {
    AdamHyper h;
    h.base_lr = 3e-4;
    h.halving_period = 77;
    c.optimizer = AdamState<float>(c.params, h);
    for (auto& e : c.params.entries()) {
      e.grads.weight = ierd::testing::random_tensor<float>(e.grads.weight.shape(), 3);
    }
    adam_step(c.params, *c.optimizer);
    c.params.zero_grads();
  }
  c.step = 12345;
  c.seed = 0xdeadbeefcafeULL;
  return c;
}

void expect_equal(const Checkpoint& a, const Checkpoint& b) {
  EXPECT_EQ(a.step, b.step);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_EQ(a.params.config(), b.params.config());
  ASSERT_EQ(a.params.entries().size(), b.params.entries().size());
  for (std::size_t i = 0; i < a.params.entries().size(); ++i) {
    EXPECT_EQ(a.params.entries()[i].id, b.params.entries()[i].id);
    EXPECT_EQ(a.params.entries()[i].spec, b.params.entries()[i].spec);
    EXPECT_EQ(a.params.entries()[i].params, b.params.entries()[i].params);
  }
  EXPECT_EQ(a.optimizer.has_value(), b.optimizer.has_value());
  if (a.optimizer && b.optimizer) {
    EXPECT_EQ(*a.optimizer, *b.optimizer);
  }
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  for (bool opt : {false, true}) {
    const Checkpoint c = sample_checkpoint(opt);
    save_checkpoint(c, dir / "c.bin");
    expect_equal(load_checkpoint(dir / "c.bin"), c);
    EXPECT_FALSE(std::filesystem::exists(dir / "c.bin.tmp"));
  }
}

TEST(Checkpoint, RejectsCorruption) {
  TempDir dir;
  save_checkpoint(sample_checkpoint(true), dir / "c.bin");
  std::string bytes;
  {
    std::ifstream in(dir / "c.bin", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  EXPECT_THROW(load_checkpoint(write("trunc.bin", bytes.substr(0, bytes.size() / 2))), IoError);
  EXPECT_THROW(load_checkpoint(write("extra.bin", bytes + "x")), IoError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.bin", magic)), IoError);
  std::string version = bytes;
  version[8] = 99;
  EXPECT_THROW(load_checkpoint(write("version.bin", version)), IoError);
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST(Checkpoint, FormatStartsWithMagicAndVersion) {
  TempDir dir;
  save_checkpoint(sample_checkpoint(false), dir / "c.bin");
  std::ifstream in(dir / "c.bin", std::ios::binary);
  char head[12];
  in.read(head, 12);
  EXPECT_EQ(std::string(head, 8), "IERDCKPT");
  EXPECT_EQ(static_cast<unsigned char>(head[8]), kCheckpointVersion);
}
