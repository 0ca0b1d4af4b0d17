// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fedhorizon/checkpoint.hpp"
#include "fedhorizon/error.hpp"

using namespace fedhorizon;
using namespace fedhorizon::nn;
namespace fs = std::filesystem;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.config.lstm_units = 5;
  ck.config.lstm_layers = 2;
  ck.params = init_params(ck.config, 12);
  ck.params[3] = -0.0;
  ck.optimizer.reset(4);
  ck.optimizer.m = {1e-300, -2.0, 3.5, 0.1};
  ck.optimizer.step = 17;
  ck.normalization.push_back({"MICU", {1.0, 2.0}, {0.5, 0.25}});
  ck.normalization.push_back({"CCU", {}, {}});
  return ck;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("fedhorizon_ckpt_" + name); }

std::string bytes_of(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const auto ck = sample_checkpoint();
  const auto path = temp_file("roundtrip");
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.config.canonical(), ck.config.canonical());
  ASSERT_EQ(back.params.size(), ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    EXPECT_EQ(std::signbit(back.params[i]), std::signbit(ck.params[i]));
    EXPECT_EQ(back.params[i], ck.params[i]);
  }
  EXPECT_EQ(back.optimizer.m, ck.optimizer.m);
  EXPECT_EQ(back.optimizer.v, ck.optimizer.v);
  EXPECT_EQ(back.optimizer.step, 17);
  EXPECT_EQ(back.normalization, ck.normalization);

  const auto again = temp_file("roundtrip2");
  save_checkpoint(back, again);
  EXPECT_EQ(bytes_of(path), bytes_of(again));
}

TEST(Checkpoint, HeaderStartsWithMagic) {
  const auto path = temp_file("magic");
  save_checkpoint(sample_checkpoint(), path);
  EXPECT_EQ(bytes_of(path).substr(0, 7), "FHZCKPT");
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto path = temp_file("corrupt");
  save_checkpoint(sample_checkpoint(), path);
  const auto good = bytes_of(path);

  std::ofstream(path, std::ios::binary | std::ios::trunc) << good.substr(0, good.size() / 2);
  EXPECT_THROW(load_checkpoint(path), DataError);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bad_magic;
  EXPECT_THROW(load_checkpoint(path), DataError);

  auto bad_hash = good;
  bad_hash[12] ^= 0x5a;
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bad_hash;
  EXPECT_THROW(load_checkpoint(path), DataError);

  EXPECT_THROW(load_checkpoint(temp_file("does_not_exist")), DataError);
}

TEST(Checkpoint, SaveRejectsMismatchedParameters) {
  auto ck = sample_checkpoint();
  ck.params.pop_back();
  EXPECT_THROW(save_checkpoint(ck, temp_file("mismatch")), ModelError);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
}
