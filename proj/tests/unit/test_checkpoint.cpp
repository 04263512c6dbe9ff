#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "test_support.hpp"
#include "tlmn/checkpoint.hpp"
#include "tlmn/error.hpp"

namespace tlmn {
namespace {

using testing::random_model;
using testing::random_window;

std::string serialize(const ModelState& m) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(m, out);
  return out.str();
}

ModelState deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_checkpoint(in);
}

std::string error_of(const std::string& bytes) {
  try {
    deserialize(bytes);
  } catch (const CheckpointError& e) {
    return e.what();
  }
  return "";
}

ModelState sample_model() {
  Rng rng(1);
  ModelState m = random_model(ModelConfig{}, rng, 0.2);
  m.norm.mean[3] = 12.5;
  m.norm.stddev[3] = 0.125;
  m.anchor = AnchorConfig{};
  m.anchor->location = GeoLocation(10.0, 32.48, 380.0);
  return m;
}

TEST(Checkpoint, BitExactRoundTrip) {
  const ModelState m = sample_model();
  const ModelState back = deserialize(serialize(m));
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.layout, m.layout);
  EXPECT_EQ(std::memcmp(back.params.data(), m.params.data(), m.params.size() * sizeof(double)), 0);
  EXPECT_EQ(back.norm, m.norm);
  EXPECT_EQ(back.anchor, m.anchor);

  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const FeatureWindow w = random_window(m.config, rng, rng.uniform(0.0, 1000.0));
    EXPECT_EQ(forward(m, w).ghi_pred, forward(back, w).ghi_pred);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "tlmn_ckpt_test.tlmn3";
  Rng rng(3);
  ModelConfig cfg = testing::small_random_config(rng);
  const ModelState m = random_model(cfg, rng);
  save_checkpoint(m, path);
  const ModelState back = load_checkpoint(path);
  EXPECT_EQ(back.params, m.params);
  EXPECT_EQ(back.config, m.config);
  EXPECT_FALSE(back.anchor.has_value());
  std::filesystem::remove(path);
}

TEST(Checkpoint, ByteLayout) {
  const ModelState m = sample_model();
  const std::string bytes = serialize(m);
  ASSERT_GT(bytes.size(), 18u);
  EXPECT_EQ(bytes.substr(0, 6), std::string("TLMN3\0", 6));
  std::uint32_t version = 0;
  for (int i = 3; i >= 0; --i) version = (version << 8) | static_cast<unsigned char>(bytes[6 + i]);
  EXPECT_EQ(version, kCheckpointVersion);
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | static_cast<unsigned char>(bytes[10 + i]);
  EXPECT_EQ(bytes.size(), 18 + header_len + m.params.size() * sizeof(double));
  const auto header = nlohmann::json::parse(bytes.substr(18, header_len));
  EXPECT_EQ(header.at("parameter_count").get<std::size_t>(), m.params.size());
  EXPECT_EQ(header.at("feature_order").size(), kFeatureCount);
}

TEST(Checkpoint, BadMagic) {
  std::string bytes = serialize(sample_model());
  bytes[0] = 'X';
  EXPECT_NE(error_of(bytes).find("bad magic"), std::string::npos);
}

TEST(Checkpoint, VersionBump) {
  std::string bytes = serialize(sample_model());
  bytes[6] = static_cast<char>(kCheckpointVersion + 1);
  const std::string msg = error_of(bytes);
  EXPECT_NE(msg.find("unsupported checkpoint version 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("supported versions: 1"), std::string::npos) << msg;
}

TEST(Checkpoint, Truncation) {
  const std::string bytes = serialize(sample_model());
  for (std::size_t cut : {std::size_t{3}, std::size_t{8}, std::size_t{15}, std::size_t{40}, bytes.size() - 1}) {
    const std::string msg = error_of(bytes.substr(0, cut));
    EXPECT_FALSE(msg.empty()) << cut;
  }
  EXPECT_NE(error_of(bytes.substr(0, bytes.size() - 8)).find("truncated"), std::string::npos);
}

TEST(Checkpoint, TrailingBytes) {
  EXPECT_NE(error_of(serialize(sample_model()) + "x").find("trailing"), std::string::npos);
}

TEST(Checkpoint, InconsistentOffsets) {
  const ModelState m = sample_model();
  const std::string bytes = serialize(m);
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | static_cast<unsigned char>(bytes[10 + i]);
  auto header = nlohmann::json::parse(bytes.substr(18, header_len));
  header["tensors"][1]["offset_bytes"] = 8;
  const std::string new_header = header.dump();
  std::string rebuilt = bytes.substr(0, 10);
  std::uint64_t len = new_header.size();
  for (int i = 0; i < 8; ++i) rebuilt.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  rebuilt += new_header;
  rebuilt += bytes.substr(18 + header_len);
  EXPECT_NE(error_of(rebuilt).find("inconsistent"), std::string::npos);
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/model.tlmn3"), CheckpointError);
}

}  // namespace
}  // namespace tlmn
