#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "support.hpp"
#include "vitct/error.hpp"
#include "vitct/fileio.hpp"
#include "vitct/weights.hpp"

namespace vitct {
namespace {

using nlohmann::json;
using testing::TempDir;

using Bytes = std::vector<std::uint8_t>;

struct Split {
  json manifest;
  Bytes blob;
};

Split split(const Bytes& bytes) {
  std::uint64_t n = 0;
  for (int i = 7; i >= 0; --i) n = (n << 8) | bytes[i];
  Split s;
  s.manifest = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(n));
  s.blob.assign(bytes.begin() + 8 + static_cast<long>(n), bytes.end());
  return s;
}

Bytes join(const json& manifest, const Bytes& blob) {
  const std::string text = manifest.dump();
  Bytes out(8);
  std::uint64_t n = text.size();
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(n >> (8 * i));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

TEST(WeightsTest, SaveLoadSaveIsByteIdentical) {
  TempDir dir("weights");
  auto p = init_params<float>(VitConfig::toy(), 3);
  p.head_bias.mutable_value()[1] = -0.0f;
  p.pos_embed.mutable_value()[5] = 1e-40f;  // subnormal survives
  save_weights(p, dir / "a.vitw");
  auto q = load_weights(dir / "a.vitw");
  save_weights(q, dir / "b.vitw");
  EXPECT_EQ(read_file_bytes(dir / "a.vitw"), read_file_bytes(dir / "b.vitw"));
  EXPECT_EQ(q.config, p.config);
  const auto np = p.named(), nq = q.named();
  ASSERT_EQ(np.size(), nq.size());
  for (std::size_t i = 0; i < np.size(); ++i) {
    const auto a = np[i].var.value().data(), b = nq[i].var.value().data();
    ASSERT_EQ(std::memcmp(a.data(), b.data(), a.size_bytes()), 0) << np[i].name;
  }
}

TEST(WeightsTest, BlobIsLittleEndianFloat32) {
  auto p = init_params<float>(VitConfig::toy(), 4);
  p.patch_weight.mutable_value()[0] = 1.0f;
  const auto s = split(encode_weights(p));
  const auto& entry = s.manifest["tensors"]["patch_embed.proj.weight"];
  const std::size_t off = entry["offset"].get<std::size_t>();
  EXPECT_EQ(entry["dtype"], "float32");
  EXPECT_EQ(entry["length"].get<std::size_t>(), 32u * 48u * 4u);
  const std::uint32_t bits = std::uint32_t(s.blob[off]) | std::uint32_t(s.blob[off + 1]) << 8 |
                             std::uint32_t(s.blob[off + 2]) << 16 |
                             std::uint32_t(s.blob[off + 3]) << 24;
  EXPECT_EQ(std::bit_cast<float>(bits), 1.0f);
  EXPECT_EQ(s.manifest["format"], "vitct.weights");
  EXPECT_EQ(s.manifest["config"]["embed_dim"], 32);
}

TEST(WeightsTest, TruncationIsFormatErrorNotCrash) {
  const auto bytes = encode_weights(init_params<float>(VitConfig::toy(), 5));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{8}, std::size_t{40},
                          bytes.size() / 2, bytes.size() - 1}) {
    Bytes part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(decode_weights(part), WeightsError) << "cut at " << cut;
  }
}

TEST(WeightsTest, FlippedBlobBitIsChecksumError) {
  auto bytes = encode_weights(init_params<float>(VitConfig::toy(), 6));
  bytes[bytes.size() - 10] ^= 0x04;
  EXPECT_THROW(decode_weights(bytes), ChecksumError);
}

TEST(WeightsTest, WrongHeadShapeNamesTensor) {
  auto s = split(encode_weights(init_params<float>(VitConfig::toy(), 7)));
  s.manifest["tensors"]["head.weight"]["shape"] = {32, 2};
  try {
    decode_weights(join(s.manifest, s.blob));
    FAIL() << "expected ShapeMismatchError";
  } catch (const ShapeMismatchError& e) {
    EXPECT_EQ(e.tensor_name(), "head.weight");
    EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos);
  }
}

TEST(WeightsTest, MissingTensorIsDistinctError) {
  auto s = split(encode_weights(init_params<float>(VitConfig::toy(), 8)));
  s.manifest["tensors"].erase("blocks.1.mlp.fc2.bias");
  try {
    decode_weights(join(s.manifest, s.blob));
    FAIL() << "expected MissingTensorError";
  } catch (const MissingTensorError& e) {
    EXPECT_EQ(e.tensor_name(), "blocks.1.mlp.fc2.bias");
  }
}

TEST(WeightsTest, WrongDtypeAndExtraTensorsRejected) {
  auto s = split(encode_weights(init_params<float>(VitConfig::toy(), 9)));
  auto bad = s.manifest;
  bad["tensors"]["norm.bias"]["dtype"] = "float16";
  EXPECT_THROW(decode_weights(join(bad, s.blob)), WeightsError);
  bad = s.manifest;
  bad["tensors"]["extra"] = bad["tensors"]["norm.bias"];
  EXPECT_THROW(decode_weights(join(bad, s.blob)), WeightsError);
  bad = s.manifest;
  bad["format"] = "something.else";
  EXPECT_THROW(decode_weights(join(bad, s.blob)), WeightsError);
}

TEST(WeightsTest, MissingFileIsIoError) {
  EXPECT_THROW(load_weights("/nonexistent/dir/w.vitw"), IoError);
}

TEST(WeightsTest, AtomicSaveLeavesNoTemporaries) {
  TempDir dir("weights_atomic");
  save_weights(init_params<float>(VitConfig::toy(), 10), dir / "sub" / "w.vitw");
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "sub")) {
    ++files;
    EXPECT_EQ(e.path().filename(), "w.vitw");
  }
  EXPECT_EQ(files, 1u);
}

}  // namespace
}  // namespace vitct
