#include <gtest/gtest.h>

#include <fstream>

#include "mfd/mfd.hpp"
#include "support/paths.hpp"
#include "support/toy_data.hpp"

namespace mfd {
namespace {

using testing::data_path;
using testing::scratch_dir;

TEST(ImageDecode, PpmGolden) {
  const auto img = decode_image(data_path("rgb_3x2.ppm"));
  ASSERT_EQ(img.height(), 2u);
  ASSERT_EQ(img.width(), 3u);
  EXPECT_EQ(img.domain, PixelDomain::raw);
  const double expect[2][3][3] = {{{255, 0, 0}, {0, 255, 0}, {0, 0, 255}},
                                  {{0, 0, 0}, {128, 128, 128}, {255, 255, 255}}};
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(img.at(y, x, c), expect[y][x][c]);
}

TEST(ImageDecode, PgmIsReplicatedToThreeChannels) {
  const auto img = decode_image(data_path("fixture_gray.pgm"));
  EXPECT_EQ(img.width(), 24u);
  EXPECT_EQ(img.height(), 18u);
  EXPECT_EQ(img.at(5, 7, 0), img.at(5, 7, 2));
}

TEST(ImageDecode, Errors) {
  const auto dir = scratch_dir("decode");
  std::ofstream(dir / "text.png") << "just some words";
  std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n4 4\n255\n\x01\x02";
  std::ofstream(dir / "deep.ppm", std::ios::binary) << "P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06";
  EXPECT_THROW(decode_image(dir / "text.png"), DecodeError);
  EXPECT_THROW(decode_image(dir / "short.ppm"), DecodeError);
  EXPECT_THROW(decode_image(dir / "deep.ppm"), DecodeError);
  EXPECT_THROW(decode_image(dir / "absent.png"), DecodeError);
  const std::vector<std::uint8_t> png_head{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n', 0, 0};
  EXPECT_THROW(decode_image_bytes(png_head, "cut.png"), DecodeError);
}

TEST(ImageEncode, PngAndPpmRoundTrip) {
  const auto dir = scratch_dir("encode");
  Rng rng(1);
  const auto img = testing::toy_image(MaskClass::WithoutMask, rng, 13, 17);
  write_image(dir / "a.png", img);
  write_image(dir / "a.ppm", img);
  EXPECT_EQ(decode_image(dir / "a.png"), img);
  EXPECT_EQ(decode_image(dir / "a.ppm"), img);
  EXPECT_EQ(decode_image(data_path("astronaut.png")).width(), 512u);
  EXPECT_THROW(write_image(dir / "a.bmp", img), ValidationError);
}

TEST(LoadDataset, CountsEntriesAndSkipsUndecodable) {
  const auto root = scratch_dir("dataset");
  testing::write_toy_dataset(root, 2, 3, 8, 8);
  std::ofstream(root / "incorrect_mask" / "zz_notes.txt") << "not an image";
  fs::create_directories(root / "without_mask" / "nested");
  write_image(root / "without_mask" / "nested" / "deep.png", Image(8, 8, 3));
  const auto ds = load_dataset(root);
  EXPECT_EQ(ds.size(), 7u);
  EXPECT_EQ(ds.counts[ordinal(MaskClass::CorrectMask)], 2u);
  EXPECT_EQ(ds.counts[ordinal(MaskClass::WithoutMask)], 3u);
  EXPECT_EQ(ds.skipped, 1u);
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_NE(ds.warnings[0].find("zz_notes.txt"), std::string::npos);
  EXPECT_TRUE(std::is_sorted(ds.entries.begin(), ds.entries.end(),
                             [](const auto& a, const auto& b) { return a.path < b.path; }));

  const DirectorySource src(ds, 5, 6);
  EXPECT_EQ(src.image(0).height(), 5u);
  EXPECT_EQ(src.image(0).width(), 6u);
  EXPECT_EQ(src.label(0), ds.entries[0].label);
}

TEST(LoadDataset, LayoutErrors) {
  const auto root = scratch_dir("layout");
  EXPECT_THROW(load_dataset(root / "absent"), LayoutError);
  fs::create_directories(root / "correct_mask");
  fs::create_directories(root / "incorrect_mask");
  EXPECT_THROW(load_dataset(root), LayoutError);  // without_mask missing
  fs::create_directories(root / "without_mask");
  EXPECT_EQ(load_dataset(root).size(), 0u);
  fs::create_directories(root / "hats");
  EXPECT_THROW(load_dataset(root), LayoutError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = scratch_dir("ckpt");
  const auto net = build_mask_net(17);
  const nlohmann::json meta = {{"seed", 17}, {"epochs", 10}};
  save_model(net, dir / "m.mfd", meta);
  EXPECT_FALSE(fs::exists(dir / "m.mfd.tmp"));
  const auto ck = load_checkpoint(dir / "m.mfd");
  EXPECT_EQ(ck.metadata, meta);
  EXPECT_EQ(ck.header["total_params"], 944595);
  EXPECT_EQ(ck.header["element_type"], "float64");
  const auto a = net.parameters(), b = ck.network.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  EXPECT_EQ(encode_checkpoint(ck.network, ck.metadata), read_file_bytes(dir / "m.mfd"));
}

std::vector<std::uint8_t> small_checkpoint() {
  NetworkConfig cfg;
  cfg.height = cfg.width = 8;
  cfg.conv_filters = {2};
  cfg.hidden = 4;
  return encode_checkpoint(build_network(cfg, 1));
}

void replace_in(std::vector<std::uint8_t>& bytes, const std::string& from, const std::string& to) {
  ASSERT_EQ(from.size(), to.size());
  const auto it = std::search(bytes.begin(), bytes.end(), from.begin(), from.end());
  ASSERT_NE(it, bytes.end()) << from;
  std::copy(to.begin(), to.end(), it);
}

TEST(Checkpoint, ErrorCategories) {
  const auto good = small_checkpoint();
  EXPECT_NO_THROW(decode_checkpoint(good));

  auto magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>{}), FormatError);

  auto version = good;
  replace_in(version, "\"format_version\":1", "\"format_version\":9");
  EXPECT_THROW(decode_checkpoint(version), VersionError);

  auto classes = good;
  replace_in(classes, "correct_mask", "without_mask");
  EXPECT_THROW(decode_checkpoint(classes), FormatError);

  for (std::size_t cut : {std::size_t{6}, std::size_t{40}, good.size() - 8, good.size() - 1})
    EXPECT_THROW(decode_checkpoint(std::span(good).first(cut)), CorruptionError) << cut;

  auto longer = good;
  longer.push_back(0);
  EXPECT_THROW(decode_checkpoint(longer), CorruptionError);

  auto layer = good;
  replace_in(layer, "\"Flatten\"", "\"Flutter\"");
  EXPECT_THROW(decode_checkpoint(layer), CorruptionError);

  EXPECT_THROW(load_checkpoint(scratch_dir("ckpt_missing") / "none.mfd"), IoError);
}

TEST(Checkpoint, SaveLeavesPreviousFileOnFailure) {
  const auto dir = scratch_dir("ckpt_atomic");
  EXPECT_THROW(save_model(build_mask_net(1), dir / "missing_dir" / "m.mfd"), IoError);
  EXPECT_TRUE(fs::is_empty(dir));
}

}  // namespace
}  // namespace mfd
