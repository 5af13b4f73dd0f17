#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "ovp/container.hpp"

namespace ovp {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("ovp_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(Container, ByteLayout) {
  OvpContainer c;
  c.dtype = NormalDType::Flint4;
  c.bias = 3;
  c.scale = 0.5;
  c.dims = {3};
  c.payload = {0x12, 0x03};
  const std::vector<std::uint8_t> want = {
      'O', 'V', 'P', '1',                              // magic
      0x01, 0x00,                                      // version
      0x01,                                            // dtype flint4
      0x03,                                            // bias
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xE0, 0x3F,  // f64 0.5
      0x01, 0x00, 0x00, 0x00,                          // rank
      0x03, 0x00, 0x00, 0x00,                          // dims[0]
      0x12, 0x03,                                      // payload
  };
  EXPECT_EQ(write_container(c), want);
  EXPECT_EQ(read_container(want), c);
}

TEST(Container, HeaderOnlyEmptyTensor) {
  const auto c = encode_tensor(std::vector<float>{}, {0}, make_config(NormalDType::Int4, 1.0));
  const auto bytes = write_container(c);
  EXPECT_EQ(bytes.size(), 4u + 2 + 1 + 1 + 8 + 4 + 4);
  const auto back = read_container(bytes);
  EXPECT_EQ(back.element_count(), 0u);
  EXPECT_TRUE(decode_tensor(back).data.empty());
}

ErrorCode read_error(const std::vector<std::uint8_t>& bytes) {
  try {
    read_container(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "stream accepted";
  return ErrorCode::Io;
}

std::vector<std::uint8_t> sample_stream() {
  return write_container(encode_tensor(std::vector<float>{1, 2, 30, 4, 5}, {5}, make_config(NormalDType::Int4, 1.0)));
}

TEST(Container, Errors) {
  auto bytes = sample_stream();

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_EQ(read_error(truncated), ErrorCode::TruncatedPayload);

  auto magic = bytes;
  magic[3] = '2';
  EXPECT_EQ(read_error(magic), ErrorCode::BadMagic);

  auto version = bytes;
  version[4] = 2;
  EXPECT_EQ(read_error(version), ErrorCode::UnsupportedVersion);

  auto dtype = bytes;
  dtype[6] = 7;
  EXPECT_EQ(read_error(dtype), ErrorCode::BadHeader);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(read_error(trailing), ErrorCode::BadHeader);

  auto scale = bytes;
  std::fill(scale.begin() + 8, scale.begin() + 16, 0);
  EXPECT_EQ(read_error(scale), ErrorCode::BadHeader);

  EXPECT_EQ(read_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10)), ErrorCode::BadHeader);
}

TEST(Container, WriteReadIdentityOnRandomStreams) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> rank_dist(0, 3), dim_dist(0, 9), dtype_dist(0, 2);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int iter = 0; iter < 500; ++iter) {
    OvpContainer c;
    c.dtype = static_cast<NormalDType>(dtype_dist(rng));
    c.bias = static_cast<std::uint8_t>(default_bias(c.dtype));
    c.scale = std::ldexp(1.0 + byte(rng) / 256.0, dim_dist(rng) - 5);
    c.dims.resize(static_cast<std::size_t>(rank_dist(rng)));
    for (auto& d : c.dims) d = static_cast<std::uint32_t>(dim_dist(rng));
    c.payload.resize(expected_payload_size(c.dtype, c.element_count()));
    for (auto& b : c.payload) b = static_cast<std::uint8_t>(byte(rng));

    const auto bytes = write_container(c);
    const auto back = read_container(bytes);
    ASSERT_EQ(back, c);
    ASSERT_EQ(write_container(back), bytes);
  }
}

TEST(TensorFiles, SaveLoad) {
  TempDir dir;
  const Tensor t{{2, 3}, {1.5f, -2.0f, 0.0f, 3.25f, 1e-3f, -7.0f}};
  const auto path = dir.path() / "x.f32";
  save_tensor(path, t);
  EXPECT_TRUE(fs::exists(tensor_header_path(path)));
  EXPECT_EQ(fs::file_size(path), 24u);
  const auto back = load_tensor(path);
  EXPECT_EQ(back.dims, t.dims);
  EXPECT_EQ(back.data, t.data);
}

TEST(TensorFiles, Errors) {
  TempDir dir;
  const auto path = dir.path() / "x.f32";
  try {
    load_tensor(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }

  save_tensor(path, {{4}, {1, 2, 3, 4}});
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put('\0');
  }
  EXPECT_THROW(load_tensor(path), Error);

  {
    std::ofstream out(tensor_header_path(path), std::ios::binary | std::ios::trunc);
    out << "NOPE";
  }
  try {
    load_tensor(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadMagic);
  }
}

TEST(ContainerFiles, AtomicSaveAndLoad) {
  TempDir dir;
  std::mt19937_64 rng(5);
  const auto v = oracle::gaussian(rng, 101);
  const auto c = encode_tensor(v, {101}, make_config(NormalDType::Flint4, 0.1));
  const auto path = dir.path() / "t.ovp";
  save_container(path, c);
  EXPECT_FALSE(fs::exists(dir.path() / "t.ovp.tmp"));
  EXPECT_EQ(load_container(path), c);
}

}  // namespace
}  // namespace ovp
