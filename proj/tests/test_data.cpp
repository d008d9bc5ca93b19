#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <zlib.h>

#include "advdyn/data.hpp"

using namespace advdyn;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("advdyn-data-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "-" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

void put_u32(std::string& s, std::uint32_t v) {
  for (int shift : {24, 16, 8, 0}) s.push_back(static_cast<char>((v >> shift) & 0xff));
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  os << bytes;
}

std::string idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                       const std::string& payload) {
  std::string s;
  put_u32(s, magic);
  put_u32(s, n);
  put_u32(s, rows);
  put_u32(s, cols);
  return s + payload;
}

std::string idx_labels(std::uint32_t n, const std::string& payload) {
  std::string s;
  put_u32(s, 0x00000801);
  put_u32(s, n);
  return s + payload;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Usage;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

LabeledDataset toy_dataset() {
  LabeledDataset d;
  d.d = 2;
  Vector a(2), b(2), c(2);
  a << 3, 4;
  b << 0, 1;
  c << 2, 0;
  d.inputs = {a, b, c};
  d.labels = {1, 0, 1};
  d.scale = mean_norm(d.inputs);
  return d;
}

}  // namespace

TEST(LoadIdx, HandcraftedZeroImages) {
  TempDir tmp;
  write_bytes(tmp.file("img"), idx_images(0x803, 2, 28, 28, std::string(2 * 784, '\0')));
  write_bytes(tmp.file("lab"), idx_labels(2, std::string("\x03\x08", 2)));
  const RawDataset r = load_mnist_idx(tmp.file("img"), tmp.file("lab"));
  ASSERT_EQ(r.images.size(), 2u);
  EXPECT_EQ(r.rows, 28u);
  EXPECT_EQ(r.cols, 28u);
  for (const Vector& x : r.images) {
    EXPECT_EQ(x.size(), 784);
    EXPECT_EQ(x.norm(), 0.0);
  }
  EXPECT_EQ(r.digits, (std::vector<int>{3, 8}));
}

TEST(LoadIdx, PixelsAreScaledToUnitInterval) {
  TempDir tmp;
  write_bytes(tmp.file("img"), idx_images(0x803, 1, 1, 3, std::string("\x00\x80\xff", 3)));
  write_bytes(tmp.file("lab"), idx_labels(1, std::string("\x01", 1)));
  const RawDataset r = load_mnist_idx(tmp.file("img"), tmp.file("lab"));
  EXPECT_EQ(r.images[0][0], 0.0);
  EXPECT_DOUBLE_EQ(r.images[0][1], 128.0 / 255.0);
  EXPECT_EQ(r.images[0][2], 1.0);
}

TEST(LoadIdx, BadMagicIsAFormatErrorAtOffsetZero) {
  TempDir tmp;
  write_bytes(tmp.file("img"), idx_images(0x802, 1, 1, 1, std::string(1, '\0')));
  write_bytes(tmp.file("lab"), idx_labels(1, std::string(1, '\0')));
  const auto f = [&] { load_mnist_idx(tmp.file("img"), tmp.file("lab")); };
  EXPECT_EQ(kind_of(f), ErrorKind::Format);
  EXPECT_NE(message_of(f).find("offset 0"), std::string::npos);
}

TEST(LoadIdx, TruncatedPayloadNamesFieldAndOffset) {
  TempDir tmp;
  write_bytes(tmp.file("img"), idx_images(0x803, 2, 2, 2, std::string(6, '\x10')));
  write_bytes(tmp.file("lab"), idx_labels(2, std::string(2, '\0')));
  const auto f = [&] { load_mnist_idx(tmp.file("img"), tmp.file("lab")); };
  EXPECT_EQ(kind_of(f), ErrorKind::Format);
  const std::string msg = message_of(f);
  EXPECT_NE(msg.find("image payload"), std::string::npos) << msg;
  EXPECT_NE(msg.find("offset 20"), std::string::npos) << msg;
}

TEST(LoadIdx, TruncatedHeader) {
  TempDir tmp;
  write_bytes(tmp.file("img"), std::string("\x00\x00\x08\x03\x00", 5));
  write_bytes(tmp.file("lab"), idx_labels(1, std::string(1, '\0')));
  EXPECT_EQ(kind_of([&] { load_mnist_idx(tmp.file("img"), tmp.file("lab")); }), ErrorKind::Format);
}

TEST(LoadIdx, LabelCountMismatch) {
  TempDir tmp;
  write_bytes(tmp.file("img"), idx_images(0x803, 2, 1, 1, std::string(2, '\0')));
  write_bytes(tmp.file("lab"), idx_labels(3, std::string(3, '\0')));
  EXPECT_EQ(kind_of([&] { load_mnist_idx(tmp.file("img"), tmp.file("lab")); }), ErrorKind::Format);
}

TEST(LoadIdx, MissingFileIsAnIoError) {
  EXPECT_EQ(kind_of([] { load_mnist_idx("/nonexistent/advdyn/img", "/nonexistent/advdyn/lab"); }), ErrorKind::Io);
}

TEST(LoadIdx, RoundTripThroughWriter) {
  TempDir tmp;
  RawDataset r;
  r.rows = 2;
  r.cols = 3;
  Rng rng(5);
  for (int i = 0; i < 4; ++i) {
    Vector x(6);
    for (int j = 0; j < 6; ++j) x[j] = static_cast<double>(rng.next_u64() % 256) / 255.0;
    r.images.push_back(x);
    r.digits.push_back(i * 3 % 10);
  }
  write_mnist_idx(r, tmp.file("img"), tmp.file("lab"));
  const RawDataset back = load_mnist_idx(tmp.file("img"), tmp.file("lab"));
  EXPECT_EQ(back.rows, 2u);
  EXPECT_EQ(back.cols, 3u);
  EXPECT_EQ(back.digits, r.digits);
  for (std::size_t i = 0; i < r.images.size(); ++i) EXPECT_TRUE(back.images[i] == r.images[i]);
}

TEST(LoadIdx, GzipInputsAreDecompressed) {
  TempDir tmp;
  const std::string img = idx_images(0x803, 1, 2, 2, std::string("\x01\x02\x03\x04", 4));
  const std::string lab = idx_labels(1, std::string("\x09", 1));
  for (const auto& [name, bytes] : {std::pair{"img.gz", img}, std::pair{"lab.gz", lab}}) {
    gzFile f = gzopen(tmp.file(name).c_str(), "wb");
    ASSERT_NE(f, nullptr);
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
  }
  const RawDataset r = load_mnist_idx(tmp.file("img.gz"), tmp.file("lab.gz"));
  EXPECT_EQ(r.digits, std::vector<int>{9});
  EXPECT_DOUBLE_EQ(r.images[0][3], 4.0 / 255.0);
}

TEST(BinarizeOddEven, Convention) {
  RawDataset r;
  r.rows = r.cols = 1;
  for (int dgt = 0; dgt < 10; ++dgt) {
    r.images.push_back(Vector::Constant(1, 0.5));
    r.digits.push_back(dgt);
  }
  const LabeledDataset d = binarize_odd_even(r);
  EXPECT_EQ(d.labels[7], 1.0);
  EXPECT_EQ(d.labels[0], 0.0);
  for (int dgt = 0; dgt < 10; ++dgt) EXPECT_EQ(d.labels[dgt], dgt % 2);
  EXPECT_EQ(d.source, DataSource::MnistIdx);
  r.digits[3] = 12;
  EXPECT_EQ(kind_of([&] { binarize_odd_even(r); }), ErrorKind::Format);
}

TEST(RescaleTo, SingleInput) {
  LabeledDataset d;
  d.d = 2;
  Vector x(2);
  x << 3, 4;
  d.inputs = {x};
  d.labels = {1};
  EXPECT_NEAR(rescale_to(d, 0.5).inputs[0].norm(), 0.5, 1e-15);
}

TEST(RescaleTo, MeanNormEqualsScaleAndComposes) {
  const LabeledDataset d = toy_dataset();
  const LabeledDataset a = rescale_to(d, 7.0);
  EXPECT_NEAR(mean_norm(a.inputs), 7.0, 1e-6 * 7.0);
  EXPECT_EQ(a.scale, 7.0);
  const LabeledDataset b1 = rescale_to(rescale_to(d, 0.3), 11.0);
  const LabeledDataset b2 = rescale_to(d, 11.0);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_LE((b1.inputs[i] - b2.inputs[i]).norm(), 1e-14 * 11.0);
}

TEST(RescaleTo, Errors) {
  LabeledDataset zero;
  zero.d = 2;
  zero.inputs = {Vector::Zero(2)};
  zero.labels = {0};
  EXPECT_THROW(rescale_to(zero, 1.0), Error);
  EXPECT_THROW(rescale_to(toy_dataset(), 0.0), Error);
  EXPECT_THROW(rescale_to(toy_dataset(), -1.0), Error);
}

TEST(EpsilonFromRatio, Examples) {
  EXPECT_NEAR(epsilon_from_ratio(rescale_to(toy_dataset(), 10.0), 0.1), 1.0, 1e-14);
  EXPECT_NEAR(epsilon_from_ratio(rescale_to(toy_dataset(), 1.0), 0.1), 0.1, 1e-15);
  EXPECT_EQ(epsilon_from_ratio(0.01, 10.0), 0.1);
  EXPECT_THROW(epsilon_from_ratio(1.0, 0.0), Error);
  EXPECT_THROW(epsilon_from_ratio(0.0, 1.0), Error);
}

TEST(EpsilonFromRatio, HomogeneousInTheInputs) {
  const LabeledDataset d = toy_dataset();
  LabeledDataset scaled = d;
  for (Vector& x : scaled.inputs) x *= 4.0;
  EXPECT_DOUBLE_EQ(epsilon_from_ratio(scaled, 0.3), 4.0 * epsilon_from_ratio(d, 0.3));
}

TEST(SyntheticInput, InsideScaleSeededAndSecondMoment) {
  EXPECT_TRUE(synthetic_input(2, 1.0, 4) == synthetic_input(2, 1.0, 4));
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector x = synthetic_input(2, 0.5, static_cast<std::uint64_t>(i));
    ASSERT_LT(x.norm(), 0.5);
    sum += x.squaredNorm();
  }
  // E |x|^2 = scale^2 / 2 with variance scale^4 / 12 in two dimensions.
  const double se = std::pow(0.5, 4) / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(sum / n, 0.125, 3 * se);
  EXPECT_THROW(synthetic_input(2, 0.0, 1), Error);
}

TEST(BalancedSubset, CountsAndInterleaving) {
  LabeledDataset d;
  d.d = 1;
  for (int i = 0; i < 40; ++i) {
    d.inputs.push_back(Vector::Constant(1, i));
    d.labels.push_back(i % 3 == 0 ? 1.0 : 0.0);
  }
  const LabeledDataset s = balanced_subset(d, 5, 9);
  ASSERT_EQ(s.size(), 10u);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s.labels[i], i % 2 == 0 ? 1.0 : 0.0);
  const LabeledDataset t = balanced_subset(d, 5, 9);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_TRUE(s.inputs[i] == t.inputs[i]);
  EXPECT_THROW(balanced_subset(d, 20, 9), Error);
}

TEST(MnistSubset, LoadsWhenPresent) {
  const fs::path dir = ADVDYN_MNIST_DIR;
  const fs::path img = dir / "mnist5k-images-idx3-ubyte", lab = dir / "mnist5k-labels-idx1-ubyte";
  if (!fs::exists(img) || !fs::exists(lab)) GTEST_SKIP() << "MNIST files not found under " << dir;
  const RawDataset r = load_mnist_idx(img.string(), lab.string());
  EXPECT_EQ(r.rows, 28u);
  EXPECT_EQ(r.cols, 28u);
  EXPECT_EQ(r.images.size(), r.digits.size());
  std::vector<int> hist(10, 0);
  for (int dgt : r.digits) {
    ASSERT_GE(dgt, 0);
    ASSERT_LE(dgt, 9);
    ++hist[dgt];
  }
  for (int c : hist) EXPECT_GT(c, 0);
  const LabeledDataset d = rescale_to(binarize_odd_even(r), 0.1);
  EXPECT_NEAR(epsilon_from_ratio(d, 10.0), 1.0, 1e-12);
}
