#include "diffl2o/idx.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

#include "diffl2o/errors.hpp"

namespace diffl2o {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 4)) {
    throw FormatError("truncated IDX header in " + path.string());
  }
  return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
         (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    std::ostringstream msg;
    msg << "bad magic 0x" << std::hex << got << " in " << path.string() << " (expected 0x" << want
        << ")";
    throw FormatError(msg.str());
  }
}

}  // namespace

ClassificationDataset load_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path,
                               std::optional<std::size_t> limit) {
  auto images = open(images_path);
  auto labels = open(labels_path);

  expect_magic(read_be32(images, images_path), kImageMagic, images_path);
  const std::uint32_t image_count = read_be32(images, images_path);
  const std::uint32_t rows = read_be32(images, images_path);
  const std::uint32_t cols = read_be32(images, images_path);

  expect_magic(read_be32(labels, labels_path), kLabelMagic, labels_path);
  const std::uint32_t label_count = read_be32(labels, labels_path);

  if (image_count != label_count) {
    std::ostringstream msg;
    msg << "count mismatch: " << image_count << " images vs " << label_count << " labels";
    throw FormatError(msg.str());
  }

  const std::size_t count = std::min<std::size_t>(image_count, limit.value_or(image_count));
  const std::size_t pixels = std::size_t{rows} * cols;

  ClassificationDataset data;
  data.images.reserve(count);
  data.labels.reserve(count);

  std::vector<unsigned char> buf(pixels);
  for (std::size_t i = 0; i < count; ++i) {
    if (!images.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels))) {
      throw FormatError("truncated image data in " + images_path.string());
    }
    Eigen::VectorXd img(static_cast<Eigen::Index>(pixels));
    for (std::size_t p = 0; p < pixels; ++p) img[static_cast<Eigen::Index>(p)] = buf[p] / 255.0;
    data.images.push_back(std::move(img));
  }

  std::vector<unsigned char> lab(count);
  if (count > 0 &&
      !labels.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(count))) {
    throw FormatError("truncated label data in " + labels_path.string());
  }
  int max_label = 0;
  for (auto l : lab) {
    data.labels.push_back(l);
    max_label = std::max<int>(max_label, l);
  }
  data.num_classes = std::max(10, max_label + 1);
  return data;
}

}  // namespace diffl2o
