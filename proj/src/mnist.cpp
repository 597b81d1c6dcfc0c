// SPDX-License-Identifier: Apache-2.0
//
// IDX reader for the MNIST file pair: big-endian headers, magic 0x00000803
// for images (count x rows x cols of unsigned bytes) and 0x00000801 for
// labels.
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mmfl/errors.hpp"
#include "mmfl/learning.hpp"

namespace mmfl {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                   const std::string& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError("'" + path + "': truncated header, need 4 bytes at offset " +
                      std::to_string(offset) + " but file has " +
                      std::to_string(bytes.size()) + " bytes");
  }
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path) {
  const auto raw_images = read_file(images_path);
  const std::uint32_t magic = be32(raw_images, 0, images_path);
  if (magic != kImagesMagic) {
    throw FormatError("'" + images_path + "': bad magic at byte 0, expected 0x" +
                      "00000803, got 0x" + [&] {
                        char buf[16];
                        std::snprintf(buf, sizeof(buf), "%08x", magic);
                        return std::string(buf);
                      }());
  }
  const std::uint32_t count = be32(raw_images, 4, images_path);
  const std::uint32_t rows = be32(raw_images, 8, images_path);
  const std::uint32_t cols = be32(raw_images, 12, images_path);
  const std::size_t expected =
      16 + static_cast<std::size_t>(count) * rows * cols;
  if (raw_images.size() != expected) {
    throw FormatError("'" + images_path + "': expected " +
                      std::to_string(expected) + " bytes for " +
                      std::to_string(count) + " images of " +
                      std::to_string(rows) + "x" + std::to_string(cols) +
                      ", file has " + std::to_string(raw_images.size()));
  }

  const auto raw_labels = read_file(labels_path);
  const std::uint32_t label_magic = be32(raw_labels, 0, labels_path);
  if (label_magic != kLabelsMagic) {
    throw FormatError("'" + labels_path + "': bad magic at byte 0, expected 0x" +
                      "00000801, got 0x" + [&] {
                        char buf[16];
                        std::snprintf(buf, sizeof(buf), "%08x", label_magic);
                        return std::string(buf);
                      }());
  }
  const std::uint32_t label_count = be32(raw_labels, 4, labels_path);
  if (raw_labels.size() != 8 + static_cast<std::size_t>(label_count)) {
    throw FormatError("'" + labels_path + "': expected " +
                      std::to_string(8 + label_count) + " bytes for " +
                      std::to_string(label_count) + " labels, file has " +
                      std::to_string(raw_labels.size()));
  }
  if (label_count != count) {
    throw FormatError("image/label count mismatch: '" + images_path + "' has " +
                      std::to_string(count) + ", '" + labels_path + "' has " +
                      std::to_string(label_count));
  }

  Dataset data;
  data.num_classes = 10;
  const int dim = static_cast<int>(rows * cols);
  data.features.resize(static_cast<int>(count), dim);
  data.labels.resize(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::size_t base = 16 + static_cast<std::size_t>(s) * rows * cols;
    for (int d = 0; d < dim; ++d) {
      data.features(static_cast<int>(s), d) =
          static_cast<double>(raw_images[base + static_cast<std::size_t>(d)]) /
          255.0;
    }
    data.labels[s] = static_cast<int>(raw_labels[8 + s]);
  }
  return data;
}

}  // namespace mmfl
