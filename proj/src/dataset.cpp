#include "adabn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "adabn/errors.hpp"
#include "adabn/rng.hpp"

namespace adabn {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::string& path) {
  if (offset + 4 > bytes.size()) throw FormatError(path + ": truncated header");
  return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void append_be32(std::vector<unsigned char>& bytes, std::uint32_t v) {
  bytes.push_back(static_cast<unsigned char>(v >> 24));
  bytes.push_back(static_cast<unsigned char>(v >> 16));
  bytes.push_back(static_cast<unsigned char>(v >> 8));
  bytes.push_back(static_cast<unsigned char>(v));
}

std::string hex_magic(std::uint32_t magic) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", magic);
  return buf;
}

unsigned char to_byte(float value, const char* what) {
  const double scaled = static_cast<double>(value) * 255.0;
  const long rounded = std::lround(scaled);
  if (rounded < 0 || rounded > 255 || std::abs(scaled - static_cast<double>(rounded)) > 1e-4)
    throw DataError(std::string(what) + ": pixel value " + std::to_string(value) +
                    " is not on the byte grid");
  return static_cast<unsigned char>(rounded);
}

}  // namespace

TensorF LabeledDataset::image(int i) const {
  const int C = channels(), H = height(), W = width();
  const std::int64_t per = static_cast<std::int64_t>(C) * H * W;
  std::vector<float> out(static_cast<std::size_t>(per));
  const float* src = images.data() + static_cast<std::size_t>(i) * per;
  std::copy(src, src + per, out.begin());
  return TensorF({C, H, W}, std::move(out));
}

LabeledDataset read_idx_pair(const std::string& images_path, const std::string& labels_path) {
  const auto img_bytes = read_file(images_path);
  const std::uint32_t img_magic = read_be32(img_bytes, 0, images_path);
  if (img_magic != kIdxImagesMagic)
    throw FormatError(images_path + ": expected image magic " + hex_magic(kIdxImagesMagic) +
                      ", got " + hex_magic(img_magic));
  const std::uint32_t n = read_be32(img_bytes, 4, images_path);
  const std::uint32_t h = read_be32(img_bytes, 8, images_path);
  const std::uint32_t w = read_be32(img_bytes, 12, images_path);
  const std::size_t expected = 16 + std::size_t(n) * h * w;
  if (img_bytes.size() != expected)
    throw FormatError(images_path + ": payload is " + std::to_string(img_bytes.size() - 16) +
                      " bytes, header promises " + std::to_string(expected - 16));

  const auto lbl_bytes = read_file(labels_path);
  const std::uint32_t lbl_magic = read_be32(lbl_bytes, 0, labels_path);
  if (lbl_magic != kIdxLabelsMagic)
    throw FormatError(labels_path + ": expected label magic " + hex_magic(kIdxLabelsMagic) +
                      ", got " + hex_magic(lbl_magic));
  const std::uint32_t ln = read_be32(lbl_bytes, 4, labels_path);
  if (lbl_bytes.size() != 8 + std::size_t(ln))
    throw FormatError(labels_path + ": payload is " + std::to_string(lbl_bytes.size() - 8) +
                      " bytes, header promises " + std::to_string(ln));
  if (ln != n)
    throw ConsistencyError(images_path + " holds " + std::to_string(n) + " images but " +
                           labels_path + " holds " + std::to_string(ln) + " labels");

  LabeledDataset data;
  data.name = "idx";
  data.class_count = 10;
  std::vector<float> pixels(std::size_t(n) * h * w);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<float>(img_bytes[16 + i]) / 255.0f;
  data.images = TensorF({static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w)},
                        std::move(pixels));
  data.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const int label = lbl_bytes[8 + i];
    if (label >= data.class_count)
      throw FormatError(labels_path + ": label " + std::to_string(label) + " at record " +
                        std::to_string(i) + " exceeds the " +
                        std::to_string(data.class_count) + "-class range");
    data.labels[i] = label;
  }
  return data;
}

void write_idx_pair(const LabeledDataset& data, const std::string& images_path,
                    const std::string& labels_path) {
  if (data.channels() != 1) throw DataError("write_idx_pair: IDX images are single-channel");
  std::vector<unsigned char> img;
  img.reserve(16 + static_cast<std::size_t>(data.images.size()));
  append_be32(img, kIdxImagesMagic);
  append_be32(img, static_cast<std::uint32_t>(data.count()));
  append_be32(img, static_cast<std::uint32_t>(data.height()));
  append_be32(img, static_cast<std::uint32_t>(data.width()));
  for (std::int64_t i = 0; i < data.images.size(); ++i)
    img.push_back(to_byte(data.images[i], "write_idx_pair"));
  write_file(images_path, img);

  std::vector<unsigned char> lbl;
  lbl.reserve(8 + data.labels.size());
  append_be32(lbl, kIdxLabelsMagic);
  append_be32(lbl, static_cast<std::uint32_t>(data.labels.size()));
  for (int label : data.labels) lbl.push_back(static_cast<unsigned char>(label));
  write_file(labels_path, lbl);
}

LabeledDataset read_cifar_bin(const std::vector<std::string>& paths, CifarVariant variant) {
  if (paths.empty()) throw DataError("read_cifar_bin: no input files");
  const std::size_t label_bytes = variant == CifarVariant::kCifar10 ? 1 : 2;
  const std::size_t record = label_bytes + 3072;

  LabeledDataset data;
  data.name = variant == CifarVariant::kCifar10 ? "cifar10" : "cifar100";
  data.class_count = variant == CifarVariant::kCifar10 ? 10 : 100;

  std::vector<float> pixels;
  for (const std::string& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % record != 0)
      throw FormatError(path + ": length " + std::to_string(bytes.size()) +
                        " is not a positive multiple of the " + std::to_string(record) +
                        "-byte record");
    const std::size_t count = bytes.size() / record;
    for (std::size_t r = 0; r < count; ++r) {
      const unsigned char* rec = bytes.data() + r * record;
      // cifar100 carries coarse then fine labels; the fine one is kept
      const int label = rec[label_bytes - 1];
      if (label >= data.class_count)
        throw FormatError(path + ": label " + std::to_string(label) + " at record " +
                          std::to_string(r) + " exceeds the " +
                          std::to_string(data.class_count) + "-class range");
      data.labels.push_back(label);
      for (std::size_t i = 0; i < 3072; ++i)
        pixels.push_back(static_cast<float>(rec[label_bytes + i]) / 255.0f);
    }
  }
  data.images =
      TensorF({static_cast<int>(data.labels.size()), 3, 32, 32}, std::move(pixels));
  return data;
}

void write_cifar_bin(const LabeledDataset& data, const std::string& path, CifarVariant variant) {
  if (data.channels() != 3 || data.height() != 32 || data.width() != 32)
    throw DataError("write_cifar_bin: images must be 3x32x32");
  std::vector<unsigned char> bytes;
  const std::int64_t per = 3072;
  for (int i = 0; i < data.count(); ++i) {
    if (variant == CifarVariant::kCifar100) bytes.push_back(0);  // coarse label, not modeled
    bytes.push_back(static_cast<unsigned char>(data.labels[static_cast<std::size_t>(i)]));
    const float* img = data.images.data() + static_cast<std::size_t>(i) * per;
    for (std::int64_t p = 0; p < per; ++p) bytes.push_back(to_byte(img[p], "write_cifar_bin"));
  }
  write_file(path, bytes);
}

BatchPlan make_batches(int n, int batch_size, std::uint64_t seed) {
  if (n < 1) throw ParameterError("make_batches: dataset size must be positive");
  if (batch_size < 1) throw ParameterError("make_batches: batch size must be positive");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng::Stream stream(seed);
  rng::shuffle(std::span<int>(order), stream);

  BatchPlan plan;
  plan.seed = seed;
  plan.batch_size = batch_size;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    plan.batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return plan;
}

FoldSplit kfold_split(int n, int k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("kfold_split: need at least 2 folds");
  if (n < k)
    throw ParameterError("kfold_split: cannot split " + std::to_string(n) + " instances into " +
                         std::to_string(k) + " folds");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng::Stream stream(seed);
  rng::shuffle(std::span<int>(order), stream);

  FoldSplit split;
  split.folds.resize(static_cast<std::size_t>(k));
  const int base = n / k, extra = n % k;
  int cursor = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    auto& fold = split.folds[static_cast<std::size_t>(f)];
    fold.validation.assign(order.begin() + cursor, order.begin() + cursor + size);
    fold.train.reserve(static_cast<std::size_t>(n - size));
    fold.train.insert(fold.train.end(), order.begin(), order.begin() + cursor);
    fold.train.insert(fold.train.end(), order.begin() + cursor + size, order.end());
    cursor += size;
  }
  return split;
}

namespace {

// Seven-segment glyph description on a unit box; segments are
// (A top, B top-right, C bottom-right, D bottom, E bottom-left, F top-left,
// G middle) and each digit lights a fixed subset.
constexpr unsigned char kSegments[10] = {
    0b0111111,  // 0: ABCDEF
    0b0000110,  // 1: BC
    0b1011011,  // 2: ABDEG
    0b1001111,  // 3: ABCDG
    0b1100110,  // 4: BCFG
    0b1101101,  // 5: ACDFG
    0b1111101,  // 6: ACDEFG
    0b0000111,  // 7: ABC
    0b1111111,  // 8: all
    0b1101111,  // 9: ABCDFG
};

struct SegmentBox {
  int y0, y1, x0, x1;  // inclusive pixel rectangle
};

}  // namespace

LabeledDataset make_synthetic_digits(int n, std::uint64_t seed) {
  if (n < 1) throw ParameterError("make_synthetic_digits: size must be positive");
  const int H = 28, W = 28;

  LabeledDataset data;
  data.name = "synthetic";
  data.class_count = 10;
  data.labels.resize(static_cast<std::size_t>(n));
  std::vector<float> pixels(static_cast<std::size_t>(n) * H * W, 0.0f);

  for (int i = 0; i < n; ++i) {
    const int digit = i % 10;
    data.labels[static_cast<std::size_t>(i)] = digit;
    rng::Stream stream(rng::stream_key(seed, rng::kSynthetic, static_cast<std::uint64_t>(i)));

    // Per-instance jitter: glyph position and stroke intensity. The
    // intensity spread is sized so a moderate share of instances falls
    // outside a +/-10% band around its class mean pixel value.
    const int ox = 7 + static_cast<int>(stream.next_below(5));  // [7,11]
    const int oy = 5 + static_cast<int>(stream.next_below(5));  // [5,9]
    const double intensity = stream.next_uniform(0.76, 0.98);
    const int thick = 2;
    const double noise = 0.03;

    // Glyph box: 11 wide, 15 tall, anchored at (oy, ox).
    const int gw = 11, gh = 15, mid = gh / 2;
    const SegmentBox boxes[7] = {
        {0, thick - 1, 0, gw - 1},                       // A
        {0, mid, gw - thick, gw - 1},                    // B
        {mid, gh - 1, gw - thick, gw - 1},               // C
        {gh - thick, gh - 1, 0, gw - 1},                 // D
        {mid, gh - 1, 0, thick - 1},                     // E
        {0, mid, 0, thick - 1},                          // F
        {mid - thick / 2, mid + thick / 2, 0, gw - 1},   // G
    };

    float* img = pixels.data() + static_cast<std::size_t>(i) * H * W;
    for (int s = 0; s < 7; ++s) {
      if (!(kSegments[digit] >> s & 1)) continue;
      const SegmentBox& b = boxes[s];
      for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x) {
          const int py = oy + y, px = ox + x;
          if (py >= 0 && py < H && px >= 0 && px < W)
            img[py * W + px] = static_cast<float>(intensity);
        }
    }
    for (int p = 0; p < H * W; ++p) {
      const double v =
          std::min(1.0, static_cast<double>(img[p]) + noise * stream.next_unit());
      // byte grid so IDX serialization round-trips exactly
      img[p] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
    }
  }

  data.images = TensorF({n, 1, H, W}, std::move(pixels));
  return data;
}

}  // namespace adabn
