#include "henet/data_io.hpp"

#include <algorithm>
#include <fstream>

namespace henet {

void LabeledDataset::copy_normalized(Index i, float* dst) const {
  if (i < 0 || i >= count) throw DataError("sample index out of range");
  const Index per = bytes_per_image();
  const std::uint8_t* src = pixels.data() + i * per;
  const Index plane = image_size * image_size;
  for (Index c = 0; c < 3; ++c) {
    const float mean = channel_means[static_cast<std::size_t>(c)];
    for (Index j = 0; j < plane; ++j)
      dst[c * plane + j] = static_cast<float>(src[c * plane + j]) * (1.0f / 255.0f) - mean;
  }
}

Tensor<float> LabeledDataset::normalized_image(Index i) const {
  Tensor<float> t(Shape{1, 3, image_size, image_size});
  copy_normalized(i, t.data());
  return t;
}

LabeledDataset LabeledDataset::head(Index n) const {
  if (n < 0 || n > count) throw DataError("subset size out of range");
  LabeledDataset out;
  out.count = n;
  out.class_count = class_count;
  out.image_size = image_size;
  out.channel_means = channel_means;
  out.pixels.assign(pixels.begin(), pixels.begin() + n * bytes_per_image());
  out.labels.assign(labels.begin(), labels.begin() + n);
  return out;
}

std::array<float, 3> compute_channel_means(const LabeledDataset& ds) {
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  const Index plane = ds.image_size * ds.image_size;
  for (Index i = 0; i < ds.count; ++i) {
    const std::uint8_t* src = ds.pixels.data() + i * ds.bytes_per_image();
    for (Index c = 0; c < 3; ++c)
      for (Index j = 0; j < plane; ++j)
        sum[static_cast<std::size_t>(c)] += src[c * plane + j];
  }
  const double denom = 255.0 * static_cast<double>(ds.count) * static_cast<double>(plane);
  std::array<float, 3> means{0.0f, 0.0f, 0.0f};
  if (ds.count > 0)
    for (int c = 0; c < 3; ++c)
      means[static_cast<std::size_t>(c)] = static_cast<float>(sum[static_cast<std::size_t>(c)] / denom);
  return means;
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing dataset file: " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) throw DataError("failed reading dataset file: " + path);
  return buf;
}

// Appends records of the form [label bytes..., 3072 image bytes].
void append_records(const std::string& path, Index label_bytes, int label_offset,
                    int class_count, LabeledDataset& ds) {
  const std::vector<std::uint8_t> buf = read_file(path);
  const Index record = label_bytes + 3072;
  if (buf.size() % static_cast<std::size_t>(record) != 0)
    throw DataError("truncated record at index " + std::to_string(buf.size() / record) +
                    " in " + path);
  const Index n = static_cast<Index>(buf.size()) / record;
  for (Index i = 0; i < n; ++i) {
    const std::uint8_t* rec = buf.data() + i * record;
    const int label = rec[label_offset];
    if (label >= class_count)
      throw DataError("label " + std::to_string(label) + " out of range in " + path);
    ds.labels.push_back(label);
    ds.pixels.insert(ds.pixels.end(), rec + label_bytes, rec + record);
  }
  ds.count += n;
}

}  // namespace

DatasetPair load_cifar10(const std::string& dir) {
  DatasetPair out;
  out.train.class_count = 10;
  out.test.class_count = 10;
  for (int b = 1; b <= 5; ++b)
    append_records(dir + "/data_batch_" + std::to_string(b) + ".bin", 1, 0, 10, out.train);
  append_records(dir + "/test_batch.bin", 1, 0, 10, out.test);
  out.train.channel_means = compute_channel_means(out.train);
  out.test.channel_means = out.train.channel_means;
  return out;
}

DatasetPair load_cifar100(const std::string& dir) {
  DatasetPair out;
  out.train.class_count = 100;
  out.test.class_count = 100;
  // record = coarse label, fine label, image; the fine label is byte 1
  append_records(dir + "/train.bin", 2, 1, 100, out.train);
  append_records(dir + "/test.bin", 2, 1, 100, out.test);
  out.train.channel_means = compute_channel_means(out.train);
  out.test.channel_means = out.train.channel_means;
  return out;
}

LabeledDataset synth_dataset(Index n, int classes, std::uint64_t seed) {
  if (n < 1 || classes < 1) throw DataError("synth_dataset: n and classes must be >= 1");
  LabeledDataset ds;
  ds.count = n;
  ds.class_count = classes;
  ds.image_size = 32;
  ds.pixels.reserve(static_cast<std::size_t>(n * ds.bytes_per_image()));
  ds.labels.reserve(static_cast<std::size_t>(n));
  Rng rng(seed);
  const Index plane = ds.image_size * ds.image_size;
  for (Index i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % classes);
    ds.labels.push_back(k);
    // planted per-class channel means, 20 levels apart, noise well inside [0,255]
    const int base[3] = {28 + 20 * (k % 10), 208 - 20 * (k % 10),
                         108 + (k * 53) % 41};
    for (Index c = 0; c < 3; ++c) {
      for (Index j = 0; j < plane; ++j) {
        const int noise = static_cast<int>(rng.uniform_int(51)) - 25;
        const int v = std::clamp(base[c] + noise, 0, 255);
        ds.pixels.push_back(static_cast<std::uint8_t>(v));
      }
    }
  }
  ds.channel_means = compute_channel_means(ds);
  return ds;
}

void write_cifar10_batch(const LabeledDataset& ds, const std::string& path) {
  if (ds.image_size != 32) throw DataError("write_cifar10_batch: images must be 32x32");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (Index i = 0; i < ds.count; ++i) {
    const std::uint8_t label = static_cast<std::uint8_t>(ds.labels[static_cast<std::size_t>(i)]);
    out.write(reinterpret_cast<const char*>(&label), 1);
    out.write(reinterpret_cast<const char*>(ds.pixels.data() + i * ds.bytes_per_image()),
              ds.bytes_per_image());
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace henet
