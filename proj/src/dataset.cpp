#include "cfb/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

namespace cfb {

namespace {

constexpr std::uint32_t kImagesMagic = 2051;  // 0x00000803
constexpr std::uint32_t kLabelsMagic = 2049;  // 0x00000801

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("idx: truncated header in " + path.string());
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path.string());
  return in;
}

}  // namespace

LabeledSet load_mnist(const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  std::ifstream img = open_binary(images_path);
  if (read_be32(img, images_path) != kImagesMagic)
    throw std::runtime_error("idx: " + images_path.string() + " is not an IDX image file");
  const std::uint32_t n = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);
  if (n == 0 || rows == 0 || cols == 0)
    throw std::runtime_error("idx: empty image file " + images_path.string());

  std::ifstream lab = open_binary(labels_path);
  if (read_be32(lab, labels_path) != kLabelsMagic)
    throw std::runtime_error("idx: " + labels_path.string() + " is not an IDX label file");
  const std::uint32_t nl = read_be32(lab, labels_path);
  if (nl != n)
    throw std::runtime_error("idx: " + std::to_string(n) + " images but " + std::to_string(nl) +
                             " labels");

  LabeledSet set;
  set.images = Tensor<Real>({static_cast<Index>(n), static_cast<Index>(rows),
                             static_cast<Index>(cols)});
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw std::runtime_error("idx: truncated image data in " + images_path.string());
    Real* dst = set.images.data() + static_cast<Index>(i) * static_cast<Index>(buf.size());
    for (std::size_t j = 0; j < buf.size(); ++j)
      dst[j] = static_cast<Real>(buf[j]) / Real(255);
  }

  set.labels.resize(n);
  std::vector<unsigned char> lbuf(n);
  if (!lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(n)))
    throw std::runtime_error("idx: truncated label data in " + labels_path.string());
  for (std::uint32_t i = 0; i < n; ++i) {
    if (lbuf[i] > 9)
      throw std::runtime_error("idx: label " + std::to_string(int(lbuf[i])) + " out of range");
    set.labels[i] = lbuf[i];
  }
  return set;
}

void save_idx(const LabeledSet& set, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  if (set.images.rank() != 3)
    throw std::invalid_argument("save_idx: images must be [n, rows, cols]");
  const Index n = set.images.extent(0);
  const Index rows = set.images.extent(1);
  const Index cols = set.images.extent(2);
  if (n != set.size()) throw std::invalid_argument("save_idx: image/label count mismatch");

  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot write " + images_path.string());
  write_be32(img, kImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(n));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows * cols));
  for (Index i = 0; i < n; ++i) {
    const Real* src = set.images.data() + i * rows * cols;
    for (std::size_t j = 0; j < buf.size(); ++j)
      buf[j] = static_cast<unsigned char>(
          std::lround(std::clamp(double(src[j]), 0.0, 1.0) * 255.0));
    img.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot write " + labels_path.string());
  write_be32(lab, kLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(n));
  for (Index i = 0; i < n; ++i) {
    const unsigned char v = static_cast<unsigned char>(set.labels[static_cast<std::size_t>(i)]);
    lab.write(reinterpret_cast<const char*>(&v), 1);
  }
}

MnistData load_mnist_dir(const std::filesystem::path& dir) {
  return {load_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"),
          load_mnist(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte")};
}

const std::map<std::string, PresetClasses>& task_presets() {
  static const std::map<std::string, PresetClasses> presets = {
      {"D5-5a", {{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}}},
      {"D5-5b", {{0, 2, 4, 6, 8}, {1, 3, 5, 7, 9}}},
      {"D5-5c", {{3, 4, 6, 8, 9}, {0, 1, 2, 5, 7}}},
      {"D5-5d", {{0, 2, 5, 6, 7}, {1, 3, 4, 8, 9}}},
      {"D5-5e", {{0, 1, 3, 4, 5}, {2, 6, 7, 8, 9}}},
      {"D5-5f", {{0, 3, 4, 8, 9}, {1, 2, 5, 6, 7}}},
      {"D5-5g", {{0, 5, 6, 7, 8}, {1, 2, 3, 4, 9}}},
      {"D5-5h", {{0, 2, 3, 6, 8}, {1, 4, 5, 7, 9}}},
      {"D9-1a", {{0, 1, 2, 3, 4, 5, 6, 7, 8}, {9}}},
      {"D9-1b", {{1, 2, 3, 4, 5, 6, 7, 8, 9}, {0}}},
      {"D9-1c", {{0, 2, 3, 4, 5, 6, 7, 8, 9}, {1}}},
      {"DP10-10", {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}},
  };
  return presets;
}

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names = {"D5-5a", "D5-5b", "D5-5c", "D5-5d",
                                                 "D5-5e", "D5-5f", "D5-5g", "D5-5h",
                                                 "D9-1a", "D9-1b", "D9-1c", "DP10-10"};
  return names;
}

namespace {

LabeledSet filter_classes(const LabeledSet& set, const std::vector<int>& classes) {
  std::array<bool, 10> keep{};
  for (int c : classes) keep[static_cast<std::size_t>(c)] = true;
  std::vector<Index> idx;
  for (Index i = 0; i < set.size(); ++i)
    if (keep[static_cast<std::size_t>(set.labels[static_cast<std::size_t>(i)])]) idx.push_back(i);

  const Index rows = set.images.extent(1), cols = set.images.extent(2);
  LabeledSet out;
  out.images = Tensor<Real>({static_cast<Index>(idx.size()), rows, cols});
  out.labels.reserve(idx.size());
  const Index len = rows * cols;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    std::copy(set.images.data() + idx[j] * len, set.images.data() + (idx[j] + 1) * len,
              out.images.data() + static_cast<Index>(j) * len);
    out.labels.push_back(set.labels[static_cast<std::size_t>(idx[j])]);
  }
  return out;
}

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  const Index rows = a.images.extent(1), cols = a.images.extent(2);
  LabeledSet out;
  out.images = Tensor<Real>({a.size() + b.size(), rows, cols});
  std::copy(a.images.data(), a.images.data() + a.images.size(), out.images.data());
  std::copy(b.images.data(), b.images.data() + b.images.size(),
            out.images.data() + a.images.size());
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

LabeledSet permute_pixels(const LabeledSet& set, const std::vector<int>& perm) {
  const Index rows = set.images.extent(1), cols = set.images.extent(2);
  const Index len = rows * cols;
  LabeledSet out;
  out.images = Tensor<Real>(set.images.shape());
  out.labels = set.labels;
  for (Index i = 0; i < set.size(); ++i) {
    const Real* src = set.images.data() + i * len;
    Real* dst = out.images.data() + i * len;
    for (Index p = 0; p < len; ++p) dst[p] = src[perm[static_cast<std::size_t>(p)]];
  }
  return out;
}

std::vector<int> identity_perm(Index len) {
  std::vector<int> perm(static_cast<std::size_t>(len));
  std::iota(perm.begin(), perm.end(), 0);
  return perm;
}

}  // namespace

TaskSpec make_split_task(const MnistData& mnist, const std::string& name) {
  auto it = task_presets().find(name);
  if (it == task_presets().end() || name == "DP10-10")
    throw std::invalid_argument("unknown class-split preset: " + name);

  TaskSpec task;
  task.name = name;
  task.kind = TaskKind::class_split;
  task.d1_classes = it->second.d1;
  task.d2_classes = it->second.d2;
  task.d1_train = filter_classes(mnist.train, task.d1_classes);
  task.d1_test = filter_classes(mnist.test, task.d1_classes);
  task.d2_train = filter_classes(mnist.train, task.d2_classes);
  task.d2_test = filter_classes(mnist.test, task.d2_classes);
  task.union_test = concat(task.d1_test, task.d2_test);
  return task;
}

TaskSpec make_permutation_task(const MnistData& mnist, std::uint64_t seed, bool permute_d1) {
  const Index len = mnist.train.images.extent(1) * mnist.train.images.extent(2);

  TaskSpec task;
  task.name = "DP10-10";
  task.kind = TaskKind::permutation;
  task.d1_classes = task_presets().at("DP10-10").d1;
  task.d2_classes = task_presets().at("DP10-10").d2;

  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  task.d2_perm = identity_perm(len);
  std::shuffle(task.d2_perm.begin(), task.d2_perm.end(), rng);
  if (permute_d1) {
    task.d1_perm = identity_perm(len);
    std::shuffle(task.d1_perm.begin(), task.d1_perm.end(), rng);
  } else {
    task.d1_perm = identity_perm(len);
  }

  task.d1_train = permute_d1 ? permute_pixels(mnist.train, task.d1_perm) : mnist.train;
  task.d1_test = permute_d1 ? permute_pixels(mnist.test, task.d1_perm) : mnist.test;
  task.d2_train = permute_pixels(mnist.train, task.d2_perm);
  task.d2_test = permute_pixels(mnist.test, task.d2_perm);
  task.union_test = concat(task.d1_test, task.d2_test);
  return task;
}

TaskSpec make_task(const MnistData& mnist, const std::string& name, std::uint64_t seed,
                   bool permute_d1) {
  if (name == "DP10-10") return make_permutation_task(mnist, seed, permute_d1);
  return make_split_task(mnist, name);
}

BatchStream::BatchStream(Index set_size, Index batch_size, std::uint64_t seed)
    : batch_size_(batch_size), rng_(static_cast<std::mt19937::result_type>(seed)) {
  if (set_size <= 0) throw std::invalid_argument("BatchStream: empty set");
  if (batch_size <= 0 || batch_size > set_size)
    throw std::invalid_argument("BatchStream: batch size " + std::to_string(batch_size) +
                                " for a set of " + std::to_string(set_size));
  order_.resize(static_cast<std::size_t>(set_size));
  std::iota(order_.begin(), order_.end(), Index(0));
  reshuffle();
}

void BatchStream::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::span<const Index> BatchStream::next() {
  if (cursor_ + batch_size_ > set_size()) reshuffle();
  std::span<const Index> out(order_.data() + cursor_, static_cast<std::size_t>(batch_size_));
  cursor_ += batch_size_;
  return out;
}

Tensor<Real> gather_images(const LabeledSet& set, std::span<const Index> idx,
                           const Shape& input_shape) {
  const Index len = set.images.size() / std::max<Index>(set.size(), 1);
  if (len != shape_size(input_shape))
    throw std::invalid_argument("gather_images: sample size " + std::to_string(len) +
                                " does not match input shape " + shape_string(input_shape));
  Shape bshape{static_cast<Index>(idx.size())};
  bshape.insert(bshape.end(), input_shape.begin(), input_shape.end());
  Tensor<Real> batch(bshape);
  for (std::size_t j = 0; j < idx.size(); ++j)
    std::copy(set.images.data() + idx[j] * len, set.images.data() + (idx[j] + 1) * len,
              batch.data() + static_cast<Index>(j) * len);
  return batch;
}

std::vector<int> gather_labels(const LabeledSet& set, std::span<const Index> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(set.labels[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace cfb
