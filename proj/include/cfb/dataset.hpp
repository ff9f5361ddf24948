#pragma once

#include "cfb/tensor.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfb {

// Training precision of the benchmark harness. The templated core also
// instantiates with double where tests need tighter arithmetic.
using Real = float;

// Images normalized to [0,1], shape [n, 28, 28] for MNIST (any trailing
// shape is allowed for synthetic sets), with one class index per image.
struct LabeledSet {
  Tensor<Real> images;
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
};

// ---------------------------------------------------------------------------
// IDX files
// ---------------------------------------------------------------------------

// Reads an image/label file pair in IDX format (big-endian magic 2051 for
// images, 2049 for labels), scaling pixels to [0,1].
LabeledSet load_mnist(const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path);

// Writes a set back out as an IDX pair; pixels are rounded to bytes. A set
// loaded from IDX round-trips losslessly.
void save_idx(const LabeledSet& set, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

struct MnistData {
  LabeledSet train;
  LabeledSet test;
};

// Loads the four canonical files (train-images-idx3-ubyte etc.) from a
// directory.
MnistData load_mnist_dir(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

enum class TaskKind { class_split, permutation };

// A two-step incremental task: disjoint class partitions of MNIST or a
// pixel-permutation pair. Includes the evaluation-only union test set, the
// exact concatenation of the two test splits.
struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::class_split;
  std::vector<int> d1_classes, d2_classes;
  std::vector<int> d1_perm, d2_perm;  // pixel bijections; empty for class splits
  LabeledSet d1_train, d1_test;
  LabeledSet d2_train, d2_test;
  LabeledSet union_test;
};

struct PresetClasses {
  std::vector<int> d1, d2;
};

// The frozen class partitions, keyed by preset name (D5-5a..h, D9-1a..c,
// plus the full-class DP10-10 row).
const std::map<std::string, PresetClasses>& task_presets();

// All preset names in canonical report order.
const std::vector<std::string>& task_names();

TaskSpec make_split_task(const MnistData& mnist, const std::string& name);

// Permutation pair: the first sub-task keeps pixel order (unless permute_d1),
// the second applies a seeded uniformly random pixel permutation.
TaskSpec make_permutation_task(const MnistData& mnist, std::uint64_t seed,
                               bool permute_d1 = false);

// Dispatch on preset name ("DP10-10" builds the permutation task).
TaskSpec make_task(const MnistData& mnist, const std::string& name, std::uint64_t seed,
                   bool permute_d1 = false);

// ---------------------------------------------------------------------------
// Batch sampling
// ---------------------------------------------------------------------------

// Uniform minibatch sampler: shuffles the index range each epoch and hands
// out consecutive slices. Every batch has exactly batch_size items; a
// trailing remainder smaller than one batch is folded into the next
// reshuffle.
class BatchStream {
 public:
  BatchStream(Index set_size, Index batch_size, std::uint64_t seed);

  std::span<const Index> next();

  Index set_size() const { return static_cast<Index>(order_.size()); }

 private:
  void reshuffle();

  std::vector<Index> order_;
  Index batch_size_ = 0;
  Index cursor_ = 0;
  std::mt19937 rng_;
};

// Copies the selected samples into a batch tensor shaped [n, input_shape...].
// The per-sample element count must match the input shape.
Tensor<Real> gather_images(const LabeledSet& set, std::span<const Index> idx,
                           const Shape& input_shape);
std::vector<int> gather_labels(const LabeledSet& set, std::span<const Index> idx);

// ---------------------------------------------------------------------------
// Access guard
// ---------------------------------------------------------------------------

// Thrown when a protocol touches a dataset whose access window has closed.
struct GuardViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Revocable view of a LabeledSet. The realistic protocol revokes its first
// sub-task views once retraining begins; any later read throws.
class SetGuard {
 public:
  SetGuard() = default;
  explicit SetGuard(const LabeledSet* set)
      : set_(set), open_(std::make_shared<std::atomic<bool>>(true)) {}

  const LabeledSet& get() const {
    if (!set_) throw GuardViolation("SetGuard: empty guard");
    if (!open_->load(std::memory_order_relaxed))
      throw GuardViolation("SetGuard: access to a revoked dataset");
    return *set_;
  }

  void revoke() const {
    if (open_) open_->store(false, std::memory_order_relaxed);
  }

  bool revoked() const { return open_ && !open_->load(std::memory_order_relaxed); }

 private:
  const LabeledSet* set_ = nullptr;
  std::shared_ptr<std::atomic<bool>> open_;
};

}  // namespace cfb
