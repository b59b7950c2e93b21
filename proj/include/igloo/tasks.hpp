// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "igloo/model.hpp"
#include "igloo/tensor.hpp"

namespace igloo {

/// Copy-memory samples of length T+20. Symbols are stored as ids 0..9;
/// targets are the ten leading symbols shifted to classes 0..7.
struct CopyMemoryData {
    std::size_t delay = 0; // T
    std::size_t samples = 0;
    std::vector<int> inputs;  // samples x (T+20)
    std::vector<int> targets; // samples x 10
    std::size_t length() const { return delay + 20; }
};

constexpr std::size_t copy_symbols = 10;
constexpr std::size_t copy_recall = 10;
constexpr std::size_t copy_classes = 8;

CopyMemoryData gen_copy_memory(std::size_t delay, std::size_t samples, std::uint64_t seed);

struct AdditionData {
    std::size_t length = 0; // T
    Tensor inputs;          // [n, T, 2]: value, marker
    Tensor targets;         // [n, 1]
    std::size_t samples() const { return inputs.dim(0); }
};

AdditionData gen_addition(std::size_t length, std::size_t samples, std::uint64_t seed);

struct MnistData {
    std::size_t rows = 28;
    std::size_t cols = 28;
    Tensor pixels; // [n, rows*cols, 1] in [0, 1]
    std::vector<int> labels;
    std::vector<std::size_t> permutation; // empty means identity
    std::size_t samples() const { return labels.size(); }
};

/// Reads a pair of big-endian IDX files (images 0x00000803, labels
/// 0x00000801).
MnistData load_mnist_idx(const std::string& images_path, const std::string& labels_path);
/// Writes pixels (rounded to bytes) and labels as IDX files.
void write_mnist_idx(const MnistData& data, const std::string& images_path, const std::string& labels_path);

/// out[:, i] = in[:, perm[i]] for every sample.
MnistData apply_permutation(const MnistData& data, std::vector<std::size_t> perm);
MnistData apply_permutation(const MnistData& data, std::uint64_t seed);
MnistData take_first(const MnistData& data, std::size_t count);

/// Character corpus cut into non-overlapping windows of L+1 ids.
struct CharCorpus {
    std::size_t window = 0; // L
    std::string vocab;      // id -> char
    std::vector<int> train; // n_train x (L+1)
    std::vector<int> test;  // n_test x (L+1)
    std::size_t train_windows() const { return train.size() / (window + 1); }
    std::size_t test_windows() const { return test.size() / (window + 1); }
    int id(char c) const;
};

/// Windows are shuffled with `seed` and the first `train_fraction` go to
/// training. The vocabulary comes from the training windows; test windows
/// with unseen characters are dropped.
CharCorpus make_char_corpus(const std::string& text, std::size_t window, double train_fraction,
                            std::uint64_t seed);
CharCorpus load_char_corpus(const std::string& path, std::size_t window, double train_fraction,
                            std::uint64_t seed);

/// A batch ready for the model: dense inputs [B, L, M] plus integer labels
/// (classification) or real targets (regression).
struct Batch {
    Tensor inputs;
    std::vector<int> labels;
    Tensor targets;
    std::size_t size() const { return inputs.dim(0); }
};

/// Samples stored compactly: token ids (one-hot encoded on demand) or dense
/// reals.
struct Dataset {
    TaskSpec spec;
    std::size_t samples = 0;
    std::vector<int> tokens;
    std::vector<real> dense;
    std::vector<int> labels;   // samples x label_width()
    std::vector<real> targets; // samples (regression)

    std::size_t label_width() const;
    Batch batch(std::span<const std::size_t> indices) const;
    Batch range(std::size_t begin, std::size_t end) const;
};

Dataset to_dataset(const CopyMemoryData& data);
Dataset to_dataset(const AdditionData& data);
Dataset to_dataset(const MnistData& data);
/// Uses the train or test windows of the corpus.
Dataset to_dataset(const CharCorpus& corpus, bool train);

enum class TaskKind { copy, addition, mnist, pmnist, charlm };
std::string to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

struct TaskConfig {
    TaskKind kind = TaskKind::copy;
    std::size_t copy_delay = 30;
    std::size_t copy_train = 20000;
    std::size_t copy_test = 2000;
    std::size_t addition_length = 200;
    std::size_t addition_train = 22500;
    std::size_t addition_test = 2500;
    std::string mnist_dir = "data/mnist";
    std::size_t mnist_train = 0; // 0 keeps every sample
    std::size_t mnist_test = 0;
    std::string charlm_path;
    std::size_t charlm_window = 64;
    double charlm_train_fraction = 0.9;
};

struct TaskData {
    Dataset train;
    Dataset test;
};

/// Builds both splits; randomness comes from the "data" substreams of the
/// root seed.
TaskData make_task(const TaskConfig& config, std::uint64_t seed);

} // namespace igloo
