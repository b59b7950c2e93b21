// SPDX-License-Identifier: Apache-2.0
#include "igloo/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "igloo/errors.hpp"
#include "igloo/rng.hpp"

namespace igloo {

CopyMemoryData gen_copy_memory(std::size_t delay, std::size_t samples, std::uint64_t seed) {
    if (delay == 0) {
        throw ConfigError("copy-memory delay T must be >= 1");
    }
    CopyMemoryData d;
    d.delay = delay;
    d.samples = samples;
    const std::size_t len = d.length();
    d.inputs.assign(samples * len, 0);
    d.targets.assign(samples * copy_recall, 0);
    Rng rng(seed);
    for (std::size_t s = 0; s < samples; ++s) {
        int* row = d.inputs.data() + s * len;
        for (std::size_t i = 0; i < copy_recall; ++i) {
            const int sym = 1 + static_cast<int>(rng.below(copy_classes));
            row[i] = sym;
            d.targets[s * copy_recall + i] = sym - 1;
        }
        row[delay + 9] = 9;
    }
    return d;
}

AdditionData gen_addition(std::size_t length, std::size_t samples, std::uint64_t seed) {
    if (length < 2) {
        throw ConfigError("addition length T must be >= 2, got " + std::to_string(length));
    }
    if (samples == 0) {
        throw ConfigError("addition task needs at least one sample");
    }
    AdditionData d;
    d.length = length;
    d.inputs = Tensor({samples, length, 2}, real{0});
    d.targets = Tensor({samples, 1}, real{0});
    Rng rng(seed);
    for (std::size_t s = 0; s < samples; ++s) {
        real* row = d.inputs.raw() + s * length * 2;
        for (std::size_t t = 0; t < length; ++t) {
            row[2 * t] = static_cast<real>(rng.uniform());
        }
        const std::size_t a = rng.below(length);
        std::size_t b = rng.below(length - 1);
        if (b >= a) {
            ++b;
        }
        row[2 * a + 1] = 1;
        row[2 * b + 1] = 1;
        d.targets[s] = row[2 * a] + row[2 * b];
    }
    return d;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open '" + path + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t at, const std::string& path) {
    if (at + 4 > buf.size()) {
        throw FormatError("'" + path + "' is truncated in its header");
    }
    return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) | (std::uint32_t{buf[at + 2]} << 8) |
           std::uint32_t{buf[at + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

} // namespace

MnistData load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);
    if (read_be32(img, 0, images_path) != 0x00000803u) {
        throw FormatError("'" + images_path + "': bad magic, expected 0x00000803");
    }
    if (read_be32(lab, 0, labels_path) != 0x00000801u) {
        throw FormatError("'" + labels_path + "': bad magic, expected 0x00000801");
    }
    const std::size_t count = read_be32(img, 4, images_path);
    const std::size_t rows = read_be32(img, 8, images_path);
    const std::size_t cols = read_be32(img, 12, images_path);
    const std::size_t label_count = read_be32(lab, 4, labels_path);
    if (count != label_count) {
        throw FormatError("image count " + std::to_string(count) + " does not match label count " +
                          std::to_string(label_count));
    }
    if (count == 0 || rows == 0 || cols == 0) {
        throw FormatError("'" + images_path + "' holds no pixels");
    }
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + count * pixels) {
        throw FormatError("'" + images_path + "' is truncated");
    }
    if (lab.size() < 8 + count) {
        throw FormatError("'" + labels_path + "' is truncated");
    }
    MnistData d;
    d.rows = rows;
    d.cols = cols;
    d.pixels = Tensor({count, pixels, 1}, real{0});
    for (std::size_t i = 0; i < count * pixels; ++i) {
        d.pixels[i] = static_cast<real>(img[16 + i]) / real{255};
    }
    d.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        d.labels[i] = lab[8 + i];
    }
    return d;
}

void write_mnist_idx(const MnistData& data, const std::string& images_path, const std::string& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) {
        throw FormatError("cannot write IDX files '" + images_path + "', '" + labels_path + "'");
    }
    const auto n = static_cast<std::uint32_t>(data.samples());
    write_be32(img, 0x00000803u);
    write_be32(img, n);
    write_be32(img, static_cast<std::uint32_t>(data.rows));
    write_be32(img, static_cast<std::uint32_t>(data.cols));
    for (real v : data.pixels.data()) {
        img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp<real>(v, 0, 1) * 255))));
    }
    write_be32(lab, 0x00000801u);
    write_be32(lab, n);
    for (int l : data.labels) {
        lab.put(static_cast<char>(l));
    }
}

MnistData apply_permutation(const MnistData& data, std::vector<std::size_t> perm) {
    const std::size_t len = data.rows * data.cols;
    if (perm.size() != len) {
        throw ConfigError("permutation length " + std::to_string(perm.size()) + " does not match " +
                          std::to_string(len) + " pixels");
    }
    std::vector<bool> seen(len, false);
    for (std::size_t v : perm) {
        if (v >= len || seen[v]) {
            throw ConfigError("pixel permutation is not a bijection");
        }
        seen[v] = true;
    }
    MnistData out = data;
    for (std::size_t s = 0; s < data.samples(); ++s) {
        const real* src = data.pixels.raw() + s * len;
        real* dst = out.pixels.raw() + s * len;
        for (std::size_t i = 0; i < len; ++i) {
            dst[i] = src[perm[i]];
        }
    }
    if (data.permutation.empty()) {
        out.permutation = std::move(perm);
    } else {
        out.permutation.resize(len);
        for (std::size_t i = 0; i < len; ++i) {
            out.permutation[i] = data.permutation[perm[i]];
        }
    }
    return out;
}

MnistData apply_permutation(const MnistData& data, std::uint64_t seed) {
    Rng rng(seed);
    return apply_permutation(data, rng.permutation(data.rows * data.cols));
}

MnistData take_first(const MnistData& data, std::size_t count) {
    if (count == 0 || count >= data.samples()) {
        return data;
    }
    const std::size_t len = data.rows * data.cols;
    MnistData out;
    out.rows = data.rows;
    out.cols = data.cols;
    out.permutation = data.permutation;
    out.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(count));
    out.pixels = Tensor({count, len, 1}, std::vector<real>(data.pixels.data().begin(),
                                                           data.pixels.data().begin() +
                                                               static_cast<std::ptrdiff_t>(count * len)));
    return out;
}

int CharCorpus::id(char c) const {
    const auto pos = vocab.find(c);
    if (pos == std::string::npos) {
        throw DataError(std::string("character '") + c + "' is not in the vocabulary");
    }
    return static_cast<int>(pos);
}

CharCorpus make_char_corpus(const std::string& text, std::size_t window, double train_fraction,
                            std::uint64_t seed) {
    if (text.empty()) {
        throw DataError("character corpus is empty");
    }
    if (window == 0) {
        throw ConfigError("charlm window L must be >= 1");
    }
    if (!(train_fraction > 0 && train_fraction <= 1)) {
        throw ConfigError("charlm train fraction must be in (0, 1]");
    }
    const std::size_t span = window + 1;
    const std::size_t count = text.size() / span;
    if (count == 0) {
        throw DataError("corpus of " + std::to_string(text.size()) + " characters is shorter than one window of " +
                        std::to_string(span));
    }
    Rng rng(seed);
    const auto order = rng.permutation(count);
    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(count))));

    CharCorpus c;
    c.window = window;
    std::vector<bool> present(256, false);
    for (std::size_t k = 0; k < n_train; ++k) {
        for (std::size_t i = 0; i < span; ++i) {
            present[static_cast<unsigned char>(text[order[k] * span + i])] = true;
        }
    }
    for (int ch = 0; ch < 256; ++ch) {
        if (present[ch]) {
            c.vocab.push_back(static_cast<char>(ch));
        }
    }
    std::vector<int> lookup(256, -1);
    for (std::size_t i = 0; i < c.vocab.size(); ++i) {
        lookup[static_cast<unsigned char>(c.vocab[i])] = static_cast<int>(i);
    }
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<int> ids(span);
        bool known = true;
        for (std::size_t i = 0; i < span; ++i) {
            ids[i] = lookup[static_cast<unsigned char>(text[order[k] * span + i])];
            known = known && ids[i] >= 0;
        }
        auto& dst = k < n_train ? c.train : c.test;
        if (known) {
            dst.insert(dst.end(), ids.begin(), ids.end());
        }
    }
    return c;
}

CharCorpus load_char_corpus(const std::string& path, std::size_t window, double train_fraction,
                            std::uint64_t seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open character corpus '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.empty()) {
        throw DataError("character corpus '" + path + "' is empty");
    }
    return make_char_corpus(text, window, train_fraction, seed);
}

std::size_t Dataset::label_width() const {
    switch (spec.output) {
    case OutputKind::classify:
        return spec.positions;
    case OutputKind::per_step:
        return spec.length;
    case OutputKind::regress:
        return 0;
    }
    return 0;
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) {
        throw DataError("empty batch");
    }
    const std::size_t n = indices.size();
    const std::size_t L = spec.length;
    const std::size_t M = spec.channels;
    Batch b;
    b.inputs = Tensor({n, L, M}, real{0});
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t s = indices[r];
        if (s >= samples) {
            throw IndexError("sample index " + std::to_string(s) + " out of range for " + std::to_string(samples) +
                             " samples");
        }
        real* dst = b.inputs.raw() + r * L * M;
        if (!tokens.empty()) {
            const int* src = tokens.data() + s * L;
            for (std::size_t t = 0; t < L; ++t) {
                dst[t * M + static_cast<std::size_t>(src[t])] = 1;
            }
        } else {
            std::copy_n(dense.data() + s * L * M, L * M, dst);
        }
    }
    const std::size_t w = label_width();
    if (w > 0) {
        b.labels.reserve(n * w);
        for (std::size_t s : indices) {
            b.labels.insert(b.labels.end(), labels.begin() + static_cast<std::ptrdiff_t>(s * w),
                            labels.begin() + static_cast<std::ptrdiff_t>((s + 1) * w));
        }
    } else {
        b.targets = Tensor({n, 1}, real{0});
        for (std::size_t r = 0; r < n; ++r) {
            b.targets[r] = targets[indices[r]];
        }
    }
    return b;
}

Batch Dataset::range(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(end, samples); ++i) {
        idx.push_back(i);
    }
    return batch(idx);
}

Dataset to_dataset(const CopyMemoryData& data) {
    Dataset d;
    d.spec = {data.length(), copy_symbols, OutputKind::classify, copy_recall, copy_classes};
    d.samples = data.samples;
    d.tokens = data.inputs;
    d.labels = data.targets;
    return d;
}

Dataset to_dataset(const AdditionData& data) {
    Dataset d;
    d.spec = {data.length, 2, OutputKind::regress, 1, 1};
    d.samples = data.samples();
    d.dense.assign(data.inputs.data().begin(), data.inputs.data().end());
    d.targets.assign(data.targets.data().begin(), data.targets.data().end());
    return d;
}

Dataset to_dataset(const MnistData& data) {
    Dataset d;
    d.spec = {data.rows * data.cols, 1, OutputKind::classify, 1, 10};
    d.samples = data.samples();
    d.dense.assign(data.pixels.data().begin(), data.pixels.data().end());
    d.labels = data.labels;
    return d;
}

Dataset to_dataset(const CharCorpus& corpus, bool train) {
    const auto& windows = train ? corpus.train : corpus.test;
    const std::size_t L = corpus.window;
    Dataset d;
    d.spec = {L, corpus.vocab.size(), OutputKind::per_step, L, corpus.vocab.size()};
    d.samples = windows.size() / (L + 1);
    d.tokens.reserve(d.samples * L);
    d.labels.reserve(d.samples * L);
    for (std::size_t s = 0; s < d.samples; ++s) {
        const auto* w = windows.data() + s * (L + 1);
        d.tokens.insert(d.tokens.end(), w, w + L);
        d.labels.insert(d.labels.end(), w + 1, w + L + 1);
    }
    return d;
}

std::string to_string(TaskKind k) {
    switch (k) {
    case TaskKind::copy:
        return "copy";
    case TaskKind::addition:
        return "addition";
    case TaskKind::mnist:
        return "mnist";
    case TaskKind::pmnist:
        return "pmnist";
    case TaskKind::charlm:
        return "charlm";
    }
    return "unknown";
}

TaskKind parse_task_kind(const std::string& s) {
    for (auto k : {TaskKind::copy, TaskKind::addition, TaskKind::mnist, TaskKind::pmnist, TaskKind::charlm}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw ConfigError("unknown task '" + s + "' (expected copy, addition, mnist, pmnist or charlm)");
}

TaskData make_task(const TaskConfig& config, std::uint64_t seed) {
    const auto train_seed = Rng::derive_seed(seed, "data/train");
    const auto test_seed = Rng::derive_seed(seed, "data/test");
    TaskData out;
    switch (config.kind) {
    case TaskKind::copy:
        out.train = to_dataset(gen_copy_memory(config.copy_delay, config.copy_train, train_seed));
        out.test = to_dataset(gen_copy_memory(config.copy_delay, config.copy_test, test_seed));
        break;
    case TaskKind::addition:
        out.train = to_dataset(gen_addition(config.addition_length, config.addition_train, train_seed));
        out.test = to_dataset(gen_addition(config.addition_length, config.addition_test, test_seed));
        break;
    case TaskKind::mnist:
    case TaskKind::pmnist: {
        const std::filesystem::path dir(config.mnist_dir);
        auto train = take_first(load_mnist_idx((dir / "train-images-idx3-ubyte").string(),
                                               (dir / "train-labels-idx1-ubyte").string()),
                                config.mnist_train);
        auto test = take_first(load_mnist_idx((dir / "t10k-images-idx3-ubyte").string(),
                                              (dir / "t10k-labels-idx1-ubyte").string()),
                               config.mnist_test);
        if (config.kind == TaskKind::pmnist) {
            const auto perm_seed = Rng::derive_seed(seed, "data/permutation");
            train = apply_permutation(train, perm_seed);
            test = apply_permutation(test, perm_seed);
        }
        out.train = to_dataset(train);
        out.test = to_dataset(test);
        break;
    }
    case TaskKind::charlm: {
        if (config.charlm_path.empty()) {
            throw ConfigError("charlm.path must name a text file");
        }
        const auto corpus = load_char_corpus(config.charlm_path, config.charlm_window, config.charlm_train_fraction,
                                             Rng::derive_seed(seed, "data/split"));
        out.train = to_dataset(corpus, true);
        out.test = to_dataset(corpus, false);
        break;
    }
    }
    return out;
}

} // namespace igloo
