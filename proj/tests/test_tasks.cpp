// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "igloo/tasks.hpp"
#include "igloo/trainer.hpp"

using namespace igloo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "igloo_test_tasks";
    fs::create_directories(dir);
    return dir / name;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

// Four 2x2 images.
struct Fixture {
    fs::path images = scratch("fx-images");
    fs::path labels = scratch("fx-labels");
    std::vector<unsigned char> pixels = {0, 255, 128, 1, 10, 20, 30, 40, 255, 255, 0, 0, 7, 8, 9, 250};

    Fixture(std::uint32_t image_magic = 0x803, std::uint32_t label_count = 4, std::size_t drop = 0) {
        std::vector<unsigned char> img;
        for (auto v : {be32(image_magic), be32(4), be32(2), be32(2)}) img.insert(img.end(), v.begin(), v.end());
        img.insert(img.end(), pixels.begin(), pixels.end() - static_cast<std::ptrdiff_t>(drop));
        write_bytes(images, img);
        std::vector<unsigned char> lab;
        for (auto v : {be32(0x801), be32(label_count)}) lab.insert(lab.end(), v.begin(), v.end());
        for (unsigned char l : {3, 1, 4, 1}) lab.push_back(l);
        write_bytes(labels, lab);
    }
};

} // namespace

TEST_CASE("copy-memory layout") {
    const auto one = gen_copy_memory(1, 5, 3);
    CHECK(one.length() == 21);
    for (std::size_t s = 0; s < 5; ++s) CHECK(one.inputs[s * 21 + 10] == 9);

    const std::size_t T = 30, L = 50;
    const auto data = gen_copy_memory(T, 200, 4);
    CHECK(data.length() == L);
    REQUIRE(data.inputs.size() == 200 * L);
    REQUIRE(data.targets.size() == 200 * 10);
    for (std::size_t s = 0; s < 200; ++s) {
        const int* x = data.inputs.data() + s * L;
        for (std::size_t t = 0; t < 10; ++t) {
            CHECK(x[t] >= 1);
            CHECK(x[t] <= 8);
            CHECK(data.targets[s * 10 + t] == x[t] - 1);
        }
        for (std::size_t t = 10; t < T + 9; ++t) CHECK(x[t] == 0);
        CHECK(x[T + 9] == 9);
        for (std::size_t t = T + 10; t < L; ++t) CHECK(x[t] == 0);
    }
    CHECK_THROWS_AS(gen_copy_memory(0, 1, 1), ConfigError);

    const Dataset d = to_dataset(data);
    const std::vector<std::size_t> idx{3};
    const Batch b = d.batch(idx);
    CHECK(b.inputs.shape() == Shape{1, L, 10});
    CHECK(b.inputs.at({0, T + 9, 9}) == 1);
    CHECK(b.inputs.at({0, 0, static_cast<std::size_t>(data.inputs[3 * L])}) == 1);
    CHECK(b.labels.size() == 10);
}

TEST_CASE("copy-memory symbols are uniform over 1..8") {
    const std::size_t n = 10000;
    const auto data = gen_copy_memory(30, n, 5);
    std::vector<double> counts(9, 0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < 10; ++t) counts[data.inputs[s * 50 + t]] += 1;
    const double total = 10.0 * n, p = 1.0 / 8;
    const double sigma = std::sqrt(total * p * (1 - p));
    for (int v = 1; v <= 8; ++v) {
        INFO("symbol " << v << " count " << counts[v]);
        CHECK(std::abs(counts[v] - total * p) < 3 * sigma);
    }
}

TEST_CASE("addition layout") {
    const auto forced = gen_addition(2, 50, 1);
    for (std::size_t s = 0; s < 50; ++s) {
        CHECK(forced.inputs.at({s, 0, 1}) == 1);
        CHECK(forced.inputs.at({s, 1, 1}) == 1);
        CHECK(forced.targets[s] == forced.inputs.at({s, 0, 0}) + forced.inputs.at({s, 1, 0}));
    }
    const auto data = gen_addition(200, 300, 2);
    CHECK(data.inputs.shape() == Shape{300, 200, 2});
    for (std::size_t s = 0; s < 300; ++s) {
        int marks = 0;
        double sum = 0;
        for (std::size_t t = 0; t < 200; ++t) {
            const real x = data.inputs.at({s, t, 0}), m = data.inputs.at({s, t, 1});
            CHECK(x >= 0);
            CHECK(x < 1);
            CHECK((m == 0 || m == 1));
            if (m == 1) {
                ++marks;
                sum += x;
            }
        }
        CHECK(marks == 2);
        CHECK(data.targets[s] == doctest::Approx(sum).epsilon(1e-15));
    }
    CHECK_THROWS_AS(gen_addition(1, 10, 1), ConfigError);
    CHECK_THROWS_AS(gen_addition(0, 10, 1), ConfigError);
}

TEST_CASE("addition constant predictor scores about 1/6") {
    const auto data = gen_addition(200, 10000, 3);
    double mse = 0;
    for (real y : data.targets.data()) mse += (y - 1.0) * (y - 1.0);
    mse /= 10000;
    CHECK(std::abs(mse - 1.0 / 6) < 0.01);

    TaskConfig cfg;
    cfg.kind = TaskKind::addition;
    cfg.addition_train = 10;
    cfg.addition_test = 10;
    const auto task = make_task(cfg, 1);
    CHECK(task.train.spec.length == 200);
    CHECK(task.train.spec.output == OutputKind::regress);
    CHECK(TaskConfig{}.addition_train == 22500);
    CHECK(TaskConfig{}.addition_test == 2500);
}

TEST_CASE("IDX fixture loads to exact tensors") {
    const Fixture fx;
    const MnistData d = load_mnist_idx(fx.images.string(), fx.labels.string());
    CHECK(d.samples() == 4);
    CHECK(d.rows == 2);
    CHECK(d.cols == 2);
    CHECK(d.pixels.shape() == Shape{4, 4, 1});
    CHECK(d.labels == std::vector<int>{3, 1, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) CHECK(d.pixels[i] == static_cast<real>(fx.pixels[i]) / 255);
    CHECK(d.pixels[0] == 0.0);
    CHECK(d.pixels[1] == 1.0);

    const auto img2 = scratch("rt-images"), lab2 = scratch("rt-labels");
    write_mnist_idx(d, img2.string(), lab2.string());
    const MnistData back = load_mnist_idx(img2.string(), lab2.string());
    CHECK(back.pixels == d.pixels);
    CHECK(back.labels == d.labels);

    const Dataset ds = to_dataset(d);
    CHECK(ds.spec.length == 4);
    CHECK(ds.spec.classes == 10);
    CHECK(ds.range(1, 3).labels == std::vector<int>{1, 4});
}

TEST_CASE("IDX errors") {
    {
        const Fixture fx(0x804);
        CHECK_THROWS_WITH_AS(load_mnist_idx(fx.images.string(), fx.labels.string()),
                             doctest::Contains("0x00000803"), FormatError);
        CHECK_THROWS_AS(load_mnist_idx(fx.labels.string(), fx.labels.string()), FormatError);
        CHECK_THROWS_WITH_AS(load_mnist_idx(fx.images.string(), fx.images.string()),
                             doctest::Contains("0x00000803"), FormatError);
    }
    {
        const Fixture fx(0x803, 4);
        CHECK_THROWS_WITH_AS(load_mnist_idx(fx.images.string(), fx.images.string()),
                             doctest::Contains("0x00000801"), FormatError);
    }
    {
        const Fixture fx(0x803, 5);
        CHECK_THROWS_AS(load_mnist_idx(fx.images.string(), fx.labels.string()), FormatError);
    }
    {
        const Fixture fx(0x803, 4, 3);
        CHECK_THROWS_WITH_AS(load_mnist_idx(fx.images.string(), fx.labels.string()), doctest::Contains("truncated"),
                             FormatError);
    }
    write_bytes(scratch("short"), {0, 0, 8});
    CHECK_THROWS_AS(load_mnist_idx(scratch("short").string(), scratch("short").string()), FormatError);
    CHECK_THROWS_AS(load_mnist_idx(scratch("missing-file").string(), scratch("missing-file").string()), FormatError);
}

TEST_CASE("pixel permutations") {
    const Fixture fx;
    const MnistData d = load_mnist_idx(fx.images.string(), fx.labels.string());
    const MnistData same = apply_permutation(d, std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(same.pixels == d.pixels);

    const MnistData p = apply_permutation(d, 17);
    REQUIRE(p.permutation.size() == 4);
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t i = 0; i < 4; ++i) CHECK(p.pixels[s * 4 + i] == d.pixels[s * 4 + p.permutation[i]]);
    CHECK(apply_permutation(d, 17).permutation == p.permutation);

    std::vector<std::size_t> inverse(4);
    for (std::size_t i = 0; i < 4; ++i) inverse[p.permutation[i]] = i;
    const MnistData restored = apply_permutation(p, inverse);
    CHECK(restored.pixels == d.pixels);
    CHECK(restored.permutation == std::vector<std::size_t>{0, 1, 2, 3});

    CHECK_THROWS_AS(apply_permutation(d, std::vector<std::size_t>{0, 0, 1, 2}), ConfigError);
    CHECK_THROWS_AS(apply_permutation(d, std::vector<std::size_t>{0, 1, 2}), ConfigError);

    MnistData big;
    big.pixels = Tensor({1, 784, 1});
    big.labels = {0};
    const auto a = apply_permutation(big, 5).permutation;
    std::vector<bool> seen(784, false);
    for (std::size_t v : a) seen[v] = true;
    CHECK(std::count(seen.begin(), seen.end(), true) == 784);
    CHECK(a != apply_permutation(big, 6).permutation);
}

TEST_CASE("character corpus") {
    const CharCorpus abab = make_char_corpus("abababab", 3, 1.0, 1);
    CHECK(abab.vocab == "ab");
    const Dataset d = to_dataset(abab, true);
    REQUIRE(d.samples == 2);
    for (std::size_t s = 0; s < 2; ++s) {
        const int* in = d.tokens.data() + s * 3;
        const int* tg = d.labels.data() + s * 3;
        CHECK(std::string{abab.vocab[in[0]], abab.vocab[in[1]], abab.vocab[in[2]]} == "aba");
        CHECK(std::string{abab.vocab[tg[0]], abab.vocab[tg[1]], abab.vocab[tg[2]]} == "bab");
    }
    CHECK(make_char_corpus("hello", 4, 1.0, 1).vocab.size() == 4);
    CHECK_THROWS_AS(make_char_corpus("", 4, 1.0, 1), DataError);
    CHECK_THROWS_AS(make_char_corpus("abc", 4, 1.0, 1), DataError);
    const auto empty = scratch("empty.txt");
    write_bytes(empty, {});
    CHECK_THROWS_AS(load_char_corpus(empty.string(), 4, 0.9, 1), DataError);

    std::string text;
    for (int i = 0; i < 200; ++i) text += "the quick brown fox jumps over the lazy dog. ";
    const CharCorpus c = make_char_corpus(text, 16, 0.8, 2);
    CHECK(c.train_windows() > 0);
    CHECK(c.test_windows() > 0);
    const Dataset train = to_dataset(c, true);
    for (std::size_t s = 0; s < train.samples; ++s)
        for (std::size_t t = 0; t + 1 < 16; ++t) CHECK(train.labels[s * 16 + t] == train.tokens[s * 16 + t + 1]);

    const Batch b = train.range(0, 8);
    const Tensor uniform({8, 16, c.vocab.size()});
    const double ce = score(uniform, b, OutputKind::per_step).loss;
    CHECK(std::abs(ce - std::log(static_cast<double>(c.vocab.size()))) < 0.01 * std::log(c.vocab.size()));
}

TEST_CASE("generators are pure functions of the seed") {
    CHECK(gen_copy_memory(30, 100, 9).inputs == gen_copy_memory(30, 100, 9).inputs);
    CHECK(gen_copy_memory(30, 100, 9).inputs != gen_copy_memory(30, 100, 10).inputs);
    CHECK(gen_addition(50, 20, 9).inputs == gen_addition(50, 20, 9).inputs);
    CHECK(gen_addition(50, 20, 9).targets == gen_addition(50, 20, 9).targets);

    TaskConfig cfg;
    cfg.copy_train = 300;
    cfg.copy_test = 300;
    const TaskData a = make_task(cfg, 4), b = make_task(cfg, 4);
    CHECK(a.train.tokens == b.train.tokens);
    CHECK(a.test.tokens == b.test.tokens);
    CHECK(a.train.tokens != a.test.tokens);
    CHECK(TaskConfig{}.copy_delay == 30);
}

TEST_CASE("random-init copy classifier sits at chance") {
    TaskConfig cfg;
    cfg.copy_train = 1;
    cfg.copy_test = 2000;
    const TaskData task = make_task(cfg, 11);
    ModelConfig m;
    const Model model(m, task.test.spec, 11);
    const EvalResult r = evaluate(model, task.test, 500);
    CHECK(r.samples == 2000);
    CHECK(std::abs(r.metric - 0.125) < 0.02);
}
