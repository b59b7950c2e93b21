// SPDX-License-Identifier: Apache-2.0
#include "igloo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "igloo/errors.hpp"

namespace igloo {

namespace {

constexpr char magic[4] = {'I', 'G', 'L', 'O'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void size(std::size_t v) {
        if (v > 0xffffffffu) {
            throw FormatError("value " + std::to_string(v) + " does not fit the checkpoint's u32 field");
        }
        u32(static_cast<std::uint32_t>(v));
    }
    void str(const std::string& s) {
        size(s.size());
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}

    const char* take(std::size_t n) {
        if (n > in_.size() - pos_) {
            throw FormatError("checkpoint is truncated");
        }
        const char* p = in_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(*take(1)); }
    std::uint32_t u32() {
        const auto* p = reinterpret_cast<const unsigned char*>(take(4));
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
        return v;
    }
    std::uint64_t u64() {
        const auto* p = reinterpret_cast<const unsigned char*>(take(8));
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::size_t n = u32();
        return std::string(take(n), n);
    }
    bool done() const { return pos_ == in_.size(); }
    void require(std::size_t items, std::size_t item_bytes) const {
        if (item_bytes != 0 && items > (in_.size() - pos_) / item_bytes) {
            throw FormatError("checkpoint is truncated");
        }
    }

private:
    const std::string& in_;
    std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
    w.str(name);
    w.size(t.rank());
    for (std::size_t d : t.shape()) {
        w.size(d);
    }
    for (real v : t.data()) {
        w.f64(static_cast<double>(v));
    }
}

std::pair<std::string, Tensor> read_tensor(Reader& r) {
    std::string name = r.str();
    const std::size_t rank = r.u32();
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
        d = r.u32();
        if (d == 0) {
            throw FormatError("tensor '" + name + "' has a zero extent");
        }
        count *= d;
        r.require(count, 8);
    }
    std::vector<real> data(count);
    for (auto& v : data) {
        v = static_cast<real>(r.f64());
    }
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
}

void write_named(Writer& w, const std::map<std::string, Tensor>& tensors) {
    w.size(tensors.size());
    for (const auto& [name, t] : tensors) {
        write_tensor(w, name, t);
    }
}

std::map<std::string, Tensor> read_named(Reader& r) {
    std::map<std::string, Tensor> out;
    const std::size_t n = r.u32();
    for (std::size_t i = 0; i < n; ++i) {
        auto [name, t] = read_tensor(r);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

void write_locations(Writer& w, const std::vector<std::size_t>& locs) {
    for (std::size_t v : locs) {
        w.size(v);
    }
}

std::vector<std::size_t> read_locations(Reader& r, std::size_t count, std::size_t length) {
    r.require(count, 4);
    std::vector<std::size_t> out(count);
    for (auto& v : out) {
        v = r.u32();
        if (v >= length) {
            throw FormatError("patch location " + std::to_string(v) + " outside [0, " + std::to_string(length) + ")");
        }
    }
    return out;
}

} // namespace

Checkpoint make_checkpoint(const Model& model, const RunConfig& config, const AdamState* adam) {
    Checkpoint c;
    c.config_text = config_to_text(config);
    c.task = model.task();
    c.plans = model.patch_plans();
    c.seq_plans = model.seq_patch_plans();
    c.params = model.parameters();
    if (adam) {
        c.adam = *adam;
    }
    return c;
}

std::string encode_checkpoint(const Checkpoint& c) {
    Writer w;
    w.bytes(magic, 4);
    w.u32(checkpoint_version);
    w.str(c.config_text);
    w.size(c.task.length);
    w.size(c.task.channels);
    w.u32(static_cast<std::uint32_t>(c.task.output));
    w.size(c.task.positions);
    w.size(c.task.classes);
    w.size(c.plans.size());
    for (const auto& p : c.plans) {
        w.size(p.length);
        w.size(p.patches);
        w.size(p.patch_size);
        w.u8(static_cast<std::uint8_t>(p.strategy));
        w.u64(p.seed);
        write_locations(w, p.locations);
    }
    w.size(c.seq_plans.size());
    for (const auto& p : c.seq_plans) {
        w.size(p.length);
        w.size(p.patches);
        w.size(p.patch_size);
        w.f64(p.sigma);
        w.u64(p.seed);
        write_locations(w, p.locations);
    }
    w.size(c.params.size());
    for (const auto& [name, t] : c.params) {
        write_tensor(w, name, t);
    }
    w.u8(c.adam ? 1 : 0);
    if (c.adam) {
        w.u64(c.adam->step);
        write_named(w, c.adam->m);
        write_named(w, c.adam->v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (bytes.size() < 4 || std::memcmp(r.take(4), magic, 4) != 0) {
        throw FormatError("not a checkpoint: bad magic bytes (expected \"IGLO\")");
    }
    const std::uint32_t version = r.u32();
    if (version != checkpoint_version) {
        throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(checkpoint_version) + ")");
    }
    Checkpoint c;
    c.config_text = r.str();
    c.task.length = r.u32();
    c.task.channels = r.u32();
    const std::uint32_t output = r.u32();
    if (output > static_cast<std::uint32_t>(OutputKind::per_step)) {
        throw FormatError("unknown output kind " + std::to_string(output));
    }
    c.task.output = static_cast<OutputKind>(output);
    c.task.positions = r.u32();
    c.task.classes = r.u32();
    const std::size_t n_plans = r.u32();
    for (std::size_t i = 0; i < n_plans; ++i) {
        PatchPlan p;
        p.length = r.u32();
        p.patches = r.u32();
        p.patch_size = r.u32();
        const std::uint8_t s = r.u8();
        if (s > static_cast<std::uint8_t>(PlanStrategy::gaussian_causal)) {
            throw FormatError("unknown plan strategy " + std::to_string(s));
        }
        p.strategy = static_cast<PlanStrategy>(s);
        p.seed = r.u64();
        p.locations = read_locations(r, p.patches * p.patch_size, p.length);
        c.plans.push_back(std::move(p));
    }
    const std::size_t n_seq = r.u32();
    for (std::size_t i = 0; i < n_seq; ++i) {
        SeqPatchPlan p;
        p.length = r.u32();
        p.patches = r.u32();
        p.patch_size = r.u32();
        p.sigma = r.f64();
        p.seed = r.u64();
        p.locations = read_locations(r, p.length * p.patches * p.patch_size, p.length);
        c.seq_plans.push_back(std::move(p));
    }
    const std::size_t n_params = r.u32();
    for (std::size_t i = 0; i < n_params; ++i) {
        auto [name, t] = read_tensor(r);
        if (c.params.contains(name)) {
            throw FormatError("duplicate parameter '" + name + "' in checkpoint");
        }
        c.params.add(std::move(name), std::move(t));
    }
    const std::uint8_t has_adam = r.u8();
    if (has_adam > 1) {
        throw FormatError("corrupt optimizer-state flag");
    }
    if (has_adam) {
        AdamState a;
        a.step = r.u64();
        a.m = read_named(r);
        a.v = read_named(r);
        c.adam = std::move(a);
    }
    if (!r.done()) {
        throw FormatError("trailing bytes after checkpoint payload");
    }
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write checkpoint '" + path + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("failed writing checkpoint '" + path + "'");
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open checkpoint '" + path + "'");
    }
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes);
}

RestoredRun restore(const Checkpoint& ckpt) {
    RunConfig config;
    apply_config_text(config, ckpt.config_text, "checkpoint config");
    resolve(config);
    Model model(config.model, ckpt.task, config.seed);
    model.set_plans(ckpt.plans, ckpt.seq_plans);
    model.set_parameters(ckpt.params);
    return {std::move(config), std::move(model)};
}

} // namespace igloo
