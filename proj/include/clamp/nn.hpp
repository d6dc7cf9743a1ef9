#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "clamp/common.hpp"

namespace clamp::nn {

enum class Activation : std::uint32_t { kReLU = 0, kIdentity = 1 };

struct Layer {
    Matrix weights;             // out x in
    std::vector<double> bias;   // out
    Activation activation = Activation::kIdentity;
};

// Backbone f followed by projection head g; split_index is the first head
// layer. Evaluation uses only layers before split_index.
struct DenseNet {
    std::vector<Layer> layers;
    std::size_t split_index = 0;

    std::size_t input_width() const { return layers.front().weights.cols; }
    std::size_t repr_width() const {
        return split_index == 0 ? input_width() : layers[split_index - 1].weights.rows;
    }
    std::size_t output_width() const { return layers.back().weights.rows; }
};

inline void validate_net(const DenseNet& net) {
    if (net.layers.empty()) throw ValidationError("DenseNet: no layers");
    if (net.split_index > net.layers.size())
        throw ValidationError("DenseNet: split_index out of range");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& lay = net.layers[l];
        if (lay.bias.size() != lay.weights.rows)
            throw ValidationError("DenseNet: bias width mismatch at layer " + std::to_string(l));
        if (l > 0 && lay.weights.cols != net.layers[l - 1].weights.rows)
            throw ValidationError("DenseNet: dimension chain broken at layer " + std::to_string(l));
    }
}

// Weights ~ U(-1,1)/sqrt(fan_in), biases zero.
inline DenseNet make_net(std::size_t input_width, const std::vector<std::size_t>& backbone,
                         const std::vector<std::size_t>& head, Rng& rng) {
    if (backbone.empty() || head.empty())
        throw ValidationError("make_net: backbone and head must be nonempty");
    DenseNet net;
    std::size_t in = input_width;
    auto add = [&](std::size_t out, Activation act) {
        Layer lay;
        lay.weights = Matrix(out, in);
        lay.bias.assign(out, 0.0);
        lay.activation = act;
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& w : lay.weights.data) w = u(rng) * scale;
        net.layers.push_back(std::move(lay));
        in = out;
    };
    for (std::size_t width : backbone) add(width, Activation::kReLU);
    net.split_index = net.layers.size();
    for (std::size_t i = 0; i < head.size(); ++i)
        add(head[i], i + 1 < head.size() ? Activation::kReLU : Activation::kIdentity);
    validate_net(net);
    return net;
}

// Everything backward needs: the input to each layer and the ReLU masks
// implied by the pre-activations.
struct Tape {
    std::vector<Matrix> layer_inputs;  // one per layer
    std::vector<Matrix> pre_activations;
    std::size_t batch = 0;
};

struct ForwardResult {
    Matrix representations;  // backbone output
    Matrix embeddings;       // head output
    Tape tape;
};

struct ParamGrads {
    std::vector<Matrix> d_weights;
    std::vector<std::vector<double>> d_bias;
};

inline ForwardResult forward(const DenseNet& net, const Matrix& inputs) {
    validate_net(net);
    if (inputs.cols != net.input_width())
        throw ValidationError("forward: input width " + std::to_string(inputs.cols) +
                              " does not match first layer " +
                              std::to_string(net.input_width()));
    ForwardResult res;
    res.tape.batch = inputs.rows;
    Matrix x = inputs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& lay = net.layers[l];
        res.tape.layer_inputs.push_back(x);
        Matrix z(x.rows, lay.weights.rows);
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t o = 0; o < lay.weights.rows; ++o)
                z(r, o) = dot(x.row(r), lay.weights.row(o)) + lay.bias[o];
        res.tape.pre_activations.push_back(z);
        if (lay.activation == Activation::kReLU)
            for (auto& v : z.data) v = v > 0.0 ? v : 0.0;
        x = std::move(z);
        if (l + 1 == net.split_index) res.representations = x;
    }
    if (net.split_index == 0) res.representations = inputs;
    res.embeddings = std::move(x);
    return res;
}

// Exact reverse pass; returns parameter gradients and, via d_input, the
// gradient with respect to the network input.
inline ParamGrads backward(const DenseNet& net, const Tape& tape, const Matrix& upstream,
                           Matrix* d_input = nullptr) {
    validate_net(net);
    if (tape.layer_inputs.size() != net.layers.size())
        throw ValidationError("backward: tape does not match network depth");
    if (upstream.rows != tape.batch || upstream.cols != net.output_width())
        throw ValidationError("backward: upstream gradient shape mismatch");

    ParamGrads grads;
    grads.d_weights.resize(net.layers.size());
    grads.d_bias.resize(net.layers.size());

    Matrix delta = upstream;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const auto& lay = net.layers[li];
        const Matrix& x = tape.layer_inputs[li];
        const Matrix& pre = tape.pre_activations[li];
        if (x.rows != tape.batch || x.cols != lay.weights.cols)
            throw ValidationError("backward: stale tape at layer " + std::to_string(li));

        if (lay.activation == Activation::kReLU)
            for (std::size_t i = 0; i < delta.data.size(); ++i)
                if (pre.data[i] <= 0.0) delta.data[i] = 0.0;

        Matrix dw(lay.weights.rows, lay.weights.cols);
        std::vector<double> db(lay.weights.rows, 0.0);
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t o = 0; o < lay.weights.rows; ++o) {
                const double dl = delta(r, o);
                db[o] += dl;
                for (std::size_t c = 0; c < lay.weights.cols; ++c)
                    dw(o, c) += dl * x(r, c);
            }
        grads.d_weights[li] = std::move(dw);
        grads.d_bias[li] = std::move(db);

        Matrix prev(delta.rows, lay.weights.cols);
        for (std::size_t r = 0; r < delta.rows; ++r)
            for (std::size_t c = 0; c < lay.weights.cols; ++c) {
                double s = 0.0;
                for (std::size_t o = 0; o < lay.weights.rows; ++o)
                    s += delta(r, o) * lay.weights(o, c);
                prev(r, c) = s;
            }
        delta = std::move(prev);
    }
    if (d_input) *d_input = std::move(delta);
    return grads;
}

enum class OptimizerKind { kSgdMomentum, kLars };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::kLars;
    double momentum = 0.9;
    double weight_decay = 1e-6;
    double trust_coefficient = 0.001;  // LARS default
    double base_lr = 0.1;
    std::vector<Matrix> weight_buffers;
    std::vector<std::vector<double>> bias_buffers;

    void validate() const {
        if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("optimizer: momentum in [0,1)");
        if (weight_decay < 0.0) throw ValidationError("optimizer: weight_decay >= 0");
        if (kind == OptimizerKind::kLars && trust_coefficient <= 0.0)
            throw ValidationError("optimizer: trust_coefficient > 0 for LARS");
    }
};

inline OptimizerState make_optimizer(const DenseNet& net, OptimizerKind kind, double base_lr,
                                     double momentum, double weight_decay,
                                     double trust_coefficient = 0.001) {
    OptimizerState st;
    st.kind = kind;
    st.base_lr = base_lr;
    st.momentum = momentum;
    st.weight_decay = weight_decay;
    st.trust_coefficient = trust_coefficient;
    for (const auto& lay : net.layers) {
        st.weight_buffers.emplace_back(lay.weights.rows, lay.weights.cols);
        st.bias_buffers.emplace_back(lay.bias.size(), 0.0);
    }
    st.validate();
    return st;
}

// One optimizer step. LARS applies weight decay and the trust ratio to
// weight matrices only; biases are excluded from both and take plain
// SGD-momentum, matching the bias exclusion rule.
inline void apply_update(OptimizerState& state, DenseNet& net, const ParamGrads& grads,
                         double lr_t) {
    state.validate();
    if (grads.d_weights.size() != net.layers.size())
        throw ValidationError("apply_update: gradient count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& lay = net.layers[l];
        auto& wbuf = state.weight_buffers[l];
        const auto& dw = grads.d_weights[l];
        if (!dw.same_shape(lay.weights))
            throw ValidationError("apply_update: weight gradient shape mismatch");

        if (state.kind == OptimizerKind::kLars) {
            double wn = 0.0, gn = 0.0;
            std::vector<double> g(dw.data.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] = dw.data[i] + state.weight_decay * lay.weights.data[i];
                wn += lay.weights.data[i] * lay.weights.data[i];
                gn += g[i] * g[i];
            }
            const double local_lr =
                state.trust_coefficient * std::sqrt(wn) / (std::sqrt(gn) + 1e-12);
            for (std::size_t i = 0; i < g.size(); ++i) {
                wbuf.data[i] = state.momentum * wbuf.data[i] + local_lr * lr_t * g[i];
                lay.weights.data[i] -= wbuf.data[i];
            }
        } else {
            for (std::size_t i = 0; i < dw.data.size(); ++i) {
                const double g = dw.data[i] + state.weight_decay * lay.weights.data[i];
                wbuf.data[i] = state.momentum * wbuf.data[i] + lr_t * g;
                lay.weights.data[i] -= wbuf.data[i];
            }
        }

        auto& bbuf = state.bias_buffers[l];
        for (std::size_t i = 0; i < lay.bias.size(); ++i) {
            bbuf[i] = state.momentum * bbuf[i] + lr_t * grads.d_bias[l][i];
            lay.bias[i] -= bbuf[i];
        }
    }
}

// Linear warmup to lr_max, then cosine decay to zero.
inline double lr_schedule(std::size_t t, std::size_t warmup, std::size_t total, double lr_max) {
    if (warmup >= total) throw ValidationError("lr_schedule: warmup must be < total");
    if (t > total) throw ValidationError("lr_schedule: t out of range");
    if (t < warmup)
        return lr_max * static_cast<double>(t) / static_cast<double>(warmup);
    const double progress =
        static_cast<double>(t - warmup) / static_cast<double>(total - warmup);
    return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---- checkpoint container -------------------------------------------------
// Little-endian: magic "CLMP", u32 version, then per-tensor records of
// (u32 name length, name bytes, u32 rank, u64 dims..., f64 payload).
// Network structure rides along as meta.* scalar tensors.

inline constexpr char kCheckpointMagic[4] = {'C', 'L', 'M', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> values;
};

namespace detail {

template <typename T>
void write_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint: unexpected end of file");
    return v;
}

}  // namespace detail

inline void write_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kCheckpointMagic, 4);
    detail::write_le(out, kCheckpointVersion);
    for (const auto& t : tensors) {
        detail::write_le(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::write_le(out, static_cast<std::uint32_t>(t.dims.size()));
        std::uint64_t count = 1;
        for (auto d : t.dims) {
            detail::write_le(out, d);
            count *= d;
        }
        if (count != t.values.size()) throw IoError("checkpoint: dims/value mismatch for " + t.name);
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<NamedTensor> read_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("checkpoint: bad magic in " + path);
    const auto version = detail::read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    std::vector<NamedTensor> tensors;
    while (true) {
        std::uint32_t name_len;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (in.eof()) break;
        if (!in) throw IoError("checkpoint: truncated record in " + path);
        NamedTensor t;
        t.name.resize(name_len);
        in.read(t.name.data(), name_len);
        const auto rank = detail::read_le<std::uint32_t>(in);
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            t.dims.push_back(detail::read_le<std::uint64_t>(in));
            count *= t.dims.back();
        }
        t.values.resize(count);
        in.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw IoError("checkpoint: truncated payload in " + path);
        tensors.push_back(std::move(t));
    }
    return tensors;
}

inline void save_checkpoint(const std::string& path, const DenseNet& net) {
    std::vector<NamedTensor> tensors;
    tensors.push_back({"meta.split_index", {1}, {static_cast<double>(net.split_index)}});
    tensors.push_back({"meta.num_layers", {1}, {static_cast<double>(net.layers.size())}});
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& lay = net.layers[l];
        const std::string prefix = "layer" + std::to_string(l);
        tensors.push_back({prefix + ".weight", {lay.weights.rows, lay.weights.cols},
                           lay.weights.data});
        tensors.push_back({prefix + ".bias", {lay.bias.size()}, lay.bias});
        tensors.push_back({prefix + ".activation", {1},
                           {static_cast<double>(static_cast<std::uint32_t>(lay.activation))}});
    }
    write_tensors(path, tensors);
}

inline DenseNet load_checkpoint(const std::string& path, bool backbone_only = false) {
    auto tensors = read_tensors(path);
    auto find = [&](const std::string& name) -> const NamedTensor& {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        throw IoError("checkpoint: missing tensor " + name + " in " + path);
    };
    DenseNet net;
    net.split_index = static_cast<std::size_t>(find("meta.split_index").values[0]);
    const auto num_layers = static_cast<std::size_t>(find("meta.num_layers").values[0]);
    const std::size_t want = backbone_only ? net.split_index : num_layers;
    for (std::size_t l = 0; l < want; ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        const auto& w = find(prefix + ".weight");
        const auto& b = find(prefix + ".bias");
        Layer lay;
        lay.weights = Matrix(w.dims[0], w.dims[1]);
        lay.weights.data = w.values;
        lay.bias = b.values;
        lay.activation =
            static_cast<Activation>(static_cast<std::uint32_t>(find(prefix + ".activation").values[0]));
        net.layers.push_back(std::move(lay));
    }
    if (backbone_only) net.split_index = net.layers.size();
    validate_net(net);
    return net;
}

}  // namespace clamp::nn
