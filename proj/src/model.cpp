#include "spikeir/model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "spikeir/rng.hpp"

namespace spikeir {

namespace {

void validate_common(int levels, const std::vector<int>& channels, int blocks, int kernel, int image_channels) {
    if (levels < 1) throw ConfigError("model: levels must be >= 1");
    if (static_cast<int>(channels.size()) != levels)
        throw ConfigError("model: channels list must have one entry per level");
    for (int c : channels)
        if (c < 1) throw ConfigError("model: channel counts must be >= 1");
    if (blocks < 1) throw ConfigError("model: blocks_per_level must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("model: kernel must be odd and >= 1");
    if (image_channels < 1) throw ConfigError("model: image_channels must be >= 1");
}

} // namespace

void StudentConfig::validate() const {
    validate_common(levels, channels, blocks_per_level, kernel, image_channels);
    if (time_steps < 1) throw ConfigError("model: time_steps must be >= 1");
    lif.validate();
}

void TeacherConfig::validate() const {
    validate_common(levels, channels, blocks_per_level, kernel, image_channels);
}

std::int64_t ModelGraph::param_count() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.tensor.size();
    return n;
}

void ModelGraph::set_requires_grad(bool on) {
    for (auto& p : params) p.tensor.set_requires_grad(on);
}

void ModelGraph::zero_grads() {
    for (auto& p : params) p.tensor.zero_grad();
}

std::vector<Tensor*> ModelGraph::param_ptrs() {
    std::vector<Tensor*> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(&p.tensor);
    return out;
}

Tensor* ModelGraph::find_param(const std::string& name) {
    for (auto& p : params)
        if (p.name == name) return &p.tensor;
    return nullptr;
}

std::vector<std::string> ModelGraph::lif_names() const {
    std::vector<std::string> names;
    for (const auto& l : layers)
        if (l.op == LayerOp::Lif) names.push_back(l.name);
    return names;
}

// ---------------------------------------------------------------------------
// builder

namespace {

class Builder {
public:
    Builder(ModelGraph& g, std::uint64_t seed) : g_(g), rng_(seed) {}

    int add_conv_param(const std::string& name, int cin, int cout, int k, bool zero_init) {
        Tensor w({cout, cin, k, k});
        if (!zero_init) {
            const float bound = std::sqrt(6.0f / static_cast<float>(cin * k * k));
            for (auto& v : w.values()) v = rng_.uniform(-bound, bound);
        }
        g_.params.push_back({name, std::move(w)});
        return static_cast<int>(g_.params.size() - 1);
    }

    int add_flat_param(const std::string& name, Shape shape, float fill) {
        g_.params.push_back({name, Tensor::full(shape, fill)});
        return static_cast<int>(g_.params.size() - 1);
    }

    void conv(const std::string& name, int cin, int cout, int k, int stride, bool zero_init = false) {
        int w = add_conv_param(name + ".w", cin, cout, k, zero_init);
        int b = add_flat_param(name + ".b", {1, cout, 1, 1}, 0.0f);
        g_.layers.push_back({LayerOp::Conv, name, w, b, stride, 0, -1});
    }

    void block(const std::string& prefix, int ch) {
        conv(prefix + ".conv", ch, ch, g_.kernel, 1);
        if (g_.spiking) {
            int gain = add_flat_param(prefix + ".norm.gain", {1, ch, 1, 1}, 1.0f);
            int bias = add_flat_param(prefix + ".norm.bias", {1, ch, 1, 1}, 0.0f);
            g_.layers.push_back({LayerOp::Affine, prefix + ".norm", gain, bias, 1, 0, -1});
            g_.layers.push_back({LayerOp::Lif, prefix + ".lif", -1, -1, 1, 0, -1});
            if (g_.attention) {
                int w = add_conv_param(prefix + ".attn.w", ch, 1, 1, false);
                int b = add_flat_param(prefix + ".attn.b", {1, 1, 1, 1}, 0.0f);
                g_.layers.push_back({LayerOp::Attention, prefix + ".attn", w, b, 1, 0, -1});
            }
        } else {
            g_.layers.push_back({LayerOp::Relu, prefix + ".relu", -1, -1, 1, 0, -1});
        }
    }

    void build() {
        const int L = g_.levels;
        const auto& c = g_.channels;
        conv("head", g_.image_channels, c[0], g_.kernel, 1);
        for (int lv = 0; lv < L - 1; ++lv) {
            const std::string enc = "enc" + std::to_string(lv + 1);
            for (int b = 0; b < g_.blocks_per_level; ++b)
                block(enc + ".block" + std::to_string(b), c[static_cast<std::size_t>(lv)]);
            g_.layers.push_back({LayerOp::PushSkip, enc + ".skip", -1, -1, 1, 0, lv});
            g_.layers.push_back({LayerOp::Tap, enc + ".tap", -1, -1, 1, lv + 1, -1});
            conv(enc + ".down", c[static_cast<std::size_t>(lv)], c[static_cast<std::size_t>(lv + 1)], g_.kernel, 2);
        }
        for (int b = 0; b < g_.blocks_per_level; ++b)
            block("mid.block" + std::to_string(b), c[static_cast<std::size_t>(L - 1)]);
        g_.layers.push_back({LayerOp::Tap, "mid.tap", -1, -1, 1, L, -1});
        for (int lv = L - 2; lv >= 0; --lv) {
            const int stage = L + (L - 1 - lv);
            const std::string dec = "dec" + std::to_string(stage);
            g_.layers.push_back({LayerOp::Upsample2x, dec + ".upsample", -1, -1, 1, 0, -1});
            conv(dec + ".up", c[static_cast<std::size_t>(lv + 1)], c[static_cast<std::size_t>(lv)], g_.kernel, 1);
            g_.layers.push_back({LayerOp::AddSkip, dec + ".skip", -1, -1, 1, 0, lv});
            for (int b = 0; b < g_.blocks_per_level; ++b)
                block(dec + ".block" + std::to_string(b), c[static_cast<std::size_t>(lv)]);
            g_.layers.push_back({LayerOp::Tap, dec + ".tap", -1, -1, 1, stage, -1});
        }
        g_.layers.push_back({LayerOp::TimeAverage, "time_avg", -1, -1, 1, 0, -1});
        conv("tail", c[0], g_.image_channels, g_.kernel, 1, /*zero_init=*/true);
        g_.layers.push_back({LayerOp::GlobalResidual, "residual", -1, -1, 1, 0, -1});
    }

private:
    ModelGraph& g_;
    Rng rng_;
};

} // namespace

ModelGraph build_student(const StudentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelGraph g;
    g.spiking = true;
    g.time_steps = cfg.time_steps;
    g.lif = cfg.lif;
    g.attention = cfg.attention;
    g.levels = cfg.levels;
    g.channels = cfg.channels;
    g.blocks_per_level = cfg.blocks_per_level;
    g.kernel = cfg.kernel;
    g.image_channels = cfg.image_channels;
    Builder(g, seed).build();
    return g;
}

ModelGraph build_teacher(const TeacherConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelGraph g;
    g.spiking = false;
    g.time_steps = 1;
    g.levels = cfg.levels;
    g.channels = cfg.channels;
    g.blocks_per_level = cfg.blocks_per_level;
    g.kernel = cfg.kernel;
    g.image_channels = cfg.image_channels;
    Builder(g, seed).build();
    return g;
}

// ---------------------------------------------------------------------------
// forward

ForwardResult forward_model(const ModelGraph& g, Tape& tape, TensorId image, const ForwardOptions& opts) {
    const Tensor& img = tape.val(image);
    if (img.dim(0) != 1 || img.dim(1) != g.image_channels)
        throw DimensionError("forward: image must be [1," + std::to_string(g.image_channels) + ",H,W]");
    const int orig_h = img.dim(2), orig_w = img.dim(3);
    const int div = 1 << (g.levels - 1);
    const int pad_h = (div - orig_h % div) % div;
    const int pad_w = (div - orig_w % div) % div;
    TensorId padded = image;
    if (pad_h || pad_w) padded = pad_reflect(tape, image, 0, pad_h, 0, pad_w);

    // Grad write-back only touches params whose requires_grad flag is set,
    // which a trainer does on a graph it owns mutably.
    std::vector<TensorId> pid(g.params.size());
    for (std::size_t i = 0; i < g.params.size(); ++i)
        pid[i] = tape.param(const_cast<Tensor&>(g.params[i].tensor));

    ForwardResult res;
    TensorId cur = padded;
    if (g.spiking) cur = encode_direct(tape, padded, g.time_steps);
    std::map<int, TensorId> skip;
    TensorId last_spikes = -1, last_membrane = -1;

    for (const auto& l : g.layers) {
        switch (l.op) {
            case LayerOp::Conv:
                cur = conv2d(tape, cur, pid[static_cast<std::size_t>(l.w)], pid[static_cast<std::size_t>(l.b)], l.stride);
                break;
            case LayerOp::Affine:
                cur = affine_channel(tape, cur, pid[static_cast<std::size_t>(l.w)], pid[static_cast<std::size_t>(l.b)]);
                break;
            case LayerOp::Relu:
                cur = relu(tape, cur);
                break;
            case LayerOp::Lif: {
                LifSeqStats st;
                LifSeqOut o = lif_sequence(tape, cur, g.lif, &st, opts.smooth_spikes);
                cur = o.spikes;
                last_spikes = o.spikes;
                last_membrane = o.membrane;
                res.stats.push_back({l.name, st.firing_rate, st.spike_count, st.total, st.dense_count});
                if (opts.want_membranes) res.membranes.push_back(o.membrane);
                break;
            }
            case LayerOp::Attention: {
                TensorId gt = sigmoid(tape, reduce_mean(tape, reduce_mean(tape, reduce_mean(tape, last_membrane, 1), 2), 3));
                TensorId gc = sigmoid(tape, reduce_mean(tape, reduce_mean(tape, reduce_mean(tape, last_spikes, 0), 2), 3));
                TensorId m = reduce_mean(tape, last_spikes, 0);
                TensorId gs = sigmoid(tape, conv2d(tape, m, pid[static_cast<std::size_t>(l.w)],
                                                   pid[static_cast<std::size_t>(l.b)], 1));
                cur = mul(tape, mul(tape, mul(tape, cur, gt), gc), gs);
                break;
            }
            case LayerOp::Upsample2x: {
                const Tensor& v = tape.val(cur);
                cur = bilinear_resize(tape, cur, v.dim(2) * 2, v.dim(3) * 2);
                break;
            }
            case LayerOp::PushSkip:
                skip[l.slot] = cur;
                break;
            case LayerOp::AddSkip:
                cur = add(tape, cur, skip.at(l.slot));
                break;
            case LayerOp::Tap:
                res.taps[l.stage] = reduce_mean(tape, cur, 0);
                break;
            case LayerOp::TimeAverage:
                cur = reduce_mean(tape, cur, 0);
                break;
            case LayerOp::GlobalResidual:
                cur = add(tape, cur, padded);
                break;
        }
    }
    if (pad_h || pad_w) cur = crop(tape, cur, 0, 0, orig_h, orig_w);
    res.restored = cur;

    std::int64_t spikes = 0, total = 0, dense = 0;
    for (const auto& s : res.stats) {
        spikes += s.spike_count;
        total += s.total;
        dense += s.dense_count;
    }
    if (total > 0) {
        res.mean_firing_rate = static_cast<double>(spikes) / static_cast<double>(total);
        res.density_fraction = static_cast<double>(dense) / static_cast<double>(total);
    }
    return res;
}

InferenceResult run_model(const ModelGraph& g, const Tensor& image, const ForwardOptions& opts) {
    Tape tape(false);
    TensorId x = tape.value(image);
    ForwardResult r = forward_model(g, tape, x, opts);
    InferenceResult out;
    out.restored = tape.val(r.restored);
    for (const auto& [stage, id] : r.taps) out.taps[stage] = tape.val(id);
    out.stats = r.stats;
    out.mean_firing_rate = r.mean_firing_rate;
    out.density_fraction = r.density_fraction;
    for (TensorId m : r.membranes) out.membranes.push_back(tape.val(m));
    return out;
}

// ---------------------------------------------------------------------------
// descriptors

std::vector<LayerCount> ModelGraph::describe(int image_h, int image_w) const {
    const int div = 1 << (levels - 1);
    int h = image_h + (div - image_h % div) % div;
    int w = image_w + (div - image_w % div) % div;
    int c = image_channels;
    bool spike_stream = false; // flips after the first Lif
    bool temporal = spiking;
    int cur_lif = -1;

    std::vector<LayerCount> rows;
    auto area = [&]() { return static_cast<long long>(h) * w; };

    for (const auto& l : layers) {
        const int steps = temporal ? time_steps : 1;
        switch (l.op) {
            case LayerOp::Conv: {
                const int cout = params[static_cast<std::size_t>(l.w)].tensor.dim(0);
                const int cin = params[static_cast<std::size_t>(l.w)].tensor.dim(1);
                const int k = params[static_cast<std::size_t>(l.w)].tensor.dim(2);
                const int oh = (h + 2 * ((k - 1) / 2) - k) / l.stride + 1;
                const int ow = (w + 2 * ((k - 1) / 2) - k) / l.stride + 1;
                const long long products = static_cast<long long>(cout) * oh * ow * cin * k * k;
                const long long bias_adds = static_cast<long long>(cout) * oh * ow;
                LayerCount r{l.name, "conv", 0, 0, steps, -1};
                if (spike_stream) {
                    r.op_ac = products + bias_adds;
                    r.fr_index = cur_lif;
                } else {
                    r.op_mac = products;
                    r.op_ac = bias_adds;
                }
                rows.push_back(r);
                c = cout;
                h = oh;
                w = ow;
                break;
            }
            case LayerOp::Affine:
                rows.push_back({l.name, "norm", 0, static_cast<long long>(c) * area(), steps, -1});
                break;
            case LayerOp::Lif:
                ++cur_lif;
                rows.push_back({l.name, "lif", 0, 0, steps, cur_lif});
                spike_stream = true;
                break;
            case LayerOp::Relu:
                break;
            case LayerOp::Attention: {
                const long long n = static_cast<long long>(c) * area();
                rows.push_back({l.name, "attn", 2 * n, 3 * n, steps, cur_lif});
                rows.push_back({l.name + ".spatial", "conv1x1", area(), n, 1, cur_lif});
                break;
            }
            case LayerOp::Upsample2x:
                h *= 2;
                w *= 2;
                rows.push_back({l.name, "upsample", 0, 4 * static_cast<long long>(c) * area(), steps, -1});
                break;
            case LayerOp::PushSkip:
                break;
            case LayerOp::AddSkip:
                rows.push_back({l.name, "add", static_cast<long long>(c) * area(), 0, steps,
                                spike_stream ? cur_lif : -1});
                break;
            case LayerOp::Tap:
                break; // distillation bookkeeping, not part of inference
            case LayerOp::TimeAverage:
                rows.push_back({l.name, "add", static_cast<long long>(c) * area(), 0, steps,
                                spike_stream ? cur_lif : -1});
                temporal = false;
                break;
            case LayerOp::GlobalResidual:
                rows.push_back({l.name, "add", static_cast<long long>(c) * area(), 0, 1, -1});
                break;
        }
    }
    return rows;
}

std::string ModelGraph::summary(int image_h, int image_w) const {
    const int div = 1 << (levels - 1);
    int h = image_h + (div - image_h % div) % div;
    int w = image_w + (div - image_w % div) % div;
    int c = image_channels;
    bool temporal = spiking;
    std::ostringstream os;
    os << (spiking ? "SpikerIR student" : "equivalent ANN") << "  params=" << param_count() << "\n";
    os << "layer                          kind        out shape           params  stage\n";
    auto emit = [&](const std::string& name, const std::string& kind, std::int64_t nparams, int stage) {
        char buf[160];
        std::string shape = "[" + std::to_string(temporal ? time_steps : 1) + "," + std::to_string(c) + "," +
                            std::to_string(h) + "," + std::to_string(w) + "]";
        std::string stage_str = stage > 0 ? std::to_string(stage) : "";
        std::snprintf(buf, sizeof(buf), "%-30s %-11s %-19s %7lld  %s\n", name.c_str(), kind.c_str(),
                      shape.c_str(), static_cast<long long>(nparams), stage_str.c_str());
        os << buf;
    };
    for (const auto& l : layers) {
        switch (l.op) {
            case LayerOp::Conv: {
                const Tensor& k = params[static_cast<std::size_t>(l.w)].tensor;
                c = k.dim(0);
                h = (h + 2 * ((k.dim(2) - 1) / 2) - k.dim(2)) / l.stride + 1;
                w = (w + 2 * ((k.dim(3) - 1) / 2) - k.dim(3)) / l.stride + 1;
                emit(l.name, l.stride == 2 ? "conv/s2" : "conv",
                     k.size() + params[static_cast<std::size_t>(l.b)].tensor.size(), 0);
                break;
            }
            case LayerOp::Affine:
                emit(l.name, "norm", params[static_cast<std::size_t>(l.w)].tensor.size() +
                                         params[static_cast<std::size_t>(l.b)].tensor.size(), 0);
                break;
            case LayerOp::Lif:
                emit(l.name, "lif", 0, 0);
                break;
            case LayerOp::Relu:
                emit(l.name, "relu", 0, 0);
                break;
            case LayerOp::Attention:
                emit(l.name, "attention", params[static_cast<std::size_t>(l.w)].tensor.size() +
                                              params[static_cast<std::size_t>(l.b)].tensor.size(), 0);
                break;
            case LayerOp::Upsample2x:
                h *= 2;
                w *= 2;
                emit(l.name, "upsample2x", 0, 0);
                break;
            case LayerOp::PushSkip:
                break;
            case LayerOp::AddSkip:
                emit(l.name, "skip-add", 0, 0);
                break;
            case LayerOp::Tap:
                emit(l.name, "tap", 0, l.stage);
                break;
            case LayerOp::TimeAverage:
                temporal = false;
                emit(l.name, "time-avg", 0, 0);
                break;
            case LayerOp::GlobalResidual:
                emit(l.name, "residual", 0, 0);
                break;
        }
    }
    return os.str();
}

} // namespace spikeir
