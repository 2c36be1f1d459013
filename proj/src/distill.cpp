#include "spikeir/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace spikeir {

std::vector<int> kd_stage_list(KdStages s) {
    switch (s) {
        case KdStages::All: return {1, 2, 3, 4, 5, 6, 7};
        case KdStages::Mid: return {3, 4, 5};
        case KdStages::Decoder: return {4, 5, 6, 7};
        case KdStages::None: return {};
    }
    return {};
}

const char* kd_stage_name(KdStages s) {
    switch (s) {
        case KdStages::All: return "all";
        case KdStages::Mid: return "mid";
        case KdStages::Decoder: return "decoder";
        case KdStages::None: return "none";
    }
    return "?";
}

KdStages kd_stages_from_name(const std::string& name) {
    if (name == "all") return KdStages::All;
    if (name == "mid") return KdStages::Mid;
    if (name == "decoder") return KdStages::Decoder;
    if (name == "none") return KdStages::None;
    throw ConfigError("unknown KD stage set '" + name + "' (want all|mid|decoder|none)");
}

TensorId restoration_loss(Tape& tape, TensorId pred, TensorId target, const LossWeights& w) {
    w.validate();
    if (!tape.val(pred).same_shape(tape.val(target)))
        throw DimensionError("restoration_loss: pred/target shape mismatch");
    TensorId pixel = l1_mean(tape, pred, target);
    if (w.lambda_freq == 0.0f) return pixel;
    auto [pre, pim] = rdft2(tape, pred);
    auto [tre, tim] = rdft2(tape, target);
    const double bins = static_cast<double>(tape.val(pre).size());
    TensorId freq = add(tape, abs_sum(tape, sub(tape, pre, tre)), abs_sum(tape, sub(tape, pim, tim)));
    freq = scale(tape, freq, static_cast<float>(1.0 / (2.0 * bins)));
    return add(tape, pixel, scale(tape, freq, w.lambda_freq));
}

Tensor align_feature(const Tensor& teacher_tap, int out_c, int out_h, int out_w) {
    Tape tape(false);
    TensorId t = tape.value(teacher_tap);
    t = bilinear_resize(tape, t, out_h, out_w);
    t = channel_avg_pool(tape, t, out_c);
    return tape.val(t);
}

TensorId kd_loss(Tape& tape, const std::map<int, TensorId>& student_taps,
                 const std::map<int, Tensor>& aligned_teacher_taps, const KdConfig& cfg) {
    cfg.validate();
    const std::vector<int> stages = kd_stage_list(cfg.stages);
    if (stages.empty()) return tape.value(Tensor::scalar(0.0f));
    TensorId acc = -1;
    for (int s : stages) {
        auto st = student_taps.find(s);
        auto tt = aligned_teacher_taps.find(s);
        if (st == student_taps.end() || tt == aligned_teacher_taps.end())
            throw ContractError("kd_loss: stage " + std::to_string(s) + " missing from tap set");
        TensorId term = mse_mean(tape, st->second, tape.value(tt->second));
        acc = acc < 0 ? term : add(tape, acc, term);
    }
    float factor = cfg.gamma;
    if (!cfg.sum_over_stages) factor /= static_cast<float>(stages.size());
    return scale(tape, acc, factor);
}

// ---------------------------------------------------------------------------
// training loop

namespace {

void fisher_yates(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
}

Tensor clamp01(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

} // namespace

std::vector<PatchPair> make_validation_pairs(const std::vector<ImageBuffer>& val_images, double sigma,
                                             std::uint64_t seed) {
    std::vector<PatchPair> pairs;
    Rng base(seed);
    for (std::size_t i = 0; i < val_images.size(); ++i) {
        Rng stream = base.split(2000 + i);
        Tensor clean = image_to_tensor(val_images[i]);
        Tensor noisy = sigma > 0.0
                           ? image_to_tensor(add_gaussian_noise(val_images[i], {sigma, stream.next_u64()}))
                           : clean;
        pairs.push_back({std::move(clean), std::move(noisy)});
    }
    return pairs;
}

namespace {

TrainRun train_impl(ModelGraph& net, const ModelGraph* teacher, const KdConfig& kd,
                    const std::vector<ImageBuffer>& train_images,
                    const std::vector<ImageBuffer>& val_images, const TrainOptions& opts) {
    if (train_images.empty()) throw ConfigError("training requires at least one image");
    opts.weights.validate();
    kd.validate();
    const bool use_kd = kd.stages != KdStages::None;
    if (use_kd && !teacher) throw ConfigError("KD enabled but no teacher provided");
    if (teacher) {
        for (const auto& p : teacher->params)
            if (p.tensor.requires_grad()) throw ContractError("teacher must be frozen (requires_grad off)");
    }

    net.set_requires_grad(true);
    std::vector<Tensor*> params = net.param_ptrs();
    OptimState optim;
    optim.weight_decay = opts.weight_decay;
    CosineSchedule sched{opts.lr_max, opts.lr_min, opts.epochs};

    Rng base(opts.seed);
    std::vector<ImageBuffer> noisy_images;
    noisy_images.reserve(train_images.size());
    for (std::size_t i = 0; i < train_images.size(); ++i) {
        Rng stream = base.split(1000 + i);
        noisy_images.push_back(add_gaussian_noise(train_images[i], {opts.sigma, stream.next_u64()}));
    }
    std::vector<PatchPair> val_pairs = make_validation_pairs(val_images, opts.sigma, opts.seed);

    TrainRun run;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const float lr = lr_at(sched, epoch);

        Rng corner_rng = base.split(3000 + static_cast<std::uint64_t>(epoch));
        Rng order_rng = base.split(4000 + static_cast<std::uint64_t>(epoch));
        Rng flip_rng = base.split(5000 + static_cast<std::uint64_t>(epoch));

        std::vector<PatchPair> pool;
        for (std::size_t i = 0; i < train_images.size(); ++i) {
            auto patches = sample_patches(train_images[i], noisy_images[i], opts.patch,
                                          opts.patches_per_image, corner_rng);
            for (auto& p : patches) pool.push_back(std::move(p));
        }
        std::vector<int> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        fisher_yates(order, order_rng);

        double sum_restore = 0.0, sum_kd = 0.0;
        std::int64_t steps = 0;
        for (std::size_t pos = 0; pos < order.size();) {
            const std::size_t batch_end = std::min(order.size(), pos + static_cast<std::size_t>(opts.batch));
            const int count = static_cast<int>(batch_end - pos);
            net.zero_grads();
            for (; pos < batch_end; ++pos) {
                PatchPair sample = pool[static_cast<std::size_t>(order[pos])];
                if (opts.augment) augment_flip(sample, flip_rng);

                Tape tape(true);
                TensorId noisy_id = tape.value(sample.noisy);
                ForwardResult fwd = forward_model(net, tape, noisy_id);
                TensorId loss = restoration_loss(tape, fwd.restored, tape.value(sample.clean), opts.weights);
                double kd_val = 0.0;
                if (use_kd) {
                    InferenceResult tfwd = run_model(*teacher, sample.noisy);
                    std::map<int, Tensor> aligned;
                    for (int s : kd_stage_list(kd.stages)) {
                        auto st = fwd.taps.find(s);
                        auto tt = tfwd.taps.find(s);
                        if (st == fwd.taps.end() || tt == tfwd.taps.end())
                            throw ContractError("kd: stage " + std::to_string(s) + " not tapped");
                        const Tensor& stap = tape.val(st->second);
                        aligned[s] = align_feature(tt->second, stap.dim(1), stap.dim(2), stap.dim(3));
                    }
                    TensorId kd_id = kd_loss(tape, fwd.taps, aligned, kd);
                    kd_val = tape.val(kd_id).data()[0];
                    loss = add(tape, loss, kd_id);
                }
                const double total = tape.val(loss).data()[0];
                if (!std::isfinite(total))
                    throw NumericError("NaN loss at epoch " + std::to_string(epoch) + " step " +
                                       std::to_string(steps));
                sum_restore += total - kd_val;
                sum_kd += kd_val;
                tape.backward(loss);
                ++steps;
            }
            // sequential accumulation stands in for a size-`batch` minibatch
            const float inv = 1.0f / static_cast<float>(count);
            for (Tensor* p : params)
                for (auto& g : p->grad()) g *= inv;
            adamw_step(params, optim, lr);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_restore = steps ? sum_restore / static_cast<double>(steps) : 0.0;
        rec.loss_kd = steps ? sum_kd / static_cast<double>(steps) : 0.0;

        double psnr_sum = 0.0, ssim_sum = 0.0;
        std::int64_t spikes = 0, total = 0, dense = 0;
        for (const auto& pair : val_pairs) {
            InferenceResult r = run_model(net, pair.noisy);
            Tensor restored = clamp01(r.restored);
            psnr_sum += psnr(restored, pair.clean);
            ssim_sum += ssim(restored, pair.clean);
            for (const auto& s : r.stats) {
                spikes += s.spike_count;
                total += s.total;
                dense += s.dense_count;
            }
        }
        if (!val_pairs.empty()) {
            rec.val_psnr = psnr_sum / static_cast<double>(val_pairs.size());
            rec.val_ssim = ssim_sum / static_cast<double>(val_pairs.size());
        }
        if (total > 0) {
            rec.mean_fr = static_cast<double>(spikes) / static_cast<double>(total);
            rec.volt_density = static_cast<double>(dense) / static_cast<double>(total);
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        run.epochs.push_back(rec);
    }
    return run;
}

} // namespace

TrainRun train_student(ModelGraph& student, const ModelGraph* teacher, const KdConfig& kd,
                       const std::vector<ImageBuffer>& train_images,
                       const std::vector<ImageBuffer>& val_images, const TrainOptions& opts) {
    if (!student.spiking) throw ContractError("train_student expects a spiking graph");
    return train_impl(student, teacher, kd, train_images, val_images, opts);
}

TrainRun train_teacher(ModelGraph& teacher, const std::vector<ImageBuffer>& train_images,
                       const std::vector<ImageBuffer>& val_images, const TrainOptions& opts) {
    if (teacher.spiking) throw ContractError("train_teacher expects a non-spiking graph");
    KdConfig none;
    none.stages = KdStages::None;
    return train_impl(teacher, nullptr, none, train_images, val_images, opts);
}

void write_train_csv(const TrainRun& run, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open for writing");
    out << "epoch,loss_restore,loss_kd,val_psnr,val_ssim,mean_fr,volt_density,seconds\n";
    char buf[256];
    for (const auto& r : run.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f,%.4f,%.6f,%.6f,%.6f,%.3f\n", r.epoch, r.loss_restore,
                      r.loss_kd, r.val_psnr, r.val_ssim, r.mean_fr, r.volt_density, r.seconds);
        out << buf;
    }
}

MembraneHistogram membrane_histogram(const ModelGraph& student, const std::vector<PatchPair>& val_pairs) {
    if (!student.spiking) throw ContractError("membrane_histogram expects a spiking graph");
    MembraneHistogram h;
    h.layers = student.lif_names();
    h.time_steps = student.time_steps;
    h.v_lo = -2.0f * student.lif.v_th;
    h.v_hi = 2.0f * student.lif.v_th;
    h.counts.assign(h.layers.size(),
                    std::vector<std::vector<long long>>(
                        static_cast<std::size_t>(h.time_steps),
                        std::vector<long long>(static_cast<std::size_t>(h.bins), 0)));
    const float span = h.v_hi - h.v_lo;
    std::int64_t dense = 0, total = 0;
    const float dense_th = 0.01f * student.lif.v_th;
    for (const auto& pair : val_pairs) {
        ForwardOptions opts;
        opts.want_membranes = true;
        InferenceResult r = run_model(student, pair.noisy, opts);
        for (std::size_t l = 0; l < r.membranes.size(); ++l) {
            const Tensor& m = r.membranes[l];
            const std::int64_t plane = m.size() / m.dim(0);
            for (int t = 0; t < m.dim(0); ++t) {
                for (std::int64_t i = 0; i < plane; ++i) {
                    const float v = m.data()[static_cast<std::int64_t>(t) * plane + i];
                    int bin = static_cast<int>((v - h.v_lo) / span * static_cast<float>(h.bins));
                    bin = std::clamp(bin, 0, h.bins - 1); // out-of-range into edge bins
                    ++h.counts[l][static_cast<std::size_t>(t)][static_cast<std::size_t>(bin)];
                    if (std::fabs(v) > dense_th) ++dense;
                    ++total;
                }
            }
        }
    }
    if (total > 0) h.density_fraction = static_cast<double>(dense) / static_cast<double>(total);
    return h;
}

void write_membrane_csv(const MembraneHistogram& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open for writing");
    out << "step,layer,bin_lo,bin_hi,count\n";
    const float width = (h.v_hi - h.v_lo) / static_cast<float>(h.bins);
    char buf[256];
    for (int t = 0; t < h.time_steps; ++t)
        for (std::size_t l = 0; l < h.layers.size(); ++l)
            for (int b = 0; b < h.bins; ++b) {
                std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%lld\n", t, h.layers[l].c_str(),
                              h.v_lo + width * static_cast<float>(b), h.v_lo + width * static_cast<float>(b + 1),
                              h.counts[l][static_cast<std::size_t>(t)][static_cast<std::size_t>(b)]);
                out << buf;
            }
}

} // namespace spikeir
