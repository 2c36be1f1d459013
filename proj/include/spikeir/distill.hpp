#pragma once

#include <map>
#include <string>
#include <vector>

#include "spikeir/data.hpp"
#include "spikeir/model.hpp"
#include "spikeir/optim.hpp"
#include "spikeir/tape.hpp"

namespace spikeir {

struct LossWeights {
    float lambda_freq = 0.1f;
    void validate() const {
        if (lambda_freq < 0.0f) throw ConfigError("LossWeights: lambda must be >= 0");
    }
};

enum class KdStages { All, Mid, Decoder, None };

// All: 1..7, Mid: 3..5, Decoder: 4..7 (the bottleneck counts as the first
// decoder stage), None: empty.
std::vector<int> kd_stage_list(KdStages s);
const char* kd_stage_name(KdStages s);
KdStages kd_stages_from_name(const std::string& name);

struct KdConfig {
    float gamma = 0.12f;
    KdStages stages = KdStages::Decoder;
    std::string teacher_checkpoint;
    bool sum_over_stages = false; // raw sum instead of the |stages| mean
    void validate() const {
        if (gamma < 0.0f) throw ConfigError("KdConfig: gamma must be >= 0");
    }
};

// Pixel L1 plus lambda * frequency L1:
//   mean|pred - target|  +  lambda * (sum|dRe| + sum|dIm|) / (2 * #bins)
// where dRe/dIm are the half-spectrum differences of the 2-D DFTs.
TensorId restoration_loss(Tape& tape, TensorId pred, TensorId target, const LossWeights& w);

// Teacher tap resized bilinearly to (out_h, out_w) then channel-averaged to
// out_c. Value level: the result carries no gradient (teacher frozen).
Tensor align_feature(const Tensor& teacher_tap, int out_c, int out_h, int out_w);

// gamma * sum_{s in stages} MSE(student_s, teacher_s) / |stages|; the
// teacher taps must already be aligned to the student shapes. Exactly zero
// (and gradient-free) when stages is empty.
TensorId kd_loss(Tape& tape, const std::map<int, TensorId>& student_taps,
                 const std::map<int, Tensor>& aligned_teacher_taps, const KdConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double loss_restore = 0.0;
    double loss_kd = 0.0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
    double mean_fr = 0.0;
    double volt_density = 0.0;
    double seconds = 0.0;
};

struct TrainRun {
    std::vector<EpochRecord> epochs;
};

// CSV: epoch,loss_restore,loss_kd,val_psnr,val_ssim,mean_fr,volt_density,seconds
void write_train_csv(const TrainRun& run, const std::string& path);

struct TrainOptions {
    int epochs = 51;
    std::uint64_t seed = 1;
    double sigma = 15.0;
    int patch = 32;
    int patches_per_image = 4;
    int batch = 8;
    bool augment = true;
    float lr_max = 5e-4f;
    float lr_min = 1e-5f;
    float weight_decay = 0.05f;
    LossWeights weights;
};

// H-KD training: per step the frozen teacher supplies stage features, the
// student minimizes restoration_loss + kd_loss with AdamW under a cosine
// schedule, accumulating gradients sequentially over `batch` patches per
// update. Fully deterministic given the seed. teacher may be null only when
// kd.stages == None.
TrainRun train_student(ModelGraph& student, const ModelGraph* teacher, const KdConfig& kd,
                       const std::vector<ImageBuffer>& train_images,
                       const std::vector<ImageBuffer>& val_images, const TrainOptions& opts);

// Same loop without the KD term.
TrainRun train_teacher(ModelGraph& teacher, const std::vector<ImageBuffer>& train_images,
                       const std::vector<ImageBuffer>& val_images, const TrainOptions& opts);

// The validation pairs a run with this (sigma, seed) sees: one fixed noise
// realization per image, derived from the seed. sigma <= 0 keeps the images
// clean (evaluation on identical pairs).
std::vector<PatchPair> make_validation_pairs(const std::vector<ImageBuffer>& val_images, double sigma,
                                             std::uint64_t seed);

// Membrane histograms over the validation set: per (Lif layer, time step),
// 32 bins spanning [-2*v_th, 2*v_th] of the pre-reset membrane; out-of-range
// values land in the edge bins.
struct MembraneHistogram {
    std::vector<std::string> layers;
    int bins = 32;
    float v_lo = 0.0f;
    float v_hi = 0.0f;
    int time_steps = 0;
    // counts[layer][step][bin]
    std::vector<std::vector<std::vector<long long>>> counts;
    double density_fraction = 0.0;
};

MembraneHistogram membrane_histogram(const ModelGraph& student, const std::vector<PatchPair>& val_pairs);

// CSV: step,layer,bin_lo,bin_hi,count
void write_membrane_csv(const MembraneHistogram& h, const std::string& path);

} // namespace spikeir
