#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spikeir/lif.hpp"
#include "spikeir/tape.hpp"

namespace spikeir {

// Stage tap numbering over the 4-level U-shape, in forward order:
// encoder levels 1..3 tap stages 1..3, the bottleneck taps stage 4 and the
// decoder levels tap stages 5..7.
constexpr int kNumStages = 7;

struct StudentConfig {
    int levels = 4;
    std::vector<int> channels = {8, 16, 32, 64}; // paper scale {48,96,192,384}
    int blocks_per_level = 2;
    int time_steps = 4;
    LifParams lif;
    int kernel = 3;
    int image_channels = 1;
    bool attention = true;
    void validate() const;
};

// Non-spiking twin: same U-shape and tap positions, conv+ReLU blocks, no
// time axis.
struct TeacherConfig {
    int levels = 4;
    std::vector<int> channels = {8, 16, 32, 64};
    int blocks_per_level = 2;
    int kernel = 3;
    int image_channels = 1;
    void validate() const;
};

struct Param {
    std::string name;
    Tensor tensor;
};

enum class LayerOp {
    Conv,
    Affine,
    Lif,
    Relu,
    Attention,
    Upsample2x,
    PushSkip,
    AddSkip,
    Tap,
    TimeAverage,
    GlobalResidual,
};

struct LayerRec {
    LayerOp op;
    std::string name;
    int w = -1; // param index (conv kernel / affine gain / attention 1x1 kernel)
    int b = -1; // param index (conv bias / affine shift / attention 1x1 bias)
    int stride = 1;
    int stage = 0; // Tap only
    int slot = -1; // PushSkip/AddSkip pairing
};

// Per-layer AC/MAC operation counts for one forward pass, used by the
// energy profiler. Counts are per time step; `steps` is the Eq.-1 T factor
// for the row (1 for work done once per forward). fr_index selects which
// measured firing rate gates the AC term; -1 means fr = 1 (always-on).
struct LayerCount {
    std::string block;
    std::string kind;
    long long op_ac = 0;
    long long op_mac = 0;
    int steps = 1;
    int fr_index = -1;
};

class ModelGraph {
public:
    bool spiking = false;
    int time_steps = 1;
    LifParams lif;
    bool attention = false;
    int levels = 4;
    std::vector<int> channels;
    int blocks_per_level = 2;
    int kernel = 3;
    int image_channels = 1;

    std::vector<Param> params;
    std::vector<LayerRec> layers;

    std::int64_t param_count() const;
    void set_requires_grad(bool on);
    void zero_grads();
    std::vector<Tensor*> param_ptrs();
    Tensor* find_param(const std::string& name);

    // Layer table with shapes, stage tags and parameter counts.
    std::string summary(int image_h, int image_w) const;

    // Operation counts for an image_h x image_w input, in forward order.
    std::vector<LayerCount> describe(int image_h, int image_w) const;

    // Names of the Lif layers in forward order (fr_index refers into this).
    std::vector<std::string> lif_names() const;
};

// U-shaped graph: head conv, per encoder level blocks+strided downsample,
// bottleneck blocks, per decoder level bilinear upsample+conv with additive
// skip, tail conv with a global input residual. The tail conv is
// zero-initialized so the freshly built model is the identity map; all other
// convs use Kaiming-uniform init drawn deterministically from the seed.
ModelGraph build_student(const StudentConfig& cfg, std::uint64_t seed);
ModelGraph build_teacher(const TeacherConfig& cfg, std::uint64_t seed);

struct BlockStats {
    std::string layer;
    double firing_rate = 0.0;
    std::int64_t spike_count = 0;
    std::int64_t total = 0;
    std::int64_t dense_count = 0;
};

struct ForwardOptions {
    bool smooth_spikes = false; // gradient-check oracle mode
    bool want_membranes = false;
};

struct ForwardResult {
    TensorId restored = -1;
    std::map<int, TensorId> taps;        // stage -> time-averaged feature
    std::vector<BlockStats> stats;       // one entry per Lif layer
    std::vector<TensorId> membranes;     // filled when want_membranes
    double mean_firing_rate = 0.0;       // spikes / neuron-steps over all Lif layers
    double density_fraction = 0.0;       // |u| > 0.01*v_th fraction over all Lif layers
};

// Records the full forward pass on the tape. Spatial sizes that are not
// divisible by 2^(levels-1) are reflect-padded internally and cropped back
// on output.
ForwardResult forward_model(const ModelGraph& g, Tape& tape, TensorId image,
                            const ForwardOptions& opts = {});

struct InferenceResult {
    Tensor restored;
    std::map<int, Tensor> taps;
    std::vector<BlockStats> stats;
    std::vector<Tensor> membranes;
    double mean_firing_rate = 0.0;
    double density_fraction = 0.0;
};

// Forward without gradient tracking.
InferenceResult run_model(const ModelGraph& g, const Tensor& image, const ForwardOptions& opts = {});

} // namespace spikeir
