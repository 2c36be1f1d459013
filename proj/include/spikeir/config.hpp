#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikeir/distill.hpp"
#include "spikeir/model.hpp"

namespace spikeir {

// Everything a run needs, with the hyperparameter defaults as presets.
// Precedence is defaults < config file < command-line flags.
struct RunConfig {
    // task
    double sigma = 15.0;
    int epochs = 51; // denoise preset; other task presets: 77/5/8/208
    std::uint64_t seed = 1;

    // model
    int levels = 4;
    std::vector<int> channels = {8, 16, 32, 64};
    int blocks = 2;
    int kernel = 3;
    int timesteps = 4;
    float beta = 0.5f;
    float v_th = 1.0f;
    std::string reset = "soft";
    float surrogate_alpha = 2.0f;
    bool attention = true;

    // distillation / loss
    float gamma = 0.12f;
    float lambda = 0.1f;
    std::string kd = "decoder";
    bool kd_sum = false;
    std::string teacher_checkpoint;

    // optimizer / data
    float lr_max = 5e-4f;
    float lr_min = 1e-5f;
    float weight_decay = 0.05f;
    int batch = 8;
    int patch = 32;
    int patches_per_image = 4;
    bool augment = true;

    std::string train_manifest;
    std::string val_manifest;
    std::string out_dir = ".";

    LifParams lif_params() const;
    StudentConfig student_config(int image_channels) const;
    TeacherConfig teacher_config(int image_channels) const;
    TrainOptions train_options() const;
    KdConfig kd_config() const;
};

// `key = value` lines, '#' comments, known keys only. Unknown keys and type
// mismatches raise ConfigError naming the key and line.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Canonical key=value dump (also embedded in checkpoints, prefixed with the
// model kind so a graph can be rebuilt from the file alone).
std::string config_echo(const RunConfig& c);
std::string model_echo(const RunConfig& c, bool spiking, int image_channels);

// Rebuilds an empty graph matching a checkpoint's model echo.
ModelGraph graph_from_echo(const std::string& echo);

} // namespace spikeir
