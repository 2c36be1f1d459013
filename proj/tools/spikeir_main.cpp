// spikeir: train, distill, evaluate and energy-profile the spiking
// image-restoration model from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "spikeir/checkpoint.hpp"
#include "spikeir/config.hpp"
#include "spikeir/data.hpp"
#include "spikeir/distill.hpp"
#include "spikeir/energy.hpp"
#include "spikeir/model.hpp"

namespace fs = std::filesystem;
using namespace spikeir;

namespace {

struct Flags {
    std::string config;
    std::string train_data;
    std::string val_data;
    std::string teacher;
    std::string checkpoint;
    std::string input;
    std::string output;
    std::string out_dir;
    std::string kd;
    std::uint64_t seed = 0;
    int epochs = 0;
    int timesteps = 0;
    double sigma = 0.0;
    float gamma = 0.0f;
    float lambda = 0.0f;
};

// defaults < config file < flags
RunConfig resolve_config(const Flags& f, CLI::App* cmd) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : load_config_file(f.config);
    auto given = [cmd](const char* name) {
        const CLI::Option* o = cmd->get_option_no_throw(name);
        return o && o->count() > 0;
    };
    if (given("--seed")) cfg.seed = f.seed;
    if (given("--epochs")) cfg.epochs = f.epochs;
    if (given("--kd")) cfg.kd = f.kd;
    if (given("--gamma")) cfg.gamma = f.gamma;
    if (given("--lambda")) cfg.lambda = f.lambda;
    if (given("--timesteps")) cfg.timesteps = f.timesteps;
    if (given("--sigma")) cfg.sigma = f.sigma;
    if (given("--out")) cfg.out_dir = f.out_dir;
    if (given("--train-data")) cfg.train_manifest = f.train_data;
    if (given("--val-data")) cfg.val_manifest = f.val_data;
    if (given("--teacher")) cfg.teacher_checkpoint = f.teacher;
    return cfg;
}

std::vector<ImageBuffer> load_images(const std::vector<std::string>& paths) {
    std::vector<ImageBuffer> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(load_image(p));
    return out;
}

struct Dataset {
    std::vector<ImageBuffer> train;
    std::vector<ImageBuffer> val;
    int channels = 1;
};

Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.train_manifest.empty() || cfg.val_manifest.empty())
        throw ConfigError("train_manifest and val_manifest are required for this command");
    const auto train_paths = read_manifest(cfg.train_manifest);
    const auto val_paths = read_manifest(cfg.val_manifest);
    if (train_paths.empty() || val_paths.empty()) throw ConfigError("manifests must list at least one image");
    std::set<std::string> seen;
    for (const auto& p : train_paths) seen.insert(fs::weakly_canonical(p).string());
    for (const auto& p : val_paths)
        if (seen.count(fs::weakly_canonical(p).string()))
            throw ConfigError("train/val manifests overlap on " + p);
    Dataset d{load_images(train_paths), load_images(val_paths), 0};
    d.channels = d.train[0].channels;
    for (const auto& img : d.train)
        if (img.channels != d.channels) throw ConfigError("mixed channel counts in train manifest");
    for (const auto& img : d.val)
        if (img.channels != d.channels) throw ConfigError("mixed channel counts in val manifest");
    return d;
}

ModelGraph load_graph(const std::string& path) {
    CheckpointData data = read_checkpoint(path);
    ModelGraph g = graph_from_echo(data.config_echo);
    load_checkpoint(g, path);
    return g;
}

Tensor clamp01(Tensor t) {
    for (auto& v : t.values()) v = std::clamp(v, 0.0f, 1.0f);
    return t;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open for writing");
    out << text;
}

int epochs_to_reach(const TrainRun& run, double threshold) {
    for (const auto& e : run.epochs)
        if (e.val_psnr >= threshold) return e.epoch + 1;
    return -1; // never reached within the run
}

// ---------------------------------------------------------------------------

int cmd_train_teacher(const RunConfig& cfg) {
    Dataset data = load_dataset(cfg);
    fs::create_directories(cfg.out_dir);
    ModelGraph teacher = build_teacher(cfg.teacher_config(data.channels), cfg.seed);
    std::printf("training teacher: %lld params, sigma %g, %d epochs\n",
                static_cast<long long>(teacher.param_count()), cfg.sigma, cfg.epochs);
    TrainRun run = train_teacher(teacher, data.train, data.val, cfg.train_options());
    const auto out = fs::path(cfg.out_dir);
    write_train_csv(run, (out / "teacher_run.csv").string());
    save_checkpoint(teacher, (out / "teacher.ckpt").string(), model_echo(cfg, false, data.channels));
    write_text((out / "model_summary.txt").string(), teacher.summary(cfg.patch, cfg.patch));
    std::printf("final val PSNR %.2f dB, SSIM %.4f\n", run.epochs.back().val_psnr,
                run.epochs.back().val_ssim);
    return 0;
}

int cmd_train_student(const RunConfig& cfg) {
    Dataset data = load_dataset(cfg);
    fs::create_directories(cfg.out_dir);
    KdConfig kd = cfg.kd_config();
    ModelGraph teacher;
    const bool use_kd = kd.stages != KdStages::None;
    if (use_kd) {
        if (kd.teacher_checkpoint.empty())
            throw ConfigError("kd = " + cfg.kd + " requires a teacher checkpoint (--teacher)");
        teacher = load_graph(kd.teacher_checkpoint);
        if (teacher.spiking) throw ConfigError("teacher checkpoint holds a spiking model");
        teacher.set_requires_grad(false);
    }
    ModelGraph student = build_student(cfg.student_config(data.channels), cfg.seed);
    std::printf("training student: %lld params, T=%d, kd=%s, sigma %g, %d epochs\n",
                static_cast<long long>(student.param_count()), cfg.timesteps, cfg.kd.c_str(), cfg.sigma,
                cfg.epochs);
    TrainRun run = train_student(student, use_kd ? &teacher : nullptr, kd, data.train, data.val,
                                 cfg.train_options());
    const auto out = fs::path(cfg.out_dir);
    write_train_csv(run, (out / "student_run.csv").string());
    save_checkpoint(student, (out / "student.ckpt").string(), model_echo(cfg, true, data.channels));
    write_text((out / "model_summary.txt").string(), student.summary(cfg.patch, cfg.patch));
    MembraneHistogram hist =
        membrane_histogram(student, make_validation_pairs(data.val, cfg.sigma, cfg.seed));
    write_membrane_csv(hist, (out / "membrane_hist.csv").string());
    std::printf("final val PSNR %.2f dB, SSIM %.4f, mean fr %.4f, voltage density %.4f\n",
                run.epochs.back().val_psnr, run.epochs.back().val_ssim, run.epochs.back().mean_fr,
                hist.density_fraction);
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
    if (checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
    if (cfg.val_manifest.empty()) throw ConfigError("eval requires a val manifest");
    ModelGraph g = load_graph(checkpoint);
    auto val = load_images(read_manifest(cfg.val_manifest));
    auto pairs = make_validation_pairs(val, cfg.sigma, cfg.seed);
    fs::create_directories(cfg.out_dir);
    std::ofstream csv(fs::path(cfg.out_dir) / "eval.csv");
    csv << "image,psnr_noisy,psnr,ssim\n";
    double sum_noisy = 0.0, sum_psnr = 0.0, sum_ssim = 0.0;
    char buf[160];
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Tensor restored = clamp01(run_model(g, pairs[i].noisy).restored);
        const double pn = psnr(pairs[i].noisy, pairs[i].clean);
        const double pr = psnr(restored, pairs[i].clean);
        const double sr = ssim(restored, pairs[i].clean);
        sum_noisy += pn;
        sum_psnr += pr;
        sum_ssim += sr;
        std::snprintf(buf, sizeof(buf), "%zu,%.4f,%.4f,%.6f\n", i, pn, pr, sr);
        csv << buf;
    }
    const double n = static_cast<double>(pairs.size());
    std::snprintf(buf, sizeof(buf), "mean,%.4f,%.4f,%.6f\n", sum_noisy / n, sum_psnr / n, sum_ssim / n);
    csv << buf;
    std::printf("eval over %zu images: noisy %.2f dB -> restored %.2f dB, SSIM %.4f\n", pairs.size(),
                sum_noisy / n, sum_psnr / n, sum_ssim / n);
    return 0;
}

int cmd_profile(const RunConfig& cfg, const std::string& checkpoint) {
    if (checkpoint.empty()) throw ConfigError("profile requires --checkpoint");
    if (cfg.val_manifest.empty()) throw ConfigError("profile requires a val manifest for sample images");
    ModelGraph g = load_graph(checkpoint);
    if (!g.spiking) throw ConfigError("profile expects a student (spiking) checkpoint");
    auto val = load_images(read_manifest(cfg.val_manifest));
    auto pairs = make_validation_pairs(val, cfg.sigma, cfg.seed);
    std::vector<Tensor> samples;
    for (std::size_t i = 0; i < pairs.size() && i < 4; ++i) samples.push_back(pairs[i].noisy);

    EnergyReport snn = profile_snn(g, samples);
    TeacherConfig twin;
    twin.levels = g.levels;
    twin.channels = g.channels;
    twin.blocks_per_level = g.blocks_per_level;
    twin.kernel = g.kernel;
    twin.image_channels = g.image_channels;
    EnergyReport ann = profile_ann(build_teacher(twin, 0), samples[0]);

    fs::create_directories(cfg.out_dir);
    const auto out = fs::path(cfg.out_dir);
    write_energy_csv(snn, (out / "energy_snn.csv").string());
    write_energy_csv(ann, (out / "energy_ann.csv").string());
    write_text((out / "energy_snn.txt").string(), format_energy_report(snn, "SNN energy profile (Eq. 1)"));
    write_text((out / "energy_ann.txt").string(),
               format_energy_report(ann, "equivalent-ANN energy profile"));
    write_energy_summary_json(snn, ann, (out / "energy_summary.json").string());
    std::printf("SNN %.1f pJ (%.6f uJ) vs ANN %.1f pJ, ratio %.4f, T=%d\n", snn.total_pj,
                snn.total_pj * 1e-6, ann.total_pj, snn.total_pj / ann.total_pj, snn.time_steps);
    return 0;
}

int cmd_denoise(const RunConfig&, const std::string& checkpoint, const std::string& input,
                const std::string& output) {
    if (checkpoint.empty() || input.empty() || output.empty())
        throw ConfigError("denoise requires --checkpoint, --input and --output");
    ModelGraph g = load_graph(checkpoint);
    ImageBuffer img = load_image(input);
    Tensor restored = clamp01(run_model(g, image_to_tensor(img)).restored);
    save_image(output, tensor_to_image(restored));
    std::printf("restored %s -> %s (%dx%d)\n", input.c_str(), output.c_str(), img.width, img.height);
    return 0;
}

int cmd_sweep_stages(const RunConfig& cfg) {
    Dataset data = load_dataset(cfg);
    fs::create_directories(cfg.out_dir);
    const auto out = fs::path(cfg.out_dir);
    const std::vector<double> sigmas{15.0, 25.0, 50.0};
    const std::vector<KdStages> arms{KdStages::All, KdStages::Mid, KdStages::Decoder, KdStages::None};

    std::map<std::pair<int, int>, double> psnr_table; // (arm, sigma) -> final val psnr
    std::map<std::pair<int, int>, int> epochs_table;  // (arm, sigma) -> epochs to noisy+1.5dB
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        RunConfig scfg = cfg;
        scfg.sigma = sigmas[si];
        // shared teacher per sigma
        ModelGraph teacher = build_teacher(scfg.teacher_config(data.channels), scfg.seed);
        train_teacher(teacher, data.train, data.val, scfg.train_options());
        teacher.set_requires_grad(false);

        // noisy baseline for the convergence threshold
        auto pairs = make_validation_pairs(data.val, scfg.sigma, scfg.seed);
        double noisy_psnr = 0.0;
        for (const auto& p : pairs) noisy_psnr += psnr(p.noisy, p.clean);
        noisy_psnr /= static_cast<double>(pairs.size());

        for (std::size_t ai = 0; ai < arms.size(); ++ai) {
            KdConfig kd = scfg.kd_config();
            kd.stages = arms[ai];
            ModelGraph student = build_student(scfg.student_config(data.channels), scfg.seed);
            TrainRun run = train_student(student, arms[ai] == KdStages::None ? nullptr : &teacher, kd,
                                         data.train, data.val, scfg.train_options());
            psnr_table[{static_cast<int>(ai), static_cast<int>(si)}] = run.epochs.back().val_psnr;
            epochs_table[{static_cast<int>(ai), static_cast<int>(si)}] =
                epochs_to_reach(run, noisy_psnr + 1.5);
            char name[80];
            std::snprintf(name, sizeof(name), "sweep_s%d_%s_run.csv", static_cast<int>(sigmas[si]),
                          kd_stage_name(arms[ai]));
            write_train_csv(run, (out / name).string());
            std::printf("sigma %2.0f  %-8s final %.2f dB, reaches +1.5 dB at epoch %d\n", sigmas[si],
                        kd_stage_name(arms[ai]), run.epochs.back().val_psnr,
                        epochs_table[{static_cast<int>(ai), static_cast<int>(si)}]);
        }
    }

    std::ofstream csv(out / "sweep.csv");
    csv << "arm,psnr_sigma15,psnr_sigma25,psnr_sigma50\n";
    char buf[160];
    for (std::size_t ai = 0; ai < arms.size(); ++ai) {
        std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f\n", kd_stage_name(arms[ai]),
                      psnr_table[{static_cast<int>(ai), 0}], psnr_table[{static_cast<int>(ai), 1}],
                      psnr_table[{static_cast<int>(ai), 2}]);
        csv << buf;
    }
    std::ofstream conv(out / "sweep_convergence.csv");
    conv << "arm,epochs_sigma15,epochs_sigma25,epochs_sigma50\n";
    for (std::size_t ai = 0; ai < arms.size(); ++ai) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d\n", kd_stage_name(arms[ai]),
                      epochs_table[{static_cast<int>(ai), 0}], epochs_table[{static_cast<int>(ai), 1}],
                      epochs_table[{static_cast<int>(ai), 2}]);
        conv << buf;
    }
    // convergence speed-up of decoder-stage KD over no KD (printed, not asserted)
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        const int with_kd = epochs_table[{2, static_cast<int>(si)}];
        const int without = epochs_table[{3, static_cast<int>(si)}];
        if (with_kd > 0 && without > 0)
            std::printf("sigma %2.0f: convergence ratio no-KD/KD = %.2f\n", sigmas[si],
                        static_cast<double>(without) / with_kd);
        else
            std::printf("sigma %2.0f: +1.5 dB threshold not reached by %s\n", sigmas[si],
                        with_kd > 0 ? "the no-KD arm" : "the KD arm");
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SpikerIR: spiking image restoration with ANN->SNN feature distillation"};
    app.require_subcommand(1);

    Flags f;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", f.config, "key = value config file");
        cmd->add_option("--seed", f.seed, "run seed (all randomness derives from it)");
        cmd->add_option("--epochs", f.epochs, "training epochs");
        cmd->add_option("--kd", f.kd, "KD stage set: all|mid|decoder|none");
        cmd->add_option("--gamma", f.gamma, "KD weight");
        cmd->add_option("--lambda", f.lambda, "frequency-loss weight");
        cmd->add_option("--timesteps", f.timesteps, "SNN time steps");
        cmd->add_option("--sigma", f.sigma, "gaussian noise level (0-255 scale)")
            ->check(CLI::IsMember({15.0, 25.0, 50.0}));
        cmd->add_option("--out", f.out_dir, "output directory");
        cmd->add_option("--train-data", f.train_data, "training manifest (one image path per line)");
        cmd->add_option("--val-data", f.val_data, "validation manifest");
        return cmd;
    };

    auto* tt = add_common(app.add_subcommand("train-teacher", "train the equivalent-ANN teacher"));
    auto* ts = add_common(app.add_subcommand("train-student", "train the SpikerIR student (H-KD)"));
    ts->add_option("--teacher", f.teacher, "teacher checkpoint (required unless --kd none)");
    auto* ev = add_common(app.add_subcommand("eval", "PSNR/SSIM over a validation manifest"));
    ev->add_option("--checkpoint", f.checkpoint, "model checkpoint");
    auto* pr = add_common(app.add_subcommand("profile", "Eq.-1 energy report vs the equivalent ANN"));
    pr->add_option("--checkpoint", f.checkpoint, "student checkpoint");
    auto* sw = add_common(app.add_subcommand("sweep-stages", "KD stage-set ablation over 3 noise levels"));
    auto* dn = add_common(app.add_subcommand("denoise", "restore one degraded image"));
    dn->add_option("--checkpoint", f.checkpoint, "model checkpoint");
    dn->add_option("--input", f.input, "degraded input image (PGM/PPM)");
    dn->add_option("--output", f.output, "restored output image");

    CLI11_PARSE(app, argc, argv);

    try {
        if (tt->parsed()) return cmd_train_teacher(resolve_config(f, tt));
        if (ts->parsed()) return cmd_train_student(resolve_config(f, ts));
        if (ev->parsed()) return cmd_eval(resolve_config(f, ev), f.checkpoint);
        if (pr->parsed()) return cmd_profile(resolve_config(f, pr), f.checkpoint);
        if (sw->parsed()) return cmd_sweep_stages(resolve_config(f, sw));
        if (dn->parsed()) return cmd_denoise(resolve_config(f, dn), f.checkpoint, f.input, f.output);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
