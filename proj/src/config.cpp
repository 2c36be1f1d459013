#include "spikeir/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "spikeir/checkpoint.hpp"

namespace spikeir {

LifParams RunConfig::lif_params() const {
    LifParams p;
    p.beta = beta;
    p.v_th = v_th;
    p.surrogate_alpha = surrogate_alpha;
    if (reset == "soft") {
        p.reset = LifParams::Reset::Soft;
    } else if (reset == "hard") {
        p.reset = LifParams::Reset::Hard;
    } else {
        throw ConfigError("reset must be 'soft' or 'hard', got '" + reset + "'");
    }
    return p;
}

StudentConfig RunConfig::student_config(int image_channels) const {
    StudentConfig c;
    c.levels = levels;
    c.channels = channels;
    c.blocks_per_level = blocks;
    c.time_steps = timesteps;
    c.lif = lif_params();
    c.kernel = kernel;
    c.image_channels = image_channels;
    c.attention = attention;
    return c;
}

TeacherConfig RunConfig::teacher_config(int image_channels) const {
    TeacherConfig c;
    c.levels = levels;
    c.channels = channels;
    c.blocks_per_level = blocks;
    c.kernel = kernel;
    c.image_channels = image_channels;
    return c;
}

TrainOptions RunConfig::train_options() const {
    TrainOptions o;
    o.epochs = epochs;
    o.seed = seed;
    o.sigma = sigma;
    o.patch = patch;
    o.patches_per_image = patches_per_image;
    o.batch = batch;
    o.augment = augment;
    o.lr_max = lr_max;
    o.lr_min = lr_min;
    o.weight_decay = weight_decay;
    o.weights.lambda_freq = lambda;
    return o;
}

KdConfig RunConfig::kd_config() const {
    KdConfig k;
    k.gamma = gamma;
    k.stages = kd_stages_from_name(kd);
    k.teacher_checkpoint = teacher_checkpoint;
    k.sum_over_stages = kd_sum;
    return k;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, int line, const char* want) {
    throw ConfigError("config line " + std::to_string(line) + ": key '" + key + "' expects " + want +
                      ", got '" + value + "'");
}

double parse_real(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) bad_value(key, v, line, "a number");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(key, v, line, "a number");
    }
}

long long parse_int(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t used = 0;
        long long n = std::stoll(v, &used);
        if (used != v.size()) bad_value(key, v, line, "an integer");
        return n;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(key, v, line, "an integer");
    }
}

bool parse_bool(const std::string& key, const std::string& v, int line) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    bad_value(key, v, line, "on/off");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v, int line) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(static_cast<int>(parse_int(key, item, line)));
    if (out.empty()) bad_value(key, v, line, "a comma-separated list");
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void apply_task(RunConfig& c, const std::string& v, int line) {
    if (v == "denoise-sigma15") {
        c.sigma = 15;
        c.epochs = 51;
    } else if (v == "denoise-sigma25") {
        c.sigma = 25;
        c.epochs = 51;
    } else if (v == "denoise-sigma50") {
        c.sigma = 50;
        c.epochs = 51;
    } else if (v == "motion-deblur") {
        c.epochs = 77; // epoch preset only; synthesized degradation stays gaussian
    } else if (v == "dehaze") {
        c.epochs = 5;
    } else if (v == "derain") {
        c.epochs = 8;
    } else if (v == "defocus-deblur") {
        c.epochs = 208;
    } else {
        bad_value("task", v, line, "a known task preset");
    }
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value, int line) {
    if (key == "task") apply_task(c, value, line);
    else if (key == "sigma") c.sigma = parse_real(key, value, line);
    else if (key == "epochs") c.epochs = static_cast<int>(parse_int(key, value, line));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value, line));
    else if (key == "levels") c.levels = static_cast<int>(parse_int(key, value, line));
    else if (key == "channels") c.channels = parse_int_list(key, value, line);
    else if (key == "blocks") c.blocks = static_cast<int>(parse_int(key, value, line));
    else if (key == "kernel") c.kernel = static_cast<int>(parse_int(key, value, line));
    else if (key == "timesteps") c.timesteps = static_cast<int>(parse_int(key, value, line));
    else if (key == "beta") c.beta = static_cast<float>(parse_real(key, value, line));
    else if (key == "v_th") c.v_th = static_cast<float>(parse_real(key, value, line));
    else if (key == "reset") c.reset = value;
    else if (key == "surrogate_alpha") c.surrogate_alpha = static_cast<float>(parse_real(key, value, line));
    else if (key == "attention") c.attention = parse_bool(key, value, line);
    else if (key == "gamma") c.gamma = static_cast<float>(parse_real(key, value, line));
    else if (key == "lambda") c.lambda = static_cast<float>(parse_real(key, value, line));
    else if (key == "kd") c.kd = value;
    else if (key == "kd_sum") c.kd_sum = parse_bool(key, value, line);
    else if (key == "teacher_checkpoint") c.teacher_checkpoint = value;
    else if (key == "lr_max") c.lr_max = static_cast<float>(parse_real(key, value, line));
    else if (key == "lr_min") c.lr_min = static_cast<float>(parse_real(key, value, line));
    else if (key == "weight_decay") c.weight_decay = static_cast<float>(parse_real(key, value, line));
    else if (key == "batch") c.batch = static_cast<int>(parse_int(key, value, line));
    else if (key == "patch") c.patch = static_cast<int>(parse_int(key, value, line));
    else if (key == "patches_per_image") c.patches_per_image = static_cast<int>(parse_int(key, value, line));
    else if (key == "augment") c.augment = parse_bool(key, value, line);
    else if (key == "train_manifest") c.train_manifest = value;
    else if (key == "val_manifest") c.val_manifest = value;
    else if (key == "out") c.out_dir = value;
    else throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
}

} // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::stringstream ss(text);
    std::string raw;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::string s = trim(raw);
        if (s.empty()) continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line) + ": expected 'key = value'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line) + ": empty key");
        apply_key(c, key, value, line);
    }
    // sanity on ranges the ops cannot check themselves
    if (c.kd != "all" && c.kd != "mid" && c.kd != "decoder" && c.kd != "none")
        throw ConfigError("kd must be all|mid|decoder|none, got '" + c.kd + "'");
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.batch < 1) throw ConfigError("batch must be >= 1");
    if (c.patch < 1) throw ConfigError("patch must be >= 1");
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

namespace {

std::string channels_str(const std::vector<int>& ch) {
    std::string s;
    for (std::size_t i = 0; i < ch.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(ch[i]);
    }
    return s;
}

} // namespace

std::string config_echo(const RunConfig& c) {
    std::ostringstream os;
    os << "sigma = " << c.sigma << "\n";
    os << "epochs = " << c.epochs << "\n";
    os << "seed = " << c.seed << "\n";
    os << "levels = " << c.levels << "\n";
    os << "channels = " << channels_str(c.channels) << "\n";
    os << "blocks = " << c.blocks << "\n";
    os << "kernel = " << c.kernel << "\n";
    os << "timesteps = " << c.timesteps << "\n";
    os << "beta = " << c.beta << "\n";
    os << "v_th = " << c.v_th << "\n";
    os << "reset = " << c.reset << "\n";
    os << "surrogate_alpha = " << c.surrogate_alpha << "\n";
    os << "attention = " << (c.attention ? "on" : "off") << "\n";
    os << "gamma = " << c.gamma << "\n";
    os << "lambda = " << c.lambda << "\n";
    os << "kd = " << c.kd << "\n";
    os << "kd_sum = " << (c.kd_sum ? "on" : "off") << "\n";
    os << "lr_max = " << c.lr_max << "\n";
    os << "lr_min = " << c.lr_min << "\n";
    os << "weight_decay = " << c.weight_decay << "\n";
    os << "batch = " << c.batch << "\n";
    os << "patch = " << c.patch << "\n";
    os << "patches_per_image = " << c.patches_per_image << "\n";
    os << "augment = " << (c.augment ? "on" : "off") << "\n";
    return os.str();
}

std::string model_echo(const RunConfig& c, bool spiking, int image_channels) {
    std::ostringstream os;
    os << "model = " << (spiking ? "student" : "teacher") << "\n";
    os << "levels = " << c.levels << "\n";
    os << "channels = " << channels_str(c.channels) << "\n";
    os << "blocks = " << c.blocks << "\n";
    os << "kernel = " << c.kernel << "\n";
    os << "image_channels = " << image_channels << "\n";
    if (spiking) {
        os << "timesteps = " << c.timesteps << "\n";
        os << "beta = " << c.beta << "\n";
        os << "v_th = " << c.v_th << "\n";
        os << "reset = " << c.reset << "\n";
        os << "surrogate_alpha = " << c.surrogate_alpha << "\n";
        os << "attention = " << (c.attention ? "on" : "off") << "\n";
    }
    return os.str();
}

ModelGraph graph_from_echo(const std::string& echo) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(echo);
    std::string raw;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty()) continue;
        auto eq = s.find('=');
        if (eq == std::string::npos) continue;
        kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw CheckpointError("checkpoint echo missing key '" + key + "'");
        return it->second;
    };
    const std::string model = need("model");
    const int image_channels = static_cast<int>(parse_int("image_channels", need("image_channels"), 0));
    RunConfig c;
    c.levels = static_cast<int>(parse_int("levels", need("levels"), 0));
    c.channels = parse_int_list("channels", need("channels"), 0);
    c.blocks = static_cast<int>(parse_int("blocks", need("blocks"), 0));
    c.kernel = static_cast<int>(parse_int("kernel", need("kernel"), 0));
    if (model == "teacher") return build_teacher(c.teacher_config(image_channels), 0);
    if (model != "student") throw CheckpointError("checkpoint echo has unknown model '" + model + "'");
    c.timesteps = static_cast<int>(parse_int("timesteps", need("timesteps"), 0));
    c.beta = static_cast<float>(parse_real("beta", need("beta"), 0));
    c.v_th = static_cast<float>(parse_real("v_th", need("v_th"), 0));
    c.reset = need("reset");
    c.surrogate_alpha = static_cast<float>(parse_real("surrogate_alpha", need("surrogate_alpha"), 0));
    c.attention = parse_bool("attention", need("attention"), 0);
    return build_student(c.student_config(image_channels), 0);
}

} // namespace spikeir
