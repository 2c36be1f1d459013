#include "spikeir/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace spikeir {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::streamoff at, const std::string& why) {
    throw ParseError(path + ": " + why + " (byte " + std::to_string(at) + ")");
}

// One PNM header token; '#' starts a comment running to end of line.
std::string pnm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) parse_fail(path, in.tellg(), "truncated header");
    return tok;
}

int pnm_int(std::istream& in, const std::string& path) {
    std::string tok = pnm_token(in, path);
    for (char c : tok)
        if (!std::isdigit(static_cast<unsigned char>(c)))
            parse_fail(path, in.tellg(), "non-numeric header field '" + tok + "'");
    return std::stoi(tok);
}

} // namespace

ImageBuffer load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string magic = pnm_token(in, path);
    int channels;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        parse_fail(path, 0, "unsupported magic '" + magic + "' (want binary P5/P6)");
    }
    int w = pnm_int(in, path);
    int h = pnm_int(in, path);
    int maxval = pnm_int(in, path);
    if (w < 1 || h < 1) parse_fail(path, in.tellg(), "bad dimensions");
    if (maxval != 255) parse_fail(path, in.tellg(), "maxval must be 255, got " + std::to_string(maxval));

    const std::size_t n = static_cast<std::size_t>(w) * h * channels;
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        parse_fail(path, in.tellg(), "truncated pixel data, expected " + std::to_string(n) + " bytes");

    ImageBuffer img{channels, h, w, std::vector<float>(n)};
    // interleaved bytes -> planar floats
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = static_cast<float>(raw[(static_cast<std::size_t>(y) * w + x) * channels + c]) / 255.0f;
    return img;
}

void save_image(const std::string& path, const ImageBuffer& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ConfigError("save_image supports 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": cannot open for writing");
    out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.width) * img.height * img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                raw[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

ImageBuffer add_gaussian_noise(const ImageBuffer& img, const DegradationSpec& spec) {
    if (!(spec.sigma > 0.0)) throw ConfigError("add_gaussian_noise: sigma must be positive");
    Rng rng(spec.seed);
    ImageBuffer out = img;
    const double s = spec.sigma / 255.0;
    for (auto& v : out.values) {
        double noisy = static_cast<double>(v) + s * rng.normal();
        v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
    return out;
}

std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open manifest");
    const auto dir = std::filesystem::path(path).parent_path();
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        std::size_t start = 0;
        while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
        if (start >= line.size()) continue;
        std::filesystem::path p(line.substr(start));
        out.push_back(p.is_absolute() ? p.string() : (dir / p).string());
    }
    return out;
}

Tensor image_to_tensor(const ImageBuffer& img) {
    Tensor t({1, img.channels, img.height, img.width});
    std::copy(img.values.begin(), img.values.end(), t.values().begin());
    return t;
}

ImageBuffer tensor_to_image(const Tensor& t) {
    if (t.dim(0) != 1) throw DimensionError("tensor_to_image expects [1,C,H,W]");
    ImageBuffer img{t.dim(1), t.dim(2), t.dim(3), std::vector<float>(t.values().begin(), t.values().end())};
    return img;
}

std::vector<PatchPair> sample_patches(const ImageBuffer& clean, const ImageBuffer& noisy, int patch,
                                      int n, Rng& rng) {
    if (clean.height != noisy.height || clean.width != noisy.width || clean.channels != noisy.channels)
        throw DimensionError("sample_patches: clean/noisy size mismatch");
    if (patch > clean.height || patch > clean.width)
        throw ConfigError("sample_patches: patch larger than image");
    std::vector<PatchPair> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int y0 = rng.uniform_int(clean.height - patch + 1);
        const int x0 = rng.uniform_int(clean.width - patch + 1);
        PatchPair p{Tensor({1, clean.channels, patch, patch}), Tensor({1, clean.channels, patch, patch})};
        for (int c = 0; c < clean.channels; ++c)
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x) {
                    p.clean.at(0, c, y, x) = clean.at(c, y0 + y, x0 + x);
                    p.noisy.at(0, c, y, x) = noisy.at(c, y0 + y, x0 + x);
                }
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

void flip_axis(Tensor& t, bool horizontal) {
    const int h = t.dim(2), w = t.dim(3);
    for (int n = 0; n < t.dim(0); ++n)
        for (int c = 0; c < t.dim(1); ++c) {
            if (horizontal) {
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w / 2; ++x) std::swap(t.at(n, c, y, x), t.at(n, c, y, w - 1 - x));
            } else {
                for (int y = 0; y < h / 2; ++y)
                    for (int x = 0; x < w; ++x) std::swap(t.at(n, c, y, x), t.at(n, c, h - 1 - y, x));
            }
        }
}

} // namespace

void augment_flip(PatchPair& pair, Rng& rng) {
    if (rng.coin()) {
        flip_axis(pair.clean, true);
        flip_axis(pair.noisy, true);
    }
    if (rng.coin()) {
        flip_axis(pair.clean, false);
        flip_axis(pair.noisy, false);
    }
}

double psnr(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("psnr: shape mismatch");
    double mse = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("ssim: shape mismatch");
    const int win = 11;
    const int h = a.dim(2), w = a.dim(3);
    if (h < win || w < win) throw ConfigError("ssim: image smaller than the 11x11 window");

    static const std::vector<double> kernel = [] {
        std::vector<double> k(11 * 11);
        const double sigma = 1.5;
        double sum = 0.0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5, dx = x - 5;
                k[static_cast<std::size_t>(y) * 11 + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                sum += k[static_cast<std::size_t>(y) * 11 + x];
            }
        for (auto& v : k) v /= sum;
        return k;
    }();

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03; // (K*L)^2 with L = 1
    double acc = 0.0;
    std::int64_t count = 0;
    for (int n = 0; n < a.dim(0); ++n)
        for (int c = 0; c < a.dim(1); ++c)
            for (int y0 = 0; y0 + win <= h; ++y0)
                for (int x0 = 0; x0 + win <= w; ++x0) {
                    double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                    for (int y = 0; y < win; ++y)
                        for (int x = 0; x < win; ++x) {
                            const double kv = kernel[static_cast<std::size_t>(y) * 11 + x];
                            const double va = a.at(n, c, y0 + y, x0 + x);
                            const double vb = b.at(n, c, y0 + y, x0 + x);
                            mx += kv * va;
                            my += kv * vb;
                            mxx += kv * va * va;
                            myy += kv * vb * vb;
                            mxy += kv * va * vb;
                        }
                    const double vx = mxx - mx * mx;
                    const double vy = myy - my * my;
                    const double cov = mxy - mx * my;
                    acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
                           ((mx * mx + my * my + c1) * (vx + vy + c2));
                    ++count;
                }
    return acc / static_cast<double>(count);
}

} // namespace spikeir
