#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikeir/rng.hpp"
#include "spikeir/tensor.hpp"

namespace spikeir {

// Planar [c][h][w] image with values in [0,1] (8-bit inputs divided by 255).
struct ImageBuffer {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float& at(int c, int h, int w) {
        return values[(static_cast<std::size_t>(c) * height + h) * width + w];
    }
    float at(int c, int h, int w) const {
        return values[(static_cast<std::size_t>(c) * height + h) * width + w];
    }
};

// Binary PGM (P5, 1 channel) or PPM (P6, 3 channels), 8-bit maxval 255.
// Malformed input raises ParseError naming the byte offset.
ImageBuffer load_image(const std::string& path);
void save_image(const std::string& path, const ImageBuffer& img);

struct DegradationSpec {
    double sigma = 15.0; // on the 0..255 scale
    std::uint64_t seed = 0;
};

// out = clamp(img + N(0, sigma/255), 0, 1), deterministic per spec.seed.
ImageBuffer add_gaussian_noise(const ImageBuffer& img, const DegradationSpec& spec);

// Plain-text manifest, one path per line, '#' comments and blank lines
// ignored. Relative paths resolve against the manifest's directory.
std::vector<std::string> read_manifest(const std::string& path);

struct PatchPair {
    Tensor clean; // [1,C,ps,ps]
    Tensor noisy;
};

// Uniform random top-left corners, n patches of size `patch`.
std::vector<PatchPair> sample_patches(const ImageBuffer& clean, const ImageBuffer& noisy, int patch,
                                      int n, Rng& rng);

// Horizontal/vertical flips with p = 0.5 each, applied identically to both
// members of the pair.
void augment_flip(PatchPair& pair, Rng& rng);

Tensor image_to_tensor(const ImageBuffer& img);
ImageBuffer tensor_to_image(const Tensor& t);

// 10*log10(1/MSE) over all elements jointly; capped at 99 dB (zero MSE).
double psnr(const Tensor& a, const Tensor& b);

// Single-scale SSIM: 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// dynamic range 1, averaged over valid window positions and channels.
double ssim(const Tensor& a, const Tensor& b);

} // namespace spikeir
