#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "deltaseg/png_io.hpp"
#include "deltaseg/tensor.hpp"

namespace deltaseg {

// One image/mask pair. image is [3,H,W] with values in [0,1]; label holds one
// class index per pixel with n == 1.
struct Sample {
    TensorPtr image;
    LabelMap label;
    std::string id;
};

struct DatasetManifest {
    std::string root;
    std::string split;
    std::vector<std::string> class_names;           // index 0 = background
    std::vector<std::int64_t> class_pixel_counts;   // per class, post-resize
    int input_h = 0;
    int input_w = 0;
    std::vector<std::string> ids;
};

// Probabilities and magnitudes of the augmentation pipeline. Geometric ops
// apply identically to image (bilinear) and mask (nearest); photometric ops
// touch the image only. Output size never changes.
struct AugmentConfig {
    double p_hflip = 0.5;
    double p_vflip = 0.5;
    double p_rot90 = 0.5;    // 90/180/270; quarter turns only on square samples
    double p_affine = 0.5;   // small-angle rotation
    double p_crop = 0.5;     // random resized crop
    double p_photo = 0.5;    // brightness/contrast
    double p_blur = 0.5;
    double p_noise = 0.5;
    double max_affine_deg = 15.0;
    double brightness_lo = 0.8, brightness_hi = 1.2;
    double contrast_lo = 0.8, contrast_hi = 1.2;
    double blur_sigma_max = 1.5;
    double noise_sigma_max = 0.03;
    double crop_scale_lo = 0.7;

    static AugmentConfig disabled();  // every probability zero
};

// Fully determined by (sample, cfg, seed).
Sample augment(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed);

// Expects <root>/<split>/images/<id>.png paired with <root>/<split>/masks/<id>.png
// and an optional <root>/classes.txt (one name per line, line 0 = background).
// Images are resized bilinearly to input_size, masks with nearest-neighbour.
std::pair<DatasetManifest, std::vector<Sample>> load_dataset(const std::string& root, const std::string& split,
                                                             int num_classes, int input_h, int input_w);

// Textured background plus per-class geometric defects: thin polylines
// (crack-like), filled blobs (spalling-like) and scattered speckle
// (corrosion-like), cycling with distinct colours when classes outnumber the
// shape kinds. Every defect class covers at least 0.5% of each sample.
std::vector<Sample> make_synthetic_dataset(int n, int num_classes, int size, std::uint64_t seed);

// Writes train/val/test splits in the load_dataset layout plus classes.txt and
// palette.txt sidecars.
void write_synthetic_dataset(const std::string& root, int n_train, int n_val, int n_test, int num_classes,
                             int size, std::uint64_t seed);

// Deterministic display palette; index 0 is black.
std::array<std::uint8_t, 3> class_color(int index);
void write_palette(const std::string& path, int num_classes);
std::vector<std::array<std::uint8_t, 3>> read_palette(const std::string& path);

struct Batch {
    TensorPtr images;          // [N,3,H,W]
    LabelMap labels;           // [N,H,W]
    std::vector<int> indices;  // source sample positions
};

// Seeded shuffle (salted by epoch), final partial batch included. Per-sample
// augmentation seeds derive from (shuffle_seed, epoch, sample index).
std::vector<Batch> make_batches(const std::vector<Sample>& samples, int batch_size, std::uint64_t shuffle_seed,
                                std::uint64_t epoch, const AugmentConfig* aug);

// conversions
TensorPtr image_to_tensor(const Image8& img);             // [3,H,W], values/255
Image8 tensor_to_image(const TensorPtr& t);               // clamps to [0,1]
LabelMap mask_to_labels(const Image8& mask);              // gray index PNG, n=1
Image8 labels_to_mask(const LabelMap& labels, int n = 0);
LabelMap resize_labels_nearest(const LabelMap& labels, int out_h, int out_w);

// stateless seed mixing for derived RNG streams
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace deltaseg
