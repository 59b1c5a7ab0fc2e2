#include "deltaseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "deltaseg/ops.hpp"

namespace fs = std::filesystem;

namespace deltaseg {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    // splitmix64 finalizer over a simple combine
    std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1) + 0xBF58476D1CE4E5B9ull * (c + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

AugmentConfig AugmentConfig::disabled() {
    AugmentConfig c;
    c.p_hflip = c.p_vflip = c.p_rot90 = c.p_affine = c.p_crop = c.p_photo = c.p_blur = c.p_noise = 0.0;
    return c;
}

TensorPtr image_to_tensor(const Image8& img) {
    auto t = Tensor::create({3, img.height, img.width});
    const float inv = 1.0f / 255.0f;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const std::uint8_t v = img.channels == 1 ? img.at(y, x, 0) : img.at(y, x, c);
                t->data[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] = v * inv;
            }
    return t;
}

Image8 tensor_to_image(const TensorPtr& t) {
    if (t->rank() != 3 || t->dim(0) != 3)
        throw std::invalid_argument("tensor_to_image: expected [3,H,W], got " + shape_str(t->shape));
    Image8 img;
    img.height = t->dim(1);
    img.width = t->dim(2);
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = t->data[(static_cast<std::size_t>(c) * img.height + y) * img.width + x];
                v = std::clamp(v, 0.0f, 1.0f);
                img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    return img;
}

LabelMap mask_to_labels(const Image8& mask) {
    LabelMap out(1, mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) out.at(0, y, x) = mask.at(y, x, 0);
    return out;
}

Image8 labels_to_mask(const LabelMap& labels, int n) {
    Image8 img;
    img.height = labels.h;
    img.width = labels.w;
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(labels.h) * labels.w);
    for (int y = 0; y < labels.h; ++y)
        for (int x = 0; x < labels.w; ++x)
            img.at(y, x, 0) = static_cast<std::uint8_t>(labels.at(n, y, x));
    return img;
}

LabelMap resize_labels_nearest(const LabelMap& labels, int out_h, int out_w) {
    LabelMap out(labels.n, out_h, out_w);
    for (int n = 0; n < labels.n; ++n)
        for (int y = 0; y < out_h; ++y) {
            // same half-pixel grid as the bilinear path, snapped to nearest
            int sy = static_cast<int>((y + 0.5) * labels.h / out_h);
            sy = std::clamp(sy, 0, labels.h - 1);
            for (int x = 0; x < out_w; ++x) {
                int sx = static_cast<int>((x + 0.5) * labels.w / out_w);
                sx = std::clamp(sx, 0, labels.w - 1);
                out.at(n, y, x) = labels.at(n, sy, sx);
            }
        }
    return out;
}

std::array<std::uint8_t, 3> class_color(int index) {
    static const std::array<std::array<std::uint8_t, 3>, 16> table = {{{0, 0, 0},
                                                                       {220, 40, 40},
                                                                       {40, 200, 60},
                                                                       {50, 90, 230},
                                                                       {230, 200, 40},
                                                                       {180, 60, 200},
                                                                       {40, 200, 200},
                                                                       {240, 130, 40},
                                                                       {130, 220, 130},
                                                                       {160, 110, 60},
                                                                       {230, 120, 180},
                                                                       {100, 100, 240},
                                                                       {90, 160, 40},
                                                                       {200, 40, 100},
                                                                       {60, 130, 130},
                                                                       {150, 150, 150}}};
    if (index <= 0) return table[0];
    return table[static_cast<std::size_t>(1 + (index - 1) % 15)];
}

void write_palette(const std::string& path, int num_classes) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write palette: " + path);
    for (int c = 0; c < num_classes; ++c) {
        const auto col = class_color(c);
        f << c << " " << static_cast<int>(col[0]) << " " << static_cast<int>(col[1]) << " "
          << static_cast<int>(col[2]) << "\n";
    }
}

std::vector<std::array<std::uint8_t, 3>> read_palette(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read palette: " + path);
    std::vector<std::array<std::uint8_t, 3>> out;
    int idx, r, g, b;
    while (f >> idx >> r >> g >> b) {
        if (idx != static_cast<int>(out.size()))
            throw std::runtime_error("palette indices must be consecutive from 0: " + path);
        out.push_back({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)});
    }
    if (out.empty()) throw std::runtime_error("empty palette: " + path);
    return out;
}

// ---------------------------------------------------------------------------
// augmentation

namespace {

void flip_h(Sample& s) {
    const int h = s.label.h, w = s.label.w;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y) {
            float* row = s.image->data.data() + (static_cast<std::size_t>(c) * h + y) * w;
            std::reverse(row, row + w);
        }
    for (int y = 0; y < h; ++y) {
        auto* row = s.label.v.data() + static_cast<std::size_t>(y) * w;
        std::reverse(row, row + w);
    }
}

void flip_v(Sample& s) {
    const int h = s.label.h, w = s.label.w;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h / 2; ++y) {
            float* a = s.image->data.data() + (static_cast<std::size_t>(c) * h + y) * w;
            float* b = s.image->data.data() + (static_cast<std::size_t>(c) * h + (h - 1 - y)) * w;
            std::swap_ranges(a, a + w, b);
        }
    for (int y = 0; y < h / 2; ++y) {
        auto* a = s.label.v.data() + static_cast<std::size_t>(y) * w;
        auto* b = s.label.v.data() + static_cast<std::size_t>(h - 1 - y) * w;
        std::swap_ranges(a, a + w, b);
    }
}

// quarter turn clockwise; square inputs only
void rot90_cw(Sample& s) {
    const int h = s.label.h, w = s.label.w;
    auto img = Tensor::create({3, w, h});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img->data[(static_cast<std::size_t>(c) * w + x) * h + (h - 1 - y)] =
                    s.image->data[(static_cast<std::size_t>(c) * h + y) * w + x];
    LabelMap lab(1, w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) lab.at(0, x, h - 1 - y) = s.label.at(0, y, x);
    s.image = img;
    s.label = lab;
}

float sample_bilinear_clamped(const float* plane, int h, int w, double sy, double sx) {
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
    const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = sy - y0, fx = sx - x0;
    const double top = plane[y0 * w + x0] * (1 - fx) + plane[y0 * w + x1] * fx;
    const double bot = plane[y1 * w + x0] * (1 - fx) + plane[y1 * w + x1] * fx;
    return static_cast<float>(top * (1 - fy) + bot * fy);
}

void rotate_small(Sample& s, double deg) {
    const int h = s.label.h, w = s.label.w;
    const double rad = deg * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    auto img = Tensor::create({3, h, w});
    LabelMap lab(1, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            // inverse map: rotate output coordinates back into the source
            const double dy = y - cy, dx = x - cx;
            const double sy = cy + dy * cs - dx * sn;
            const double sx = cx + dy * sn + dx * cs;
            for (int c = 0; c < 3; ++c)
                img->data[(static_cast<std::size_t>(c) * h + y) * w + x] = sample_bilinear_clamped(
                    s.image->data.data() + static_cast<std::size_t>(c) * h * w, h, w, sy, sx);
            const int ny = std::clamp(static_cast<int>(std::lround(sy)), 0, h - 1);
            const int nx = std::clamp(static_cast<int>(std::lround(sx)), 0, w - 1);
            lab.at(0, y, x) = s.label.at(0, ny, nx);
        }
    s.image = img;
    s.label = lab;
}

void resized_crop(Sample& s, double scale, double oy01, double ox01) {
    const int h = s.label.h, w = s.label.w;
    const int ch = std::max(1, static_cast<int>(std::lround(h * scale)));
    const int cw = std::max(1, static_cast<int>(std::lround(w * scale)));
    const int oy = static_cast<int>(std::lround(oy01 * (h - ch)));
    const int ox = static_cast<int>(std::lround(ox01 * (w - cw)));

    auto crop_img = Tensor::create({1, 3, ch, cw});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x)
                crop_img->data[((static_cast<std::size_t>(c)) * ch + y) * cw + x] =
                    s.image->data[(static_cast<std::size_t>(c) * h + (oy + y)) * w + (ox + x)];
    auto up = resize_bilinear(crop_img, h, w);
    s.image = reshape(up, {3, h, w});

    LabelMap crop_lab(1, ch, cw);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) crop_lab.at(0, y, x) = s.label.at(0, oy + y, ox + x);
    s.label = resize_labels_nearest(crop_lab, h, w);
}

void photometric(Sample& s, double contrast, double brightness) {
    for (auto& v : s.image->data)
        v = std::clamp(static_cast<float>(((v - 0.5) * contrast + 0.5) * brightness), 0.0f, 1.0f);
}

void gaussian_blur(Sample& s, double sigma) {
    const int h = s.label.h, w = s.label.w;
    const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
    std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
    float ksum = 0.0f;
    for (int i = -radius; i <= radius; ++i) {
        const float v = static_cast<float>(std::exp(-0.5 * (i * i) / (sigma * sigma)));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        ksum += v;
    }
    for (auto& v : kernel) v /= ksum;

    std::vector<float> tmp(static_cast<std::size_t>(h) * w);
    for (int c = 0; c < 3; ++c) {
        float* plane = s.image->data.data() + static_cast<std::size_t>(c) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] * plane[y * w + std::clamp(x + i, 0, w - 1)];
                tmp[static_cast<std::size_t>(y) * w + x] = acc;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
                plane[y * w + x] = acc;
            }
    }
}

void add_noise(Sample& s, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& v : s.image->data) v = std::clamp(static_cast<float>(v + n(rng)), 0.0f, 1.0f);
}

}  // namespace

Sample augment(const Sample& s, const AugmentConfig& cfg, std::uint64_t seed) {
    Sample out;
    out.id = s.id;
    out.image = s.image->detach();
    out.label = s.label;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    if (uni(rng) < cfg.p_hflip) flip_h(out);
    if (uni(rng) < cfg.p_vflip) flip_v(out);
    if (uni(rng) < cfg.p_rot90) {
        const int k = 1 + static_cast<int>(uni(rng) * 3.0);  // 1..3 quarter turns
        if (out.label.h == out.label.w) {
            for (int i = 0; i < k; ++i) rot90_cw(out);
        } else {
            // non-square samples only admit the half turn
            rot90_cw(out);
            rot90_cw(out);
        }
    }
    if (uni(rng) < cfg.p_affine) {
        const double deg = (uni(rng) * 2.0 - 1.0) * cfg.max_affine_deg;
        rotate_small(out, deg);
    }
    if (uni(rng) < cfg.p_crop) {
        const double scale = cfg.crop_scale_lo + uni(rng) * (1.0 - cfg.crop_scale_lo);
        const double oy = uni(rng), ox = uni(rng);
        resized_crop(out, scale, oy, ox);
    }
    if (uni(rng) < cfg.p_photo) {
        const double contrast = cfg.contrast_lo + uni(rng) * (cfg.contrast_hi - cfg.contrast_lo);
        const double brightness = cfg.brightness_lo + uni(rng) * (cfg.brightness_hi - cfg.brightness_lo);
        photometric(out, contrast, brightness);
    }
    if (uni(rng) < cfg.p_blur) {
        const double sigma = uni(rng) * cfg.blur_sigma_max;
        if (sigma > 1e-3) gaussian_blur(out, sigma);
    }
    if (uni(rng) < cfg.p_noise) {
        const double sigma = uni(rng) * cfg.noise_sigma_max;
        if (sigma > 0.0) add_noise(out, sigma, rng);
    }
    return out;
}

// ---------------------------------------------------------------------------
// dataset loading

std::pair<DatasetManifest, std::vector<Sample>> load_dataset(const std::string& root, const std::string& split,
                                                             int num_classes, int input_h, int input_w) {
    const fs::path images_dir = fs::path(root) / split / "images";
    const fs::path masks_dir = fs::path(root) / split / "masks";
    if (!fs::is_directory(images_dir))
        throw std::runtime_error("no samples found: missing directory " + images_dir.string());

    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(images_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw std::runtime_error("no samples found in " + images_dir.string());

    DatasetManifest mf;
    mf.root = root;
    mf.split = split;
    mf.input_h = input_h;
    mf.input_w = input_w;
    mf.class_pixel_counts.assign(static_cast<std::size_t>(num_classes), 0);
    mf.ids = ids;

    const fs::path classes_file = fs::path(root) / "classes.txt";
    if (fs::exists(classes_file)) {
        std::ifstream f(classes_file);
        std::string line;
        while (std::getline(f, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (!line.empty()) mf.class_names.push_back(line);
        }
    }
    if (static_cast<int>(mf.class_names.size()) != num_classes) {
        mf.class_names.clear();
        mf.class_names.push_back("background");
        for (int c = 1; c < num_classes; ++c) mf.class_names.push_back("class_" + std::to_string(c));
    }

    std::vector<Sample> samples;
    samples.reserve(ids.size());
    for (const auto& id : ids) {
        const fs::path mask_path = masks_dir / (id + ".png");
        if (!fs::exists(mask_path)) throw std::runtime_error("image without matching mask: " + id);

        Image8 img = read_png((images_dir / (id + ".png")).string());
        Image8 msk = read_png(mask_path.string());
        if (msk.channels != 1) throw std::runtime_error("mask must be a single-channel index PNG: " + id);

        Sample s;
        s.id = id;
        auto t = image_to_tensor(img);
        if (img.height != input_h || img.width != input_w) {
            auto r = resize_bilinear(reshape(t, {1, 3, img.height, img.width}), input_h, input_w);
            t = reshape(r, {3, input_h, input_w});
        }
        s.image = t;
        LabelMap lab = mask_to_labels(msk);
        if (lab.h != input_h || lab.w != input_w) lab = resize_labels_nearest(lab, input_h, input_w);
        for (std::int64_t i = 0; i < lab.numel(); ++i) {
            const std::int32_t y = lab.v[static_cast<std::size_t>(i)];
            if (y < 0 || y >= num_classes)
                throw std::runtime_error("sample " + id + " has label " + std::to_string(y) + " outside [0," +
                                         std::to_string(num_classes) + ")");
            ++mf.class_pixel_counts[static_cast<std::size_t>(y)];
        }
        s.label = std::move(lab);
        samples.push_back(std::move(s));
    }
    return {mf, samples};
}

// ---------------------------------------------------------------------------
// synthetic data

namespace {

struct Painter {
    int size;
    LabelMap& lab;
    std::int64_t placed = 0;

    // paints only over background so earlier classes keep their coverage
    void dot(int y, int x, int radius, std::int32_t cls) {
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                if (dy * dy + dx * dx > radius * radius) continue;
                const int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= size || xx < 0 || xx >= size) continue;
                if (lab.at(0, yy, xx) != 0) continue;
                lab.at(0, yy, xx) = cls;
                ++placed;
            }
    }
};

void draw_polyline(LabelMap& lab, int size, std::int32_t cls, std::mt19937_64& rng, std::int64_t min_px,
                   std::int64_t max_px) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Painter p{size, lab};
    int guard = 0;
    while (p.placed < min_px && ++guard < 64) {
        double y = uni(rng) * (size - 1), x = uni(rng) * (size - 1);
        double dir = uni(rng) * 2.0 * 3.14159265358979323846;
        const int steps = size + size / 2;
        for (int i = 0; i < steps && p.placed < max_px; ++i) {
            p.dot(static_cast<int>(y), static_cast<int>(x), 1, cls);
            dir += (uni(rng) - 0.5) * 0.6;  // meander
            y += std::sin(dir);
            x += std::cos(dir);
            if (y < 1 || y > size - 2 || x < 1 || x > size - 2) break;
        }
    }
}

void draw_blob(LabelMap& lab, int size, std::int32_t cls, std::mt19937_64& rng, std::int64_t min_px) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Painter p{size, lab};
    int guard = 0;
    while (p.placed < min_px && ++guard < 64) {
        const int r = std::max(3, size / 16) + static_cast<int>(uni(rng) * (size / 10));
        const int cy = r + static_cast<int>(uni(rng) * (size - 2 * r));
        const int cx = r + static_cast<int>(uni(rng) * (size - 2 * r));
        const double ey = 0.7 + 0.6 * uni(rng);  // squash one axis
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                if ((dy * dy) * ey + (dx * dx) / ey > r * r) continue;
                const int yy = cy + dy, xx = cx + dx;
                if (yy < 0 || yy >= size || xx < 0 || xx >= size) continue;
                if (lab.at(0, yy, xx) != 0) continue;
                lab.at(0, yy, xx) = cls;
                ++p.placed;
            }
    }
}

void draw_speckle(LabelMap& lab, int size, std::int32_t cls, std::mt19937_64& rng, std::int64_t min_px) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Painter p{size, lab};
    int guard = 0;
    while (p.placed < min_px && ++guard < 4096) {
        const int y = static_cast<int>(uni(rng) * size);
        const int x = static_cast<int>(uni(rng) * size);
        p.dot(y, x, uni(rng) < 0.4 ? 3 : 2, cls);
    }
}

}  // namespace

std::vector<Sample> make_synthetic_dataset(int n, int num_classes, int size, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("synthetic dataset needs num_classes >= 2");
    if (size < 32) throw std::invalid_argument("synthetic dataset needs size >= 32");
    if (n < 1) throw std::invalid_argument("synthetic dataset needs n >= 1");

    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    const std::int64_t total_px = static_cast<std::int64_t>(size) * size;
    // target ~1.6% coverage per class; the guaranteed floor is 0.5% and the
    // crack-like polylines stay capped at 5%
    const std::int64_t min_px = std::max<std::int64_t>(1, total_px / 64);
    const std::int64_t polyline_cap = total_px / 20;

    for (int i = 0; i < n; ++i) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        std::uniform_real_distribution<double> uni(0.0, 1.0);

        Sample s;
        s.id = "synth_" + std::to_string(i);
        s.label = LabelMap(1, size, size);

        for (int c = 1; c < num_classes; ++c) {
            switch ((c - 1) % 3) {
                case 0: draw_polyline(s.label, size, c, rng, min_px, polyline_cap); break;
                case 1: draw_blob(s.label, size, c, rng, min_px); break;
                default: draw_speckle(s.label, size, c, rng, min_px); break;
            }
        }

        // textured background and per-class colouring
        s.image = Tensor::create({3, size, size});
        const double base = 0.40 + 0.20 * uni(rng);
        const double fy = 1.0 + uni(rng) * 3.0, fx = 1.0 + uni(rng) * 3.0;
        const double phase = uni(rng) * 6.28;
        std::normal_distribution<double> grain(0.0, 0.02);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const std::int32_t cls = s.label.at(0, y, x);
                const double wave =
                    0.05 * std::sin(fy * y * 6.28 / size + phase) * std::cos(fx * x * 6.28 / size);
                for (int c = 0; c < 3; ++c) {
                    double v;
                    if (cls == 0) {
                        v = base + wave + grain(rng) + (c == 1 ? 0.02 : 0.0);
                    } else {
                        const auto col = class_color(cls);
                        v = col[static_cast<std::size_t>(c)] / 255.0 * 0.85 + base * 0.15 + grain(rng);
                    }
                    s.image->data[(static_cast<std::size_t>(c) * size + y) * size + x] =
                        std::clamp(static_cast<float>(v), 0.0f, 1.0f);
                }
            }
        out.push_back(std::move(s));
    }
    return out;
}

void write_synthetic_dataset(const std::string& root, int n_train, int n_val, int n_test, int num_classes,
                             int size, std::uint64_t seed) {
    const struct {
        const char* split;
        int n;
        std::uint64_t salt;
    } splits[] = {{"train", n_train, 0}, {"val", n_val, 1}, {"test", n_test, 2}};

    for (const auto& sp : splits) {
        if (sp.n <= 0) continue;
        const fs::path images = fs::path(root) / sp.split / "images";
        const fs::path masks = fs::path(root) / sp.split / "masks";
        fs::create_directories(images);
        fs::create_directories(masks);
        auto samples = make_synthetic_dataset(sp.n, num_classes, size, mix_seed(seed, sp.salt, 77));
        for (int i = 0; i < sp.n; ++i) {
            const std::string id = std::string("synth_") + sp.split + "_" + std::to_string(i);
            write_png((images / (id + ".png")).string(), tensor_to_image(samples[static_cast<std::size_t>(i)].image));
            write_png((masks / (id + ".png")).string(), labels_to_mask(samples[static_cast<std::size_t>(i)].label));
        }
    }
    std::ofstream cf(fs::path(root) / "classes.txt");
    cf << "background\n";
    const char* kinds[] = {"crack", "spall", "speckle"};
    for (int c = 1; c < num_classes; ++c)
        cf << kinds[(c - 1) % 3] << "_" << c << "\n";
    write_palette((fs::path(root) / "palette.txt").string(), num_classes);
}

// ---------------------------------------------------------------------------
// batching

std::vector<Batch> make_batches(const std::vector<Sample>& samples, int batch_size, std::uint64_t shuffle_seed,
                                std::uint64_t epoch, const AugmentConfig* aug) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (samples.empty()) return {};
    const int H = samples[0].label.h, W = samples[0].label.w;

    std::vector<int> order(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 rng(mix_seed(shuffle_seed, epoch, 0x5eed));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const int n = static_cast<int>(std::min<std::size_t>(batch_size, order.size() - start));
        Batch b;
        b.images = Tensor::create({n, 3, H, W});
        b.labels = LabelMap(n, H, W);
        for (int k = 0; k < n; ++k) {
            const int idx = order[start + static_cast<std::size_t>(k)];
            b.indices.push_back(idx);
            const Sample* src = &samples[static_cast<std::size_t>(idx)];
            Sample augmented;
            if (aug) {
                augmented = augment(*src, *aug, mix_seed(shuffle_seed, epoch, static_cast<std::uint64_t>(idx)));
                src = &augmented;
            }
            std::copy(src->image->data.begin(), src->image->data.end(),
                      b.images->data.begin() + static_cast<std::size_t>(k) * 3 * H * W);
            std::copy(src->label.v.begin(), src->label.v.end(),
                      b.labels.v.begin() + static_cast<std::size_t>(k) * H * W);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace deltaseg
