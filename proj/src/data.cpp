#include "canet/data.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <utility>

#include "canet/errors.hpp"
#include "canet/ops.hpp"

namespace canet {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kGoldenFrac = 0.618033988749895;
constexpr int kNumFamilies = 16;
constexpr int kShapePlacementRetries = 24;
constexpr int kSceneRetries = 10;
constexpr int kSupportSceneRetries = 16;

double frac(double x) { return x - std::floor(x); }

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = frac(h) * 6.0;
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

bool plus_inside(double x, double y) {
    return (std::abs(x) <= 0.32 && std::abs(y) <= 1.0) || (std::abs(y) <= 0.32 && std::abs(x) <= 1.0);
}

// Shape predicates in object coordinates: the unit of length is the sampled
// radius and rotation has already been undone.
bool family_inside(int family, double x, double y) {
    const double r2 = x * x + y * y;
    switch (family) {
        case 0:  // disc
            return r2 <= 1.0;
        case 1:  // ring
            return r2 <= 1.0 && r2 >= 0.25;
        case 2: {  // triangle, apex up
            // Equilateral triangle inscribed in the unit circle; raster y grows
            // downward, so the apex is at (0,-1).
            const double e0 = -y - (-0.5);                       // below the apex-side limit
            const double e1 = 0.866025403784439 * x - 0.5 * y;   // right edge
            const double e2 = -0.866025403784439 * x - 0.5 * y;  // left edge
            return e0 >= -1.0e-12 && e1 <= 0.5 && e2 <= 0.5;
        }
        case 3:  // square
            return std::max(std::abs(x), std::abs(y)) <= 0.78;
        case 4:  // diamond
            return std::abs(x) + std::abs(y) <= 1.05;
        case 5:  // plus
            return plus_inside(x, y);
        case 6: {  // diagonal cross: the plus rotated 45 degrees
            const double u = (x + y) * 0.7071067811865476;
            const double v = (x - y) * 0.7071067811865476;
            return plus_inside(u, v);
        }
        case 7:  // horizontal bar
            return std::abs(y) <= 0.30 && std::abs(x) <= 1.05;
        case 8:  // vertical bar
            return std::abs(x) <= 0.30 && std::abs(y) <= 1.05;
        case 9:  // wide ellipse
            return x * x + (y / 0.48) * (y / 0.48) <= 1.0;
        case 10:  // L: left stem plus bottom bar
            return std::abs(x) <= 0.95 && std::abs(y) <= 0.95 && (x <= -0.25 || y >= 0.25);
        case 11:  // T: top bar plus center stem
            return std::abs(x) <= 0.95 && std::abs(y) <= 0.95 && (y <= -0.35 || std::abs(x) <= 0.30);
        case 12:  // U: two stems plus bottom bar
            return std::abs(x) <= 0.95 && std::abs(y) <= 0.95 && (x <= -0.35 || x >= 0.35 || y >= 0.35);
        case 13: {  // five-lobed star
            const double phi = std::atan2(y, x);
            const double bump = 0.5 + 0.5 * std::cos(5.0 * (phi - 0.5 * kPi));
            const double limit = 0.45 + 0.55 * bump;
            return std::sqrt(r2) <= limit;
        }
        case 14: {  // regular hexagon: intersection of three slabs
            const double p0 = std::abs(x);
            const double p1 = std::abs(0.5 * x + 0.866025403784439 * y);
            const double p2 = std::abs(-0.5 * x + 0.866025403784439 * y);
            return std::max({p0, p1, p2}) <= 0.88;
        }
        default: {  // crescent
            const double dx = x - 0.55;
            return r2 <= 1.0 && dx * dx + y * y >= 0.72 * 0.72;
        }
    }
}

struct Placement {
    double cx = 0.0, cy = 0.0, radius = 0.0, theta = 0.0;
};

// Row-major list of pixels covered by the placed shape, clipped to the frame.
std::vector<int> rasterize(int family, const Placement& pl, int h, int w) {
    std::vector<int> pixels;
    const double margin = pl.radius * 1.6 + 1.0;  // predicates reach slightly past |q|=1
    const int y0 = std::max(0, static_cast<int>(std::floor(pl.cy - margin)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(pl.cy + margin)));
    const int x0 = std::max(0, static_cast<int>(std::floor(pl.cx - margin)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(pl.cx + margin)));
    const double ct = std::cos(pl.theta);
    const double st = std::sin(pl.theta);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = (x + 0.5 - pl.cx) / pl.radius;
            const double dy = (y + 0.5 - pl.cy) / pl.radius;
            const double qx = ct * dx + st * dy;
            const double qy = -st * dx + ct * dy;
            if (family_inside(family, qx, qy)) pixels.push_back(y * w + x);
        }
    }
    return pixels;
}

std::vector<int> sample_distinct(const std::vector<int>& pool, int count, Rng& rng) {
    std::vector<int> scratch = pool;
    std::vector<int> out;
    out.reserve(count);
    for (int i = 0; i < count && i < static_cast<int>(scratch.size()); ++i) {
        const int j = rng.uniform_int(i, static_cast<int>(scratch.size()) - 1);
        std::swap(scratch[i], scratch[j]);
        out.push_back(scratch[i]);
    }
    return out;
}

void shuffle_in_place(std::vector<int>& v, Rng& rng) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, i);
        std::swap(v[i], v[j]);
    }
}

// Weight the masked pooling would see at the feature grid; supports whose
// foreground vanishes under downsampling are rejected at sampling time.
double downsampled_foreground_weight(const BinaryMask& mask) {
    NoGradGuard guard;
    const int fh = std::max(1, mask.h / kFeatureStride);
    const int fw = std::max(1, mask.w / kFeatureStride);
    Tensor m = ops::reshape(mask_to_tensor(mask), {1, mask.h, mask.w});
    Tensor small = ops::bilinear_resize(m, fh, fw);
    double sum = 0.0;
    for (double v : small.data()) sum += v;
    return sum;
}

}  // namespace

Phase parse_phase(const std::string& s) {
    if (s == "train") return Phase::Train;
    if (s == "test") return Phase::Test;
    throw ConfigError("unknown phase '" + s + "' (expected train|test)");
}

std::string phase_name(Phase p) { return p == Phase::Train ? "train" : "test"; }

AnnotationMode parse_annotation_mode(const std::string& s) {
    if (s == "pixel") return AnnotationMode::Pixel;
    if (s == "bbox") return AnnotationMode::Bbox;
    throw ConfigError("unknown annotation mode '" + s + "' (expected pixel|bbox)");
}

std::string annotation_mode_name(AnnotationMode m) { return m == AnnotationMode::Pixel ? "pixel" : "bbox"; }

int num_shape_families() { return kNumFamilies; }

ShapeClass shape_class_for(int class_id) {
    if (class_id < 0) throw ConfigError("class id must be non-negative");
    ShapeClass c;
    c.id = class_id;
    c.family = class_id % kNumFamilies;
    c.hue = frac(kGoldenFrac * (class_id + 1));
    return c;
}

ClassSplit ClassSplit::make(const DatasetConfig& cfg) {
    if (cfg.num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
    if (cfg.num_splits < 2 || cfg.num_splits > cfg.num_classes)
        throw ConfigError("dataset.num_splits must be in [2, num_classes]");
    if (cfg.test_split_index < 0 || cfg.test_split_index >= cfg.num_splits)
        throw ConfigError("dataset.test_split_index out of range");
    ClassSplit split;
    split.num_splits = cfg.num_splits;
    split.test_split_index = cfg.test_split_index;
    for (int c = 0; c < cfg.num_classes; ++c) {
        // Contiguous blocks: split j owns [j*n/S, (j+1)*n/S).
        const int owner = static_cast<int>((static_cast<long>(c) * cfg.num_splits) / cfg.num_classes);
        if (owner == cfg.test_split_index)
            split.test_classes.push_back(c);
        else
            split.train_classes.push_back(c);
    }
    if (split.train_classes.empty() || split.test_classes.empty())
        throw ConfigError("class split produced an empty phase");
    return split;
}

Scene generate_scene(const std::vector<int>& classes_present, int h, int w, const DatasetConfig& cfg, Rng& rng) {
    if (classes_present.empty()) throw ConfigError("generate_scene needs at least one class");
    if (h < 16 || w < 16) throw ConfigError("scene size must be at least 16x16");
    const double min_dim = static_cast<double>(std::min(h, w));
    const double r_min = std::max(3.0, 0.09 * min_dim);
    const double r_max = 0.30 * min_dim;
    const long max_area = static_cast<long>(cfg.max_object_area_frac * h * w);

    for (int attempt = 0; attempt < kSceneRetries; ++attempt) {
        Scene scene;
        scene.image = Tensor::zeros({3, h, w});
        scene.owner.assign(static_cast<std::size_t>(h) * w, -1);
        std::vector<double>& img = scene.image.raw_data();
        const std::size_t plane = static_cast<std::size_t>(h) * w;

        // Tinted, per-pixel-jittered background. The value band overlaps the
        // dim end of the object band so figure/ground is not separable on
        // brightness alone.
        const double bg_hue = rng.uniform();
        const double bg_sat = rng.uniform(0.0, 0.25);
        const double bg_val = rng.uniform(0.10, 0.38);
        double bg_rgb[3];
        hsv_to_rgb(bg_hue, bg_sat, bg_val, bg_rgb);
        for (std::size_t p = 0; p < plane; ++p) {
            const double jitter = rng.uniform(-0.08, 0.08);
            for (int c = 0; c < 3; ++c) img[c * plane + p] = std::clamp(bg_rgb[c] + jitter, 0.0, 1.0);
        }

        auto place_shape = [&](int family, Placement& out_pl) {
            std::vector<int> pixels;
            for (int t = 0; t < kShapePlacementRetries; ++t) {
                Placement pl;
                pl.cx = rng.uniform(0.12, 0.88) * w;
                pl.cy = rng.uniform(0.12, 0.88) * h;
                pl.radius = rng.uniform(r_min, r_max);
                pl.theta = rng.uniform(-0.35, 0.35);
                pixels = rasterize(family, pl, h, w);
                const long area = static_cast<long>(pixels.size());
                if (area >= cfg.min_object_area && area <= max_area) {
                    out_pl = pl;
                    return pixels;
                }
            }
            pixels.clear();
            return pixels;
        };
        // Objects are two-toned: most of the shape wears the class color, but
        // the band past a chord in a random direction is tinted a few hue
        // steps away — about a neighbouring class's color. Color alone cannot
        // claim that band for the object; it reads as foreign unless tied to
        // the confidently-matched majority side it is attached to.
        auto paint = [&](const std::vector<int>& pixels, const Placement& pl, double base_hue, double sat,
                         double val) {
            const double grad_phi = rng.uniform(0.0, 2.0 * kPi);
            const double grad_amp = rng.uniform(0.10, 0.16);
            const double grad_side = rng.uniform() < 0.5 ? -1.0 : 1.0;
            const double gx = std::cos(grad_phi), gy = std::sin(grad_phi);
            for (int p : pixels) {
                const double dx = (p % w + 0.5 - pl.cx) / pl.radius;
                const double dy = (p / w + 0.5 - pl.cy) / pl.radius;
                const double drift = (dx * gx + dy * gy >= 0.25) ? grad_side * grad_amp : 0.0;
                double rgb[3];
                hsv_to_rgb(frac(base_hue + drift), sat, val, rgb);
                for (int c = 0; c < 3; ++c) {
                    const double jitter = rng.uniform(-0.04, 0.04);
                    img[c * plane + p] = std::clamp(rgb[c] + jitter, 0.0, 1.0);
                }
            }
        };

        for (int class_id : classes_present) {
            const ShapeClass sc = shape_class_for(class_id);
            Placement pl;
            const std::vector<int> pixels = place_shape(sc.family, pl);
            if (pixels.empty())
                throw GenerationError("could not place class " + std::to_string(class_id) +
                                      " within the configured area bounds");
            // Hue jitter is wide enough that neighbouring class hues overlap;
            // color alone does not identify a class, the shape has to weigh in.
            const double hue = sc.hue + rng.uniform(-0.09, 0.09);
            paint(pixels, pl, hue, rng.uniform(0.40, 0.90), rng.uniform(0.40, 0.90));
            for (int p : pixels) scene.owner[static_cast<std::size_t>(p)] = class_id;
        }

        for (std::size_t i = 0; i < plane * 3; ++i)
            img[i] = std::clamp(img[i] + rng.normal(0.0, cfg.noise), 0.0, 1.0);

        bool all_visible = true;
        for (int class_id : classes_present) {
            BinaryMask m(h, w);
            long count = 0;
            for (std::size_t p = 0; p < plane; ++p) {
                if (scene.owner[p] == class_id) {
                    m.v[p] = 1;
                    ++count;
                }
            }
            if (count == 0) {
                all_visible = false;
                break;
            }
            scene.masks.emplace(class_id, std::move(m));
        }
        if (all_visible) return scene;
    }
    throw GenerationError("scene generation failed: a class stayed fully occluded after retries");
}

Episode sample_episode(const ClassSplit& split, Phase phase, int k, int size, const DatasetConfig& cfg, Rng& rng) {
    if (k < 1) throw ConfigError("episode k must be >= 1");
    const std::vector<int>& pool = split.classes(phase);
    if (pool.empty()) throw ConfigError("phase '" + phase_name(phase) + "' has no classes");

    Episode ep;
    ep.k = k;
    ep.class_id = pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)];

    std::vector<int> others;
    for (int c : pool)
        if (c != ep.class_id) others.push_back(c);

    auto draw_scene = [&]() {
        const int max_extra = std::min(cfg.max_classes_per_scene - 1, static_cast<int>(others.size()));
        const int n_extra = max_extra > 0 ? rng.uniform_int(0, max_extra) : 0;
        std::vector<int> classes{ep.class_id};
        for (int c : sample_distinct(others, n_extra, rng)) classes.push_back(c);
        shuffle_in_place(classes, rng);
        return generate_scene(classes, size, size, cfg, rng);
    };

    for (int s = 0; s < k; ++s) {
        bool accepted = false;
        for (int t = 0; t < kSupportSceneRetries && !accepted; ++t) {
            Scene scene = draw_scene();
            BinaryMask mask = scene.masks.at(ep.class_id);
            // The visible sliver must survive the feature-grid downsampling or
            // masked pooling would see zero weight.
            if (downsampled_foreground_weight(mask) >= kMinForegroundWeight) {
                ep.support.push_back(SupportExample{scene.image, std::move(mask)});
                accepted = true;
            }
        }
        if (!accepted)
            throw GenerationError("support sampling failed: foreground vanished under downsampling repeatedly");
    }

    Scene query = draw_scene();
    ep.query_image = query.image;
    ep.query_mask = query.masks.at(ep.class_id);
    return ep;
}

BinaryMask mask_to_bbox_mask(const BinaryMask& mask, Rng& rng) {
    if (mask.count_foreground() == 0) throw EmptyForegroundError("cannot take bbox of an empty mask");
    const int h = mask.h, w = mask.w;
    std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
    struct Box {
        int y0, y1, x0, x1;
    };
    std::vector<Box> boxes;
    std::deque<int> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            if (!mask.v[p] || label[p] >= 0) continue;
            const int id = static_cast<int>(boxes.size());
            boxes.push_back(Box{y, y, x, x});
            label[p] = id;
            queue.push_back(static_cast<int>(p));
            while (!queue.empty()) {
                const int q = queue.front();
                queue.pop_front();
                const int qy = q / w, qx = q % w;
                Box& b = boxes[id];
                b.y0 = std::min(b.y0, qy);
                b.y1 = std::max(b.y1, qy);
                b.x0 = std::min(b.x0, qx);
                b.x1 = std::max(b.x1, qx);
                const int ny[4] = {qy - 1, qy + 1, qy, qy};
                const int nx[4] = {qx, qx, qx - 1, qx + 1};
                for (int n = 0; n < 4; ++n) {
                    if (ny[n] < 0 || ny[n] >= h || nx[n] < 0 || nx[n] >= w) continue;
                    const std::size_t np = static_cast<std::size_t>(ny[n]) * w + nx[n];
                    if (mask.v[np] && label[np] < 0) {
                        label[np] = id;
                        queue.push_back(static_cast<int>(np));
                    }
                }
            }
        }
    }
    const Box& b = boxes[rng.uniform_int(0, static_cast<int>(boxes.size()) - 1)];
    BinaryMask out(h, w);
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x) out.at(y, x) = 1;
    return out;
}

Episode annotate(Episode ep, AnnotationMode mode, Rng& rng) {
    if (mode == AnnotationMode::Bbox) {
        for (SupportExample& s : ep.support) {
            // A thin occlusion fragment can have a box that vanishes at the
            // feature grid even though the whole mask survived sampling;
            // redraw the component in that case. The component that carried
            // the sampling-time weight always yields a surviving box.
            BinaryMask boxed = mask_to_bbox_mask(s.mask, rng);
            for (int t = 1; t < kSupportSceneRetries && downsampled_foreground_weight(boxed) < kMinForegroundWeight;
                 ++t)
                boxed = mask_to_bbox_mask(s.mask, rng);
            if (downsampled_foreground_weight(boxed) < kMinForegroundWeight)
                throw EmptyForegroundError(
                    "bbox annotation: no bounding box survives downsampling to the feature grid");
            s.mask = std::move(boxed);
        }
    }
    return ep;
}

std::vector<int> sample_scene_classes(const std::vector<int>& pool, int max_classes, Rng& rng) {
    if (pool.empty()) throw ConfigError("scene class pool is empty");
    const int cap = std::min(max_classes, static_cast<int>(pool.size()));
    if (cap < 1) throw ConfigError("max_classes_per_scene must be >= 1");
    const int count = rng.uniform_int(1, cap);
    std::vector<int> classes = sample_distinct(pool, count, rng);
    shuffle_in_place(classes, rng);
    return classes;
}

std::uint64_t episode_seed(std::uint64_t global_seed, Phase phase, std::uint64_t index) {
    return derive_seed(global_seed, phase == Phase::Train ? "train-episode" : "test-episode", index);
}

}  // namespace canet
