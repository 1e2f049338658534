#pragma once

#include <map>
#include <string>
#include <vector>

#include "canet/dcm.hpp"
#include "canet/mask.hpp"
#include "canet/rng.hpp"
#include "canet/tensor.hpp"

namespace canet {

enum class Phase { Train, Test };
enum class AnnotationMode { Pixel, Bbox };

Phase parse_phase(const std::string& s);
std::string phase_name(Phase p);
AnnotationMode parse_annotation_mode(const std::string& s);
std::string annotation_mode_name(AnnotationMode m);

struct DatasetConfig {
    int num_classes = 16;
    int num_splits = 4;
    int test_split_index = 0;
    int image_size = 64;
    int min_object_area = 16;
    double max_object_area_frac = 0.6;
    int max_classes_per_scene = 3;
    double noise = 0.05;
};

// A synthetic category: a shape family plus a color law. Hues are spread by
// the golden ratio so the hues of held-out classes interleave with training
// ones instead of occupying a disjoint band.
struct ShapeClass {
    int id = 0;
    int family = 0;
    double hue = 0.0;
};

ShapeClass shape_class_for(int class_id);
int num_shape_families();

struct ClassSplit {
    int num_splits = 4;
    int test_split_index = 0;
    std::vector<int> train_classes;
    std::vector<int> test_classes;

    static ClassSplit make(const DatasetConfig& cfg);
    const std::vector<int>& classes(Phase phase) const { return phase == Phase::Train ? train_classes : test_classes; }
};

struct Scene {
    Tensor image;                    // [3,H,W], values in [0,1]
    std::map<int, BinaryMask> masks; // visible (post-occlusion) mask per class
    std::vector<int> owner;          // per pixel: class id, or -1 for background
};

struct Episode {
    std::vector<SupportExample> support;
    Tensor query_image;
    BinaryMask query_mask;
    int class_id = -1;
    int k = 0;
};

// Renders 1..max_classes_per_scene shapes over a textured background; later
// shapes occlude earlier ones and the per-class masks are the visible parts.
Scene generate_scene(const std::vector<int>& classes_present, int h, int w, const DatasetConfig& cfg, Rng& rng);

Episode sample_episode(const ClassSplit& split, Phase phase, int k, int size, const DatasetConfig& cfg, Rng& rng);

// Filled tight bounding box of one connected foreground component, chosen
// uniformly at random when several exist.
BinaryMask mask_to_bbox_mask(const BinaryMask& mask, Rng& rng);

// Pixel mode is the identity; bbox mode swaps every support mask for its
// bounding-box mask. Query ground truth is never touched.
Episode annotate(Episode ep, AnnotationMode mode, Rng& rng);

// Class list for one scene: 1..max_classes_per_scene distinct classes from
// the pool, in randomized draw (= occlusion) order.
std::vector<int> sample_scene_classes(const std::vector<int>& pool, int max_classes, Rng& rng);

// Seed for sampling episode `index` of a phase stream.
std::uint64_t episode_seed(std::uint64_t global_seed, Phase phase, std::uint64_t index);

}  // namespace canet
