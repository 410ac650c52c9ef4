#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "diptych/common.hpp"
#include "diptych/image.hpp"

namespace diptych {

// Scenes are flat-colored shapes on a 2x2 placement grid over a square
// panel. Cells are indexed 0..3 as top-left, top-right, bottom-left,
// bottom-right.
enum class Shape { square, circle, triangle };
enum class TaskType { removal, addition, swap, attribute_mod, style };
enum class StyleKind { grayscale, invert, darken, brighten };

constexpr int kNumTaskTypes = 5;
constexpr int kGridCells = 4;

struct Rgb {
    double r, g, b;
};

// Object palette: saturated colors pairwise at least ~0.4 apart in mean
// absolute channel distance, so recolor predicates separate cleanly at the
// 0.1 tolerance.
const std::vector<std::pair<std::string, Rgb>>& object_palette();
// Background palette: colored (not gray) so every style transform moves the
// whole panel by well over the predicate tolerance.
const std::vector<Rgb>& background_palette();

std::string shape_name(Shape s);
std::string task_name(TaskType t);
std::string style_name(StyleKind s);
std::string cell_name(int cell);  // "top left", ...
TaskType task_from_name(const std::string& name);

struct SceneObject {
    Shape shape = Shape::square;
    int color = 0;  // index into object_palette()
    int cell = 0;
    int size = 6;
};

struct Scene {
    int background = 0;  // index into background_palette()
    std::vector<SceneObject> objects;
};

// Pixel-space geometry for a panel: cell = panel/2, objects rendered
// centered in their cell.
struct SceneGeometry {
    int panel = 16;
    int cell() const { return panel / 2; }
};

RasterImage render_scene(const Scene& scene, const SceneGeometry& geo);
// 1-channel mask of the pixels an object's shape covers.
RasterImage object_pixel_mask(const SceneObject& obj, const SceneGeometry& geo);
// 1-channel mask of an object's whole placement cell.
RasterImage cell_mask(int cell, const SceneGeometry& geo);
RasterImage apply_style(const RasterImage& img, StyleKind style);
// Caption used for pretraining records, e.g. "a scene with a red square and
// a blue circle" (objects in cell order) or "an empty scene".
std::string scene_caption(const Scene& scene);

struct EditPair {
    uint64_t seed = 0;
    TaskType task = TaskType::removal;
    Scene scene;  // source scene
    std::string instruction;
    RasterImage source;
    RasterImage target;
    RasterImage edit_region_mask;  // 1-channel panel mask, 1 = may change
    bool corrupted = false;        // instruction deliberately mismatched

    // Procedural predicate parameters.
    int target_object = -1;   // removal / swap / attribute_mod
    SceneObject new_object;   // addition (new cell) / swap (replacement, same cell)
    int new_color = -1;       // attribute_mod
    StyleKind style = StyleKind::grayscale;
};

// Scene generator: 0-3 non-overlapping objects with distinct (color, shape)
// combinations. Deterministic per rng state.
Scene gen_scene(Rng& rng, const SceneGeometry& geo = {});

// Editing-pair generator. Infeasible draws (e.g. removal on an empty scene)
// are regenerated internally and never emitted.
EditPair gen_edit_pair(Rng& rng, TaskType task, const SceneGeometry& geo = {});

struct DatasetManifest {
    int version = 1;
    uint64_t seed = 0;
    int panel = 16;
    std::array<int, kNumTaskTypes> counts{};  // indexed by TaskType
    struct Record {
        std::string id;
        TaskType task;
        std::string sidecar;  // file name relative to the manifest directory
        uint32_t sidecar_crc32 = 0;
    };
    std::vector<Record> records;

    int total() const;
};

struct DataGenConfig {
    std::array<int, kNumTaskTypes> counts{};
    uint64_t seed = 0;
    double corruption_rate = 0.0;
    SceneGeometry geometry;
};

// Splits a total count into the five task types using the documented
// source-corpus ratios, largest-remainder rounding.
std::array<int, kNumTaskTypes> paper_ratio_counts(int total);

// Generates records on disk (manifest.json, per-record sidecar JSON, PNGs
// and raw-float mirrors). Byte-identical regeneration for a fixed config.
DatasetManifest gen_dataset(const DataGenConfig& config, const std::string& out_dir);

DatasetManifest read_manifest(const std::string& manifest_path);

// Loads records in manifest order, validating checksums and the
// outside-mask source/target agreement invariant.
std::vector<EditPair> read_dataset(const std::string& manifest_path);
EditPair read_record(const std::string& dir, const DatasetManifest::Record& rec);

}  // namespace diptych
