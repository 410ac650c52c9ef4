#include "diptych/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace diptych {

const std::vector<std::pair<std::string, Rgb>>& object_palette() {
    static const std::vector<std::pair<std::string, Rgb>> palette = {
        {"red", {0.90, 0.15, 0.15}},     {"green", {0.15, 0.80, 0.20}},
        {"blue", {0.20, 0.25, 0.90}},    {"yellow", {0.90, 0.85, 0.15}},
        {"magenta", {0.85, 0.20, 0.80}},
    };
    return palette;
}

const std::vector<Rgb>& background_palette() {
    static const std::vector<Rgb> palette = {
        {0.85, 0.65, 0.35},  // tan
        {0.35, 0.65, 0.90},  // sky
        {0.45, 0.85, 0.55},  // mint
    };
    return palette;
}

std::string shape_name(Shape s) {
    switch (s) {
        case Shape::square: return "square";
        case Shape::circle: return "circle";
        case Shape::triangle: return "triangle";
    }
    return "?";
}

std::string task_name(TaskType t) {
    switch (t) {
        case TaskType::removal: return "removal";
        case TaskType::addition: return "addition";
        case TaskType::swap: return "swap";
        case TaskType::attribute_mod: return "attribute_mod";
        case TaskType::style: return "style";
    }
    return "?";
}

TaskType task_from_name(const std::string& name) {
    for (int i = 0; i < kNumTaskTypes; ++i)
        if (task_name(static_cast<TaskType>(i)) == name) return static_cast<TaskType>(i);
    throw DataError("unknown task type: " + name);
}

std::string style_name(StyleKind s) {
    switch (s) {
        case StyleKind::grayscale: return "grayscale";
        case StyleKind::invert: return "invert";
        case StyleKind::darken: return "darken";
        case StyleKind::brighten: return "brighten";
    }
    return "?";
}

std::string cell_name(int cell) {
    switch (cell) {
        case 0: return "top left";
        case 1: return "top right";
        case 2: return "bottom left";
        case 3: return "bottom right";
    }
    throw std::invalid_argument("bad cell index");
}

// ---- rendering ----

namespace {

bool shape_covers(Shape shape, int size, int px, int py) {
    switch (shape) {
        case Shape::square:
            return true;
        case Shape::circle: {
            double cx = (size - 1) / 2.0, cy = (size - 1) / 2.0;
            double r = size / 2.0 - 0.1;
            double dx = px - cx, dy = py - cy;
            return dx * dx + dy * dy <= r * r;
        }
        case Shape::triangle: {
            // Staircase triangle: rows widen towards the base.
            int half = py / 2 + 1;
            int mid_lo = size / 2 - 1, mid_hi = size / 2;
            return px >= mid_lo - (half - 1) && px <= mid_hi + (half - 1);
        }
    }
    return false;
}

void cell_origin(int cell, const SceneGeometry& geo, int& x0, int& y0) {
    x0 = (cell % 2) * geo.cell();
    y0 = (cell / 2) * geo.cell();
}

}  // namespace

RasterImage object_pixel_mask(const SceneObject& obj, const SceneGeometry& geo) {
    RasterImage mask(geo.panel, geo.panel, 1, 0.0);
    int x0, y0;
    cell_origin(obj.cell, geo, x0, y0);
    int off = (geo.cell() - obj.size) / 2;
    for (int py = 0; py < obj.size; ++py)
        for (int px = 0; px < obj.size; ++px)
            if (shape_covers(obj.shape, obj.size, px, py))
                mask.at(y0 + off + py, x0 + off + px, 0) = 1.0;
    return mask;
}

RasterImage cell_mask(int cell, const SceneGeometry& geo) {
    RasterImage mask(geo.panel, geo.panel, 1, 0.0);
    int x0, y0;
    cell_origin(cell, geo, x0, y0);
    for (int y = 0; y < geo.cell(); ++y)
        for (int x = 0; x < geo.cell(); ++x) mask.at(y0 + y, x0 + x, 0) = 1.0;
    return mask;
}

RasterImage render_scene(const Scene& scene, const SceneGeometry& geo) {
    const Rgb bg = background_palette().at(static_cast<size_t>(scene.background));
    RasterImage img(geo.panel, geo.panel, 3);
    for (int y = 0; y < geo.panel; ++y)
        for (int x = 0; x < geo.panel; ++x) {
            img.at(y, x, 0) = bg.r;
            img.at(y, x, 1) = bg.g;
            img.at(y, x, 2) = bg.b;
        }
    for (const auto& obj : scene.objects) {
        const Rgb col = object_palette().at(static_cast<size_t>(obj.color)).second;
        RasterImage mask = object_pixel_mask(obj, geo);
        for (int y = 0; y < geo.panel; ++y)
            for (int x = 0; x < geo.panel; ++x)
                if (mask.at(y, x, 0) != 0.0) {
                    img.at(y, x, 0) = col.r;
                    img.at(y, x, 1) = col.g;
                    img.at(y, x, 2) = col.b;
                }
    }
    return img;
}

RasterImage apply_style(const RasterImage& img, StyleKind style) {
    RasterImage out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
            switch (style) {
                case StyleKind::grayscale: {
                    double lum = (r + g + b) / 3.0;
                    out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = lum;
                    break;
                }
                case StyleKind::invert:
                    out.at(y, x, 0) = 1.0 - r;
                    out.at(y, x, 1) = 1.0 - g;
                    out.at(y, x, 2) = 1.0 - b;
                    break;
                case StyleKind::darken:
                    out.at(y, x, 0) = 0.5 * r;
                    out.at(y, x, 1) = 0.5 * g;
                    out.at(y, x, 2) = 0.5 * b;
                    break;
                case StyleKind::brighten:
                    out.at(y, x, 0) = 0.5 + 0.5 * r;
                    out.at(y, x, 1) = 0.5 + 0.5 * g;
                    out.at(y, x, 2) = 0.5 + 0.5 * b;
                    break;
            }
        }
    return out;
}

std::string scene_caption(const Scene& scene) {
    if (scene.objects.empty()) return "an empty scene";
    std::vector<SceneObject> ordered = scene.objects;
    std::sort(ordered.begin(), ordered.end(),
              [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });
    std::string caption = "a scene with";
    for (size_t i = 0; i < ordered.size(); ++i) {
        if (i > 0) caption += " and";
        caption += " a " + object_palette()[static_cast<size_t>(ordered[i].color)].first + " " +
                   shape_name(ordered[i].shape);
    }
    return caption;
}

// ---- generation ----

namespace {

bool combo_used(const Scene& scene, int color, Shape shape) {
    for (const auto& o : scene.objects)
        if (o.color == color && o.shape == shape) return true;
    return false;
}

bool cell_used(const Scene& scene, int cell) {
    for (const auto& o : scene.objects)
        if (o.cell == cell) return true;
    return false;
}

SceneObject random_object(Rng& rng, const Scene& scene, int cell, const SceneGeometry& geo) {
    const int ncolors = static_cast<int>(object_palette().size());
    while (true) {
        SceneObject obj;
        obj.color = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(ncolors)));
        obj.shape = static_cast<Shape>(rng.uniform_int(3));
        obj.cell = cell;
        obj.size = geo.cell() - 2;
        if (!combo_used(scene, obj.color, obj.shape)) return obj;
    }
}

}  // namespace

Scene gen_scene(Rng& rng, const SceneGeometry& geo) {
    Scene scene;
    scene.background = static_cast<int>(rng.uniform_int(background_palette().size()));
    // Object count distribution: 0/1/2/3 with weights .10/.30/.35/.25.
    double u = rng.uniform();
    int count = u < 0.10 ? 0 : u < 0.40 ? 1 : u < 0.75 ? 2 : 3;

    std::vector<int> cells = {0, 1, 2, 3};
    rng.shuffle(cells);
    for (int i = 0; i < count; ++i)
        scene.objects.push_back(random_object(rng, scene, cells[static_cast<size_t>(i)], geo));
    return scene;
}

EditPair gen_edit_pair(Rng& rng, TaskType task, const SceneGeometry& geo) {
    const int ncolors = static_cast<int>(object_palette().size());
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Scene scene = gen_scene(rng, geo);
        EditPair pair;
        pair.task = task;
        pair.scene = scene;

        switch (task) {
            case TaskType::removal: {
                if (scene.objects.empty()) continue;
                int idx = static_cast<int>(rng.uniform_int(scene.objects.size()));
                const SceneObject obj = scene.objects[static_cast<size_t>(idx)];
                Scene after = scene;
                after.objects.erase(after.objects.begin() + idx);
                pair.target_object = idx;
                pair.instruction = "remove the " +
                                   object_palette()[static_cast<size_t>(obj.color)].first + " " +
                                   shape_name(obj.shape);
                pair.source = render_scene(scene, geo);
                pair.target = render_scene(after, geo);
                pair.edit_region_mask = cell_mask(obj.cell, geo);
                break;
            }
            case TaskType::addition: {
                std::vector<int> empty;
                for (int c = 0; c < kGridCells; ++c)
                    if (!cell_used(scene, c)) empty.push_back(c);
                if (empty.empty()) continue;
                int cell = empty[rng.uniform_int(empty.size())];
                SceneObject obj = random_object(rng, scene, cell, geo);
                Scene after = scene;
                after.objects.push_back(obj);
                pair.new_object = obj;
                pair.instruction = "add a " +
                                   object_palette()[static_cast<size_t>(obj.color)].first + " " +
                                   shape_name(obj.shape) + " to the " + cell_name(cell);
                pair.source = render_scene(scene, geo);
                pair.target = render_scene(after, geo);
                pair.edit_region_mask = cell_mask(cell, geo);
                break;
            }
            case TaskType::swap: {
                if (scene.objects.empty()) continue;
                int idx = static_cast<int>(rng.uniform_int(scene.objects.size()));
                const SceneObject old = scene.objects[static_cast<size_t>(idx)];
                SceneObject repl = random_object(rng, scene, old.cell, geo);
                Scene after = scene;
                after.objects[static_cast<size_t>(idx)] = repl;
                pair.target_object = idx;
                pair.new_object = repl;
                pair.instruction =
                    "replace the " + object_palette()[static_cast<size_t>(old.color)].first + " " +
                    shape_name(old.shape) + " with a " +
                    object_palette()[static_cast<size_t>(repl.color)].first + " " +
                    shape_name(repl.shape);
                pair.source = render_scene(scene, geo);
                pair.target = render_scene(after, geo);
                pair.edit_region_mask = cell_mask(old.cell, geo);
                break;
            }
            case TaskType::attribute_mod: {
                if (scene.objects.empty()) continue;
                int idx = static_cast<int>(rng.uniform_int(scene.objects.size()));
                const SceneObject old = scene.objects[static_cast<size_t>(idx)];
                std::vector<int> choices;
                for (int c = 0; c < ncolors; ++c)
                    if (c != old.color && !combo_used(scene, c, old.shape)) choices.push_back(c);
                if (choices.empty()) continue;
                int color = choices[rng.uniform_int(choices.size())];
                Scene after = scene;
                after.objects[static_cast<size_t>(idx)].color = color;
                pair.target_object = idx;
                pair.new_color = color;
                pair.instruction = "turn the " +
                                   object_palette()[static_cast<size_t>(old.color)].first + " " +
                                   shape_name(old.shape) + " " +
                                   object_palette()[static_cast<size_t>(color)].first;
                pair.source = render_scene(scene, geo);
                pair.target = render_scene(after, geo);
                pair.edit_region_mask = cell_mask(old.cell, geo);
                break;
            }
            case TaskType::style: {
                if (scene.objects.empty()) continue;
                auto style = static_cast<StyleKind>(rng.uniform_int(4));
                pair.style = style;
                switch (style) {
                    case StyleKind::grayscale: pair.instruction = "make the image grayscale"; break;
                    case StyleKind::invert: pair.instruction = "invert the colors"; break;
                    case StyleKind::darken: pair.instruction = "darken the image"; break;
                    case StyleKind::brighten: pair.instruction = "brighten the image"; break;
                }
                pair.source = render_scene(scene, geo);
                pair.target = apply_style(pair.source, style);
                pair.edit_region_mask = RasterImage(geo.panel, geo.panel, 1, 1.0);
                break;
            }
        }
        return pair;
    }
    throw DataError("gen_edit_pair: no feasible scene after 1000 attempts");
}

// ---- serialization ----

namespace {

json scene_to_json(const Scene& s) {
    json objs = json::array();
    for (const auto& o : s.objects)
        objs.push_back({{"shape", shape_name(o.shape)},
                        {"color", object_palette()[static_cast<size_t>(o.color)].first},
                        {"cell", o.cell},
                        {"size", o.size}});
    return json{{"background", s.background}, {"objects", objs}};
}

Shape shape_from_name(const std::string& n) {
    for (int i = 0; i < 3; ++i)
        if (shape_name(static_cast<Shape>(i)) == n) return static_cast<Shape>(i);
    throw DataError("unknown shape: " + n);
}

int color_from_name(const std::string& n) {
    const auto& pal = object_palette();
    for (size_t i = 0; i < pal.size(); ++i)
        if (pal[i].first == n) return static_cast<int>(i);
    throw DataError("unknown color: " + n);
}

StyleKind style_from_name(const std::string& n) {
    for (int i = 0; i < 4; ++i)
        if (style_name(static_cast<StyleKind>(i)) == n) return static_cast<StyleKind>(i);
    throw DataError("unknown style: " + n);
}

Scene scene_from_json(const json& j) {
    Scene s;
    s.background = j.at("background").get<int>();
    for (const auto& o : j.at("objects")) {
        SceneObject obj;
        obj.shape = shape_from_name(o.at("shape").get<std::string>());
        obj.color = color_from_name(o.at("color").get<std::string>());
        obj.cell = o.at("cell").get<int>();
        obj.size = o.at("size").get<int>();
        s.objects.push_back(obj);
    }
    return s;
}

// The edit region is either one placement cell or the full panel; sidecars
// store it as a cell index (-1 = full panel).
int mask_cell_of(const EditPair& pair) {
    switch (pair.task) {
        case TaskType::removal:
        case TaskType::attribute_mod:
            return pair.scene.objects[static_cast<size_t>(pair.target_object)].cell;
        case TaskType::addition:
        case TaskType::swap:
            return pair.new_object.cell;
        case TaskType::style:
            return -1;
    }
    return -1;
}

}  // namespace

int DatasetManifest::total() const {
    return std::accumulate(counts.begin(), counts.end(), 0);
}

std::array<int, kNumTaskTypes> paper_ratio_counts(int total) {
    if (total <= 0) throw DataError("paper_ratio_counts: total must be positive");
    // Source-corpus record counts per task type.
    static const std::array<long long, kNumTaskTypes> corpus = {13272, 11938, 5823, 11484, 10530};
    const long long corpus_total = 53047;

    std::array<int, kNumTaskTypes> out{};
    std::array<long long, kNumTaskTypes> remainder{};
    int assigned = 0;
    for (int i = 0; i < kNumTaskTypes; ++i) {
        long long num = corpus[static_cast<size_t>(i)] * total;
        out[static_cast<size_t>(i)] = static_cast<int>(num / corpus_total);
        remainder[static_cast<size_t>(i)] = num % corpus_total;
        assigned += out[static_cast<size_t>(i)];
    }
    std::array<int, kNumTaskTypes> order = {0, 1, 2, 3, 4};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return remainder[static_cast<size_t>(a)] > remainder[static_cast<size_t>(b)];
    });
    for (int i = 0; i < total - assigned; ++i) out[static_cast<size_t>(order[static_cast<size_t>(i)])]++;
    return out;
}

DatasetManifest gen_dataset(const DataGenConfig& config, const std::string& out_dir) {
    for (int c : config.counts)
        if (c < 0) throw DataError("gen_dataset: counts must be non-negative");
    fs::create_directories(out_dir);

    DatasetManifest manifest;
    manifest.seed = config.seed;
    manifest.panel = config.geometry.panel;
    manifest.counts = config.counts;

    int index = 0;
    for (int task_i = 0; task_i < kNumTaskTypes; ++task_i) {
        for (int k = 0; k < config.counts[static_cast<size_t>(task_i)]; ++k, ++index) {
            Rng rng(config.seed, static_cast<uint64_t>(index));
            EditPair pair = gen_edit_pair(rng, static_cast<TaskType>(task_i), config.geometry);
            pair.seed = splitmix64(config.seed ^ static_cast<uint64_t>(index));

            if (config.corruption_rate > 0.0 && rng.uniform() < config.corruption_rate) {
                // Label noise: replace the instruction with one from an
                // unrelated draw; predicate fields keep describing the
                // actual edit.
                EditPair other = gen_edit_pair(rng, static_cast<TaskType>(rng.uniform_int(kNumTaskTypes)),
                                               config.geometry);
                pair.instruction = other.instruction;
                pair.corrupted = true;
            }

            char id[16];
            snprintf(id, sizeof(id), "rec_%05d", index);
            std::string base = id;

            write_png(out_dir + "/" + base + ".src.png", pair.source);
            write_png(out_dir + "/" + base + ".tgt.png", pair.target);
            write_raw_f32(out_dir + "/" + base + ".src.f32", pair.source);
            write_raw_f32(out_dir + "/" + base + ".tgt.f32", pair.target);

            json sidecar{
                {"id", base},
                {"seed", pair.seed},
                {"task", task_name(pair.task)},
                {"instruction", pair.instruction},
                {"corrupted", pair.corrupted},
                {"scene", scene_to_json(pair.scene)},
                {"panel", config.geometry.panel},
                {"mask_cell", mask_cell_of(pair)},
                {"target_object", pair.target_object},
                {"new_color", pair.new_color},
                {"style", style_name(pair.style)},
                {"new_object",
                 {{"shape", shape_name(pair.new_object.shape)},
                  {"color", object_palette()[static_cast<size_t>(pair.new_object.color)].first},
                  {"cell", pair.new_object.cell},
                  {"size", pair.new_object.size}}},
                {"files",
                 {{"source_png", base + ".src.png"},
                  {"target_png", base + ".tgt.png"},
                  {"source_f32", base + ".src.f32"},
                  {"target_f32", base + ".tgt.f32"}}},
                {"crc32",
                 {{"source_png", crc32_of_file(out_dir + "/" + base + ".src.png")},
                  {"target_png", crc32_of_file(out_dir + "/" + base + ".tgt.png")},
                  {"source_f32", crc32_of_file(out_dir + "/" + base + ".src.f32")},
                  {"target_f32", crc32_of_file(out_dir + "/" + base + ".tgt.f32")}}},
            };
            std::string sidecar_name = base + ".json";
            std::string sidecar_text = sidecar.dump(2) + "\n";
            write_file_bytes(out_dir + "/" + sidecar_name, sidecar_text.data(), sidecar_text.size());

            DatasetManifest::Record rec;
            rec.id = base;
            rec.task = pair.task;
            rec.sidecar = sidecar_name;
            rec.sidecar_crc32 = crc32_of_file(out_dir + "/" + sidecar_name);
            manifest.records.push_back(std::move(rec));
        }
    }

    json records = json::array();
    for (const auto& r : manifest.records)
        records.push_back({{"id", r.id},
                           {"task", task_name(r.task)},
                           {"sidecar", r.sidecar},
                           {"crc32", r.sidecar_crc32}});
    json mj{{"version", manifest.version},
            {"seed", manifest.seed},
            {"panel", manifest.panel},
            {"counts",
             {{"removal", manifest.counts[0]},
              {"addition", manifest.counts[1]},
              {"swap", manifest.counts[2]},
              {"attribute_mod", manifest.counts[3]},
              {"style", manifest.counts[4]}}},
            {"total", manifest.total()},
            {"records", records}};
    std::string text = mj.dump(2) + "\n";
    write_file_bytes(out_dir + "/manifest.json", text.data(), text.size());
    return manifest;
}

DatasetManifest read_manifest(const std::string& manifest_path) {
    auto bytes = read_file_bytes(manifest_path);
    json mj;
    try {
        mj = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest parse error: ") + e.what());
    }
    DatasetManifest manifest;
    try {
        manifest.version = mj.at("version").get<int>();
        manifest.seed = mj.at("seed").get<uint64_t>();
        manifest.panel = mj.at("panel").get<int>();
        manifest.counts = {mj.at("counts").at("removal").get<int>(),
                           mj.at("counts").at("addition").get<int>(),
                           mj.at("counts").at("swap").get<int>(),
                           mj.at("counts").at("attribute_mod").get<int>(),
                           mj.at("counts").at("style").get<int>()};
        for (const auto& r : mj.at("records")) {
            DatasetManifest::Record rec;
            rec.id = r.at("id").get<std::string>();
            rec.task = task_from_name(r.at("task").get<std::string>());
            rec.sidecar = r.at("sidecar").get<std::string>();
            rec.sidecar_crc32 = r.at("crc32").get<uint32_t>();
            manifest.records.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest field error: ") + e.what());
    }
    if (manifest.total() != static_cast<int>(manifest.records.size()))
        throw DataError("manifest counts do not sum to the record count");
    return manifest;
}

EditPair read_record(const std::string& dir, const DatasetManifest::Record& rec) {
    std::string sidecar_path = dir + "/" + rec.sidecar;
    if (crc32_of_file(sidecar_path) != rec.sidecar_crc32)
        throw DataError("sidecar checksum mismatch: " + rec.sidecar);
    auto bytes = read_file_bytes(sidecar_path);
    json sj;
    try {
        sj = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw DataError(std::string("sidecar parse error: ") + e.what());
    }

    EditPair pair;
    try {
        pair.seed = sj.at("seed").get<uint64_t>();
        pair.task = task_from_name(sj.at("task").get<std::string>());
        pair.instruction = sj.at("instruction").get<std::string>();
        pair.corrupted = sj.at("corrupted").get<bool>();
        pair.scene = scene_from_json(sj.at("scene"));
        pair.target_object = sj.at("target_object").get<int>();
        pair.new_color = sj.at("new_color").get<int>();
        pair.style = style_from_name(sj.at("style").get<std::string>());
        const auto& no = sj.at("new_object");
        pair.new_object.shape = shape_from_name(no.at("shape").get<std::string>());
        pair.new_object.color = color_from_name(no.at("color").get<std::string>());
        pair.new_object.cell = no.at("cell").get<int>();
        pair.new_object.size = no.at("size").get<int>();

        int panel = sj.at("panel").get<int>();
        SceneGeometry geo{panel};
        const auto& files = sj.at("files");
        const auto& crcs = sj.at("crc32");
        auto checked = [&](const char* key) {
            std::string path = dir + "/" + files.at(key).get<std::string>();
            if (crc32_of_file(path) != crcs.at(key).get<uint32_t>())
                throw DataError(std::string("checksum mismatch: ") + files.at(key).get<std::string>());
            return path;
        };
        pair.source = read_raw_f32(checked("source_f32"), panel, panel, 3);
        pair.target = read_raw_f32(checked("target_f32"), panel, panel, 3);
        checked("source_png");
        checked("target_png");

        int mask_cell = sj.at("mask_cell").get<int>();
        pair.edit_region_mask =
            mask_cell < 0 ? RasterImage(panel, panel, 1, 1.0) : cell_mask(mask_cell, geo);
    } catch (const json::exception& e) {
        throw DataError(std::string("sidecar field error: ") + e.what());
    }

    // Constructive invariant: source and target agree exactly outside the
    // edit region.
    for (int y = 0; y < pair.source.height; ++y)
        for (int x = 0; x < pair.source.width; ++x)
            if (pair.edit_region_mask.at(y, x, 0) == 0.0)
                for (int c = 0; c < 3; ++c)
                    if (pair.source.at(y, x, c) != pair.target.at(y, x, c))
                        throw DataError("record violates outside-mask invariant: " + rec.id);
    return pair;
}

std::vector<EditPair> read_dataset(const std::string& manifest_path) {
    DatasetManifest manifest = read_manifest(manifest_path);
    std::string dir = fs::path(manifest_path).parent_path().string();
    if (dir.empty()) dir = ".";
    std::vector<EditPair> pairs;
    pairs.reserve(manifest.records.size());
    for (const auto& rec : manifest.records) pairs.push_back(read_record(dir, rec));
    return pairs;
}

}  // namespace diptych
